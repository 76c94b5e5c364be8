#include "texanno/gateway.hpp"

#include <algorithm>
#include <set>

#include <httplib.h>

#include "texanno/hashing.hpp"
#include "texanno/ranking.hpp"

using nlohmann::json;

namespace texanno {

std::string_view to_string(JobState s) {
  switch (s) {
    case JobState::kQueued: return "queued";
    case JobState::kRunning: return "running";
    case JobState::kDone: return "done";
    case JobState::kFailed: return "failed";
  }
  return "queued";
}

json JobStatus::to_json() const {
  json j = {{"job_id", job_id},
            {"kind", kind},
            {"state", to_string(state)},
            {"progress", progress},
            {"result_ref", result_ref.empty() ? json() : json(result_ref)}};
  j["error"] = error.empty() ? json() : json(error);
  return j;
}

JobManager::JobManager(std::size_t workers) {
  workers = std::max<std::size_t>(workers, 1);
  for (std::size_t i = 0; i < workers; ++i) threads_.emplace_back([this] { worker(); });
}

JobManager::~JobManager() { shutdown(); }

void JobManager::shutdown() {
  {
    std::lock_guard lock(mutex_);
    if (stopping_) return;
    stopping_ = true;
  }
  work_.notify_all();
  for (auto& t : threads_) {
    if (t.joinable()) t.join();
  }
}

JobStatus JobManager::submit(std::string kind, Task task) {
  JobStatus status;
  status.job_id = "job-" + random_id();
  status.kind = std::move(kind);
  {
    std::lock_guard lock(mutex_);
    if (stopping_) throw Error(ErrorCode::kConflict, "job manager is shutting down");
    jobs_[status.job_id] = status;
    queue_.emplace_back(status.job_id, std::move(task));
  }
  work_.notify_one();
  return status;
}

std::optional<JobStatus> JobManager::get(const std::string& job_id) const {
  std::lock_guard lock(mutex_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

std::optional<JobStatus> JobManager::wait(const std::string& job_id, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  auto finished = [&] {
    auto it = jobs_.find(job_id);
    return it == jobs_.end() || it->second.state == JobState::kDone || it->second.state == JobState::kFailed;
  };
  changed_.wait_for(lock, timeout, finished);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

void JobManager::advance(const std::string& id, JobState state, double progress, std::string result,
                         std::string error) {
  {
    std::lock_guard lock(mutex_);
    JobStatus& s = jobs_.at(id);
    if (static_cast<int>(state) < static_cast<int>(s.state)) return;
    if (s.state == JobState::kDone || s.state == JobState::kFailed) return;
    s.state = state;
    s.progress = std::clamp(std::max(s.progress, progress), 0.0, 1.0);
    if (!result.empty()) s.result_ref = std::move(result);
    if (!error.empty()) s.error = std::move(error);
  }
  changed_.notify_all();
}

void JobManager::worker() {
  for (;;) {
    std::pair<std::string, Task> item;
    {
      std::unique_lock lock(mutex_);
      work_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      item = std::move(queue_.front());
      queue_.pop_front();
    }
    const std::string& id = item.first;
    advance(id, JobState::kRunning, 0.0);
    try {
      std::string result = item.second([&](double p) { advance(id, JobState::kRunning, p); });
      advance(id, JobState::kDone, 1.0, std::move(result));
    } catch (const std::exception& e) {
      advance(id, JobState::kFailed, 0.0, {}, e.what());
    }
  }
}

std::pair<int, std::string> http_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound: return {404, "not-found"};
    case ErrorCode::kConflict: return {409, "conflict"};
    case ErrorCode::kIntegrity:
    case ErrorCode::kDanglingReference: return {422, "integrity"};
    case ErrorCode::kValidation:
    case ErrorCode::kBounds:
    case ErrorCode::kRoster:
    case ErrorCode::kConfiguration:
    case ErrorCode::kImageTooSmall:
    case ErrorCode::kDegenerateHull: return {400, "validation"};
    default: return {500, "internal"};
  }
}

namespace {

struct HttpError {
  int status;
  std::string code;
  std::string message;
};

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, status, {{"code", code}, {"message", message}});
}

json parse_body(const httplib::Request& req) {
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) throw Error(ErrorCode::kValidation, "request body must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kValidation, std::string("malformed JSON body: ") + e.what());
  }
}

std::size_t query_size(const httplib::Request& req, const char* key, std::size_t fallback, std::size_t max) {
  if (!req.has_param(key)) return fallback;
  const std::string v = req.get_param_value(key);
  std::size_t n = 0;
  try {
    std::size_t used = 0;
    const long long parsed = std::stoll(v, &used);
    if (used != v.size() || parsed < 0) throw std::invalid_argument(v);
    n = static_cast<std::size_t>(parsed);
  } catch (const std::exception&) {
    throw Error(ErrorCode::kValidation, std::string("query parameter '") + key + "' must be a non-negative integer");
  }
  return std::min(n, max);
}

Polygon polygon_param(const json& j) {
  if (!j.is_array()) throw Error(ErrorCode::kValidation, "edited_geometry must be a list of [x,y]");
  Polygon p;
  for (const auto& v : j) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer()) {
      throw Error(ErrorCode::kValidation, "vertex must be [x,y] integers");
    }
    p.vertices.push_back({v[0].get<std::int64_t>(), v[1].get<std::int64_t>()});
  }
  return p;
}

}  // namespace

struct Gateway::Impl {
  Store& store;
  GatewayOptions options;
  JobManager jobs;
  httplib::Server server;
  std::mutex writer;  // the single writer role
  ScoreCache scores;

  struct Replay {
    std::string request_hash;
    int status;
    std::string body;
  };
  std::mutex idem_mutex;
  std::map<std::string, Replay> idempotent;

  Impl(Store& s, GatewayOptions o) : store(s), options(std::move(o)), jobs(options.workers) { routes(); }

  std::string annotator(const httplib::Request& req) const {
    const std::string auth = req.get_header_value("Authorization");
    const std::string prefix = "Bearer ";
    if (auth.rfind(prefix, 0) == 0) {
      auto it = options.tokens.find(auth.substr(prefix.size()));
      if (it != options.tokens.end()) return it->second;
    }
    return {};
  }

  using Handler = std::function<void(const httplib::Request&, httplib::Response&, const std::string&)>;

  // Authentication and error mapping around every handler.
  httplib::Server::Handler wrap(Handler h) {
    return [this, h](const httplib::Request& req, httplib::Response& res) {
      const std::string who = annotator(req);
      if (who.empty()) {
        send_error(res, 401, "unauthorized", "missing or unknown bearer token");
        return;
      }
      try {
        h(req, res, who);
      } catch (const Error& e) {
        auto [status, code] = http_error(e.code());
        send_error(res, status, code, e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      }
    };
  }

  // Mutations: serialized, and replayed when retried with the same
  // Idempotency-Key and an identical request.
  httplib::Server::Handler mutating(Handler h) {
    return wrap([this, h](const httplib::Request& req, httplib::Response& res, const std::string& who) {
      std::lock_guard write_lock(writer);
      const std::string key = req.get_header_value("Idempotency-Key");
      const std::string scoped = who + "|" + key;
      const std::string request_hash = sha256_hex(req.method + " " + req.path + "\n" + req.body);
      if (!key.empty()) {
        std::lock_guard lock(idem_mutex);
        if (auto it = idempotent.find(scoped); it != idempotent.end()) {
          if (it->second.request_hash != request_hash) {
            send_error(res, 409, "conflict", "idempotency key reused for a different request");
          } else {
            res.status = it->second.status;
            res.set_content(it->second.body, "application/json");
            res.set_header("Idempotent-Replay", "true");
          }
          return;
        }
      }
      try {
        h(req, res, who);
      } catch (const Error& e) {
        auto [status, code] = http_error(e.code());
        send_error(res, status, code, e.what());
      }
      if (!key.empty() && res.status < 500) {
        std::lock_guard lock(idem_mutex);
        idempotent[scoped] = {request_hash, res.status, res.body};
      }
    });
  }

  std::optional<std::string> latest_model() const { return store.latest_model_id(); }

  void routes() {
    server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"status", "ok"}});
    });

    server.Get("/nomenclature", wrap([this](const httplib::Request&, httplib::Response& res, const std::string&) {
      const Nomenclature n = store.nomenclature();
      send_json(res, 200, {{"version", n.version}, {"classes", n.classes}});
    }));

    server.Get("/images", wrap([this](const httplib::Request& req, httplib::Response& res, const std::string&) {
      list_images(req, res);
    }));

    server.Get(R"(/images/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response& res,
                                                 const std::string&) {
      const auto bytes = store.image_bytes(req.matches[1]);
      res.status = 200;
      res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
    }));

    server.Get(R"(/images/([^/]+)/proposals)", wrap([this](const httplib::Request& req, httplib::Response& res,
                                                           const std::string&) {
      const std::string id = req.matches[1];
      if (!store.get_image(id)) throw Error(ErrorCode::kNotFound, "no image '" + id + "'");
      ProposalFilter filter;
      filter.image_id = id;
      if (req.has_param("status")) filter.status = parse_review_status(req.get_param_value("status"));
      if (req.has_param("class")) filter.class_id = req.get_param_value("class");
      json proposals = json::array();
      for (const auto& p : store.list_proposals(filter)) proposals.push_back(to_json(p));
      json annotations = json::array();
      for (const auto& a : store.list_annotations({id, std::nullopt, std::nullopt})) annotations.push_back(to_json(a));
      send_json(res, 200, {{"image_id", id}, {"proposals", proposals}, {"annotations", annotations}});
    }));

    server.Get(R"(/images/([^/]+)/annotations)", wrap([this](const httplib::Request& req, httplib::Response& res,
                                                             const std::string&) {
      const std::string id = req.matches[1];
      if (!store.get_image(id)) throw Error(ErrorCode::kNotFound, "no image '" + id + "'");
      json annotations = json::array();
      for (const auto& a : store.list_annotations({id, std::nullopt, std::nullopt})) annotations.push_back(to_json(a));
      send_json(res, 200, {{"image_id", id}, {"annotations", annotations}});
    }));

    server.Post(R"(/proposals/([^/]+)/decision)", mutating([this](const httplib::Request& req,
                                                                  httplib::Response& res, const std::string& who) {
      decide(req.matches[1], parse_body(req), who, res);
    }));

    server.Post("/annotations", mutating([this](const httplib::Request& req, httplib::Response& res,
                                                const std::string& who) {
      const json body = parse_body(req);
      AnnotationRecord r;
      try {
        r.image_id = body.at("image_id").get<std::string>();
        r.class_name = body.at("class").get<std::string>();
        const auto rect = body.at("rect").get<std::vector<int>>();
        if (rect.size() != 4) throw Error(ErrorCode::kValidation, "rect must be [x0,y0,x1,y1]");
        r.geometry = Rect{rect[0], rect[1], rect[2], rect[3]};
      } catch (const json::exception& e) {
        throw Error(ErrorCode::kValidation, std::string("bad annotation: ") + e.what());
      }
      r.annotator = who;
      r.origin = AnnotationOrigin::kManual;
      if (!store.get_image(r.image_id)) throw Error(ErrorCode::kNotFound, "no image '" + r.image_id + "'");
      send_json(res, 201, to_json(store.put_annotation(std::move(r))));
    }));

    server.Get("/queue", wrap([this](const httplib::Request& req, httplib::Response& res, const std::string&) {
      queue(req, res);
    }));

    server.Post("/jobs", mutating([this](const httplib::Request& req, httplib::Response& res, const std::string&) {
      const json body = parse_body(req);
      if (!body.contains("kind") || !body["kind"].is_string()) throw Error(ErrorCode::kValidation, "missing job kind");
      json params = body.value("params", json::object());
      if (!params.is_object()) throw Error(ErrorCode::kValidation, "params must be an object");
      send_json(res, 202, submit(body["kind"].get<std::string>(), params).to_json());
    }));

    server.Get(R"(/jobs/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response& res,
                                               const std::string&) {
      auto status = jobs.get(req.matches[1]);
      if (!status) throw Error(ErrorCode::kNotFound, "no job '" + std::string(req.matches[1]) + "'");
      send_json(res, 200, status->to_json());
    }));

    server.Get("/metrics/latest", wrap([this](const httplib::Request&, httplib::Response& res, const std::string&) {
      auto report = store.latest_report();
      if (!report) throw Error(ErrorCode::kNotFound, "no evaluation report yet");
      json j = {{"method", report->method},
                {"mAP", report->segmentation.mAP},
                {"mAR", report->segmentation.mAR},
                {"summary", report->summary_table()}};
      j["classification_precision"] = json();
      j["accuracy"] = json();
      if (report->classification) {
        if (report->classification->mean_per_class_precision) {
          j["classification_precision"] = *report->classification->mean_per_class_precision;
        }
        j["accuracy"] = report->classification->accuracy;
      }
      send_json(res, 200, j);
    }));

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) {
        const std::string code = res.status == 404 ? "not-found" : "http-" + std::to_string(res.status);
        send_error(res, res.status, code, "no such route");
      }
    });
  }

  void list_images(const httplib::Request& req, httplib::Response& res) {
    std::optional<std::string> status, cls;
    if (req.has_param("status")) {
      status = req.get_param_value("status");
      static const std::set<std::string> known{"annotated", "unannotated", "pending"};
      if (!known.count(*status)) throw Error(ErrorCode::kValidation, "status must be annotated, unannotated or pending");
    }
    if (req.has_param("class")) {
      cls = req.get_param_value("class");
      if (!store.nomenclature().contains(*cls)) throw Error(ErrorCode::kValidation, "unknown class '" + *cls + "'");
    }
    const std::size_t page = query_size(req, "page", 0, SIZE_MAX);
    const std::size_t per_page = std::max<std::size_t>(1, query_size(req, "per_page", options.page_size, 500));

    std::map<std::string, std::size_t> annotation_count, pending;
    std::set<std::string> class_images;
    for (const auto& a : store.list_annotations()) {
      ++annotation_count[a.image_id];
      if (cls && a.class_name == *cls) class_images.insert(a.image_id);
    }
    for (const auto& p : store.list_proposals()) {
      if (p.status == ReviewStatus::kProposed) ++pending[p.image_id];
      if (cls && p.class_id == *cls) class_images.insert(p.image_id);
    }
    std::vector<json> items;
    for (const auto& e : store.list_images()) {
      const std::size_t n = annotation_count.count(e.id) ? annotation_count[e.id] : 0;
      const std::size_t q = pending.count(e.id) ? pending[e.id] : 0;
      if (status == "annotated" && n == 0) continue;
      if (status == "unannotated" && n > 0) continue;
      if (status == "pending" && q == 0) continue;
      if (cls && !class_images.count(e.id)) continue;
      json j = to_json(e);
      j["annotation_count"] = n;
      j["pending_proposals"] = q;
      items.push_back(std::move(j));
    }
    json page_items = json::array();
    const std::size_t begin = std::min(items.size(), page * per_page);
    const std::size_t end = std::min(items.size(), begin + per_page);
    for (std::size_t i = begin; i < end; ++i) page_items.push_back(items[i]);
    send_json(res, 200, {{"items", page_items}, {"page", page}, {"per_page", per_page}, {"total", items.size()}});
  }

  void decide(const std::string& proposal_id, const json& body, const std::string& who, httplib::Response& res) {
    if (!body.contains("decision") || !body["decision"].is_string()) {
      throw Error(ErrorCode::kValidation, "missing decision");
    }
    const Decision decision = parse_decision(body["decision"].get<std::string>());
    std::optional<Polygon> edit;
    if (body.contains("edited_geometry") && !body["edited_geometry"].is_null()) {
      edit = polygon_param(body["edited_geometry"]);
    }
    if (decision == Decision::kAcceptWithEdit && !edit) {
      throw Error(ErrorCode::kValidation, "accept-with-edit requires edited_geometry");
    }
    if (decision != Decision::kAcceptWithEdit && edit) {
      throw Error(ErrorCode::kValidation, "edited_geometry is only allowed with accept-with-edit");
    }
    json out;
    if (decision == Decision::kDecline) {
      out["decision"] = to_json(store.decline_proposal(proposal_id, who));
      out["annotation"] = nullptr;
    } else {
      const AnnotationRecord a = store.accept_proposal(proposal_id, who, edit);
      out["decision"] = to_json(store.list_decisions(proposal_id).back());
      out["annotation"] = to_json(a);
    }
    send_json(res, 200, out);
  }

  void queue(const httplib::Request& req, httplib::Response& res) {
    if (!req.has_param("class")) throw Error(ErrorCode::kValidation, "missing class parameter");
    const std::string cls = req.get_param_value("class");
    const std::size_t k = query_size(req, "k", 10, 10000);
    const auto latest = latest_model();
    if (!latest) throw Error(ErrorCode::kNotFound, "no trained model");
    if (!scores.is_current(*latest)) {
      if (auto stored = store.get_scores(*latest)) scores.publish(*latest, std::move(*stored));
    }
    const auto snap = scores.snapshot();
    if (!snap) throw Error(ErrorCode::kNotFound, "no presence scores; submit a score-corpus job");
    const SoftmaxModel model = store.load_model(snap->model_version);
    std::set<std::string> annotated;
    for (const auto& a : store.list_annotations({std::nullopt, cls, AnnotationOrigin::kManual})) {
      annotated.insert(a.image_id);
    }
    json items = json::array();
    for (const auto& s : rank_unannotated(snap->scores, annotated, model.roster(), cls, k)) items.push_back(to_json(s));
    send_json(res, 200, {{"class", cls},
                         {"k", k},
                         {"model_version", snap->model_version},
                         {"stale", snap->model_version != *latest},
                         {"items", items}});
  }

  JobStatus submit(const std::string& kind, const json& params) {
    PipelineConfig config = options.config;
    std::string model_id = "latest";
    try {
      if (params.contains("model")) model_id = params["model"].get<std::string>();
      if (params.contains("dataset")) config.dataset = params["dataset"].get<std::string>();
      if (params.contains("split")) config.segment_split = params["split"].get<std::string>();
      if (params.contains("threshold")) config.segment.threshold = params["threshold"].get<double>();
      config.validate();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kValidation, std::string("bad job params: ") + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::kValidation, e.what());
    }
    // Jobs take the writer lock only while publishing their outputs through
    // the store, so reviewers keep working during a retrain.
    if (kind == "train") {
      return jobs.submit(kind, [this, config](const JobManager::Progress& progress) {
        PipelineConfig c = config;
        DatasetSplit split;
        {
          std::lock_guard lock(writer);
          split = run_prep(store, c);
        }
        progress(0.1);
        TrainOptions t = c.train;
        t.seed = c.seed;
        SoftmaxModel model = train(split, [this](const std::string& id) { return store.load_image(id); }, t);
        progress(0.9);
        std::lock_guard lock(writer);
        const ModelEntry entry = store.put_model(model, c.dataset);
        scores.invalidate();
        return "models/" + entry.id;
      });
    }
    if (kind == "segment-corpus") {
      return jobs.submit(kind, [this, config, model_id](const JobManager::Progress& progress) {
        const SoftmaxModel model = store.load_model(model_id);
        const auto images = images_for_split(store, config.segment_split);
        std::vector<ProposedSegment> all;
        for (std::size_t i = 0; i < images.size(); ++i) {
          auto result = segment_image_detailed(model, store.load_image(images[i].id), config.segment);
          all.insert(all.end(), result.segments.begin(), result.segments.end());
          progress(0.95 * static_cast<double>(i + 1) / static_cast<double>(images.size()));
        }
        std::lock_guard lock(writer);
        store.put_proposals(all);
        return "proposals:" + model.version() + ":" + std::to_string(all.size());
      });
    }
    if (kind == "score-corpus") {
      return jobs.submit(kind, [this, config, model_id](const JobManager::Progress& progress) {
        const SoftmaxModel model = store.load_model(model_id);
        const auto images = store.list_images();
        std::vector<ImageClassScore> all;
        for (std::size_t i = 0; i < images.size(); ++i) {
          const auto result = segment_image_detailed(model, store.load_image(images[i].id), config.segment);
          auto s = scores_from_segmentation(images[i].id, model.roster(), result, config.segment.threshold);
          all.insert(all.end(), s.begin(), s.end());
          progress(0.95 * static_cast<double>(i + 1) / static_cast<double>(images.size()));
        }
        {
          std::lock_guard lock(writer);
          store.put_scores(model.version(), all);
        }
        scores.publish(model.version(), std::move(all));
        return "scores/" + model.version();
      });
    }
    if (kind == "evaluate") {
      return jobs.submit(kind, [this, config, model_id](const JobManager::Progress&) {
        std::lock_guard lock(writer);
        run_evaluate(store, config, model_id);
        return std::string("reports/latest.json");
      });
    }
    throw Error(ErrorCode::kValidation, "unknown job kind '" + kind + "'");
  }
};

Gateway::Gateway(Store& store, GatewayOptions options)
    : impl_(std::make_unique<Impl>(store, std::move(options))) {}

Gateway::~Gateway() {
  stop();
  impl_->jobs.shutdown();
}

int Gateway::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

void Gateway::serve() { impl_->server.listen_after_bind(); }

void Gateway::stop() { impl_->server.stop(); }

JobManager& Gateway::jobs() { return impl_->jobs; }

}  // namespace texanno
