#include <gtest/gtest.h>

#include <httplib.h>

#include <thread>

#include "support.hpp"
#include "texanno/gateway.hpp"

using namespace texanno;
using namespace texanno::testing;
using nlohmann::json;

namespace {

// One seeded store with a trained model and proposals, copied per test.
class Seeded {
 public:
  static const std::filesystem::path& root() {
    static Seeded instance;
    return instance.dir_.path();
  }

 private:
  Seeded() {
    Store store(dir_.path());
    const auto config = PipelineConfig::from_json(small_config_json());
    generate_corpus(store, config);
    run_prep(store, config);
    run_train(store, config);
    run_segment(store, config);
  }
  TempDir dir_;
};

class GatewayTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::filesystem::copy(Seeded::root(), dir_ / "store", std::filesystem::copy_options::recursive);
    store_ = std::make_unique<Store>(dir_ / "store");
    GatewayOptions options;
    options.tokens = {{"tok-a", "alice"}, {"tok-b", "bob"}};
    options.config = PipelineConfig::from_json(small_config_json());
    options.page_size = 2;
    gateway_ = std::make_unique<Gateway>(*store_, options);
    port_ = gateway_->bind("127.0.0.1", 0);
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { gateway_->serve(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    client_->set_read_timeout(60, 0);
    for (int i = 0; i < 100 && !client_->Get("/health"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }

  void TearDown() override {
    gateway_->stop();
    thread_.join();
    gateway_.reset();
  }

  httplib::Headers auth(const std::string& token = "tok-a") { return {{"Authorization", "Bearer " + token}}; }

  httplib::Result get(const std::string& path, const std::string& token = "tok-a") {
    return client_->Get(path, auth(token));
  }

  httplib::Result post(const std::string& path, const json& body, const std::string& token = "tok-a",
                       const std::string& key = {}) {
    auto h = auth(token);
    if (!key.empty()) h.emplace("Idempotency-Key", key);
    return client_->Post(path, h, body.dump(), "application/json");
  }

  static json body(const httplib::Result& r) { return json::parse(r->body); }

  void expect_error(const httplib::Result& r, int status, const std::string& code) {
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, status) << r->body;
    const auto j = body(r);
    EXPECT_EQ(j["code"], code);
    EXPECT_TRUE(j["message"].is_string());
  }

  std::string first_proposal_image() {
    for (const auto& p : store_->list_proposals()) return p.image_id;
    return {};
  }

  json wait_job(const std::string& id) {
    for (int i = 0; i < 600; ++i) {
      const auto j = body(get("/jobs/" + id));
      if (j["state"] == "done" || j["state"] == "failed") return j;
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    return {};
  }

  TempDir dir_;
  std::unique_ptr<Store> store_;
  std::unique_ptr<Gateway> gateway_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace

TEST(HttpError, Mapping) {
  EXPECT_EQ(http_error(ErrorCode::kNotFound), (std::pair<int, std::string>{404, "not-found"}));
  EXPECT_EQ(http_error(ErrorCode::kConflict), (std::pair<int, std::string>{409, "conflict"}));
  EXPECT_EQ(http_error(ErrorCode::kIntegrity).second, "integrity");
  EXPECT_EQ(http_error(ErrorCode::kValidation), (std::pair<int, std::string>{400, "validation"}));
  EXPECT_EQ(http_error(ErrorCode::kIo).first, 500);
}

TEST(Jobs, StatesMoveForward) {
  JobManager jobs(1);
  std::vector<JobStatus> seen;
  const auto s = jobs.submit("train", [](const JobManager::Progress& p) {
    p(0.5);
    p(0.2);  // ignored: progress never decreases
    return std::string("models/x");
  });
  EXPECT_EQ(s.state, JobState::kQueued);
  const auto done = jobs.wait(s.job_id, std::chrono::seconds(10));
  ASSERT_TRUE(done.has_value());
  EXPECT_EQ(done->state, JobState::kDone);
  EXPECT_DOUBLE_EQ(done->progress, 1.0);
  EXPECT_EQ(done->result_ref, "models/x");

  const auto f = jobs.submit("evaluate", [](const JobManager::Progress&) -> std::string { throw std::runtime_error("boom"); });
  const auto failed = jobs.wait(f.job_id, std::chrono::seconds(10));
  EXPECT_EQ(failed->state, JobState::kFailed);
  EXPECT_EQ(failed->error, "boom");
  EXPECT_FALSE(jobs.get("nope").has_value());
  jobs.shutdown();
}

TEST_F(GatewayTest, AuthRequired) {
  auto r = client_->Get("/nomenclature");
  expect_error(r, 401, "unauthorized");
  expect_error(get("/nomenclature", "wrong"), 401, "unauthorized");
  r = client_->Get("/health");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
}

TEST_F(GatewayTest, Nomenclature) {
  const auto r = get("/nomenclature");
  ASSERT_EQ(r->status, 200);
  const auto j = body(r);
  EXPECT_EQ(j["classes"].get<std::vector<std::string>>(), Nomenclature::defaults().classes);
  EXPECT_TRUE(j["version"].is_number_integer());
}

TEST_F(GatewayTest, ImagesPagingAndFilters) {
  const std::size_t total = store_->list_images().size();
  auto j = body(get("/images"));
  EXPECT_EQ(j["total"], total);
  EXPECT_EQ(j["items"].size(), 2u);
  EXPECT_EQ(j["per_page"], 2);
  const auto& item = j["items"][0];
  for (const char* field : {"id", "file", "width", "height", "sha256", "split", "mask_classes", "annotation_count",
                            "pending_proposals"}) {
    EXPECT_TRUE(item.contains(field)) << field;
  }
  j = body(get("/images?page=100"));
  EXPECT_TRUE(j["items"].empty());

  const auto annotated = body(get("/images?status=annotated&per_page=500"));
  const auto unannotated = body(get("/images?status=unannotated&per_page=500"));
  EXPECT_EQ(annotated["total"].get<std::size_t>() + unannotated["total"].get<std::size_t>(), total);
  for (const auto& e : annotated["items"]) EXPECT_GT(e["annotation_count"], 0);
  for (const auto& e : body(get("/images?status=pending&per_page=500"))["items"]) EXPECT_GT(e["pending_proposals"], 0);

  expect_error(get("/images?status=weird"), 400, "validation");
  expect_error(get("/images?class=feathers"), 400, "validation");
  expect_error(get("/images?page=-1"), 400, "validation");
}

TEST_F(GatewayTest, ImageBytes) {
  const auto id = store_->list_images().front().id;
  const auto r = get("/images/" + id);
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(r->get_header_value("Content-Type"), "image/png");
  const auto bytes = store_->image_bytes(id);
  EXPECT_EQ(r->body, std::string(bytes.begin(), bytes.end()));
  expect_error(get("/images/img-missing"), 404, "not-found");
  expect_error(get("/images/img-missing/proposals"), 404, "not-found");
}

TEST_F(GatewayTest, AcceptRoundTrip) {
  const auto image = first_proposal_image();
  ASSERT_FALSE(image.empty());
  auto before = body(get("/images/" + image + "/proposals"));
  ASSERT_FALSE(before["proposals"].empty());
  const auto& p = before["proposals"][0];
  for (const char* field : {"id", "image_id", "class_id", "hull", "score", "members", "status", "model_version"})
    EXPECT_TRUE(p.contains(field)) << field;
  const std::string pid = p["id"];
  const std::size_t n_before = before["annotations"].size();

  const auto r = post("/proposals/" + pid + "/decision", {{"decision", "accept"}});
  ASSERT_EQ(r->status, 200) << r->body;
  const auto d = body(r);
  EXPECT_EQ(d["decision"]["decision"], "accept");
  EXPECT_EQ(d["decision"]["annotator"], "alice");
  EXPECT_EQ(d["annotation"]["origin"], "accepted-proposal");
  EXPECT_EQ(d["annotation"]["source_proposal"], pid);
  EXPECT_EQ(d["annotation"]["geometry"]["type"], "polygon");
  EXPECT_EQ(d["annotation"]["geometry"]["vertices"], p["hull"]);

  const auto after = body(get("/images/" + image + "/proposals"));
  EXPECT_EQ(after["annotations"].size(), n_before + 1);
  for (const auto& q : after["proposals"])
    if (q["id"] == pid) {
      EXPECT_EQ(q["status"], "accepted");
    }

  expect_error(post("/proposals/" + pid + "/decision", {{"decision", "decline"}}, "tok-b"), 409, "conflict");
  EXPECT_TRUE(store_->audit().empty());
}

TEST_F(GatewayTest, DeclineAndEdit) {
  const auto proposals = store_->list_proposals();
  ASSERT_GE(proposals.size(), 2u);
  auto r = post("/proposals/" + proposals[0].id + "/decision", {{"decision", "decline"}});
  ASSERT_EQ(r->status, 200) << r->body;
  EXPECT_TRUE(body(r)["annotation"].is_null());

  const auto b = proposals[1].hull.bounding_rect();
  const json edit = json::array({{b.x0, b.y0}, {b.x1, b.y0}, {b.x0, b.y1}});
  r = post("/proposals/" + proposals[1].id + "/decision", {{"decision", "accept-with-edit"}, {"edited_geometry", edit}});
  ASSERT_EQ(r->status, 200) << r->body;
  EXPECT_EQ(body(r)["decision"]["decision"], "accept-with-edit");
  EXPECT_EQ(body(r)["annotation"]["geometry"]["vertices"].size(), 3u);

  expect_error(post("/proposals/nope/decision", {{"decision", "accept"}}), 404, "not-found");
  expect_error(post("/proposals/" + proposals[0].id + "/decision", {{"decision", "maybe"}}), 400, "validation");
  if (proposals.size() > 2) {
    expect_error(post("/proposals/" + proposals[2].id + "/decision", {{"decision", "accept-with-edit"}}), 400, "validation");
  }
}

TEST_F(GatewayTest, ManualAnnotations) {
  const auto id = store_->list_images().front().id;
  auto r = post("/annotations", {{"image_id", id}, {"rect", {10, 10, 60, 80}}, {"class", "mold"}});
  ASSERT_EQ(r->status, 201) << r->body;
  const auto a = body(r);
  EXPECT_EQ(a["annotator"], "alice");
  EXPECT_EQ(a["origin"], "manual");
  EXPECT_EQ(a["class"], "mold");
  EXPECT_EQ(a["geometry"]["type"], "rect");
  EXPECT_TRUE(store_->get_annotation(a["id"]).has_value());
  const auto listed = body(get("/images/" + id + "/annotations"));
  bool found = false;
  for (const auto& e : listed["annotations"]) found = found || e["id"] == a["id"];
  EXPECT_TRUE(found);

  expect_error(post("/annotations", {{"image_id", id}, {"rect", {10, 10, 60, 80}}, {"class", "feathers"}}), 400, "validation");
  expect_error(post("/annotations", {{"image_id", id}, {"rect", {10, 10, 6000, 80}}, {"class", "mold"}}), 400, "validation");
  expect_error(post("/annotations", {{"image_id", "img-nope"}, {"rect", {1, 1, 5, 5}}, {"class", "mold"}}), 404, "not-found");
  expect_error(post("/annotations", {{"image_id", id}}), 400, "validation");
  auto raw = client_->Post("/annotations", auth(), "{not json", "application/json");
  expect_error(raw, 400, "validation");
}

TEST_F(GatewayTest, IdempotentRetry) {
  const auto id = store_->list_images().front().id;
  const json req{{"image_id", id}, {"rect", {5, 5, 50, 50}}, {"class", "eggs"}};
  const auto first = post("/annotations", req, "tok-a", "key-1");
  ASSERT_EQ(first->status, 201);
  const auto again = post("/annotations", req, "tok-a", "key-1");
  ASSERT_EQ(again->status, 201);
  EXPECT_EQ(again->body, first->body);
  EXPECT_EQ(again->get_header_value("Idempotent-Replay"), "true");
  std::size_t count = 0;
  for (const auto& a : store_->list_annotations()) count += a.annotator == "alice";
  EXPECT_EQ(count, 1u);

  json other = req;
  other["class"] = "mold";
  expect_error(post("/annotations", other, "tok-a", "key-1"), 409, "conflict");
  // Keys are per annotator.
  EXPECT_EQ(post("/annotations", other, "tok-b", "key-1")->status, 201);

  const auto pid = store_->list_proposals().front().id;
  const auto d1 = post("/proposals/" + pid + "/decision", {{"decision", "accept"}}, "tok-a", "key-2");
  const auto d2 = post("/proposals/" + pid + "/decision", {{"decision", "accept"}}, "tok-a", "key-2");
  EXPECT_EQ(d1->status, 200);
  EXPECT_EQ(d2->status, 200);
  EXPECT_EQ(d1->body, d2->body);
  EXPECT_EQ(store_->list_decisions(pid).size(), 1u);
}

TEST_F(GatewayTest, QueueAndJobs) {
  expect_error(get("/queue?class=eggs"), 404, "not-found");
  expect_error(get("/queue"), 400, "validation");

  auto r = post("/jobs", {{"kind", "score-corpus"}});
  ASSERT_EQ(r->status, 202) << r->body;
  auto job = body(r);
  for (const char* field : {"job_id", "kind", "state", "progress", "result_ref"}) EXPECT_TRUE(job.contains(field)) << field;
  job = wait_job(job["job_id"]);
  ASSERT_EQ(job["state"], "done") << job.dump();
  EXPECT_DOUBLE_EQ(job["progress"].get<double>(), 1.0);

  const auto q = body(get("/queue?class=eggs&k=3"));
  EXPECT_EQ(q["class"], "eggs");
  EXPECT_EQ(q["model_version"], store_->latest_model_id().value());
  EXPECT_EQ(q["stale"], false);
  ASSERT_LE(q["items"].size(), 3u);
  for (std::size_t i = 1; i < q["items"].size(); ++i)
    EXPECT_GE(q["items"][i - 1]["presence_score"].get<double>(), q["items"][i]["presence_score"].get<double>());
  std::set<std::string> manual;
  for (const auto& a : store_->list_annotations({std::nullopt, std::string("eggs"), AnnotationOrigin::kManual}))
    manual.insert(a.image_id);
  for (const auto& item : q["items"]) EXPECT_FALSE(manual.count(item["image_id"])) << item.dump();
  expect_error(get("/queue?class=feathers"), 400, "validation");

  expect_error(get("/metrics/latest"), 404, "not-found");
  job = wait_job(body(post("/jobs", {{"kind", "evaluate"}}))["job_id"]);
  ASSERT_EQ(job["state"], "done") << job.dump();
  const auto m = body(get("/metrics/latest"));
  for (const char* field : {"method", "mAP", "mAR", "summary", "classification_precision", "accuracy"})
    EXPECT_TRUE(m.contains(field)) << field;
  EXPECT_EQ(m["method"], "patch-softmax");

  expect_error(post("/jobs", {{"kind", "dance"}}), 400, "validation");
  expect_error(post("/jobs", {{"kind", "segment-corpus"}, {"params", {{"threshold", 3}}}}), 400, "validation");
  expect_error(get("/jobs/nope"), 404, "not-found");
}

TEST_F(GatewayTest, RetrainMarksQueueStale) {
  auto job = wait_job(body(post("/jobs", {{"kind", "score-corpus"}}))["job_id"]);
  ASSERT_EQ(job["state"], "done");
  const std::string old_version = store_->latest_model_id().value();
  job = wait_job(body(post("/jobs", {{"kind", "segment-corpus"}, {"params", {{"split", "train"}}}}))["job_id"]);
  ASSERT_EQ(job["state"], "done") << job.dump();

  // A model trained with another seed becomes latest.
  auto config = PipelineConfig::from_json(small_config_json());
  config.seed = 99;
  config.train.epochs = 2;
  run_train(*store_, config);
  ASSERT_NE(store_->latest_model_id().value(), old_version);
  const auto q = body(get("/queue?class=mold"));
  EXPECT_EQ(q["model_version"], old_version);
  EXPECT_EQ(q["stale"], true);
}

TEST_F(GatewayTest, TrainJob) {
  const auto before = store_->list_models().size();
  auto job = body(post("/jobs", {{"kind", "train"}}));
  EXPECT_EQ(job["kind"], "train");
  job = wait_job(job["job_id"]);
  ASSERT_EQ(job["state"], "done") << job.dump();
  EXPECT_EQ(job["result_ref"], "models/" + store_->latest_model_id().value());
  EXPECT_GE(store_->list_models().size(), before);
}

TEST_F(GatewayTest, UnknownRoute) {
  expect_error(get("/nothing/here"), 404, "not-found");
}
