#include "texanno/store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "texanno/errors.hpp"
#include "texanno/hashing.hpp"
#include "texanno/png_io.hpp"
#include "texanno/synthgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace texanno {

namespace {

constexpr const char* kImagesFile = "records/images.ndjson";
constexpr const char* kAnnotationsFile = "records/annotations.ndjson";
constexpr const char* kProposalsFile = "records/proposals.ndjson";
constexpr const char* kDecisionsFile = "records/decisions.ndjson";
constexpr const char* kModelsFile = "records/models.ndjson";

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool valid_name(const std::string& s) {
  if (s.empty() || s.size() > 128) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
           c == '_' || c == '.';
  }) && s.front() != '.';
}

template <typename T, typename F>
std::vector<T> read_ndjson(const fs::path& path, F parse) {
  std::vector<T> out;
  if (!fs::exists(path)) return out;
  std::istringstream in(read_text(path));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(parse(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kIntegrity, path.string() + ":" + std::to_string(n) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::kIntegrity, path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

template <typename T>
void write_ndjson(const fs::path& path, const std::vector<T>& records) {
  std::string text;
  for (const auto& r : records) {
    text += to_json(r).dump();
    text += '\n';
  }
  write_file_atomic(path, text);
}

json rect_json(const Rect& r) { return json::array({r.x0, r.y0, r.x1, r.y1}); }

Rect rect_from(const json& j) {
  if (!j.is_array() || j.size() != 4) throw Error(ErrorCode::kValidation, "rect must be [x0,y0,x1,y1]");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

json polygon_json(const Polygon& p) {
  json v = json::array();
  for (const auto& pt : p.vertices) v.push_back(json::array({pt.x, pt.y}));
  return v;
}

Polygon polygon_from(const json& j) {
  if (!j.is_array()) throw Error(ErrorCode::kValidation, "polygon must be a list of [x,y]");
  Polygon p;
  for (const auto& v : j) {
    if (!v.is_array() || v.size() != 2) throw Error(ErrorCode::kValidation, "vertex must be [x,y]");
    p.vertices.push_back({v[0].get<std::int64_t>(), v[1].get<std::int64_t>()});
  }
  return p;
}

std::string opt_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  return it->get<std::string>();
}

double round6(double v) { return std::round(v * 1e6) / 1e6; }

}  // namespace

// ---------------------------------------------------------------------------

bool Nomenclature::contains(const std::string& name) const {
  return std::find(classes.begin(), classes.end(), name) != classes.end();
}

std::vector<std::string> Nomenclature::forensic_classes() const {
  std::vector<std::string> out;
  for (const auto& c : classes) {
    if (c != kBackgroundClass) out.push_back(c);
  }
  return out;
}

void Nomenclature::validate() const {
  std::set<std::string> seen;
  for (const auto& c : classes) {
    if (!valid_name(c)) throw Error(ErrorCode::kValidation, "invalid class name '" + c + "'");
    if (!seen.insert(c).second) throw Error(ErrorCode::kValidation, "duplicate class '" + c + "'");
  }
  if (!seen.count(kBackgroundClass)) throw Error(ErrorCode::kValidation, "nomenclature lacks background");
  if (version < 1) throw Error(ErrorCode::kValidation, "nomenclature version must be positive");
}

Nomenclature Nomenclature::defaults() {
  Nomenclature n;
  for (const auto& [cls, count] : collection_class_counts()) n.classes.push_back(cls);
  n.classes.push_back(kBackgroundClass);
  return n;
}

Rect geometry_bounds(const Geometry& g) {
  if (const Rect* r = std::get_if<Rect>(&g)) return *r;
  return std::get<Polygon>(g).bounding_rect();
}

std::string_view to_string(AnnotationOrigin o) {
  return o == AnnotationOrigin::kManual ? "manual" : "accepted-proposal";
}

AnnotationOrigin parse_origin(std::string_view s) {
  if (s == "manual") return AnnotationOrigin::kManual;
  if (s == "accepted-proposal") return AnnotationOrigin::kAcceptedProposal;
  throw Error(ErrorCode::kValidation, "unknown annotation origin '" + std::string(s) + "'");
}

std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::kAccept: return "accept";
    case Decision::kDecline: return "decline";
    case Decision::kAcceptWithEdit: return "accept-with-edit";
  }
  return "accept";
}

Decision parse_decision(std::string_view s) {
  if (s == "accept") return Decision::kAccept;
  if (s == "decline") return Decision::kDecline;
  if (s == "accept-with-edit") return Decision::kAcceptWithEdit;
  throw Error(ErrorCode::kValidation, "unknown decision '" + std::string(s) + "'");
}

json to_json(const Geometry& g) {
  if (const Rect* r = std::get_if<Rect>(&g)) return {{"type", "rect"}, {"rect", rect_json(*r)}};
  return {{"type", "polygon"}, {"vertices", polygon_json(std::get<Polygon>(g))}};
}

Geometry geometry_from_json(const json& j) try {
  const auto type = j.at("type").get<std::string>();
  if (type == "rect") return rect_from(j.at("rect"));
  if (type == "polygon") return polygon_from(j.at("vertices"));
  throw Error(ErrorCode::kValidation, "unknown geometry type '" + type + "'");
} catch (const json::exception& e) {
  throw Error(ErrorCode::kValidation, std::string("malformed record: ") + e.what());
}

json to_json(const ImageEntry& r) {
  return {{"id", r.id},         {"file", r.file},     {"width", r.width},
          {"height", r.height}, {"sha256", r.sha256}, {"split", r.split},
          {"mask_classes", r.mask_classes}};
}

ImageEntry image_entry_from_json(const json& j) try {
  ImageEntry r;
  r.id = j.at("id").get<std::string>();
  r.file = j.at("file").get<std::string>();
  r.width = j.at("width").get<int>();
  r.height = j.at("height").get<int>();
  r.sha256 = j.at("sha256").get<std::string>();
  r.split = j.at("split").get<std::string>();
  r.mask_classes = j.at("mask_classes").get<std::vector<std::string>>();
  return r;
} catch (const json::exception& e) {
  throw Error(ErrorCode::kValidation, std::string("malformed record: ") + e.what());
}

json to_json(const AnnotationRecord& r) {
  json j = {{"id", r.id},
            {"image_id", r.image_id},
            {"geometry", to_json(r.geometry)},
            {"class", r.class_name},
            {"annotator", r.annotator},
            {"created_at", r.created_at},
            {"origin", to_string(r.origin)}};
  j["source_proposal"] = r.source_proposal ? json(*r.source_proposal) : json();
  return j;
}

AnnotationRecord annotation_from_json(const json& j) try {
  AnnotationRecord r;
  r.id = j.at("id").get<std::string>();
  r.image_id = j.at("image_id").get<std::string>();
  r.geometry = geometry_from_json(j.at("geometry"));
  r.class_name = j.at("class").get<std::string>();
  r.annotator = j.at("annotator").get<std::string>();
  r.created_at = j.at("created_at").get<std::string>();
  r.origin = parse_origin(j.at("origin").get<std::string>());
  if (auto s = opt_string(j, "source_proposal"); !s.empty()) r.source_proposal = s;
  return r;
} catch (const json::exception& e) {
  throw Error(ErrorCode::kValidation, std::string("malformed record: ") + e.what());
}

json to_json(const ProposedSegment& r) {
  json members = json::array();
  for (const auto& w : r.member_windows) {
    members.push_back({{"rect", rect_json(w.rect)}, {"class_id", w.class_id}, {"confidence", w.confidence}});
  }
  return {{"id", r.id},
          {"image_id", r.image_id},
          {"class_id", r.class_id},
          {"hull", polygon_json(r.hull)},
          {"score", round6(r.score)},
          {"members", members},
          {"status", to_string(r.status)},
          {"model_version", r.model_version}};
}

ProposedSegment proposal_from_json(const json& j) try {
  ProposedSegment r;
  r.id = j.at("id").get<std::string>();
  r.image_id = j.at("image_id").get<std::string>();
  r.class_id = j.at("class_id").get<std::string>();
  r.hull = polygon_from(j.at("hull"));
  r.score = j.at("score").get<double>();
  for (const auto& m : j.at("members")) {
    WindowClassification w;
    w.rect = rect_from(m.at("rect"));
    w.class_id = m.at("class_id").get<std::string>();
    w.confidence = m.at("confidence").get<double>();
    r.member_windows.push_back(std::move(w));
  }
  r.status = parse_review_status(j.at("status").get<std::string>());
  r.model_version = j.at("model_version").get<std::string>();
  return r;
} catch (const json::exception& e) {
  throw Error(ErrorCode::kValidation, std::string("malformed record: ") + e.what());
}

json to_json(const DecisionRecord& r) {
  json j = {{"id", r.id},
            {"proposal_id", r.proposal_id},
            {"decision", to_string(r.decision)},
            {"annotator", r.annotator},
            {"timestamp", r.timestamp}};
  j["edited_geometry"] = r.edited_geometry ? polygon_json(*r.edited_geometry) : json();
  return j;
}

DecisionRecord decision_from_json(const json& j) try {
  DecisionRecord r;
  r.id = j.at("id").get<std::string>();
  r.proposal_id = j.at("proposal_id").get<std::string>();
  r.decision = parse_decision(j.at("decision").get<std::string>());
  r.annotator = j.at("annotator").get<std::string>();
  r.timestamp = j.at("timestamp").get<std::string>();
  if (auto it = j.find("edited_geometry"); it != j.end() && !it->is_null()) r.edited_geometry = polygon_from(*it);
  return r;
} catch (const json::exception& e) {
  throw Error(ErrorCode::kValidation, std::string("malformed record: ") + e.what());
}

json to_json(const ModelEntry& r) {
  return {{"id", r.id}, {"file", r.file}, {"roster", r.roster}, {"dataset", r.dataset}};
}

ModelEntry model_entry_from_json(const json& j) try {
  return {j.at("id").get<std::string>(), j.at("file").get<std::string>(),
          j.at("roster").get<std::vector<std::string>>(), j.at("dataset").get<std::string>()};
} catch (const json::exception& e) {
  throw Error(ErrorCode::kValidation, std::string("malformed record: ") + e.what());
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp." + random_id().substr(0, 8);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw Error(ErrorCode::kIo, "write failed for " + path.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(ErrorCode::kIo, "cannot replace " + path.string() + ": " + ec.message());
  }
}

// ---------------------------------------------------------------------------

Store::Store(fs::path root, std::optional<Nomenclature> nomenclature) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_ / "records", ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create store at " + root_.string() + ": " + ec.message());
  const fs::path marker = root_ / "store.json";
  if (!fs::exists(marker)) {
    nomenclature_ = nomenclature ? *nomenclature : Nomenclature::defaults();
    nomenclature_.validate();
    json n = {{"version", nomenclature_.version}, {"classes", nomenclature_.classes}};
    write_file_atomic(root_ / "nomenclature.json", n.dump(2) + "\n");
    write_file_atomic(marker, json({{"format", "texanno-store"}, {"version", 1}}).dump(2) + "\n");
  }
  load();
}

void Store::load() {
  try {
    const json marker = json::parse(read_text(root_ / "store.json"));
    if (marker.at("format") != "texanno-store" || marker.at("version") != 1) {
      throw Error(ErrorCode::kIncompatible, "unsupported store format in " + root_.string());
    }
    const json n = json::parse(read_text(root_ / "nomenclature.json"));
    nomenclature_.classes = n.at("classes").get<std::vector<std::string>>();
    nomenclature_.version = n.at("version").get<int>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIntegrity, "corrupt store metadata: " + std::string(e.what()));
  }
  nomenclature_.validate();
  images_ = read_ndjson<ImageEntry>(root_ / kImagesFile, image_entry_from_json);
  annotations_ = read_ndjson<AnnotationRecord>(root_ / kAnnotationsFile, annotation_from_json);
  proposals_ = read_ndjson<ProposedSegment>(root_ / kProposalsFile, proposal_from_json);
  decisions_ = read_ndjson<DecisionRecord>(root_ / kDecisionsFile, decision_from_json);
  models_ = read_ndjson<ModelEntry>(root_ / kModelsFile, model_entry_from_json);
  image_index_.clear();
  for (std::size_t i = 0; i < images_.size(); ++i) image_index_[images_[i].id] = i;
  proposal_index_.clear();
  for (std::size_t i = 0; i < proposals_.size(); ++i) proposal_index_[proposals_[i].id] = i;
}

void Store::flush_images() const { write_ndjson(root_ / kImagesFile, images_); }
void Store::flush_annotations() const { write_ndjson(root_ / kAnnotationsFile, annotations_); }
void Store::flush_proposals() const { write_ndjson(root_ / kProposalsFile, proposals_); }
void Store::flush_decisions() const { write_ndjson(root_ / kDecisionsFile, decisions_); }
void Store::flush_models() const { write_ndjson(root_ / kModelsFile, models_); }

Nomenclature Store::nomenclature() const {
  std::shared_lock lock(mutex_);
  return nomenclature_;
}

ImageEntry Store::put_image(const Raster& image, const std::string& split, const std::vector<ClassMask>& masks) {
  if (image.empty()) throw Error(ErrorCode::kValidation, "empty image");
  for (const auto& m : masks) {
    if (m.width != image.width() || m.height != image.height()) {
      throw Error(ErrorCode::kValidation, "mask '" + m.class_id + "' does not match image size");
    }
    if (!nomenclature_.contains(m.class_id)) {
      throw Error(ErrorCode::kValidation, "mask class '" + m.class_id + "' not in nomenclature");
    }
  }
  const auto bytes = encode_png(image);
  std::string header = std::to_string(image.width()) + "x" + std::to_string(image.height()) + ":";
  std::vector<std::uint8_t> keyed(header.begin(), header.end());
  keyed.insert(keyed.end(), image.pixels().begin(), image.pixels().end());
  const std::string id = "img-" + sha256_hex(keyed).substr(0, 20);

  std::unique_lock lock(mutex_);
  if (auto it = image_index_.find(id); it != image_index_.end()) return images_[it->second];

  ImageEntry entry;
  entry.id = id;
  entry.file = "images/" + id + ".png";
  entry.width = image.width();
  entry.height = image.height();
  entry.sha256 = sha256_hex(bytes);
  entry.split = split;
  write_file_atomic(root_ / entry.file, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  for (const auto& m : masks) {
    const auto png = encode_mask_png(m.width, m.height, m.bits);
    write_file_atomic(root_ / "masks" / id / (m.class_id + ".png"),
                      std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
    entry.mask_classes.push_back(m.class_id);
  }
  images_.push_back(entry);
  image_index_[id] = images_.size() - 1;
  flush_images();
  return entry;
}

std::optional<ImageEntry> Store::get_image(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = image_index_.find(id);
  if (it == image_index_.end()) return std::nullopt;
  return images_[it->second];
}

std::vector<ImageEntry> Store::list_images(const ImageFilter& filter) const {
  std::shared_lock lock(mutex_);
  std::vector<ImageEntry> out;
  for (const auto& e : images_) {
    if (filter.split && e.split != *filter.split) continue;
    out.push_back(e);
  }
  return out;
}

Raster Store::load_image(const std::string& id) const {
  const auto entry = get_image(id);
  if (!entry) throw Error(ErrorCode::kNotFound, "no image '" + id + "'");
  Raster r = read_png(root_ / entry->file);
  r.set_id(id);
  return r;
}

std::vector<std::uint8_t> Store::image_bytes(const std::string& id) const {
  const auto entry = get_image(id);
  if (!entry) throw Error(ErrorCode::kNotFound, "no image '" + id + "'");
  const std::string text = read_text(root_ / entry->file);
  return {text.begin(), text.end()};
}

std::vector<ClassMask> Store::load_masks(const std::string& id) const {
  const auto entry = get_image(id);
  if (!entry) throw Error(ErrorCode::kNotFound, "no image '" + id + "'");
  std::vector<ClassMask> out;
  for (const auto& cls : entry->mask_classes) {
    int w = 0, h = 0;
    auto bits = read_mask_png(root_ / "masks" / id / (cls + ".png"), w, h);
    if (w != entry->width || h != entry->height) {
      throw Error(ErrorCode::kIntegrity, "mask '" + cls + "' of " + id + " has the wrong size");
    }
    ClassMask m(cls, w, h);
    m.bits = std::move(bits);
    out.push_back(std::move(m));
  }
  return out;
}

void Store::validate_annotation(const AnnotationRecord& r) const {
  if (!nomenclature_.contains(r.class_name) || r.class_name == kBackgroundClass) {
    throw Error(ErrorCode::kValidation, "class '" + r.class_name + "' not in nomenclature");
  }
  auto it = image_index_.find(r.image_id);
  if (it == image_index_.end()) throw Error(ErrorCode::kIntegrity, "annotation references unknown image '" + r.image_id + "'");
  const ImageEntry& img = images_[it->second];
  const Rect bounds{0, 0, img.width, img.height};
  if (const Rect* rect = std::get_if<Rect>(&r.geometry)) {
    if (!rect->valid() || !bounds.contains(*rect)) {
      throw Error(ErrorCode::kValidation, "rect " + to_string(*rect) + " outside image " + r.image_id);
    }
  } else {
    const Polygon& p = std::get<Polygon>(r.geometry);
    if (p.vertices.size() < 3 || p.twice_signed_area() == 0) {
      throw Error(ErrorCode::kValidation, "polygon needs at least three non-collinear vertices");
    }
    for (const auto& v : p.vertices) {
      if (v.x < 0 || v.y < 0 || v.x > img.width || v.y > img.height) {
        throw Error(ErrorCode::kValidation, "polygon vertex outside image " + r.image_id);
      }
    }
  }
  if (r.origin == AnnotationOrigin::kAcceptedProposal) {
    if (!r.source_proposal || !proposal_index_.count(*r.source_proposal)) {
      throw Error(ErrorCode::kIntegrity, "accepted annotation without a stored source proposal");
    }
  } else if (r.source_proposal) {
    throw Error(ErrorCode::kValidation, "manual annotation cannot carry a source proposal");
  }
  if (r.annotator.empty()) throw Error(ErrorCode::kValidation, "annotation without annotator");
}

AnnotationRecord Store::prepare_annotation(AnnotationRecord r) const {
  if (r.id.empty()) r.id = "ann-" + random_id();
  if (r.created_at.empty()) r.created_at = utc_timestamp();
  validate_annotation(r);
  return r;
}

AnnotationRecord Store::put_annotation(AnnotationRecord record) {
  return put_annotations({std::move(record)}).front();
}

std::vector<AnnotationRecord> Store::put_annotations(std::vector<AnnotationRecord> records) {
  std::unique_lock lock(mutex_);
  std::set<std::string> ids;
  for (const auto& a : annotations_) ids.insert(a.id);
  for (auto& r : records) {
    r = prepare_annotation(std::move(r));
    if (!ids.insert(r.id).second) throw Error(ErrorCode::kConflict, "annotation id '" + r.id + "' already exists");
  }
  const auto before = annotations_.size();
  annotations_.insert(annotations_.end(), records.begin(), records.end());
  try {
    flush_annotations();
  } catch (...) {
    annotations_.resize(before);
    throw;
  }
  return records;
}

std::optional<AnnotationRecord> Store::get_annotation(const std::string& id) const {
  std::shared_lock lock(mutex_);
  for (const auto& a : annotations_) {
    if (a.id == id) return a;
  }
  return std::nullopt;
}

std::vector<AnnotationRecord> Store::list_annotations(const AnnotationFilter& filter) const {
  std::shared_lock lock(mutex_);
  std::vector<AnnotationRecord> out;
  for (const auto& a : annotations_) {
    if (filter.image_id && a.image_id != *filter.image_id) continue;
    if (filter.class_name && a.class_name != *filter.class_name) continue;
    if (filter.origin && a.origin != *filter.origin) continue;
    out.push_back(a);
  }
  return out;
}

void Store::put_proposals(const std::vector<ProposedSegment>& proposals) {
  std::unique_lock lock(mutex_);
  for (const auto& p : proposals) {
    if (!image_index_.count(p.image_id)) {
      throw Error(ErrorCode::kIntegrity, "proposal references unknown image '" + p.image_id + "'");
    }
    if (!nomenclature_.contains(p.class_id) || p.class_id == kBackgroundClass) {
      throw Error(ErrorCode::kValidation, "proposal class '" + p.class_id + "' not in nomenclature");
    }
    if (p.id.empty()) throw Error(ErrorCode::kValidation, "proposal without id");
  }
  for (const auto& given : proposals) {
    // Keep memory identical to what a reload would produce.
    const ProposedSegment p = proposal_from_json(to_json(given));
    if (auto it = proposal_index_.find(p.id); it != proposal_index_.end()) {
      ProposedSegment& existing = proposals_[it->second];
      const ReviewStatus status = existing.status;
      existing = p;
      existing.status = status;
    } else {
      proposals_.push_back(p);
      proposal_index_[p.id] = proposals_.size() - 1;
    }
  }
  flush_proposals();
}

std::optional<ProposedSegment> Store::get_proposal(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = proposal_index_.find(id);
  if (it == proposal_index_.end()) return std::nullopt;
  return proposals_[it->second];
}

std::vector<ProposedSegment> Store::list_proposals(const ProposalFilter& filter) const {
  std::shared_lock lock(mutex_);
  std::vector<ProposedSegment> out;
  for (const auto& p : proposals_) {
    if (filter.image_id && p.image_id != *filter.image_id) continue;
    if (filter.class_id && p.class_id != *filter.class_id) continue;
    if (filter.status && p.status != *filter.status) continue;
    if (filter.model_version && p.model_version != *filter.model_version) continue;
    out.push_back(p);
  }
  return out;
}

const ProposedSegment& Store::undecided_proposal(const std::string& id) const {
  auto it = proposal_index_.find(id);
  if (it == proposal_index_.end()) throw Error(ErrorCode::kNotFound, "no proposal '" + id + "'");
  const ProposedSegment& p = proposals_[it->second];
  if (p.status != ReviewStatus::kProposed) {
    throw Error(ErrorCode::kConflict, "proposal '" + id + "' already " + std::string(to_string(p.status)));
  }
  return p;
}

AnnotationRecord Store::accept_proposal(const std::string& proposal_id, const std::string& annotator,
                                        const std::optional<Polygon>& edited_geometry) {
  std::unique_lock lock(mutex_);
  const ProposedSegment& p = undecided_proposal(proposal_id);
  AnnotationRecord a;
  a.image_id = p.image_id;
  a.class_name = p.class_id;
  a.geometry = edited_geometry ? *edited_geometry : p.hull;
  a.annotator = annotator;
  a.origin = AnnotationOrigin::kAcceptedProposal;
  a.source_proposal = proposal_id;
  a = prepare_annotation(std::move(a));

  DecisionRecord d;
  d.id = "dec-" + random_id();
  d.proposal_id = proposal_id;
  d.decision = edited_geometry ? Decision::kAcceptWithEdit : Decision::kAccept;
  d.edited_geometry = edited_geometry;
  d.annotator = annotator;
  d.timestamp = a.created_at;

  // Annotation, then decision, then status: a crash in between leaves a state
  // that audit() reports.
  annotations_.push_back(a);
  flush_annotations();
  decisions_.push_back(d);
  flush_decisions();
  proposals_[proposal_index_.at(proposal_id)].status = ReviewStatus::kAccepted;
  flush_proposals();
  return a;
}

DecisionRecord Store::decline_proposal(const std::string& proposal_id, const std::string& annotator) {
  std::unique_lock lock(mutex_);
  undecided_proposal(proposal_id);
  if (annotator.empty()) throw Error(ErrorCode::kValidation, "decision without annotator");
  DecisionRecord d;
  d.id = "dec-" + random_id();
  d.proposal_id = proposal_id;
  d.decision = Decision::kDecline;
  d.annotator = annotator;
  d.timestamp = utc_timestamp();
  decisions_.push_back(d);
  flush_decisions();
  proposals_[proposal_index_.at(proposal_id)].status = ReviewStatus::kDeclined;
  flush_proposals();
  return d;
}

std::vector<DecisionRecord> Store::list_decisions(const std::optional<std::string>& proposal_id) const {
  std::shared_lock lock(mutex_);
  std::vector<DecisionRecord> out;
  for (const auto& d : decisions_) {
    if (!proposal_id || d.proposal_id == *proposal_id) out.push_back(d);
  }
  return out;
}

ModelEntry Store::put_model(const SoftmaxModel& model, const std::string& dataset) {
  const auto bytes = model.serialize();
  ModelEntry e;
  e.id = sha256_hex(bytes).substr(0, 16);
  e.file = "models/" + e.id + ".model";
  e.roster = model.roster();
  e.dataset = dataset;
  std::unique_lock lock(mutex_);
  write_file_atomic(root_ / e.file, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  std::erase_if(models_, [&](const ModelEntry& m) { return m.id == e.id; });
  models_.push_back(e);
  flush_models();
  return e;
}

std::vector<ModelEntry> Store::list_models() const {
  std::shared_lock lock(mutex_);
  return models_;
}

std::optional<std::string> Store::latest_model_id() const {
  std::shared_lock lock(mutex_);
  if (models_.empty()) return std::nullopt;
  return models_.back().id;
}

SoftmaxModel Store::load_model(const std::string& id) const {
  std::string resolved = id;
  if (id == "latest") {
    auto latest = latest_model_id();
    if (!latest) throw Error(ErrorCode::kNotFound, "store holds no model");
    resolved = *latest;
  }
  fs::path file;
  {
    std::shared_lock lock(mutex_);
    auto it = std::find_if(models_.begin(), models_.end(), [&](const ModelEntry& m) { return m.id == resolved; });
    if (it == models_.end()) throw Error(ErrorCode::kNotFound, "no model '" + resolved + "'");
    file = root_ / it->file;
  }
  return SoftmaxModel::load(file);
}

void Store::put_dataset(const std::string& name, const DatasetSplit& split) {
  if (!valid_name(name)) throw Error(ErrorCode::kValidation, "invalid dataset name '" + name + "'");
  std::unique_lock lock(mutex_);
  write_file_atomic(root_ / "datasets" / (name + ".json"), split.to_json().dump() + "\n");
}

DatasetSplit Store::get_dataset(const std::string& name) const {
  if (!valid_name(name)) throw Error(ErrorCode::kValidation, "invalid dataset name '" + name + "'");
  const fs::path path = root_ / "datasets" / (name + ".json");
  std::shared_lock lock(mutex_);
  if (!fs::exists(path)) throw Error(ErrorCode::kNotFound, "no dataset '" + name + "'");
  try {
    return DatasetSplit::from_json(json::parse(read_text(path)));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIntegrity, "corrupt dataset '" + name + "': " + e.what());
  }
}

void Store::put_scores(const std::string& model_version, const std::vector<ImageClassScore>& scores) {
  if (!valid_name(model_version)) throw Error(ErrorCode::kValidation, "invalid model version");
  std::unique_lock lock(mutex_);
  for (const auto& s : scores) {
    if (!image_index_.count(s.image_id)) {
      throw Error(ErrorCode::kIntegrity, "score references unknown image '" + s.image_id + "'");
    }
  }
  write_ndjson(root_ / "scores" / (model_version + ".ndjson"), scores);
}

std::optional<std::vector<ImageClassScore>> Store::get_scores(const std::string& model_version) const {
  if (!valid_name(model_version)) return std::nullopt;
  const fs::path path = root_ / "scores" / (model_version + ".ndjson");
  std::shared_lock lock(mutex_);
  if (!fs::exists(path)) return std::nullopt;
  return read_ndjson<ImageClassScore>(path, score_from_json);
}

void Store::put_report(const std::string& name, const EvalReport& report) {
  if (!valid_name(name)) throw Error(ErrorCode::kValidation, "invalid report name '" + name + "'");
  const std::string text = report.to_json().dump(2) + "\n";
  std::unique_lock lock(mutex_);
  write_file_atomic(root_ / "reports" / (name + ".json"), text);
  write_file_atomic(root_ / "reports" / "latest.json", text);
}

std::optional<EvalReport> Store::latest_report() const {
  const fs::path path = root_ / "reports" / "latest.json";
  std::shared_lock lock(mutex_);
  if (!fs::exists(path)) return std::nullopt;
  try {
    return EvalReport::from_json(json::parse(read_text(path)));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIntegrity, std::string("corrupt report: ") + e.what());
  }
}

json Store::write_manifest() const {
  std::unique_lock lock(mutex_);
  std::vector<std::string> paths;
  for (const auto& entry : fs::recursive_directory_iterator(root_)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), root_).generic_string();
    if (rel == "manifest.json" || rel.find(".tmp.") != std::string::npos) continue;
    paths.push_back(rel);
  }
  std::sort(paths.begin(), paths.end());
  json files = json::array();
  for (const auto& rel : paths) {
    files.push_back({{"path", rel}, {"sha256", sha256_file(root_ / rel)}, {"bytes", fs::file_size(root_ / rel)}});
  }
  json manifest = {{"format", "texanno-manifest"}, {"version", 1}, {"files", files}};
  write_file_atomic(root_ / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

std::vector<std::string> Store::audit() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> issues;
  for (const auto& img : images_) {
    const fs::path file = root_ / img.file;
    if (!fs::exists(file)) {
      issues.push_back("image " + img.id + ": missing file " + img.file);
    } else if (sha256_file(file) != img.sha256) {
      issues.push_back("image " + img.id + ": checksum mismatch");
    }
    for (const auto& cls : img.mask_classes) {
      if (!fs::exists(root_ / "masks" / img.id / (cls + ".png"))) {
        issues.push_back("image " + img.id + ": missing mask for " + cls);
      }
    }
  }
  std::set<std::string> annotation_ids;
  for (const auto& a : annotations_) {
    if (!annotation_ids.insert(a.id).second) issues.push_back("annotation " + a.id + ": duplicate id");
    if (!image_index_.count(a.image_id)) issues.push_back("annotation " + a.id + ": unknown image " + a.image_id);
    if (!nomenclature_.contains(a.class_name)) issues.push_back("annotation " + a.id + ": unknown class " + a.class_name);
    if (a.origin == AnnotationOrigin::kAcceptedProposal &&
        (!a.source_proposal || !proposal_index_.count(*a.source_proposal))) {
      issues.push_back("annotation " + a.id + ": missing source proposal");
    }
  }
  for (const auto& p : proposals_) {
    if (!image_index_.count(p.image_id)) issues.push_back("proposal " + p.id + ": unknown image " + p.image_id);
  }
  std::map<std::string, int> decision_count;
  for (const auto& d : decisions_) {
    if (!proposal_index_.count(d.proposal_id)) {
      issues.push_back("decision " + d.id + ": unknown proposal " + d.proposal_id);
      continue;
    }
    ++decision_count[d.proposal_id];
    const auto status = proposals_[proposal_index_.at(d.proposal_id)].status;
    const bool declined = d.decision == Decision::kDecline;
    if ((declined && status != ReviewStatus::kDeclined) || (!declined && status != ReviewStatus::kAccepted)) {
      issues.push_back("decision " + d.id + ": proposal status is " + std::string(to_string(status)));
    }
  }
  for (const auto& p : proposals_) {
    const int n = decision_count.count(p.id) ? decision_count.at(p.id) : 0;
    if (p.status != ReviewStatus::kProposed && n == 0) issues.push_back("proposal " + p.id + ": decided without a decision record");
    if (n > 1) issues.push_back("proposal " + p.id + ": " + std::to_string(n) + " decisions");
  }
  for (const auto& m : models_) {
    if (!fs::exists(root_ / m.file)) issues.push_back("model " + m.id + ": missing file " + m.file);
  }
  return issues;
}

Corpus Store::corpus(const std::string& split) const {
  std::shared_lock lock(mutex_);
  Corpus c;
  std::map<std::string, Rect> bounds;
  for (const auto& img : images_) {
    if (img.split != split) continue;
    c.images.push_back({img.id, img.width, img.height});
    bounds[img.id] = {0, 0, img.width, img.height};
  }
  for (const auto& a : annotations_) {
    auto it = bounds.find(a.image_id);
    if (it == bounds.end()) continue;
    Rect r = geometry_bounds(a.geometry);
    r.x0 = std::max(r.x0, 0);
    r.y0 = std::max(r.y0, 0);
    r.x1 = std::min(r.x1, it->second.x1);
    r.y1 = std::min(r.y1, it->second.y1);
    if (!r.valid()) continue;
    c.annotations.push_back({a.id, a.image_id, a.class_name, r});
  }
  return c;
}

}  // namespace texanno
