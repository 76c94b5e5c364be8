#include "texanno/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "texanno/errors.hpp"
#include "texanno/synthgen.hpp"

namespace texanno {

std::size_t ClassMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

void ClassMask::merge(const ClassMask& other) {
  if (other.width != width || other.height != height) {
    throw Error(ErrorCode::kValidation, "mask dimension mismatch");
  }
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] |= other.bits[i];
}

ClassMask rasterize_hull(const Polygon& polygon, int width, int height, const std::string& class_id) {
  ClassMask mask(class_id, width, height);
  if (polygon.vertices.size() < 3) return mask;
  // Work in doubled coordinates so pixel centers are integers.
  Polygon doubled;
  doubled.vertices.reserve(polygon.vertices.size());
  for (const Point& p : polygon.vertices) doubled.vertices.push_back({2 * p.x, 2 * p.y});
  const Rect box = polygon.bounding_rect();
  const int x_begin = std::max(0, box.x0 - 1), x_end = std::min(width, box.x1 + 1);
  const int y_begin = std::max(0, box.y0 - 1), y_end = std::min(height, box.y1 + 1);
  for (int y = y_begin; y < y_end; ++y) {
    for (int x = x_begin; x < x_end; ++x) {
      if (convex_contains(doubled, {2 * static_cast<std::int64_t>(x) + 1, 2 * static_cast<std::int64_t>(y) + 1})) {
        mask.bits[static_cast<std::size_t>(y) * width + x] = 1;
      }
    }
  }
  return mask;
}

std::optional<double> PixelCounts::precision() const {
  if (predicted == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(predicted);
}

std::optional<double> PixelCounts::recall() const {
  if (truth == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(truth);
}

PixelCounts pixel_counts(const ClassMask& predicted, const ClassMask& truth) {
  if (predicted.width != truth.width || predicted.height != truth.height ||
      predicted.bits.size() != truth.bits.size()) {
    throw Error(ErrorCode::kValidation, "predicted and truth masks differ in size");
  }
  PixelCounts c;
  for (std::size_t i = 0; i < predicted.bits.size(); ++i) {
    const bool p = predicted.bits[i] != 0;
    const bool t = truth.bits[i] != 0;
    c.predicted += p;
    c.truth += t;
    c.correct += p && t;
  }
  return c;
}

PrecisionRecall pixel_precision_recall(const ClassMask& predicted, const ClassMask& truth) {
  const PixelCounts c = pixel_counts(predicted, truth);
  return {c.precision(), c.recall()};
}

std::vector<EvalCell> evaluate_image(const std::string& image_id, std::span<const LabeledHull> hulls,
                                     std::span<const ClassMask> truth, int width, int height) {
  std::vector<std::string> classes;
  for (const auto& t : truth) {
    if (t.width != width || t.height != height) throw Error(ErrorCode::kValidation, "truth mask size mismatch");
    if (std::find(classes.begin(), classes.end(), t.class_id) == classes.end()) classes.push_back(t.class_id);
  }
  for (const auto& h : hulls) {
    if (std::find(classes.begin(), classes.end(), h.class_id) == classes.end()) classes.push_back(h.class_id);
  }
  std::vector<EvalCell> cells;
  for (const auto& cls : classes) {
    ClassMask predicted(cls, width, height);
    for (const auto& h : hulls) {
      if (h.class_id == cls) predicted.merge(rasterize_hull(h.hull, width, height, cls));
    }
    ClassMask truth_mask(cls, width, height);
    for (const auto& t : truth) {
      if (t.class_id == cls) truth_mask.merge(t);
    }
    cells.push_back({image_id, cls, pixel_counts(predicted, truth_mask)});
  }
  return cells;
}

Aggregate aggregate(std::span<const EvalCell> cells) {
  struct Sums {
    double precision = 0.0, recall = 0.0;
    std::size_t np = 0, nr = 0;
  };
  std::map<std::string, Sums> sums;
  for (const auto& cell : cells) {
    if (cell.class_id == kBackgroundClass) continue;
    const auto& c = cell.counts;
    if (c.correct > c.predicted || c.correct > c.truth) {
      throw Error(ErrorCode::kValidation, "correct pixel count exceeds predicted or truth count");
    }
    Sums& s = sums[cell.class_id];
    if (auto p = c.precision()) {
      s.precision += *p;
      ++s.np;
    }
    if (auto r = c.recall()) {
      s.recall += *r;
      ++s.nr;
    }
  }
  Aggregate agg;
  double map_sum = 0.0, mar_sum = 0.0;
  std::size_t map_n = 0, mar_n = 0;
  for (const auto& [cls, s] : sums) {
    ClassAggregate ca;
    ca.precision_cells = s.np;
    ca.recall_cells = s.nr;
    if (s.np > 0) {
      ca.mean_precision = s.precision / static_cast<double>(s.np);
      map_sum += *ca.mean_precision;
      ++map_n;
    }
    if (s.nr > 0) {
      ca.mean_recall = s.recall / static_cast<double>(s.nr);
      mar_sum += *ca.mean_recall;
      ++mar_n;
    }
    agg.per_class[cls] = ca;
  }
  if (map_n == 0 && mar_n == 0) {
    throw Error(ErrorCode::kEmptyReport, "no defined precision or recall cell");
  }
  agg.mAP = map_n ? map_sum / static_cast<double>(map_n) : 0.0;
  agg.mAR = mar_n ? mar_sum / static_cast<double>(mar_n) : 0.0;
  return agg;
}

ClassifierMetrics classifier_metrics(const std::vector<std::string>& roster,
                                     std::span<const std::size_t> truth,
                                     std::span<const std::size_t> predicted) {
  if (truth.empty()) throw Error(ErrorCode::kValidation, "empty validation set");
  if (truth.size() != predicted.size()) throw Error(ErrorCode::kValidation, "label count mismatch");
  const std::size_t k = roster.size();
  ClassifierMetrics m;
  m.roster = roster;
  m.confusion.assign(k, std::vector<std::uint64_t>(k, 0));
  std::uint64_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= k || predicted[i] >= k) throw Error(ErrorCode::kValidation, "label outside roster");
    ++m.confusion[truth[i]][predicted[i]];
    correct += truth[i] == predicted[i];
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  double sum = 0.0;
  std::size_t defined = 0;
  m.per_class_precision.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t predicted_as = 0;
    for (std::size_t t = 0; t < k; ++t) predicted_as += m.confusion[t][c];
    if (predicted_as == 0) continue;
    const double p = static_cast<double>(m.confusion[c][c]) / static_cast<double>(predicted_as);
    m.per_class_precision[c] = p;
    sum += p;
    ++defined;
  }
  if (defined > 0) m.mean_per_class_precision = sum / static_cast<double>(defined);
  return m;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

std::optional<double> opt_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["format"] = "texanno-eval-report";
  j["version"] = 1;
  j["method"] = method;
  j["cells"] = nlohmann::json::array();
  for (const auto& c : cells) {
    j["cells"].push_back({{"image_id", c.image_id},
                          {"class_id", c.class_id},
                          {"predicted", c.counts.predicted},
                          {"truth", c.counts.truth},
                          {"correct", c.counts.correct},
                          {"precision", opt(c.counts.precision())},
                          {"recall", opt(c.counts.recall())}});
  }
  j["segmentation"] = {{"mAP", segmentation.mAP}, {"mAR", segmentation.mAR}};
  j["segmentation"]["per_class"] = nlohmann::json::object();
  for (const auto& [cls, a] : segmentation.per_class) {
    j["segmentation"]["per_class"][cls] = {{"mean_precision", opt(a.mean_precision)},
                                           {"mean_recall", opt(a.mean_recall)},
                                           {"precision_cells", a.precision_cells},
                                           {"recall_cells", a.recall_cells}};
  }
  if (classification) {
    const auto& m = *classification;
    nlohmann::json per = nlohmann::json::object();
    for (std::size_t c = 0; c < m.roster.size(); ++c) per[m.roster[c]] = opt(m.per_class_precision[c]);
    j["classification"] = {{"roster", m.roster},
                           {"per_class_precision", per},
                           {"accuracy", m.accuracy},
                           {"mean_per_class_precision", opt(m.mean_per_class_precision)},
                           {"confusion", m.confusion}};
  } else {
    j["classification"] = nullptr;
  }
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.method = j.at("method").get<std::string>();
    for (const auto& c : j.at("cells")) {
      r.cells.push_back({c.at("image_id").get<std::string>(), c.at("class_id").get<std::string>(),
                         {c.at("predicted").get<std::uint64_t>(), c.at("truth").get<std::uint64_t>(),
                          c.at("correct").get<std::uint64_t>()}});
    }
    const auto& s = j.at("segmentation");
    r.segmentation.mAP = s.at("mAP").get<double>();
    r.segmentation.mAR = s.at("mAR").get<double>();
    for (const auto& [cls, a] : s.at("per_class").items()) {
      ClassAggregate ca;
      ca.mean_precision = opt_from(a.at("mean_precision"));
      ca.mean_recall = opt_from(a.at("mean_recall"));
      ca.precision_cells = a.at("precision_cells").get<std::size_t>();
      ca.recall_cells = a.at("recall_cells").get<std::size_t>();
      r.segmentation.per_class[cls] = ca;
    }
    if (!j.at("classification").is_null()) {
      const auto& c = j["classification"];
      ClassifierMetrics m;
      m.roster = c.at("roster").get<std::vector<std::string>>();
      for (const auto& name : m.roster) m.per_class_precision.push_back(opt_from(c.at("per_class_precision").at(name)));
      m.accuracy = c.at("accuracy").get<double>();
      m.mean_per_class_precision = opt_from(c.at("mean_per_class_precision"));
      m.confusion = c.at("confusion").get<std::vector<std::vector<std::uint64_t>>>();
      r.classification = m;
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kValidation, std::string("bad evaluation report: ") + e.what());
  }
}

std::string EvalReport::summary_table() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-24s | %6s %6s | %-14s %8s\n", "Method", "mAP", "mAR", "Classification",
                "Accuracy");
  out << line;
  out << std::string(72, '-') << "\n";
  std::string cls = "n/a", acc = "n/a";
  if (classification) {
    char buf[32];
    if (classification->mean_per_class_precision) {
      std::snprintf(buf, sizeof buf, "%.4f", *classification->mean_per_class_precision);
      cls = buf;
    }
    std::snprintf(buf, sizeof buf, "%.4f", classification->accuracy);
    acc = buf;
  }
  std::snprintf(line, sizeof line, "%-24s | %6.4f %6.4f | %-14s %8s\n", method.c_str(), segmentation.mAP,
                segmentation.mAR, cls.c_str(), acc.c_str());
  out << line;
  return out.str();
}

}  // namespace texanno
