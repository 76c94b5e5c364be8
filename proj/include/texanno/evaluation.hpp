#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "texanno/geometry.hpp"

namespace texanno {

struct ClassMask {
  std::string class_id;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // row-major 0/1

  ClassMask() = default;
  ClassMask(std::string cls, int w, int h)
      : class_id(std::move(cls)), width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  std::size_t count() const;
  void merge(const ClassMask& other);  // OR
};

/// Pixel (x, y) is set iff its center lies inside or on the convex polygon.
/// Exact integer arithmetic; the polygon is clipped to the canvas.
ClassMask rasterize_hull(const Polygon& polygon, int width, int height,
                         const std::string& class_id = {});

struct PixelCounts {
  std::uint64_t predicted = 0;
  std::uint64_t truth = 0;
  std::uint64_t correct = 0;

  // Empty when undefined: no predicted pixels / no truth pixels.
  std::optional<double> precision() const;
  std::optional<double> recall() const;
};

/// Throws kValidation on dimension mismatch.
PixelCounts pixel_counts(const ClassMask& predicted, const ClassMask& truth);

struct PrecisionRecall {
  std::optional<double> precision;  // nullopt = "no-prediction"
  std::optional<double> recall;     // nullopt = "no-truth"
};

PrecisionRecall pixel_precision_recall(const ClassMask& predicted, const ClassMask& truth);

struct EvalCell {
  std::string image_id;
  std::string class_id;
  PixelCounts counts;
};

struct LabeledHull {
  std::string class_id;
  Polygon hull;
};

/// One cell per class present in `truth` or `hulls`. Same-class hulls are
/// OR-ed into a single predicted mask; a class without a truth mask is
/// compared against an empty one.
std::vector<EvalCell> evaluate_image(const std::string& image_id, std::span<const LabeledHull> hulls,
                                     std::span<const ClassMask> truth, int width, int height);

struct ClassAggregate {
  std::optional<double> mean_precision;
  std::optional<double> mean_recall;
  std::size_t precision_cells = 0;
  std::size_t recall_cells = 0;
};

struct Aggregate {
  double mAP = 0.0;
  double mAR = 0.0;
  std::map<std::string, ClassAggregate> per_class;
};

/// Per class, averages defined precisions / recalls over images, then takes
/// the unweighted mean over classes. Background cells are ignored. Throws
/// kEmptyReport when nothing is defined.
Aggregate aggregate(std::span<const EvalCell> cells);

struct ClassifierMetrics {
  std::vector<std::string> roster;
  std::vector<std::optional<double>> per_class_precision;
  double accuracy = 0.0;
  std::optional<double> mean_per_class_precision;
  std::vector<std::vector<std::uint64_t>> confusion;  // [truth][predicted]
};

/// Patch-level metrics from true and predicted roster indices.
ClassifierMetrics classifier_metrics(const std::vector<std::string>& roster,
                                     std::span<const std::size_t> truth,
                                     std::span<const std::size_t> predicted);

struct EvalReport {
  std::string method;
  std::vector<EvalCell> cells;
  Aggregate segmentation;
  std::optional<ClassifierMetrics> classification;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  /// Plain-text table: method, mAP, mAR, classification metric.
  std::string summary_table() const;
};

}  // namespace texanno
