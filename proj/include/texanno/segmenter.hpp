#pragma once

#include <string>
#include <vector>

#include "texanno/classifier.hpp"
#include "texanno/geometry.hpp"
#include "texanno/imaging.hpp"

namespace texanno {

inline constexpr double kAcceptThreshold = 0.85;

struct WindowClassification {
  Rect rect;
  std::string class_id;
  double confidence = 0.0;
  // False for background windows; those never become proposals.
  bool proposable = true;

  friend bool operator==(const WindowClassification&, const WindowClassification&) = default;
};

enum class ReviewStatus { kProposed, kAccepted, kDeclined };

std::string_view to_string(ReviewStatus s);
ReviewStatus parse_review_status(std::string_view s);

struct ProposedSegment {
  std::string id;
  std::string image_id;
  std::string class_id;
  Polygon hull;
  double score = 0.0;
  std::vector<WindowClassification> member_windows;
  ReviewStatus status = ReviewStatus::kProposed;
  std::string model_version;

  friend bool operator==(const ProposedSegment&, const ProposedSegment&) = default;
};

struct SegmentOptions {
  double threshold = kAcceptThreshold;
  int win = kWindowSize;
  int stride = kWindowStride;
  // Worker threads for window classification; results are collected in
  // window order regardless.
  int threads = 1;
};

/// Classifies every window without thresholding, in generate_windows order.
std::vector<WindowClassification> scan_windows(const PatchClassifier& classifier,
                                               const Raster& image,
                                               const SegmentOptions& options = {});

/// Windows whose confidence reaches the threshold. Background windows are
/// kept but marked non-proposable.
std::vector<WindowClassification> classify_windows(const PatchClassifier& classifier,
                                                   const Raster& image,
                                                   double threshold = kAcceptThreshold);

/// Keeps scanned windows at or above `threshold`.
std::vector<WindowClassification> apply_threshold(const std::vector<WindowClassification>& scanned,
                                                  double threshold);

/// Per class: overlap graph, connected components, convex hull of member
/// corners, score = mean member confidence. Output order: class of first
/// appearance, then component order.
std::vector<ProposedSegment> group_segments(const std::vector<WindowClassification>& windows,
                                            const std::string& image_id = {});

/// classify_windows + group_segments, sorted by descending score.
std::vector<ProposedSegment> segment_image(const PatchClassifier& classifier, const Raster& image,
                                           double threshold = kAcceptThreshold);

struct SegmentationResult {
  std::vector<WindowClassification> scanned;  // every window, unthresholded
  std::vector<ProposedSegment> segments;
};

SegmentationResult segment_image_detailed(const PatchClassifier& classifier, const Raster& image,
                                          const SegmentOptions& options = {});

/// Content-derived proposal id.
std::string proposal_id(const ProposedSegment& segment);

}  // namespace texanno
