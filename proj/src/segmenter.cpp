#include "texanno/segmenter.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include "texanno/errors.hpp"
#include "texanno/hashing.hpp"
#include "texanno/synthgen.hpp"

namespace texanno {

std::string_view to_string(ReviewStatus s) {
  switch (s) {
    case ReviewStatus::kProposed: return "proposed";
    case ReviewStatus::kAccepted: return "accepted";
    case ReviewStatus::kDeclined: return "declined";
  }
  return "proposed";
}

ReviewStatus parse_review_status(std::string_view s) {
  if (s == "proposed") return ReviewStatus::kProposed;
  if (s == "accepted") return ReviewStatus::kAccepted;
  if (s == "declined") return ReviewStatus::kDeclined;
  throw Error(ErrorCode::kValidation, "unknown review status '" + std::string(s) + "'");
}

std::vector<WindowClassification> scan_windows(const PatchClassifier& classifier,
                                               const Raster& image, const SegmentOptions& options) {
  const auto& roster = classifier.roster();
  if (roster.empty()) throw Error(ErrorCode::kIncompatible, "classifier has an empty roster");
  const auto windows = generate_windows(image.width(), image.height(), options.win, options.stride);
  std::vector<WindowClassification> out(windows.size());

  auto classify_one = [&](std::size_t i) {
    Raster patch = crop(image, windows[i]);
    if (patch.width() != kWindowSize || patch.height() != kWindowSize) {
      patch = resize(patch, kWindowSize, kWindowSize);
    }
    const ClassDistribution d = classifier.predict(patch);
    if (d.probabilities.size() != roster.size() || d.top_class >= roster.size()) {
      throw Error(ErrorCode::kIncompatible, "classifier output does not match its roster");
    }
    const std::string& cls = roster[d.top_class];
    out[i] = {windows[i], cls, d.confidence, cls != kBackgroundClass};
  };

  const int threads = std::max(1, std::min<int>(options.threads, static_cast<int>(windows.size())));
  if (threads == 1) {
    for (std::size_t i = 0; i < windows.size(); ++i) classify_one(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < windows.size(); i = next++) {
        try {
          classify_one(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<WindowClassification> apply_threshold(const std::vector<WindowClassification>& scanned,
                                                  double threshold) {
  std::vector<WindowClassification> kept;
  for (const auto& w : scanned) {
    if (w.confidence >= threshold) kept.push_back(w);
  }
  return kept;
}

std::vector<WindowClassification> classify_windows(const PatchClassifier& classifier,
                                                   const Raster& image, double threshold) {
  return apply_threshold(scan_windows(classifier, image), threshold);
}

std::string proposal_id(const ProposedSegment& segment) {
  std::string key = segment.image_id + "|" + segment.class_id + "|" + segment.model_version;
  for (const auto& w : segment.member_windows) key += "|" + to_string(w.rect);
  return sha256_hex(key).substr(0, 24);
}

std::vector<ProposedSegment> group_segments(const std::vector<WindowClassification>& windows,
                                            const std::string& image_id) {
  std::vector<std::string> classes;
  for (const auto& w : windows) {
    if (!w.proposable || w.class_id == kBackgroundClass) continue;
    if (std::find(classes.begin(), classes.end(), w.class_id) == classes.end()) classes.push_back(w.class_id);
  }
  std::vector<ProposedSegment> segments;
  for (const auto& cls : classes) {
    std::vector<const WindowClassification*> members;
    std::vector<Rect> rects;
    for (const auto& w : windows) {
      if (w.proposable && w.class_id == cls) {
        members.push_back(&w);
        rects.push_back(w.rect);
      }
    }
    const AdjacencyMatrix adj = build_adjacency(rects);
    for (const auto& component : connected_components(adj)) {
      ProposedSegment seg;
      seg.image_id = image_id;
      seg.class_id = cls;
      std::vector<Point> corners;
      double total = 0.0;
      for (std::size_t idx : component) {
        seg.member_windows.push_back(*members[idx]);
        total += members[idx]->confidence;
        for (const Point& p : rect_corners(rects[idx])) corners.push_back(p);
      }
      seg.hull = convex_hull(std::move(corners));
      seg.score = total / static_cast<double>(component.size());
      seg.id = proposal_id(seg);
      segments.push_back(std::move(seg));
    }
  }
  return segments;
}

SegmentationResult segment_image_detailed(const PatchClassifier& classifier, const Raster& image,
                                          const SegmentOptions& options) {
  SegmentationResult result;
  result.scanned = scan_windows(classifier, image, options);
  const std::string version = classifier.version();
  result.segments = group_segments(apply_threshold(result.scanned, options.threshold), image.id());
  for (auto& seg : result.segments) {
    seg.model_version = version;
    seg.id = proposal_id(seg);
  }
  std::stable_sort(result.segments.begin(), result.segments.end(),
                   [](const ProposedSegment& a, const ProposedSegment& b) { return a.score > b.score; });
  return result;
}

std::vector<ProposedSegment> segment_image(const PatchClassifier& classifier, const Raster& image,
                                           double threshold) {
  SegmentOptions options;
  options.threshold = threshold;
  return segment_image_detailed(classifier, image, options).segments;
}

}  // namespace texanno
