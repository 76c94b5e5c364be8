#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "texanno/segmenter.hpp"

namespace texanno {

struct ImageClassScore {
  std::string image_id;
  std::string class_id;
  double presence_score = 0.0;  // max segment score, 0 without a segment
  std::size_t support = 0;      // windows of this class at/above threshold
  double coverage = 0.0;        // fraction of all windows predicted as class

  friend bool operator==(const ImageClassScore&, const ImageClassScore&) = default;
};

/// Scores derived from an already segmented image; one entry per
/// non-background roster class, in roster order.
std::vector<ImageClassScore> scores_from_segmentation(const std::string& image_id,
                                                      const std::vector<std::string>& roster,
                                                      const SegmentationResult& result,
                                                      double threshold = kAcceptThreshold);

/// Runs segment_image_detailed and derives per-class presence scores.
std::vector<ImageClassScore> score_image(const PatchClassifier& classifier, const Raster& image,
                                         double threshold = kAcceptThreshold);

/// Top-k images for `class_id`: descending presence score, then support, then
/// image id. Images listed in `annotated` (manual annotations of the class)
/// are skipped. Throws kRoster for a class missing from `roster`.
std::vector<ImageClassScore> rank_unannotated(const std::vector<ImageClassScore>& scores,
                                              const std::set<std::string>& annotated,
                                              const std::vector<std::string>& roster,
                                              const std::string& class_id, std::size_t k);

nlohmann::json to_json(const ImageClassScore& s);
ImageClassScore score_from_json(const nlohmann::json& j);

/// Scores for exactly one model version. Publishing a new version replaces
/// the snapshot; readers hold the snapshot they fetched.
class ScoreCache {
 public:
  struct Snapshot {
    std::string model_version;
    std::vector<ImageClassScore> scores;
  };

  void publish(std::string model_version, std::vector<ImageClassScore> scores);
  /// Drops everything (e.g. after a retrain).
  void invalidate();
  std::shared_ptr<const Snapshot> snapshot() const;
  bool is_current(const std::string& model_version) const;

 private:
  mutable std::shared_mutex mutex_;
  std::shared_ptr<const Snapshot> current_;
};

}  // namespace texanno
