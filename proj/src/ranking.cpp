#include "texanno/ranking.hpp"

#include <algorithm>

#include "texanno/errors.hpp"
#include "texanno/synthgen.hpp"

namespace texanno {

std::vector<ImageClassScore> scores_from_segmentation(const std::string& image_id,
                                                      const std::vector<std::string>& roster,
                                                      const SegmentationResult& result,
                                                      double threshold) {
  std::vector<ImageClassScore> out;
  const double total = static_cast<double>(result.scanned.size());
  for (const auto& cls : roster) {
    if (cls == kBackgroundClass) continue;
    ImageClassScore s{image_id, cls};
    std::size_t predicted = 0;
    for (const auto& w : result.scanned) {
      if (w.class_id != cls) continue;
      ++predicted;
      if (w.confidence >= threshold) ++s.support;
    }
    s.coverage = total > 0 ? static_cast<double>(predicted) / total : 0.0;
    for (const auto& seg : result.segments) {
      if (seg.class_id == cls) s.presence_score = std::max(s.presence_score, seg.score);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ImageClassScore> score_image(const PatchClassifier& classifier, const Raster& image,
                                         double threshold) {
  SegmentOptions options;
  options.threshold = threshold;
  const auto result = segment_image_detailed(classifier, image, options);
  return scores_from_segmentation(image.id(), classifier.roster(), result, threshold);
}

std::vector<ImageClassScore> rank_unannotated(const std::vector<ImageClassScore>& scores,
                                              const std::set<std::string>& annotated,
                                              const std::vector<std::string>& roster,
                                              const std::string& class_id, std::size_t k) {
  if (class_id == kBackgroundClass || std::find(roster.begin(), roster.end(), class_id) == roster.end()) {
    throw Error(ErrorCode::kRoster, "unknown class '" + class_id + "'");
  }
  std::vector<ImageClassScore> candidates;
  for (const auto& s : scores) {
    if (s.class_id == class_id && !annotated.count(s.image_id)) candidates.push_back(s);
  }
  std::sort(candidates.begin(), candidates.end(), [](const ImageClassScore& a, const ImageClassScore& b) {
    if (a.presence_score != b.presence_score) return a.presence_score > b.presence_score;
    if (a.support != b.support) return a.support > b.support;
    return a.image_id < b.image_id;
  });
  if (candidates.size() > k) candidates.resize(k);
  return candidates;
}

nlohmann::json to_json(const ImageClassScore& s) {
  return {{"image_id", s.image_id},
          {"class_id", s.class_id},
          {"presence_score", s.presence_score},
          {"support", s.support},
          {"coverage", s.coverage}};
}

ImageClassScore score_from_json(const nlohmann::json& j) {
  return {j.at("image_id").get<std::string>(), j.at("class_id").get<std::string>(),
          j.at("presence_score").get<double>(), j.at("support").get<std::size_t>(),
          j.at("coverage").get<double>()};
}

void ScoreCache::publish(std::string model_version, std::vector<ImageClassScore> scores) {
  auto snap = std::make_shared<Snapshot>(Snapshot{std::move(model_version), std::move(scores)});
  std::unique_lock lock(mutex_);
  current_ = std::move(snap);
}

void ScoreCache::invalidate() {
  std::unique_lock lock(mutex_);
  current_.reset();
}

std::shared_ptr<const ScoreCache::Snapshot> ScoreCache::snapshot() const {
  std::shared_lock lock(mutex_);
  return current_;
}

bool ScoreCache::is_current(const std::string& model_version) const {
  std::shared_lock lock(mutex_);
  return current_ && current_->model_version == model_version;
}

}  // namespace texanno
