#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "texanno/classifier.hpp"
#include "texanno/dataprep.hpp"
#include "texanno/evaluation.hpp"
#include "texanno/ranking.hpp"
#include "texanno/segmenter.hpp"
#include "texanno/store.hpp"
#include "texanno/synthgen.hpp"

namespace texanno {

// Fixed provenance stamp for generated annotations so synthetic stores are
// byte-identical across runs.
inline constexpr const char* kSynthAnnotator = "synthgen";
inline constexpr const char* kSynthTimestamp = "1970-01-01T00:00:00Z";

/// Everything the command-line stages share. See docs/config.md.
struct PipelineConfig {
  std::uint64_t seed = 7;

  std::size_t train_scenes = 150;
  std::size_t eval_scenes = 46;
  SceneSpec train_template;  // uniform class mix by default
  SceneSpec eval_template;

  DatasetOptions prep;
  std::string dataset = "default";

  TrainOptions train;

  SegmentOptions segment;
  // Images to segment: "eval", "train", "unlabeled" (split "") or "all".
  std::string segment_split = "eval";

  PipelineConfig();

  /// Unknown keys and out-of-range values throw kConfiguration.
  static PipelineConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
};

PipelineConfig load_config(const std::filesystem::path& path);

/// Seed of the i-th scene of a split; distinct splits get distinct streams.
std::uint64_t scene_seed(std::uint64_t seed, const std::string& split, std::size_t index);

/// Writes n scenes of `tmpl` into `split`; scene i is seeded with
/// scene_seed(seed, split, i). With `annotate`, the scenes' partial rectangle
/// annotations are stored too.
std::vector<ImageEntry> generate_scenes(Store& store, std::size_t n, const SceneSpec& tmpl,
                                        std::uint64_t seed, const std::string& split, bool annotate);

struct CorpusSummary {
  std::size_t train_images = 0;
  std::size_t eval_images = 0;
  std::size_t annotations = 0;  // manual annotations in the store
  std::string manifest_sha256;
};

/// Generates train and eval scenes into the store and writes its manifest.
/// Train scenes bring partial rectangle annotations; eval scenes bring only
/// ground-truth masks.
CorpusSummary generate_corpus(Store& store, const PipelineConfig& config);

/// Builds the dataset from the store's "train" images and saves it under
/// config.dataset.
DatasetSplit run_prep(Store& store, const PipelineConfig& config);

/// Trains on the saved dataset and stores the model.
SoftmaxModel run_train(Store& store, const PipelineConfig& config);

std::vector<ImageEntry> images_for_split(const Store& store, const std::string& split);

/// Segments the configured split and stores proposals. Returns the proposals.
std::vector<ProposedSegment> run_segment(Store& store, const PipelineConfig& config,
                                         const std::string& model_id = "latest");

/// Presence scores for every stored image under the model; cached per
/// model version in the store.
std::vector<ImageClassScore> run_score(Store& store, const PipelineConfig& config,
                                       const std::string& model_id = "latest");

/// Review queue: top-k images for `class_id` with no manual annotation of
/// that class. Scores are computed on demand when the store has none.
std::vector<ImageClassScore> run_rank(Store& store, const PipelineConfig& config,
                                      const std::string& class_id, std::size_t k,
                                      const std::string& model_id = "latest");

/// Pixel metrics of stored proposals against eval-split masks, plus
/// validation-patch classifier metrics when the dataset is present.
EvalReport run_evaluate(Store& store, const PipelineConfig& config,
                        const std::string& model_id = "latest");

}  // namespace texanno
