#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "texanno/imaging.hpp"

namespace texanno {

struct CorpusImage {
  std::string id;
  int width = 0;
  int height = 0;
};

// Rectangle annotation as seen by the training pipeline. Polygon annotations
// (accepted proposals) enter as their bounding rect.
struct CorpusAnnotation {
  std::string id;
  std::string image_id;
  std::string class_name;
  Rect rect;
};

struct Corpus {
  std::vector<CorpusImage> images;
  std::vector<CorpusAnnotation> annotations;
};

// Provenance of one 224x224 training patch. Pixels are re-derived from the
// source image with render_patch.
struct TrainingPatch {
  std::string image_id;
  Rect rect;
  std::string label;
  std::optional<std::string> source_annotation;
  std::optional<AugmentSpec> augmentation;

  std::string augmentation_tag() const {
    return augmentation ? augmentation->tag() : "none";
  }
  friend bool operator==(const TrainingPatch&, const TrainingPatch&) = default;
};

using ImageLoader = std::function<Raster(const std::string& image_id)>;

/// Crop, resize to 224x224, then apply the augmentation if any.
Raster render_patch(const Raster& image, const TrainingPatch& patch);

/// One patch per annotation. Throws kDanglingReference for annotations whose
/// image is missing and kBounds for rects outside their image.
std::vector<TrainingPatch> extract_class_patches(const Corpus& corpus);

/// Sliding windows of `image` that share no area with any annotation rect.
std::vector<TrainingPatch> extract_background_patches(
    const CorpusImage& image, std::span<const CorpusAnnotation> annotations,
    int win = kWindowSize, int stride = kWindowStride);

struct DatasetOptions {
  std::size_t min_instances = 100;
  double val_fraction = 1.0 / 3.0;
  int augment_per_patch = 4;
  std::uint64_t seed = 0;
  // Preferred roster order for forensic classes; unlisted classes follow in
  // lexicographic order. Background is always last.
  std::vector<std::string> class_order;
};

struct DatasetSplit {
  std::vector<TrainingPatch> train;
  std::vector<TrainingPatch> validation;
  std::vector<std::string> class_roster;
  std::uint64_t seed = 0;
  DatasetOptions options;

  nlohmann::json to_json() const;
  static DatasetSplit from_json(const nlohmann::json& j);
};

/// Filters rare classes, splits per class with a seeded shuffle and adds
/// seeded augmentations to training patches. Throws kConfiguration when no
/// forensic class survives.
DatasetSplit build_dataset(const Corpus& corpus, const DatasetOptions& options);

/// Renders every patch grouped by source image so each image is loaded once.
/// `sink(index, pixels)` is called with the patch's position in `patches`.
void for_each_rendered_patch(
    std::span<const TrainingPatch> patches, const ImageLoader& load,
    const std::function<void(std::size_t, const Raster&)>& sink);

}  // namespace texanno
