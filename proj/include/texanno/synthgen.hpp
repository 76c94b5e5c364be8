#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "texanno/geometry.hpp"
#include "texanno/imaging.hpp"

namespace texanno {

inline constexpr const char* kBackgroundClass = "background";

/// Procedural texture families. Each class name maps to exactly one recipe.
enum class TextureRecipe {
  kDotField,
  kCellular,
  kValueNoise,
  kBandedGradient,
  kSpeckle,
  kMarbled,
  kStripe,
  kChecker,
  kSoil,
};

struct TextureParams {
  TextureRecipe recipe = TextureRecipe::kSoil;
  Rgb primary;
  Rgb secondary;
  double scale = 1.0;  // characteristic feature size in pixels
};

/// The eight forensic classes and their annotated-instance counts, in roster
/// order: maggots 1375, scale 716, purge 709, mummification 557, eggs 533,
/// mold 339, marbling 241, plastic 107.
const std::vector<std::pair<std::string, double>>& collection_class_counts();

/// Default texture for a class name (background included). Throws kValidation
/// for unknown names.
TextureParams default_texture(const std::string& class_name);

struct SceneSpec {
  std::uint64_t seed = 0;
  int width = 1024;
  int height = 768;
  std::vector<std::pair<std::string, double>> class_mix;
  double annotation_completeness = 1.0;
  std::vector<std::pair<std::string, TextureParams>> texture_params;  // overrides
  int min_instances = 6;
  int max_instances = 10;
  int min_instance_size = 160;  // blob bounding diameter, pixels
  int max_instance_size = 300;
  // Classes placed first in every scene regardless of class_mix weights.
  std::vector<std::string> required_classes;

  void validate() const;
};

/// Training-style template: medium blobs, several per scene, collection class mix.
SceneSpec training_scene_template();
/// Evaluation-style template: few large blobs, uniform class mix.
SceneSpec evaluation_scene_template();
/// Uniform weights over the eight forensic classes.
std::vector<std::pair<std::string, double>> uniform_class_mix();

struct SceneInstance {
  std::string class_name;
  Polygon outline;
  Rect bbox;  // tight bounding box of the painted pixels
};

struct PartialAnnotation {
  std::size_t instance_index;
  std::string class_name;
  Rect rect;
};

struct ClassMaskBits {
  std::string class_name;
  std::vector<std::uint8_t> bits;  // width x height, 0/1
};

struct GroundTruth {
  int width = 0;
  int height = 0;
  std::vector<ClassMaskBits> masks;  // one per class in the mix, roster order
  std::vector<SceneInstance> instances;
  std::vector<PartialAnnotation> annotations;

  const ClassMaskBits* mask_for(const std::string& class_name) const;
  bool contains_class(const std::string& class_name) const;
};

struct Scene {
  Raster image;
  GroundTruth truth;
};

/// Deterministic in `spec`. Throws kGeneration when the canvas cannot hold any
/// requested instance.
Scene generate_scene(const SceneSpec& spec);

/// Even-odd pixel-center fill of a simple polygon into a width x height bitmap.
std::vector<std::uint8_t> fill_polygon(const Polygon& poly, int width, int height);

}  // namespace texanno
