#include "texanno/dataprep.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <unordered_map>

#include "texanno/errors.hpp"
#include "texanno/geometry.hpp"
#include "texanno/hashing.hpp"
#include "texanno/synthgen.hpp"

namespace texanno {

namespace {

double round_param(double v) { return std::round(v * 1000.0) / 1000.0; }

AugmentSpec random_augmentation(std::mt19937_64& rng) {
  auto u01 = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  switch (rng() % 5) {
    case 0: return AugmentSpec::flip_h();
    case 1: return AugmentSpec::flip_v();
    case 2: return AugmentSpec::zoom(round_param(1.0 + 0.3 * u01()));
    case 3: return AugmentSpec::scale(round_param(0.8 + 0.4 * u01()));
    default: return AugmentSpec::shear(round_param(-15.0 + 30.0 * u01()));
  }
}

template <typename T>
void seeded_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[rng() % i]);
  }
}

nlohmann::json patch_to_json(const TrainingPatch& p) {
  nlohmann::json j = {
      {"image_id", p.image_id},
      {"rect", {p.rect.x0, p.rect.y0, p.rect.x1, p.rect.y1}},
      {"label", p.label},
      {"augmentation", p.augmentation_tag()},
  };
  j["source_annotation"] = p.source_annotation ? nlohmann::json(*p.source_annotation) : nlohmann::json();
  return j;
}

TrainingPatch patch_from_json(const nlohmann::json& j) {
  TrainingPatch p;
  p.image_id = j.at("image_id").get<std::string>();
  const auto& r = j.at("rect");
  p.rect = make_rect(r.at(0), r.at(1), r.at(2), r.at(3));
  p.label = j.at("label").get<std::string>();
  const auto tag = j.at("augmentation").get<std::string>();
  if (tag != "none") p.augmentation = AugmentSpec::parse(tag);
  if (j.contains("source_annotation") && !j["source_annotation"].is_null()) {
    p.source_annotation = j["source_annotation"].get<std::string>();
  }
  return p;
}

}  // namespace

Raster render_patch(const Raster& image, const TrainingPatch& patch) {
  Raster out = resize(crop(image, patch.rect), kWindowSize, kWindowSize);
  if (patch.augmentation) out = augment(out, *patch.augmentation);
  return out;
}

std::vector<TrainingPatch> extract_class_patches(const Corpus& corpus) {
  std::unordered_map<std::string, const CorpusImage*> images;
  for (const auto& img : corpus.images) images[img.id] = &img;
  std::vector<TrainingPatch> patches;
  patches.reserve(corpus.annotations.size());
  for (const auto& a : corpus.annotations) {
    auto it = images.find(a.image_id);
    if (it == images.end()) {
      throw Error(ErrorCode::kDanglingReference,
                  "annotation " + a.id + " references missing image " + a.image_id);
    }
    const Rect bounds{0, 0, it->second->width, it->second->height};
    if (!a.rect.valid() || !bounds.contains(a.rect)) {
      throw Error(ErrorCode::kBounds, "annotation " + a.id + " rect " + to_string(a.rect) +
                                          " outside image " + a.image_id);
    }
    patches.push_back({a.image_id, a.rect, a.class_name, a.id, std::nullopt});
  }
  return patches;
}

std::vector<TrainingPatch> extract_background_patches(
    const CorpusImage& image, std::span<const CorpusAnnotation> annotations, int win,
    int stride) {
  std::vector<TrainingPatch> patches;
  for (const Rect& w : generate_windows(image.width, image.height, win, stride)) {
    const bool touches = std::any_of(annotations.begin(), annotations.end(), [&](const auto& a) {
      return a.image_id == image.id && rects_overlap(w, a.rect);
    });
    if (!touches) patches.push_back({image.id, w, kBackgroundClass, std::nullopt, std::nullopt});
  }
  return patches;
}

DatasetSplit build_dataset(const Corpus& corpus, const DatasetOptions& options) {
  if (corpus.images.empty()) {
    throw Error(ErrorCode::kConfiguration, "corpus has no images");
  }
  if (!(options.val_fraction >= 0.0 && options.val_fraction < 1.0)) {
    throw Error(ErrorCode::kConfiguration, "val_fraction must lie in [0, 1)");
  }
  if (options.augment_per_patch < 0) {
    throw Error(ErrorCode::kConfiguration, "augment_per_patch must be >= 0");
  }

  const auto class_patches = extract_class_patches(corpus);
  std::map<std::string, std::vector<TrainingPatch>> by_class;
  for (const auto& p : class_patches) by_class[p.label].push_back(p);

  std::set<std::string> surviving;
  for (const auto& [name, patches] : by_class) {
    if (name != kBackgroundClass && patches.size() >= options.min_instances) surviving.insert(name);
  }
  if (surviving.empty()) {
    throw Error(ErrorCode::kConfiguration,
                "no class has at least " + std::to_string(options.min_instances) + " instances");
  }

  DatasetSplit split;
  split.seed = options.seed;
  split.options = options;
  for (const auto& name : options.class_order) {
    if (surviving.count(name) &&
        std::find(split.class_roster.begin(), split.class_roster.end(), name) == split.class_roster.end()) {
      split.class_roster.push_back(name);
    }
  }
  for (const auto& name : surviving) {
    if (std::find(split.class_roster.begin(), split.class_roster.end(), name) == split.class_roster.end()) {
      split.class_roster.push_back(name);
    }
  }
  split.class_roster.push_back(kBackgroundClass);

  std::vector<TrainingPatch> background;
  for (const auto& img : corpus.images) {
    if (img.width < kWindowSize || img.height < kWindowSize) continue;
    std::vector<CorpusAnnotation> own;
    for (const auto& a : corpus.annotations) {
      if (a.image_id == img.id) own.push_back(a);
    }
    auto bg = extract_background_patches(img, own);
    background.insert(background.end(), bg.begin(), bg.end());
  }

  std::mt19937_64 rng(mix64(options.seed ^ 0x5eedda7aULL));
  for (const auto& cls : split.class_roster) {
    std::vector<TrainingPatch> pool = cls == kBackgroundClass ? background : by_class[cls];
    seeded_shuffle(pool, rng);
    const auto n_val = static_cast<std::size_t>(
        std::floor(static_cast<double>(pool.size()) * options.val_fraction + 1e-9));
    split.validation.insert(split.validation.end(), pool.begin(), pool.begin() + n_val);
    split.train.insert(split.train.end(), pool.begin() + n_val, pool.end());
  }

  const std::size_t base = split.train.size();
  for (std::size_t i = 0; i < base; ++i) {
    for (int k = 0; k < options.augment_per_patch; ++k) {
      TrainingPatch variant = split.train[i];
      variant.augmentation = random_augmentation(rng);
      split.train.push_back(std::move(variant));
    }
  }
  return split;
}

nlohmann::json DatasetSplit::to_json() const {
  nlohmann::json j;
  j["format"] = "texanno-dataset";
  j["version"] = 1;
  j["seed"] = seed;
  j["class_roster"] = class_roster;
  j["options"] = {{"min_instances", options.min_instances},
                  {"val_fraction", options.val_fraction},
                  {"augment_per_patch", options.augment_per_patch},
                  {"class_order", options.class_order}};
  j["train"] = nlohmann::json::array();
  for (const auto& p : train) j["train"].push_back(patch_to_json(p));
  j["validation"] = nlohmann::json::array();
  for (const auto& p : validation) j["validation"].push_back(patch_to_json(p));
  return j;
}

DatasetSplit DatasetSplit::from_json(const nlohmann::json& j) {
  try {
    DatasetSplit s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.class_roster = j.at("class_roster").get<std::vector<std::string>>();
    const auto& o = j.at("options");
    s.options.min_instances = o.at("min_instances").get<std::size_t>();
    s.options.val_fraction = o.at("val_fraction").get<double>();
    s.options.augment_per_patch = o.at("augment_per_patch").get<int>();
    s.options.class_order = o.value("class_order", std::vector<std::string>{});
    s.options.seed = s.seed;
    for (const auto& p : j.at("train")) s.train.push_back(patch_from_json(p));
    for (const auto& p : j.at("validation")) s.validation.push_back(patch_from_json(p));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kValidation, std::string("bad dataset descriptor: ") + e.what());
  }
}

void for_each_rendered_patch(std::span<const TrainingPatch> patches, const ImageLoader& load,
                             const std::function<void(std::size_t, const Raster&)>& sink) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < patches.size(); ++i) groups[patches[i].image_id].push_back(i);
  for (const auto& [image_id, indices] : groups) {
    const Raster image = load(image_id);
    for (std::size_t i : indices) sink(i, render_patch(image, patches[i]));
  }
}

}  // namespace texanno
