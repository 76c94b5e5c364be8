#include "texanno/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "texanno/errors.hpp"
#include "texanno/hashing.hpp"

using nlohmann::json;

namespace texanno {

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::kConfiguration, where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw Error(ErrorCode::kConfiguration, "unknown key '" + key + "' in " + where);
  }
}

std::vector<std::pair<std::string, double>> mix_from_json(const json& j) {
  if (j.is_string()) {
    if (j == "uniform") return uniform_class_mix();
    if (j == "collection") return collection_class_counts();
    throw Error(ErrorCode::kConfiguration, "class_mix must be \"uniform\", \"collection\" or an object");
  }
  if (!j.is_object()) throw Error(ErrorCode::kConfiguration, "class_mix must be an object of weights");
  std::vector<std::pair<std::string, double>> mix;
  for (const auto& [name, w] : j.items()) mix.emplace_back(name, w.get<double>());
  return mix;
}

void scene_from_json(const json& j, SceneSpec& spec, const std::string& where) {
  reject_unknown(j, {"width", "height", "class_mix", "annotation_completeness", "min_instances",
                     "max_instances", "min_instance_size", "max_instance_size", "required_classes"},
                 where);
  if (j.contains("width")) spec.width = j["width"].get<int>();
  if (j.contains("height")) spec.height = j["height"].get<int>();
  if (j.contains("class_mix")) spec.class_mix = mix_from_json(j["class_mix"]);
  if (j.contains("annotation_completeness")) spec.annotation_completeness = j["annotation_completeness"].get<double>();
  if (j.contains("min_instances")) spec.min_instances = j["min_instances"].get<int>();
  if (j.contains("max_instances")) spec.max_instances = j["max_instances"].get<int>();
  if (j.contains("min_instance_size")) spec.min_instance_size = j["min_instance_size"].get<int>();
  if (j.contains("max_instance_size")) spec.max_instance_size = j["max_instance_size"].get<int>();
  if (j.contains("required_classes")) spec.required_classes = j["required_classes"].get<std::vector<std::string>>();
}

json scene_to_json(const SceneSpec& spec) {
  json mix = json::object();
  for (const auto& [name, w] : spec.class_mix) mix[name] = w;
  return {{"width", spec.width},
          {"height", spec.height},
          {"class_mix", mix},
          {"annotation_completeness", spec.annotation_completeness},
          {"min_instances", spec.min_instances},
          {"max_instances", spec.max_instances},
          {"min_instance_size", spec.min_instance_size},
          {"max_instance_size", spec.max_instance_size},
          {"required_classes", spec.required_classes}};
}

ImageLoader store_loader(const Store& store) {
  return [&store](const std::string& id) { return store.load_image(id); };
}

SoftmaxModel resolve_model(const Store& store, const std::string& model_id) {
  return store.load_model(model_id);
}

}  // namespace

PipelineConfig::PipelineConfig()
    : train_template(training_scene_template()), eval_template(evaluation_scene_template()) {
  train_template.class_mix = uniform_class_mix();
}

void PipelineConfig::validate() const {
  try {
    train_template.validate();
    eval_template.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfiguration, e.what());
  }
  if (prep.val_fraction < 0.0 || prep.val_fraction >= 1.0) {
    throw Error(ErrorCode::kConfiguration, "prep.val_fraction must be in [0, 1)");
  }
  if (prep.augment_per_patch < 0) throw Error(ErrorCode::kConfiguration, "prep.augment_per_patch must be >= 0");
  if (!(train.learning_rate > 0.0)) throw Error(ErrorCode::kConfiguration, "train.learning_rate must be > 0");
  if (train.epochs < 0) throw Error(ErrorCode::kConfiguration, "train.epochs must be >= 0");
  if (train.batch < 1) throw Error(ErrorCode::kConfiguration, "train.batch must be >= 1");
  if (!(segment.threshold >= 0.0 && segment.threshold <= 1.0)) {
    throw Error(ErrorCode::kConfiguration, "segment.threshold must be in [0, 1]");
  }
  if (segment.threads < 1) throw Error(ErrorCode::kConfiguration, "segment.threads must be >= 1");
  static const std::set<std::string> splits{"eval", "train", "unlabeled", "all"};
  if (!splits.count(segment_split)) throw Error(ErrorCode::kConfiguration, "segment.split must be eval, train, unlabeled or all");
  if (dataset.empty()) throw Error(ErrorCode::kConfiguration, "prep.dataset must not be empty");
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  try {
    reject_unknown(j, {"seed", "synth", "prep", "train", "segment"}, "config");
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("synth")) {
      const json& s = j["synth"];
      reject_unknown(s, {"train_scenes", "eval_scenes", "train_template", "eval_template"}, "synth");
      if (s.contains("train_scenes")) c.train_scenes = s["train_scenes"].get<std::size_t>();
      if (s.contains("eval_scenes")) c.eval_scenes = s["eval_scenes"].get<std::size_t>();
      if (s.contains("train_template")) scene_from_json(s["train_template"], c.train_template, "synth.train_template");
      if (s.contains("eval_template")) scene_from_json(s["eval_template"], c.eval_template, "synth.eval_template");
    }
    if (j.contains("prep")) {
      const json& p = j["prep"];
      reject_unknown(p, {"min_instances", "val_fraction", "augment_per_patch", "class_order", "dataset"}, "prep");
      if (p.contains("min_instances")) c.prep.min_instances = p["min_instances"].get<std::size_t>();
      if (p.contains("val_fraction")) c.prep.val_fraction = p["val_fraction"].get<double>();
      if (p.contains("augment_per_patch")) c.prep.augment_per_patch = p["augment_per_patch"].get<int>();
      if (p.contains("class_order")) c.prep.class_order = p["class_order"].get<std::vector<std::string>>();
      if (p.contains("dataset")) c.dataset = p["dataset"].get<std::string>();
    }
    if (j.contains("train")) {
      const json& t = j["train"];
      reject_unknown(t, {"learning_rate", "epochs", "batch"}, "train");
      if (t.contains("learning_rate")) c.train.learning_rate = t["learning_rate"].get<double>();
      if (t.contains("epochs")) c.train.epochs = t["epochs"].get<int>();
      if (t.contains("batch")) c.train.batch = t["batch"].get<int>();
    }
    if (j.contains("segment")) {
      const json& s = j["segment"];
      reject_unknown(s, {"threshold", "threads", "split"}, "segment");
      if (s.contains("threshold")) c.segment.threshold = s["threshold"].get<double>();
      if (s.contains("threads")) c.segment.threads = s["threads"].get<int>();
      if (s.contains("split")) c.segment_split = s["split"].get<std::string>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfiguration, std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

json PipelineConfig::to_json() const {
  return {{"seed", seed},
          {"synth",
           {{"train_scenes", train_scenes},
            {"eval_scenes", eval_scenes},
            {"train_template", scene_to_json(train_template)},
            {"eval_template", scene_to_json(eval_template)}}},
          {"prep",
           {{"min_instances", prep.min_instances},
            {"val_fraction", prep.val_fraction},
            {"augment_per_patch", prep.augment_per_patch},
            {"class_order", prep.class_order},
            {"dataset", dataset}}},
          {"train", {{"learning_rate", train.learning_rate}, {"epochs", train.epochs}, {"batch", train.batch}}},
          {"segment", {{"threshold", segment.threshold}, {"threads", segment.threads}, {"split", segment_split}}}};
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfiguration, "cannot read config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfiguration, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return PipelineConfig::from_json(j);
}

std::uint64_t scene_seed(std::uint64_t seed, const std::string& split, std::size_t index) {
  std::uint64_t salt = 0xcbf29ce484222325ULL;  // FNV-1a of the split name
  for (unsigned char c : split) salt = (salt ^ c) * 0x100000001b3ULL;
  return mix64(mix64(seed ^ salt) + index);
}

std::vector<ImageEntry> generate_scenes(Store& store, std::size_t n, const SceneSpec& tmpl, std::uint64_t seed,
                                        const std::string& split, bool annotate) {
  std::vector<ImageEntry> out;
  for (std::size_t i = 0; i < n; ++i) {
    SceneSpec spec = tmpl;
    spec.seed = scene_seed(seed, split, i);
    Scene scene = generate_scene(spec);
    std::vector<ClassMask> masks;
    for (const auto& m : scene.truth.masks) {
      ClassMask cm(m.class_name, scene.truth.width, scene.truth.height);
      cm.bits = m.bits;
      if (cm.count() > 0) masks.push_back(std::move(cm));
    }
    const ImageEntry entry = store.put_image(scene.image, split, masks);
    if (annotate) {
      std::vector<AnnotationRecord> records;
      for (std::size_t k = 0; k < scene.truth.annotations.size(); ++k) {
        const auto& a = scene.truth.annotations[k];
        AnnotationRecord r;
        r.id = "ann-" + entry.id.substr(4) + "-" + std::to_string(k);
        r.image_id = entry.id;
        r.geometry = a.rect;
        r.class_name = a.class_name;
        r.annotator = kSynthAnnotator;
        r.created_at = kSynthTimestamp;
        records.push_back(std::move(r));
      }
      // Regenerating into the same store is a no-op.
      if (!records.empty() && !store.get_annotation(records.front().id)) store.put_annotations(std::move(records));
    }
    out.push_back(entry);
  }
  return out;
}

CorpusSummary generate_corpus(Store& store, const PipelineConfig& config) {
  config.validate();
  CorpusSummary summary;
  summary.train_images = generate_scenes(store, config.train_scenes, config.train_template, config.seed, "train", true).size();
  summary.eval_images = generate_scenes(store, config.eval_scenes, config.eval_template, config.seed, "eval", false).size();
  summary.annotations = store.list_annotations({std::nullopt, std::nullopt, AnnotationOrigin::kManual}).size();
  const json manifest = store.write_manifest();
  summary.manifest_sha256 = sha256_hex(manifest.dump());
  return summary;
}

DatasetSplit run_prep(Store& store, const PipelineConfig& config) {
  config.validate();
  DatasetOptions options = config.prep;
  options.seed = config.seed;
  if (options.class_order.empty()) options.class_order = store.nomenclature().forensic_classes();
  DatasetSplit split = build_dataset(store.corpus("train"), options);
  store.put_dataset(config.dataset, split);
  return split;
}

SoftmaxModel run_train(Store& store, const PipelineConfig& config) {
  config.validate();
  const DatasetSplit split = store.get_dataset(config.dataset);
  TrainOptions options = config.train;
  options.seed = config.seed;
  SoftmaxModel model = train(split, store_loader(store), options);
  const ModelEntry entry = store.put_model(model, config.dataset);
  model.set_version(entry.id);
  return model;
}

std::vector<ImageEntry> images_for_split(const Store& store, const std::string& split) {
  if (split == "all") return store.list_images();
  return store.list_images({split == "unlabeled" ? std::string() : split});
}

std::vector<ProposedSegment> run_segment(Store& store, const PipelineConfig& config, const std::string& model_id) {
  config.validate();
  const SoftmaxModel model = resolve_model(store, model_id);
  std::vector<ProposedSegment> all;
  for (const auto& entry : images_for_split(store, config.segment_split)) {
    const Raster image = store.load_image(entry.id);
    auto result = segment_image_detailed(model, image, config.segment);
    all.insert(all.end(), result.segments.begin(), result.segments.end());
  }
  store.put_proposals(all);
  return all;
}

std::vector<ImageClassScore> run_score(Store& store, const PipelineConfig& config, const std::string& model_id) {
  config.validate();
  const SoftmaxModel model = resolve_model(store, model_id);
  std::vector<ImageClassScore> scores;
  for (const auto& entry : store.list_images()) {
    const Raster image = store.load_image(entry.id);
    const auto result = segment_image_detailed(model, image, config.segment);
    auto s = scores_from_segmentation(entry.id, model.roster(), result, config.segment.threshold);
    scores.insert(scores.end(), s.begin(), s.end());
  }
  store.put_scores(model.version(), scores);
  return scores;
}

std::vector<ImageClassScore> run_rank(Store& store, const PipelineConfig& config, const std::string& class_id,
                                      std::size_t k, const std::string& model_id) {
  const SoftmaxModel model = resolve_model(store, model_id);
  auto scores = store.get_scores(model.version());
  if (!scores) scores = run_score(store, config, model.version());
  std::set<std::string> annotated;
  for (const auto& a : store.list_annotations({std::nullopt, class_id, AnnotationOrigin::kManual})) {
    annotated.insert(a.image_id);
  }
  return rank_unannotated(*scores, annotated, model.roster(), class_id, k);
}

EvalReport run_evaluate(Store& store, const PipelineConfig& config, const std::string& model_id) {
  config.validate();
  const SoftmaxModel model = resolve_model(store, model_id);
  const auto images = store.list_images({std::string("eval")});
  if (images.empty()) throw Error(ErrorCode::kEmptyReport, "store has no eval images");
  const auto proposals = store.list_proposals({std::nullopt, std::nullopt, std::nullopt, model.version()});
  EvalReport report;
  report.method = "patch-softmax";
  for (const auto& entry : images) {
    std::vector<LabeledHull> hulls;
    for (const auto& p : proposals) {
      if (p.image_id == entry.id && p.status != ReviewStatus::kDeclined) hulls.push_back({p.class_id, p.hull});
    }
    const auto masks = store.load_masks(entry.id);
    auto cells = evaluate_image(entry.id, hulls, masks, entry.width, entry.height);
    report.cells.insert(report.cells.end(), cells.begin(), cells.end());
  }
  report.segmentation = aggregate(report.cells);

  try {
    const DatasetSplit split = store.get_dataset(config.dataset);
    if (!split.validation.empty()) {
      const FeatureSet val = featurize_patches(split.validation, model.roster(), store_loader(store));
      std::vector<std::size_t> predicted;
      predicted.reserve(val.features.size());
      for (const auto& f : val.features) predicted.push_back(model.predict_features(f).top_class);
      if (!predicted.empty()) report.classification = classifier_metrics(model.roster(), val.labels, predicted);
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNotFound) throw;
  }
  store.put_report("eval-" + model.version(), report);
  return report;
}

}  // namespace texanno
