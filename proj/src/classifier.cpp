#include "texanno/classifier.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include <json.hpp>

#include "texanno/errors.hpp"
#include "texanno/evaluation.hpp"
#include "texanno/hashing.hpp"

namespace texanno {

namespace {

constexpr char kMagic[8] = {'T', 'X', 'A', 'M', 'O', 'D', 'E', 'L'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw Error(ErrorCode::kValidation, "model file truncated");
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(s[i]) << (8 * i);
    return v;
  }
  double f64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(s[i]) << (8 * i);
    return std::bit_cast<double>(v);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

// Numerically stable softmax in place.
void softmax(std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

}  // namespace

ClassDistribution ClassDistribution::from_probabilities(std::vector<double> probabilities) {
  ClassDistribution d;
  d.probabilities = std::move(probabilities);
  for (std::size_t k = 1; k < d.probabilities.size(); ++k) {
    if (d.probabilities[k] > d.probabilities[d.top_class]) d.top_class = k;
  }
  d.confidence = d.probabilities.empty() ? 0.0 : d.probabilities[d.top_class];
  return d;
}

SoftmaxModel::SoftmaxModel(std::vector<std::string> roster, std::size_t feature_dim)
    : roster_(std::move(roster)),
      dim_(feature_dim),
      weights_(roster_.size() * (feature_dim + 1), 0.0),
      mean_(feature_dim, 0.0),
      scale_(feature_dim, 1.0) {
  if (roster_.size() < 2) throw Error(ErrorCode::kConfiguration, "model needs at least two classes");
}

void SoftmaxModel::set_standardization(std::vector<double> mean, std::vector<double> scale) {
  if (mean.size() != dim_ || scale.size() != dim_) {
    throw Error(ErrorCode::kIncompatible, "standardization size mismatch");
  }
  mean_ = std::move(mean);
  scale_ = std::move(scale);
}

void SoftmaxModel::check_input(std::size_t n) const {
  if (n != dim_) {
    throw Error(ErrorCode::kIncompatible, "model expects " + std::to_string(dim_) +
                                              " features, got " + std::to_string(n));
  }
}

std::vector<double> SoftmaxModel::standardize(std::span<const double> raw) const {
  check_input(raw.size());
  std::vector<double> x(dim_);
  for (std::size_t j = 0; j < dim_; ++j) x[j] = (raw[j] - mean_[j]) * scale_[j];
  return x;
}

std::vector<double> SoftmaxModel::probabilities_for_input(std::span<const double> x) const {
  check_input(x.size());
  std::vector<double> z(num_classes());
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double* w = &weights_[k * cols()];
    double s = w[dim_];
    for (std::size_t j = 0; j < dim_; ++j) s += w[j] * x[j];
    z[k] = s;
  }
  softmax(z);
  return z;
}

ClassDistribution SoftmaxModel::predict_features(const FeatureVector& raw) const {
  return ClassDistribution::from_probabilities(probabilities_for_input(standardize(raw.values)));
}

ClassDistribution SoftmaxModel::predict(const Raster& patch) const {
  return predict_features(featurize(patch));
}

std::size_t SoftmaxModel::class_index(const std::string& name) const {
  auto it = std::find(roster_.begin(), roster_.end(), name);
  if (it == roster_.end()) throw Error(ErrorCode::kRoster, "class '" + name + "' not in model roster");
  return static_cast<std::size_t>(it - roster_.begin());
}

std::vector<std::uint8_t> SoftmaxModel::serialize() const {
  nlohmann::json header;
  header["roster"] = roster_;
  header["training"] = {
      {"seed", meta_.seed},
      {"epochs", meta_.epochs},
      {"batch", meta_.batch},
      {"learning_rate", meta_.learning_rate},
      {"train_loss_history", meta_.train_loss_history},
      {"final_train_loss", meta_.final_train_loss},
  };
  header["training"]["final_validation_loss"] =
      meta_.final_validation_loss ? nlohmann::json(*meta_.final_validation_loss) : nlohmann::json();
  nlohmann::json precision = nlohmann::json::array();
  for (const auto& p : meta_.validation_precision) precision.push_back(p ? nlohmann::json(*p) : nlohmann::json());
  header["training"]["validation_precision"] = precision;
  header["training"]["validation_accuracy"] =
      meta_.validation_accuracy ? nlohmann::json(*meta_.validation_accuracy) : nlohmann::json();
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(num_classes()));
  put_u32(out, static_cast<std::uint32_t>(dim_));
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (double w : weights_) put_f64(out, w);
  for (double m : mean_) put_f64(out, m);
  for (double s : scale_) put_f64(out, s);
  return out;
}

SoftmaxModel SoftmaxModel::deserialize(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  auto magic = in.take(sizeof kMagic);
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
    throw Error(ErrorCode::kValidation, "not a texanno model file");
  }
  const std::uint32_t version = in.u32();
  if (version != kFormatVersion) {
    throw Error(ErrorCode::kIncompatible, "unsupported model format version " + std::to_string(version));
  }
  const std::uint32_t k = in.u32();
  const std::uint32_t d = in.u32();
  const std::uint32_t header_len = in.u32();
  auto header_bytes = in.take(header_len);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_bytes.begin(), header_bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kValidation, std::string("bad model header: ") + e.what());
  }
  auto roster = header.at("roster").get<std::vector<std::string>>();
  if (roster.size() != k) throw Error(ErrorCode::kValidation, "roster size disagrees with K");
  SoftmaxModel model(std::move(roster), d);
  for (double& w : model.weights_) w = in.f64();
  for (double& m : model.mean_) m = in.f64();
  for (double& s : model.scale_) s = in.f64();
  if (!in.done()) throw Error(ErrorCode::kValidation, "trailing bytes in model file");
  for (double w : model.weights_) {
    if (!std::isfinite(w)) throw Error(ErrorCode::kValidation, "non-finite weight in model file");
  }
  const auto& t = header.at("training");
  model.meta_.seed = t.at("seed").get<std::uint64_t>();
  model.meta_.epochs = t.at("epochs").get<int>();
  model.meta_.batch = t.at("batch").get<int>();
  model.meta_.learning_rate = t.at("learning_rate").get<double>();
  model.meta_.train_loss_history = t.at("train_loss_history").get<std::vector<double>>();
  model.meta_.final_train_loss = t.at("final_train_loss").get<double>();
  if (!t.at("final_validation_loss").is_null()) {
    model.meta_.final_validation_loss = t["final_validation_loss"].get<double>();
  }
  if (t.contains("validation_precision")) {
    for (const auto& p : t["validation_precision"]) {
      model.meta_.validation_precision.push_back(p.is_null() ? std::nullopt : std::optional<double>(p.get<double>()));
    }
  }
  if (t.contains("validation_accuracy") && !t["validation_accuracy"].is_null()) {
    model.meta_.validation_accuracy = t["validation_accuracy"].get<double>();
  }
  model.version_ = sha256_hex(bytes).substr(0, 16);
  return model;
}

void SoftmaxModel::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "cannot write model " + path.string());
}

SoftmaxModel SoftmaxModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read model " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

double mean_loss(const SoftmaxModel& model, std::span<const LabeledExample> batch) {
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : batch) {
    const auto p = model.probabilities_for_input(ex.x);
    total -= std::log(std::max(p[ex.label], 1e-300));
  }
  return total / static_cast<double>(batch.size());
}

std::vector<double> gradient_of_loss(const SoftmaxModel& model,
                                     std::span<const LabeledExample> batch) {
  const std::size_t k_count = model.num_classes();
  const std::size_t cols = model.cols();
  const std::size_t dim = model.feature_dim();
  std::vector<double> grad(k_count * cols, 0.0);
  if (batch.empty()) return grad;
  for (const auto& ex : batch) {
    const auto p = model.probabilities_for_input(ex.x);
    for (std::size_t k = 0; k < k_count; ++k) {
      const double delta = p[k] - (k == ex.label ? 1.0 : 0.0);
      if (delta == 0.0) continue;
      double* g = &grad[k * cols];
      for (std::size_t j = 0; j < dim; ++j) g[j] += delta * ex.x[j];
      g[dim] += delta;
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& g : grad) g *= inv;
  return grad;
}

SoftmaxModel train_on_features(const std::vector<std::string>& roster, const FeatureSet& train,
                               const FeatureSet* validation, const TrainOptions& options) {
  if (roster.size() < 2) throw Error(ErrorCode::kConfiguration, "need at least two classes");
  if (options.epochs < 0 || options.batch < 1 || !(options.learning_rate > 0.0)) {
    throw Error(ErrorCode::kConfiguration, "bad training options");
  }
  if (train.features.size() != train.labels.size()) {
    throw Error(ErrorCode::kConfiguration, "feature/label count mismatch");
  }
  std::vector<std::size_t> per_class(roster.size(), 0);
  for (std::size_t label : train.labels) {
    if (label >= roster.size()) throw Error(ErrorCode::kConfiguration, "label outside roster");
    ++per_class[label];
  }
  if (std::count_if(per_class.begin(), per_class.end(), [](std::size_t c) { return c > 0; }) < 2) {
    throw Error(ErrorCode::kConfiguration, "degenerate split: fewer than two classes have training patches");
  }

  const std::size_t dim = train.features.front().size();
  SoftmaxModel model(roster, dim);

  // Standardization from training features.
  std::vector<double> mean(dim, 0.0), scale(dim, 1.0);
  const double n = static_cast<double>(train.features.size());
  for (const auto& f : train.features) {
    if (f.size() != dim) throw Error(ErrorCode::kIncompatible, "inconsistent feature dimension");
    for (std::size_t j = 0; j < dim; ++j) mean[j] += f.values[j];
  }
  for (double& m : mean) m /= n;
  std::vector<double> var(dim, 0.0);
  for (const auto& f : train.features) {
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = f.values[j] - mean[j];
      var[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < dim; ++j) {
    const double sd = std::sqrt(var[j] / n);
    scale[j] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
  model.set_standardization(std::move(mean), std::move(scale));

  std::vector<LabeledExample> examples(train.features.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    examples[i] = {model.standardize(train.features[i].values), train.labels[i]};
  }
  std::vector<LabeledExample> val_examples;
  if (validation) {
    for (std::size_t i = 0; i < validation->features.size(); ++i) {
      val_examples.push_back({model.standardize(validation->features[i].values), validation->labels[i]});
    }
  }

  TrainingMeta& meta = model.meta();
  meta.seed = options.seed;
  meta.epochs = options.epochs;
  meta.batch = options.batch;
  meta.learning_rate = options.learning_rate;
  meta.train_loss_history.push_back(mean_loss(model, examples));

  std::mt19937_64 rng(mix64(options.seed ^ 0x7a41b5ULL));
  std::vector<std::size_t> order(examples.size());
  std::vector<LabeledExample> batch;
  batch.reserve(static_cast<std::size_t>(options.batch));
  auto weights = model.weights();
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(options.batch));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(examples[order[i]]);
      const auto grad = gradient_of_loss(model, batch);
      for (std::size_t w = 0; w < weights.size(); ++w) weights[w] -= options.learning_rate * grad[w];
    }
    meta.train_loss_history.push_back(mean_loss(model, examples));
  }
  meta.final_train_loss = meta.train_loss_history.back();
  if (!val_examples.empty()) {
    meta.final_validation_loss = mean_loss(model, val_examples);
    std::vector<std::size_t> truth, predicted;
    for (const auto& ex : val_examples) {
      truth.push_back(ex.label);
      predicted.push_back(ClassDistribution::from_probabilities(model.probabilities_for_input(ex.x)).top_class);
    }
    const ClassifierMetrics m = classifier_metrics(roster, truth, predicted);
    meta.validation_precision = m.per_class_precision;
    meta.validation_accuracy = m.accuracy;
  }
  model.set_version(sha256_hex(model.serialize()).substr(0, 16));
  return model;
}

FeatureSet featurize_patches(std::span<const TrainingPatch> patches,
                             const std::vector<std::string>& roster, const ImageLoader& load) {
  std::vector<std::size_t> keep;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    auto it = std::find(roster.begin(), roster.end(), patches[i].label);
    if (it == roster.end()) continue;
    keep.push_back(i);
    labels.push_back(static_cast<std::size_t>(it - roster.begin()));
  }
  std::vector<TrainingPatch> selected;
  selected.reserve(keep.size());
  for (std::size_t i : keep) selected.push_back(patches[i]);
  FeatureSet set;
  set.features.resize(selected.size());
  set.labels = std::move(labels);
  for_each_rendered_patch(selected, load, [&](std::size_t i, const Raster& pixels) {
    set.features[i] = featurize(pixels);
  });
  return set;
}

SoftmaxModel train(const DatasetSplit& split, const ImageLoader& load, const TrainOptions& options) {
  const FeatureSet train_set = featurize_patches(split.train, split.class_roster, load);
  if (train_set.features.empty()) throw Error(ErrorCode::kConfiguration, "empty training split");
  const FeatureSet val_set = featurize_patches(split.validation, split.class_roster, load);
  return train_on_features(split.class_roster, train_set, val_set.features.empty() ? nullptr : &val_set,
                           options);
}

}  // namespace texanno
