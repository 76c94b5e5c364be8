#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "texanno/dataprep.hpp"
#include "texanno/features.hpp"
#include "texanno/imaging.hpp"

namespace texanno {

struct ClassDistribution {
  std::vector<double> probabilities;
  std::size_t top_class = 0;
  double confidence = 0.0;

  /// Argmax with ties going to the lowest roster index.
  static ClassDistribution from_probabilities(std::vector<double> probabilities);
};

/// Anything that can label a 224x224 patch. The segmenter and ranking only
/// depend on this interface.
class PatchClassifier {
 public:
  virtual ~PatchClassifier() = default;

  virtual const std::vector<std::string>& roster() const = 0;
  virtual ClassDistribution predict(const Raster& patch) const = 0;
  /// Identifies the model for caching; empty when not versioned.
  virtual std::string version() const { return {}; }
};

struct TrainingMeta {
  std::uint64_t seed = 0;
  int epochs = 0;
  int batch = 0;
  double learning_rate = 0.0;
  std::vector<double> train_loss_history;  // epochs + 1 entries, index 0 = init
  double final_train_loss = 0.0;
  std::optional<double> final_validation_loss;
  // Top-1 precision per roster class on validation examples; empty entries
  // for classes never predicted.
  std::vector<std::optional<double>> validation_precision;
  std::optional<double> validation_accuracy;
};

// One model-input example: standardized features and a roster index.
struct LabeledExample {
  std::vector<double> x;
  std::size_t label = 0;
};

/// Multinomial logistic regression over standardized texture features.
/// Weights are K x (D + 1) with the bias in the last column.
class SoftmaxModel final : public PatchClassifier {
 public:
  SoftmaxModel() = default;
  /// Zero weights, identity standardization.
  SoftmaxModel(std::vector<std::string> roster, std::size_t feature_dim);

  const std::vector<std::string>& roster() const override { return roster_; }
  ClassDistribution predict(const Raster& patch) const override;
  std::string version() const override { return version_; }
  void set_version(std::string v) { version_ = std::move(v); }

  std::size_t num_classes() const { return roster_.size(); }
  std::size_t feature_dim() const { return dim_; }
  std::size_t cols() const { return dim_ + 1; }

  double& weight(std::size_t k, std::size_t j) { return weights_[k * cols() + j]; }
  double weight(std::size_t k, std::size_t j) const { return weights_[k * cols() + j]; }
  std::span<double> weights() { return weights_; }
  std::span<const double> weights() const { return weights_; }

  const std::vector<double>& feature_mean() const { return mean_; }
  const std::vector<double>& feature_scale() const { return scale_; }
  void set_standardization(std::vector<double> mean, std::vector<double> scale);

  /// Raw feature vector -> model input.
  std::vector<double> standardize(std::span<const double> raw) const;
  std::vector<double> probabilities_for_input(std::span<const double> x) const;
  ClassDistribution predict_features(const FeatureVector& raw) const;

  std::size_t class_index(const std::string& name) const;

  TrainingMeta& meta() { return meta_; }
  const TrainingMeta& meta() const { return meta_; }

  /// Versioned binary format; see docs/formats.md.
  std::vector<std::uint8_t> serialize() const;
  static SoftmaxModel deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static SoftmaxModel load(const std::filesystem::path& path);

  friend bool operator==(const SoftmaxModel& a, const SoftmaxModel& b) {
    return a.roster_ == b.roster_ && a.dim_ == b.dim_ && a.weights_ == b.weights_ &&
           a.mean_ == b.mean_ && a.scale_ == b.scale_;
  }

 private:
  void check_input(std::size_t n) const;

  std::vector<std::string> roster_;
  std::size_t dim_ = 0;
  std::vector<double> weights_;
  std::vector<double> mean_;
  std::vector<double> scale_;
  TrainingMeta meta_;
  std::string version_;
};

/// Mean cross-entropy of `batch` under `model`.
double mean_loss(const SoftmaxModel& model, std::span<const LabeledExample> batch);

/// Analytic gradient of mean_loss with respect to the weights, K x (D + 1)
/// row-major.
std::vector<double> gradient_of_loss(const SoftmaxModel& model,
                                     std::span<const LabeledExample> batch);

struct TrainOptions {
  double learning_rate = 0.001;
  int epochs = 100;
  int batch = 32;
  std::uint64_t seed = 0;
};

struct FeatureSet {
  std::vector<FeatureVector> features;
  std::vector<std::size_t> labels;  // roster indices
};

/// Mini-batch SGD from zero weights. Standardization statistics come from the
/// training features. Throws kConfiguration unless at least two classes have
/// training examples.
SoftmaxModel train_on_features(const std::vector<std::string>& roster,
                               const FeatureSet& train, const FeatureSet* validation,
                               const TrainOptions& options);

/// Renders and featurizes every patch of the split, then trains.
SoftmaxModel train(const DatasetSplit& split, const ImageLoader& load,
                   const TrainOptions& options);

/// Featurizes patches (grouped by source image) with labels mapped onto
/// `roster`. Patches whose label is not in the roster are skipped.
FeatureSet featurize_patches(std::span<const TrainingPatch> patches,
                             const std::vector<std::string>& roster, const ImageLoader& load);

}  // namespace texanno
