#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "texanno/classifier.hpp"
#include "texanno/hashing.hpp"
#include "texanno/imaging.hpp"

namespace texanno::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("texanno-test-" + random_id().substr(0, 12) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Classifier driven by a callback over the window's pixels.
class FnClassifier : public PatchClassifier {
 public:
  using Fn = std::function<ClassDistribution(const Raster&)>;
  FnClassifier(std::vector<std::string> roster, Fn fn) : roster_(std::move(roster)), fn_(std::move(fn)) {}

  const std::vector<std::string>& roster() const override { return roster_; }
  ClassDistribution predict(const Raster& patch) const override { return fn_(patch); }

 private:
  std::vector<std::string> roster_;
  Fn fn_;
};

// Distribution putting `confidence` on class k and spreading the rest.
inline ClassDistribution peaked(std::size_t k, std::size_t n, double confidence) {
  std::vector<double> p(n, n > 1 ? (1.0 - confidence) / static_cast<double>(n - 1) : 1.0);
  p[k] = confidence;
  return ClassDistribution::from_probabilities(std::move(p));
}

inline Raster random_raster(int w, int h, std::mt19937_64& rng) {
  Raster r(w, h);
  for (auto& b : r.pixels()) b = static_cast<std::uint8_t>(rng() & 0xff);
  return r;
}

inline Rect random_rect(std::mt19937_64& rng, int extent, int max_side) {
  std::uniform_int_distribution<int> side(1, max_side);
  const int w = side(rng), h = side(rng);
  std::uniform_int_distribution<int> px(0, extent - w), py(0, extent - h);
  const int x = px(rng), y = py(rng);
  return {x, y, x + w, y + h};
}

}  // namespace texanno::testing

namespace texanno::testing {

// Random K-class model over D raw features with random weights and a batch
// of standardized examples.
struct GradientCase {
  SoftmaxModel model;
  std::vector<LabeledExample> batch;
};

inline GradientCase random_gradient_case(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> kd(2, 6), dd(1, 12), bd(1, 16);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto k = static_cast<std::size_t>(kd(rng)), d = static_cast<std::size_t>(dd(rng));
  std::vector<std::string> roster;
  for (std::size_t i = 0; i < k; ++i) roster.push_back("c" + std::to_string(i));
  GradientCase c{SoftmaxModel(roster, d), {}};
  for (auto& w : c.model.weights()) w = normal(rng);
  const int n = bd(rng);
  for (int i = 0; i < n; ++i) {
    LabeledExample ex;
    ex.x.resize(d);
    for (auto& v : ex.x) v = normal(rng);
    ex.label = rng() % k;
    c.batch.push_back(std::move(ex));
  }
  return c;
}

// Largest relative error between the analytic gradient and central
// differences at step h. Denominators are floored at 1e-6.
inline double gradient_check_error(GradientCase& c, double h = 1e-5) {
  const auto analytic = gradient_of_loss(c.model, c.batch);
  auto w = c.model.weights();
  double worst = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double saved = w[i];
    w[i] = saved + h;
    const double up = mean_loss(c.model, c.batch);
    w[i] = saved - h;
    const double down = mean_loss(c.model, c.batch);
    w[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
    worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
  }
  return worst;
}

}  // namespace texanno::testing

#include <cstdlib>
#include <sys/wait.h>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace texanno::testing {

// Small, fast pipeline config: few small scenes, few epochs.
inline nlohmann::json small_config_json() {
  return nlohmann::json::parse(R"({
    "seed": 3,
    "synth": {
      "train_scenes": 10,
      "eval_scenes": 3,
      "train_template": {"width": 480, "height": 360, "min_instances": 5, "max_instances": 7,
                         "min_instance_size": 90, "max_instance_size": 140,
                         "class_mix": {"maggots": 1, "eggs": 1, "mold": 1}},
      "eval_template": {"width": 480, "height": 360, "min_instances": 2, "max_instances": 3,
                        "min_instance_size": 160, "max_instance_size": 220,
                        "class_mix": {"maggots": 1, "eggs": 1, "mold": 1}}
    },
    "prep": {"min_instances": 5, "augment_per_patch": 1},
    "train": {"epochs": 30},
    "segment": {"threshold": 0.6}
  })");
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

struct CommandResult {
  int exit_code = -1;
  std::string output;
};

// Runs a shell command, capturing stdout and stderr together.
inline CommandResult run_command(const std::string& cmd, const std::filesystem::path& scratch) {
  const auto out = scratch / ("cmd-" + random_id().substr(0, 8) + ".txt");
  const int status = std::system((cmd + " > '" + out.string() + "' 2>&1").c_str());
  CommandResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = read_text(out);
  std::filesystem::remove(out);
  return r;
}

}  // namespace texanno::testing
