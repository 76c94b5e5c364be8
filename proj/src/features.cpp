#include "texanno/features.hpp"

#include <bit>
#include <cmath>
#include <numbers>

#include "texanno/errors.hpp"

namespace texanno {

namespace {

std::array<std::uint8_t, 256> build_uniform_table() {
  std::array<std::uint8_t, 256> table{};
  std::uint8_t next = 0;
  for (int code = 0; code < 256; ++code) {
    const auto c = static_cast<std::uint8_t>(code);
    const auto rotated = static_cast<std::uint8_t>((c >> 1) | (c << 7));
    const int transitions = std::popcount(static_cast<unsigned>(c ^ rotated));
    table[code] = transitions <= 2 ? next++ : 58;
  }
  return table;
}

const std::array<std::uint8_t, 256>& uniform_table() {
  static const auto table = build_uniform_table();
  return table;
}

}  // namespace

int uniform_lbp_bin(std::uint8_t code) { return uniform_table()[code]; }

FeatureVector featurize(const Raster& patch) {
  if (patch.width() != kWindowSize || patch.height() != kWindowSize) {
    throw Error(ErrorCode::kValidation,
                "featurize expects 224x224, got " + std::to_string(patch.width()) + "x" +
                    std::to_string(patch.height()));
  }
  const int w = patch.width();
  const int h = patch.height();
  FeatureVector f;
  f.values.assign(kFeatureDim, 0.0);
  double* color = f.values.data();
  double* lbp = color + kColorFeatures;
  double* orient = lbp + kLbpBins;

  std::vector<int> gray(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    const std::uint8_t* row = patch.row(y);
    for (int x = 0; x < w; ++x) {
      const int r = row[3 * x], g = row[3 * x + 1], b = row[3 * x + 2];
      color[r >> 4] += 1.0;
      color[kColorBins + (g >> 4)] += 1.0;
      color[2 * kColorBins + (b >> 4)] += 1.0;
      gray[static_cast<std::size_t>(y) * w + x] = (77 * r + 150 * g + 29 * b) >> 8;
    }
  }
  const double npix = static_cast<double>(w) * h;
  for (std::size_t i = 0; i < kColorFeatures; ++i) color[i] /= npix;

  const auto& table = uniform_table();
  // Neighbors clockwise from the top-left.
  static constexpr int kDx[8] = {-1, 0, 1, 1, 1, 0, -1, -1};
  static constexpr int kDy[8] = {-1, -1, -1, 0, 1, 1, 1, 0};
  double magnitude_total = 0.0;
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const int* c = &gray[static_cast<std::size_t>(y) * w + x];
      unsigned code = 0;
      for (int k = 0; k < 8; ++k) {
        code |= static_cast<unsigned>(c[kDy[k] * w + kDx[k]] >= *c) << k;
      }
      lbp[table[code]] += 1.0;

      const int gx = c[1] - c[-1];
      const int gy = c[w] - c[-w];
      if (gx != 0 || gy != 0) {
        const double mag = std::sqrt(static_cast<double>(gx * gx + gy * gy));
        double angle = std::atan2(static_cast<double>(gy), static_cast<double>(gx));
        if (angle < 0) angle += std::numbers::pi;
        if (angle >= std::numbers::pi) angle -= std::numbers::pi;
        auto bin = static_cast<std::size_t>(angle / std::numbers::pi * kOrientationBins);
        if (bin >= kOrientationBins) bin = kOrientationBins - 1;
        orient[bin] += mag;
        magnitude_total += mag;
      }
    }
  }
  const double interior = static_cast<double>(w - 2) * (h - 2);
  for (std::size_t i = 0; i < kLbpBins; ++i) lbp[i] /= interior;
  for (std::size_t i = 0; i < kOrientationBins; ++i) {
    orient[i] = magnitude_total > 0.0 ? orient[i] / magnitude_total : 1.0 / kOrientationBins;
  }
  return f;
}

}  // namespace texanno
