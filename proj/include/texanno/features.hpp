#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "texanno/imaging.hpp"

namespace texanno {

inline constexpr std::size_t kColorBins = 16;
inline constexpr std::size_t kColorFeatures = 3 * kColorBins;
inline constexpr std::size_t kLbpBins = 59;
inline constexpr std::size_t kOrientationBins = 16;
inline constexpr std::size_t kFeatureDim = kColorFeatures + kLbpBins + kOrientationBins;

// Layout: [R hist | G hist | B hist | uniform LBP hist | gradient orientation
// hist]; every block is L1-normalized.
struct FeatureVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

/// Texture descriptor of a 224x224 patch. Throws kValidation on other sizes.
FeatureVector featurize(const Raster& patch);

/// Bin index (0..58) of an 8-bit LBP code under the uniform mapping; codes
/// with more than two circular 0/1 transitions share bin 58.
int uniform_lbp_bin(std::uint8_t code);

}  // namespace texanno
