#include "texanno/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <numbers>

#include "texanno/errors.hpp"

namespace texanno {

Rect make_rect(int x0, int y0, int x1, int y1) {
  Rect r{x0, y0, x1, y1};
  if (!r.valid()) {
    throw Error(ErrorCode::kValidation, "invalid rect " + to_string(r));
  }
  return r;
}

std::string to_string(const Rect& r) {
  return "(" + std::to_string(r.x0) + "," + std::to_string(r.y0) + "," +
         std::to_string(r.x1) + "," + std::to_string(r.y1) + ")";
}

Raster::Raster(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::kValidation, "raster dimensions must be positive");
  }
  pixels_.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = fill.r;
    pixels_[i + 1] = fill.g;
    pixels_[i + 2] = fill.b;
  }
}

Raster::Raster(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::kValidation, "raster dimensions must be positive");
  }
  if (pixels_.size() != static_cast<std::size_t>(width) * height * 3) {
    throw Error(ErrorCode::kValidation, "pixel buffer length mismatch");
  }
}

std::vector<int> window_offsets(int extent, int win, int stride) {
  std::vector<int> offsets;
  for (int o = 0;; o += stride) {
    if (o + win >= extent) {
      offsets.push_back(extent - win);
      break;
    }
    offsets.push_back(o);
  }
  return offsets;
}

std::vector<Rect> generate_windows(int width, int height, int win,
                                   int stride) {
  if (win < 1 || stride < 1) {
    throw Error(ErrorCode::kValidation, "window and stride must be positive");
  }
  if (width < win || height < win) {
    throw Error(ErrorCode::kImageTooSmall,
                "image " + std::to_string(width) + "x" +
                    std::to_string(height) + " is smaller than the " +
                    std::to_string(win) + "px window");
  }
  const auto xs = window_offsets(width, win, stride);
  const auto ys = window_offsets(height, win, stride);
  std::vector<Rect> windows;
  windows.reserve(xs.size() * ys.size());
  for (int y : ys) {
    for (int x : xs) windows.push_back({x, y, x + win, y + win});
  }
  return windows;
}

Raster crop(const Raster& raster, const Rect& r) {
  if (!r.valid() || !raster.bounds().contains(r)) {
    throw Error(ErrorCode::kBounds, "crop rect " + to_string(r) +
                                        " outside raster " +
                                        to_string(raster.bounds()));
  }
  Raster out(r.width(), r.height());
  const std::size_t row_bytes = static_cast<std::size_t>(r.width()) * 3;
  for (int y = 0; y < r.height(); ++y) {
    std::copy_n(raster.row(r.y0 + y) + static_cast<std::size_t>(r.x0) * 3,
                row_bytes, out.row(y));
  }
  return out;
}

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// Bilinear sample at continuous pixel-index coordinates, edges clamped.
Rgb sample_bilinear(const Raster& src, double sx, double sy) {
  sx = std::clamp(sx, 0.0, static_cast<double>(src.width() - 1));
  sy = std::clamp(sy, 0.0, static_cast<double>(src.height() - 1));
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const int x1 = std::min(x0 + 1, src.width() - 1);
  const int y1 = std::min(y0 + 1, src.height() - 1);
  const double fx = sx - x0;
  const double fy = sy - y0;
  const Rgb a = src.at(x0, y0), b = src.at(x1, y0);
  const Rgb c = src.at(x0, y1), d = src.at(x1, y1);
  auto mix = [&](std::uint8_t pa, std::uint8_t pb, std::uint8_t pc,
                 std::uint8_t pd) {
    const double top = pa + (pb - pa) * fx;
    const double bottom = pc + (pd - pc) * fx;
    return to_byte(top + (bottom - top) * fy);
  };
  return {mix(a.r, b.r, c.r, d.r), mix(a.g, b.g, c.g, d.g),
          mix(a.b, b.b, c.b, d.b)};
}

// out(x, y) = src(inverse(x, y)), with the inverse given relative to the
// patch center as a 2x2 linear map.
Raster warp_about_center(const Raster& src, double a, double b, double c,
                         double d) {
  Raster out(src.width(), src.height());
  const double cx = (src.width() - 1) / 2.0;
  const double cy = (src.height() - 1) / 2.0;
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      out.set(x, y, sample_bilinear(src, cx + a * dx + b * dy,
                                    cy + c * dx + d * dy));
    }
  }
  return out;
}

}  // namespace

Raster resize(const Raster& raster, int width, int height) {
  if (raster.empty()) {
    throw Error(ErrorCode::kValidation, "cannot resize an empty raster");
  }
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::kValidation, "resize target must be positive");
  }
  if (width == raster.width() && height == raster.height()) {
    Raster copy = raster;
    return copy;
  }
  Raster out(width, height);
  const double kx = static_cast<double>(raster.width()) / width;
  const double ky = static_cast<double>(raster.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double sy = (y + 0.5) * ky - 0.5;
    for (int x = 0; x < width; ++x) {
      out.set(x, y, sample_bilinear(raster, (x + 0.5) * kx - 0.5, sy));
    }
  }
  return out;
}

void AugmentSpec::validate() const {
  auto check = [&](double lo, double hi, const char* what) {
    if (!(param >= lo && param <= hi)) {
      throw Error(ErrorCode::kValidation,
                  std::string(what) + " parameter " + std::to_string(param) +
                      " outside [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]");
    }
  };
  switch (kind) {
    case Kind::kFlipH:
    case Kind::kFlipV:
      return;
    case Kind::kZoom:
      return check(1.0, 1.3, "zoom");
    case Kind::kScale:
      return check(0.8, 1.2, "scale");
    case Kind::kShear:
      return check(-15.0, 15.0, "shear");
  }
}

std::string AugmentSpec::tag() const {
  auto with_param = [this](const char* name) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, param);
    return std::string(name) + ":" + std::string(buf, res.ptr);
  };
  switch (kind) {
    case Kind::kFlipH: return "flip-h";
    case Kind::kFlipV: return "flip-v";
    case Kind::kZoom: return with_param("zoom");
    case Kind::kScale: return with_param("scale");
    case Kind::kShear: return with_param("shear");
  }
  return "none";
}

AugmentSpec AugmentSpec::parse(const std::string& tag) {
  if (tag == "flip-h") return flip_h();
  if (tag == "flip-v") return flip_v();
  const auto colon = tag.find(':');
  if (colon == std::string::npos) {
    throw Error(ErrorCode::kValidation, "unknown augmentation tag '" + tag + "'");
  }
  const std::string name = tag.substr(0, colon);
  double value = 0.0;
  try {
    std::size_t used = 0;
    value = std::stod(tag.substr(colon + 1), &used);
    if (used != tag.size() - colon - 1) throw std::invalid_argument(tag);
  } catch (const std::exception&) {
    throw Error(ErrorCode::kValidation, "bad augmentation parameter in '" + tag + "'");
  }
  AugmentSpec spec;
  if (name == "zoom") {
    spec = zoom(value);
  } else if (name == "scale") {
    spec = scale(value);
  } else if (name == "shear") {
    spec = shear(value);
  } else {
    throw Error(ErrorCode::kValidation, "unknown augmentation tag '" + tag + "'");
  }
  spec.validate();
  return spec;
}

Raster augment(const Raster& patch, const AugmentSpec& spec) {
  if (patch.width() != kWindowSize || patch.height() != kWindowSize) {
    throw Error(ErrorCode::kValidation, "augment expects a 224x224 patch");
  }
  spec.validate();
  switch (spec.kind) {
    case AugmentSpec::Kind::kFlipH: {
      Raster out(patch.width(), patch.height());
      for (int y = 0; y < patch.height(); ++y)
        for (int x = 0; x < patch.width(); ++x)
          out.set(patch.width() - 1 - x, y, patch.at(x, y));
      return out;
    }
    case AugmentSpec::Kind::kFlipV: {
      Raster out(patch.width(), patch.height());
      for (int y = 0; y < patch.height(); ++y)
        std::copy_n(patch.row(y), static_cast<std::size_t>(patch.width()) * 3,
                    out.row(patch.height() - 1 - y));
      return out;
    }
    case AugmentSpec::Kind::kZoom:
      return warp_about_center(patch, 1.0 / spec.param, 0.0, 0.0,
                               1.0 / spec.param);
    case AugmentSpec::Kind::kScale:
      return warp_about_center(patch, 1.0 / spec.param, 0.0, 0.0, 1.0);
    case AugmentSpec::Kind::kShear: {
      const double t = std::tan(spec.param * std::numbers::pi / 180.0);
      return warp_about_center(patch, 1.0, -t, 0.0, 1.0);
    }
  }
  return patch;
}

}  // namespace texanno
