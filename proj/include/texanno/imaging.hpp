#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace texanno {

inline constexpr int kWindowSize = 224;
inline constexpr int kWindowStride = 200;

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct Rect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  std::int64_t area() const {
    return static_cast<std::int64_t>(width()) * height();
  }
  bool valid() const { return x0 >= 0 && y0 >= 0 && x0 < x1 && y0 < y1; }
  bool contains(const Rect& inner) const {
    return inner.x0 >= x0 && inner.y0 >= y0 && inner.x1 <= x1 &&
           inner.y1 <= y1;
  }

  friend auto operator<=>(const Rect&, const Rect&) = default;
};

/// Throws kValidation unless the rect satisfies 0 <= x0 < x1, 0 <= y0 < y1.
Rect make_rect(int x0, int y0, int x1, int y1);

std::string to_string(const Rect& r);

// 8-bit RGB raster, row-major, 3 bytes per pixel.
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, Rgb fill = {});
  Raster(int width, int height, std::vector<std::uint8_t> pixels);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }
  Rect bounds() const { return {0, 0, width_, height_}; }

  const std::string& id() const { return id_; }
  void set_id(std::string id) { id_ = std::move(id); }

  Rgb at(int x, int y) const {
    const std::uint8_t* p = &pixels_[offset(x, y)];
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) {
    std::uint8_t* p = &pixels_[offset(x, y)];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }
  const std::uint8_t* row(int y) const {
    return pixels_.data() + offset(0, y);
  }
  std::uint8_t* row(int y) { return pixels_.data() + offset(0, y); }

  std::span<const std::uint8_t> pixels() const { return pixels_; }
  std::span<std::uint8_t> pixels() { return pixels_; }

  // Pixel equality; ids are not compared.
  friend bool operator==(const Raster& a, const Raster& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ &&
           a.pixels_ == b.pixels_;
  }

 private:
  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * width_ + x) * 3;
  }

  std::string id_;
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Enumerates win x win windows in row-major (y, x) order. Offsets step by
/// `stride`; the last offset on each axis is clamped to extent - win so the
/// windows cover every pixel. Throws kImageTooSmall if the image is smaller
/// than one window.
std::vector<Rect> generate_windows(int width, int height,
                                   int win = kWindowSize,
                                   int stride = kWindowStride);

/// Offsets along one axis, as used by generate_windows.
std::vector<int> window_offsets(int extent, int win, int stride);

Raster crop(const Raster& raster, const Rect& r);

/// Bilinear resize with pixel-center alignment and edge clamping. A resize to
/// the source dimensions returns an identical raster.
Raster resize(const Raster& raster, int width = kWindowSize,
              int height = kWindowSize);

struct AugmentSpec {
  enum class Kind { kFlipH, kFlipV, kZoom, kScale, kShear };

  Kind kind = Kind::kFlipH;
  // zoom: factor in [1.0, 1.3]; scale: horizontal factor in [0.8, 1.2];
  // shear: angle in degrees in [-15, 15]. Unused for flips.
  double param = 0.0;

  static AugmentSpec flip_h() { return {Kind::kFlipH, 0.0}; }
  static AugmentSpec flip_v() { return {Kind::kFlipV, 0.0}; }
  static AugmentSpec zoom(double f) { return {Kind::kZoom, f}; }
  static AugmentSpec scale(double f) { return {Kind::kScale, f}; }
  static AugmentSpec shear(double deg) { return {Kind::kShear, deg}; }

  void validate() const;

  /// Stable text tag, e.g. "flip-h", "zoom:1.125", "shear:-7.5".
  std::string tag() const;
  static AugmentSpec parse(const std::string& tag);

  friend bool operator==(const AugmentSpec&, const AugmentSpec&) = default;
};

/// Applies one augmentation to a 224x224 patch. Geometric transforms sample
/// bilinearly about the patch center with edge-replicate padding.
Raster augment(const Raster& patch, const AugmentSpec& spec);

}  // namespace texanno
