#include "texanno/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "texanno/errors.hpp"
#include "texanno/hashing.hpp"

namespace texanno {

namespace {

constexpr int kOutlineVertices = 64;
constexpr int kPlacementAttempts = 80;

double u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * u01(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

// Lattice hash in [0, 1).
double hash01(std::int64_t x, std::int64_t y, std::uint64_t seed) {
  const std::uint64_t h = mix64(seed ^ mix64(static_cast<std::uint64_t>(x) * 0x9E3779B1u ^
                                             mix64(static_cast<std::uint64_t>(y))));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(double x, double y, std::uint64_t seed) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  const double tx = smooth(x - fx), ty = smooth(y - fy);
  const double a = hash01(ix, iy, seed), b = hash01(ix + 1, iy, seed);
  const double c = hash01(ix, iy + 1, seed), d = hash01(ix + 1, iy + 1, seed);
  const double top = a + (b - a) * tx;
  const double bottom = c + (d - c) * tx;
  return top + (bottom - top) * ty;
}

double fbm(double x, double y, std::uint64_t seed, int octaves = 4) {
  double sum = 0.0, amp = 0.5, norm = 0.0, freq = 1.0;
  for (int o = 0; o < octaves; ++o) {
    sum += amp * value_noise(x * freq, y * freq, seed + static_cast<std::uint64_t>(o) * 7919);
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return sum / norm;
}

std::uint8_t clamp_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

Rgb mix(const Rgb& a, const Rgb& b, double t) {
  return {clamp_byte(a.r + (b.r - a.r) * t), clamp_byte(a.g + (b.g - a.g) * t),
          clamp_byte(a.b + (b.b - a.b) * t)};
}

Rgb shift(const Rgb& c, double d) {
  return {clamp_byte(c.r + d), clamp_byte(c.g + d), clamp_byte(c.b + d)};
}

// Per-instance randomization of a class texture.
struct TextureInstance {
  TextureParams params;
  std::uint64_t seed = 0;
  double angle = 0.0;
  double offset_x = 0.0;
  double offset_y = 0.0;
};

TextureInstance instantiate(const TextureParams& base, std::mt19937_64& rng) {
  TextureInstance t;
  t.params = base;
  t.seed = rng();
  t.angle = uniform(rng, 0.0, std::numbers::pi);
  t.offset_x = uniform(rng, 0.0, 4096.0);
  t.offset_y = uniform(rng, 0.0, 4096.0);
  const double j1 = uniform(rng, -6.0, 6.0);
  const double j2 = uniform(rng, -6.0, 6.0);
  t.params.primary = shift(base.primary, j1);
  t.params.secondary = shift(base.secondary, j2);
  return t;
}

Rgb shade(const TextureInstance& t, int px, int py) {
  const TextureParams& p = t.params;
  const double x = px + t.offset_x;
  const double y = py + t.offset_y;
  const double s = p.scale;
  const double ca = std::cos(t.angle), sa = std::sin(t.angle);
  const double u = x * ca + y * sa;
  const double v = -x * sa + y * ca;
  // Grain is correlated over a few pixels so resampling does not erase it.
  const double grain = (value_noise(x / 2.5, y / 2.5, t.seed ^ 0xA5A5) - 0.5) * 10.0;
  Rgb out;
  switch (p.recipe) {
    case TextureRecipe::kDotField: {
      // Elongated pale grains on jittered cells.
      const double cx = std::floor(u / s), cy = std::floor(v / s);
      bool inside = false;
      for (int dy = -1; dy <= 1 && !inside; ++dy) {
        for (int dx = -1; dx <= 1 && !inside; ++dx) {
          const auto gx = static_cast<std::int64_t>(cx) + dx;
          const auto gy = static_cast<std::int64_t>(cy) + dy;
          const double jx = (gx + 0.2 + 0.6 * hash01(gx, gy, t.seed)) * s;
          const double jy = (gy + 0.2 + 0.6 * hash01(gx, gy, t.seed + 1)) * s;
          const double th = hash01(gx, gy, t.seed + 2) * std::numbers::pi;
          const double ddx = u - jx, ddy = v - jy;
          const double a = ddx * std::cos(th) + ddy * std::sin(th);
          const double b = -ddx * std::sin(th) + ddy * std::cos(th);
          const double ra = 0.42 * s, rb = 0.2 * s;
          inside = (a * a) / (ra * ra) + (b * b) / (rb * rb) <= 1.0;
        }
      }
      out = inside ? p.secondary : shift(p.primary, (fbm(u / 30, v / 30, t.seed) - 0.5) * 30);
      break;
    }
    case TextureRecipe::kCellular: {
      const double cx = std::floor(u / s), cy = std::floor(v / s);
      double f1 = 1e30, f2 = 1e30;
      std::int64_t best_x = 0, best_y = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const auto gx = static_cast<std::int64_t>(cx) + dx;
          const auto gy = static_cast<std::int64_t>(cy) + dy;
          const double fx = (gx + hash01(gx, gy, t.seed)) * s;
          const double fy = (gy + hash01(gx, gy, t.seed + 1)) * s;
          const double d = std::hypot(u - fx, v - fy);
          if (d < f1) {
            f2 = f1;
            f1 = d;
            best_x = gx;
            best_y = gy;
          } else if (d < f2) {
            f2 = d;
          }
        }
      }
      if (f2 - f1 < 2.0) {
        out = p.secondary;
      } else {
        out = shift(p.primary, (hash01(best_x, best_y, t.seed + 3) - 0.5) * 40);
      }
      break;
    }
    case TextureRecipe::kValueNoise:
      out = mix(p.primary, p.secondary, fbm(u / s, v / s, t.seed, 5));
      break;
    case TextureRecipe::kBandedGradient: {
      const double phase = u / s + 0.6 * fbm(u / 60, v / 60, t.seed);
      out = mix(p.primary, p.secondary, phase - std::floor(phase));
      break;
    }
    case TextureRecipe::kSpeckle: {
      // Small round grains, one per occupied lattice cell.
      const double cx = std::floor(u / s), cy = std::floor(v / s);
      bool inside = false;
      for (int dy = -1; dy <= 1 && !inside; ++dy) {
        for (int dx = -1; dx <= 1 && !inside; ++dx) {
          const auto gx = static_cast<std::int64_t>(cx) + dx;
          const auto gy = static_cast<std::int64_t>(cy) + dy;
          if (hash01(gx, gy, t.seed + 5) > 0.7) continue;
          const double jx = (gx + 0.25 + 0.5 * hash01(gx, gy, t.seed)) * s;
          const double jy = (gy + 0.25 + 0.5 * hash01(gx, gy, t.seed + 1)) * s;
          const double ddx = u - jx, ddy = v - jy;
          inside = ddx * ddx + ddy * ddy <= 0.09 * s * s;
        }
      }
      out = inside ? p.secondary : shift(p.primary, (fbm(u / 16, v / 16, t.seed) - 0.5) * 24);
      break;
    }
    case TextureRecipe::kMarbled: {
      const double turb = fbm(u / 48, v / 48, t.seed, 5);
      const double w = 0.5 + 0.5 * std::sin(2 * std::numbers::pi * u / s + 9.0 * turb);
      out = mix(p.primary, p.secondary, std::pow(w, 3.0));
      break;
    }
    case TextureRecipe::kStripe: {
      const double w = std::sin(2 * std::numbers::pi * u / s + 1.5 * std::sin(v / 40.0));
      out = mix(p.primary, p.secondary, 0.5 + 0.5 * std::tanh(3.0 * w));
      break;
    }
    case TextureRecipe::kChecker: {
      const auto a = static_cast<std::int64_t>(std::floor(u / s));
      const auto b = static_cast<std::int64_t>(std::floor(v / s));
      out = ((a + b) & 1) ? p.secondary : p.primary;
      break;
    }
    case TextureRecipe::kSoil: {
      const double n = fbm(u / s, v / s, t.seed, 5);
      out = mix(p.primary, p.secondary, n);
      if (hash01(static_cast<std::int64_t>(std::floor(u / 3)), static_cast<std::int64_t>(std::floor(v / 3)),
                 t.seed + 9) < 0.04) {
        out = shift(out, -35);
      }
      break;
    }
  }
  return shift(out, grain);
}

Polygon blob_outline(double cx, double cy, double radius, std::mt19937_64& rng) {
  const double a1 = uniform(rng, 0.0, 0.12), a2 = uniform(rng, 0.0, 0.10);
  const double p1 = uniform(rng, 0.0, 2 * std::numbers::pi);
  const double p2 = uniform(rng, 0.0, 2 * std::numbers::pi);
  Polygon poly;
  poly.vertices.reserve(kOutlineVertices);
  for (int i = 0; i < kOutlineVertices; ++i) {
    const double th = 2 * std::numbers::pi * i / kOutlineVertices;
    const double r = radius * (1.0 + a1 * std::sin(2 * th + p1) + a2 * std::sin(3 * th + p2));
    Point pt{std::llround(cx + r * std::cos(th)), std::llround(cy + r * std::sin(th))};
    if (poly.vertices.empty() || poly.vertices.back() != pt) poly.vertices.push_back(pt);
  }
  if (poly.vertices.front() == poly.vertices.back()) poly.vertices.pop_back();
  return poly;
}

std::size_t pick_weighted(const std::vector<std::pair<std::string, double>>& mix,
                          std::mt19937_64& rng) {
  double total = 0.0;
  for (const auto& [_, w] : mix) total += w;
  double r = u01(rng) * total;
  for (std::size_t i = 0; i < mix.size(); ++i) {
    if (mix[i].second <= 0.0) continue;
    if (r < mix[i].second) return i;
    r -= mix[i].second;
  }
  for (std::size_t i = mix.size(); i-- > 0;) {
    if (mix[i].second > 0.0) return i;
  }
  return 0;
}

}  // namespace

const std::vector<std::pair<std::string, double>>& collection_class_counts() {
  static const std::vector<std::pair<std::string, double>> counts = {
      {"maggots", 1375}, {"scale", 716},    {"purge", 709},    {"mummification", 557},
      {"eggs", 533},     {"mold", 339},     {"marbling", 241}, {"plastic", 107},
  };
  return counts;
}

std::vector<std::pair<std::string, double>> uniform_class_mix() {
  std::vector<std::pair<std::string, double>> mix;
  for (const auto& [name, _] : collection_class_counts()) mix.emplace_back(name, 1.0);
  return mix;
}

TextureParams default_texture(const std::string& class_name) {
  using R = TextureRecipe;
  if (class_name == "maggots") return {R::kDotField, {140, 110, 65}, {238, 228, 196}, 11};
  if (class_name == "scale") return {R::kCellular, {175, 178, 182}, {85, 85, 92}, 18};
  if (class_name == "purge") return {R::kValueNoise, {80, 25, 22}, {160, 70, 45}, 20};
  if (class_name == "mummification") return {R::kBandedGradient, {115, 65, 30}, {200, 130, 65}, 44};
  if (class_name == "eggs") return {R::kSpeckle, {62, 56, 48}, {245, 245, 235}, 7};
  if (class_name == "mold") return {R::kMarbled, {175, 215, 165}, {245, 248, 238}, 36};
  if (class_name == "marbling") return {R::kStripe, {105, 65, 125}, {60, 125, 120}, 12};
  if (class_name == "plastic") return {R::kChecker, {35, 65, 175}, {125, 165, 235}, 18};
  if (class_name == kBackgroundClass) return {R::kSoil, {90, 88, 58}, {140, 125, 85}, 30};
  throw Error(ErrorCode::kValidation, "no texture recipe for class '" + class_name + "'");
}

void SceneSpec::validate() const {
  if (width < 1 || height < 1) throw Error(ErrorCode::kValidation, "scene dimensions must be positive");
  if (!(annotation_completeness > 0.0 && annotation_completeness <= 1.0)) {
    throw Error(ErrorCode::kValidation, "annotation_completeness must lie in (0, 1]");
  }
  if (class_mix.empty()) throw Error(ErrorCode::kValidation, "class_mix is empty");
  bool any_positive = false;
  for (const auto& [name, w] : class_mix) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorCode::kValidation, "class weight must be >= 0");
    if (name == kBackgroundClass) throw Error(ErrorCode::kValidation, "background cannot be placed as an instance");
    any_positive |= w > 0.0;
  }
  if (!any_positive && required_classes.empty()) {
    throw Error(ErrorCode::kValidation, "class_mix weights are all zero");
  }
  if (min_instances < 0 || max_instances < min_instances) {
    throw Error(ErrorCode::kValidation, "bad instance count range");
  }
  if (min_instance_size < 8 || max_instance_size < min_instance_size) {
    throw Error(ErrorCode::kValidation, "bad instance size range");
  }
}

SceneSpec training_scene_template() {
  SceneSpec spec;
  spec.class_mix = collection_class_counts();
  spec.annotation_completeness = 0.85;
  spec.min_instances = 9;
  spec.max_instances = 13;
  spec.min_instance_size = 140;
  spec.max_instance_size = 240;
  return spec;
}

SceneSpec evaluation_scene_template() {
  SceneSpec spec;
  spec.class_mix = uniform_class_mix();
  spec.min_instances = 2;
  spec.max_instances = 3;
  spec.min_instance_size = 340;
  spec.max_instance_size = 520;
  return spec;
}

const ClassMaskBits* GroundTruth::mask_for(const std::string& class_name) const {
  for (const auto& m : masks) {
    if (m.class_name == class_name) return &m;
  }
  return nullptr;
}

bool GroundTruth::contains_class(const std::string& class_name) const {
  return std::any_of(instances.begin(), instances.end(),
                     [&](const SceneInstance& i) { return i.class_name == class_name; });
}

namespace {

// Even-odd fill restricted to `box`; bits are box-local, row-major.
std::vector<std::uint8_t> fill_polygon_in(const Polygon& poly, const Rect& box) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(std::max(0, box.width())) * std::max(0, box.height()), 0);
  const auto& v = poly.vertices;
  if (v.size() < 3 || bits.empty()) return bits;
  std::vector<double> xs;
  for (int y = box.y0; y < box.y1; ++y) {
    const double yc = y + 0.5;
    xs.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Point& a = v[i];
      const Point& b = v[(i + 1) % v.size()];
      if ((a.y <= yc) != (b.y <= yc)) {
        xs.push_back(a.x + (yc - a.y) * static_cast<double>(b.x - a.x) / static_cast<double>(b.y - a.y));
      }
    }
    std::sort(xs.begin(), xs.end());
    std::uint8_t* row = bits.data() + static_cast<std::size_t>(y - box.y0) * box.width();
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      const int from = std::max(box.x0, static_cast<int>(std::ceil(xs[k] - 0.5)));
      const int to = std::min(box.x1, static_cast<int>(std::ceil(xs[k + 1] - 0.5)));
      for (int x = from; x < to; ++x) row[x - box.x0] = 1;
    }
  }
  return bits;
}

Rect fill_box(const Polygon& poly, int width, int height) {
  const Rect b = poly.bounding_rect();
  return {std::max(0, b.x0 - 1), std::max(0, b.y0 - 1), std::min(width, b.x1 + 1), std::min(height, b.y1 + 1)};
}

}  // namespace

std::vector<std::uint8_t> fill_polygon(const Polygon& poly, int width, int height) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(width) * height, 0);
  if (poly.vertices.size() < 3) return bits;
  const Rect box = fill_box(poly, width, height);
  if (box.width() <= 0 || box.height() <= 0) return bits;
  const auto local = fill_polygon_in(poly, box);
  for (int y = box.y0; y < box.y1; ++y) {
    std::copy_n(local.begin() + static_cast<std::ptrdiff_t>(y - box.y0) * box.width(), box.width(),
                bits.begin() + static_cast<std::ptrdiff_t>(y) * width + box.x0);
  }
  return bits;
}

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(mix64(spec.seed));

  // Roster of placeable classes: the mix, plus required classes not in it.
  std::vector<std::pair<std::string, double>> roster = spec.class_mix;
  for (const auto& req : spec.required_classes) {
    const bool present = std::any_of(roster.begin(), roster.end(),
                                     [&](const auto& e) { return e.first == req; });
    if (!present) roster.emplace_back(req, 0.0);
  }
  auto texture_for = [&](const std::string& name) {
    for (const auto& [n, params] : spec.texture_params) {
      if (n == name) return params;
    }
    return default_texture(name);
  };

  const int count = uniform_int(rng, spec.min_instances, spec.max_instances);
  const int requested = std::max<int>(count, static_cast<int>(spec.required_classes.size()));
  if (requested > 0 && spec.min_instance_size > std::min(spec.width, spec.height)) {
    throw Error(ErrorCode::kGeneration, "canvas " + std::to_string(spec.width) + "x" +
                                            std::to_string(spec.height) +
                                            " too small for instances of size " +
                                            std::to_string(spec.min_instance_size));
  }

  const std::size_t npix = static_cast<std::size_t>(spec.width) * spec.height;
  std::vector<int> owner(npix, -1);  // instance index per pixel
  std::vector<std::size_t> instance_class;
  Scene scene;
  GroundTruth& truth = scene.truth;
  truth.width = spec.width;
  truth.height = spec.height;

  for (int i = 0; i < requested; ++i) {
    const std::size_t cls = i < static_cast<int>(spec.required_classes.size())
                                ? static_cast<std::size_t>(std::find_if(roster.begin(), roster.end(),
                                                                        [&](const auto& e) {
                                                                          return e.first == spec.required_classes[i];
                                                                        }) -
                                                           roster.begin())
                                : pick_weighted(roster, rng);
    const double size = uniform(rng, spec.min_instance_size, spec.max_instance_size);
    const double radius = std::min(size, static_cast<double>(std::min(spec.width, spec.height))) / 2.0;
    const double reach = radius * 1.22 + 1.0;
    for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
      const double cx = spec.width <= 2 * reach ? spec.width / 2.0 : uniform(rng, reach, spec.width - reach);
      const double cy = spec.height <= 2 * reach ? spec.height / 2.0 : uniform(rng, reach, spec.height - reach);
      Polygon outline = blob_outline(cx, cy, radius, rng);
      const Rect box = fill_box(outline, spec.width, spec.height);
      if (box.width() <= 0 || box.height() <= 0) continue;
      const auto bits = fill_polygon_in(outline, box);
      bool clash = false;
      bool any = false;
      for (int y = box.y0; y < box.y1 && !clash; ++y) {
        const std::uint8_t* row = bits.data() + static_cast<std::size_t>(y - box.y0) * box.width();
        for (int x = box.x0; x < box.x1; ++x) {
          if (!row[x - box.x0]) continue;
          any = true;
          if (owner[static_cast<std::size_t>(y) * spec.width + x] >= 0) {
            clash = true;
            break;
          }
        }
      }
      if (clash || !any) continue;
      const int index = static_cast<int>(truth.instances.size());
      Rect bbox{spec.width, spec.height, 0, 0};
      for (int y = box.y0; y < box.y1; ++y) {
        const std::uint8_t* row = bits.data() + static_cast<std::size_t>(y - box.y0) * box.width();
        for (int x = box.x0; x < box.x1; ++x) {
          if (!row[x - box.x0]) continue;
          owner[static_cast<std::size_t>(y) * spec.width + x] = index;
          bbox.x0 = std::min(bbox.x0, x);
          bbox.y0 = std::min(bbox.y0, y);
          bbox.x1 = std::max(bbox.x1, x + 1);
          bbox.y1 = std::max(bbox.y1, y + 1);
        }
      }
      truth.instances.push_back({roster[cls].first, std::move(outline), bbox});
      instance_class.push_back(cls);
      break;
    }
  }
  if (requested > 0 && truth.instances.empty()) {
    throw Error(ErrorCode::kGeneration, "could not place any instance on the canvas");
  }

  // Paint: background everywhere, class textures on owned pixels.
  const TextureInstance background = instantiate(texture_for(kBackgroundClass), rng);
  std::vector<TextureInstance> textures;
  textures.reserve(truth.instances.size());
  for (const auto& inst : truth.instances) textures.push_back(instantiate(texture_for(inst.class_name), rng));

  scene.image = Raster(spec.width, spec.height);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const int o = owner[static_cast<std::size_t>(y) * spec.width + x];
      scene.image.set(x, y, shade(o >= 0 ? textures[o] : background, x, y));
    }
  }

  for (const auto& [name, _] : roster) {
    ClassMaskBits mask{name, std::vector<std::uint8_t>(npix, 0)};
    for (std::size_t p = 0; p < npix; ++p) {
      if (owner[p] >= 0 && truth.instances[owner[p]].class_name == name) mask.bits[p] = 1;
    }
    truth.masks.push_back(std::move(mask));
  }

  const std::size_t n = truth.instances.size();
  const auto emit = static_cast<std::size_t>(std::llround(spec.annotation_completeness * n));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  order.resize(std::min(emit, n));
  std::sort(order.begin(), order.end());
  for (std::size_t idx : order) {
    truth.annotations.push_back({idx, truth.instances[idx].class_name, truth.instances[idx].bbox});
  }
  return scene;
}

}  // namespace texanno
