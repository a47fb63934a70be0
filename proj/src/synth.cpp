#include "pss/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pss {

namespace {

constexpr std::array<std::string_view, 7> kDomainNames = {"day",      "night", "fog",         "rain",
                                                          "overcast", "dusk",  "unstructured"};

using Rgb = std::array<float, 3>;

Rgb jitter(Rng& rng, Rgb c, float amount) {
  for (float& v : c) v = std::clamp(v + rng.uniform(-amount, amount), 0.0f, 1.0f);
  return c;
}

Rgb lerp(const Rgb& a, const Rgb& b, float t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

class Canvas {
 public:
  Canvas(int h, int w) : h_(h), w_(w), image_({3, h, w}), mask_(static_cast<std::size_t>(h) * w, 0) {}

  int height() const { return h_; }
  int width() const { return w_; }

  void put(int y, int x, const Rgb& c, std::uint8_t cls) {
    if (y < 0 || y >= h_ || x < 0 || x >= w_) return;
    const std::size_t hw = static_cast<std::size_t>(h_) * w_;
    const std::size_t i = static_cast<std::size_t>(y) * w_ + x;
    float* p = image_.ptr();
    p[i] = c[0];
    p[hw + i] = c[1];
    p[2 * hw + i] = c[2];
    mask_[i] = cls;
  }

  void rect(int y0, int x0, int y1, int x1, const Rgb& c, std::uint8_t cls) {
    for (int y = std::max(0, y0); y < std::min(h_, y1); ++y)
      for (int x = std::max(0, x0); x < std::min(w_, x1); ++x) put(y, x, c, cls);
  }

  void ellipse(float cy, float cx, float ry, float rx, const Rgb& c, std::uint8_t cls) {
    for (int y = static_cast<int>(std::floor(cy - ry)); y <= static_cast<int>(std::ceil(cy + ry)); ++y) {
      for (int x = static_cast<int>(std::floor(cx - rx)); x <= static_cast<int>(std::ceil(cx + rx)); ++x) {
        const float dy = (static_cast<float>(y) - cy) / ry;
        const float dx = (static_cast<float>(x) - cx) / rx;
        if (dy * dy + dx * dx <= 1.0f) put(y, x, c, cls);
      }
    }
  }

  Scene finish() && { return Scene{std::move(image_), std::move(mask_)}; }

 private:
  int h_, w_;
  Tensor image_;
  std::vector<std::uint8_t> mask_;
};

struct RoadGeometry {
  int horizon;
  float top_center, bottom_center, top_half, bottom_half;

  float center(int y, int h) const {
    const float t = static_cast<float>(y - horizon) / static_cast<float>(std::max(1, h - 1 - horizon));
    return top_center + (bottom_center - top_center) * t;
  }
  float half(int y, int h) const {
    const float t = static_cast<float>(y - horizon) / static_cast<float>(std::max(1, h - 1 - horizon));
    return top_half + (bottom_half - top_half) * t;
  }
  // Perspective scale in [0.3, 1] for an object standing on row y.
  float depth_scale(int y, int h) const {
    const float t = static_cast<float>(y - horizon) / static_cast<float>(std::max(1, h - 1 - horizon));
    return 0.3f + 0.7f * std::clamp(t, 0.0f, 1.0f);
  }
};

enum class Actor : std::uint8_t { vehicle, pedestrian, rickshaw, animal };

struct PendingActor {
  Actor kind;
  int base_row;
  float x;
  Rgb color;
};

// Separable [1,2,1]/4 smoothing with clamped borders.
void smooth121(Tensor& image) {
  const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  std::vector<float> tmp(image.numel());
  float* p = image.ptr();
  for (int ch = 0; ch < c; ++ch) {
    float* plane = p + static_cast<std::size_t>(ch) * h * w;
    float* t = tmp.data() + static_cast<std::size_t>(ch) * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const float l = plane[y * w + std::max(0, x - 1)], r = plane[y * w + std::min(w - 1, x + 1)];
        t[y * w + x] = 0.25f * l + 0.5f * plane[y * w + x] + 0.25f * r;
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const float u = t[std::max(0, y - 1) * w + x], d = t[std::min(h - 1, y + 1) * w + x];
        plane[y * w + x] = 0.25f * u + 0.5f * t[y * w + x] + 0.25f * d;
      }
    }
  }
}

int count_in(Rng& rng, const std::array<int, 2>& range) { return rng.uniform_int(range[0], range[1]); }

}  // namespace

std::string_view domain_name(DomainKind kind) { return kDomainNames.at(static_cast<std::size_t>(kind)); }

DomainKind parse_domain(std::string_view name) {
  for (std::size_t i = 0; i < kDomainNames.size(); ++i)
    if (kDomainNames[i] == name) return static_cast<DomainKind>(i);
  throw std::invalid_argument("unknown domain '" + std::string(name) + "'");
}

std::vector<DomainKind> all_domains() {
  std::vector<DomainKind> out;
  for (std::size_t i = 0; i < kDomainNames.size(); ++i) out.push_back(static_cast<DomainKind>(i));
  return out;
}

DomainTransform DomainTransform::defaults(DomainKind kind) {
  DomainTransform t;
  t.kind = kind;
  switch (kind) {
    case DomainKind::day:
    case DomainKind::unstructured:
      break;
    case DomainKind::night:
      t.luminance_scale = 0.25f;
      t.noise_sigma = 0.05f;
      break;
    case DomainKind::fog:
      t.haze_alpha_far = 0.6f;
      t.haze_alpha_near = 0.15f;
      t.box_blur = true;
      break;
    case DomainKind::rain:
      t.luminance_scale = 0.8f;
      t.streak_density = 0.02f;
      break;
    case DomainKind::overcast:
      t.desaturation = 0.5f;
      t.contrast = 0.7f;
      break;
    case DomainKind::dusk:
      t.luminance_scale = 0.5f;
      t.tint = {1.1f, 0.9f, 0.7f};
      break;
  }
  return t;
}

LabelSpace SceneSpec::label_space() const {
  return style == SceneStyle::unstructured ? extended_label_space() : base_label_space();
}

SceneSpec SceneSpec::for_domain(DomainKind kind, int height, int width) {
  SceneSpec s;
  s.height = height;
  s.width = width;
  if (kind == DomainKind::unstructured) {
    s.style = SceneStyle::unstructured;
    s.buildings = {0, 3};
    s.vehicles = {0, 2};
    s.pedestrians = {1, 5};
    s.rickshaws = {0, 3};
    s.animals = {0, 2};
  }
  return s;
}

Scene generate_scene(Rng& rng, const SceneSpec& spec) {
  const int h = spec.height, w = spec.width;
  if (h < 16 || w < 16) throw std::invalid_argument("generate_scene: resolution must be at least 16x16");
  const float sy = static_cast<float>(h) / 64.0f;
  const float sx = static_cast<float>(w) / 64.0f;
  const bool unstructured = spec.style == SceneStyle::unstructured;
  Canvas canvas(h, w);

  RoadGeometry road;
  road.horizon = rng.uniform_int(static_cast<int>(0.31f * h), static_cast<int>(0.44f * h));
  road.top_center = rng.uniform(0.4f, 0.6f) * w;
  road.bottom_center = rng.uniform(0.4f, 0.6f) * w;
  road.top_half = rng.uniform(0.05f, 0.1f) * w;
  road.bottom_half = rng.uniform(0.35f, 0.5f) * w;
  const int hz = road.horizon;

  // Sky gradient.
  const Rgb sky_top = jitter(rng, {0.40f, 0.60f, 0.92f}, 0.05f);
  const Rgb sky_bottom = jitter(rng, {0.72f, 0.82f, 0.95f}, 0.04f);
  for (int y = 0; y < hz; ++y) {
    const Rgb c = lerp(sky_top, sky_bottom, static_cast<float>(y) / static_cast<float>(std::max(1, hz - 1)));
    for (int x = 0; x < w; ++x) canvas.put(y, x, c, kSky);
  }

  // Verge and road.
  const Rgb verge = unstructured ? jitter(rng, {0.45f, 0.42f, 0.25f}, 0.05f) : jitter(rng, {0.28f, 0.52f, 0.22f}, 0.05f);
  const Rgb road_far = unstructured ? jitter(rng, {0.52f, 0.44f, 0.32f}, 0.04f) : jitter(rng, {0.42f, 0.42f, 0.44f}, 0.04f);
  const Rgb road_near = {road_far[0] * 0.85f, road_far[1] * 0.85f, road_far[2] * 0.85f};
  for (int y = hz; y < h; ++y) {
    const float t = static_cast<float>(y - hz) / static_cast<float>(std::max(1, h - 1 - hz));
    const Rgb vc = {verge[0] * (1.0f - 0.2f * t), verge[1] * (1.0f - 0.2f * t), verge[2] * (1.0f - 0.2f * t)};
    const Rgb rc = lerp(road_far, road_near, t);
    const float c = road.center(y, h), half = road.half(y, h);
    for (int x = 0; x < w; ++x) {
      const float fx = static_cast<float>(x) + 0.5f;
      if (std::abs(fx - c) <= half) {
        canvas.put(y, x, rc, kRoad);
      } else {
        canvas.put(y, x, vc, kVegetation);
      }
    }
  }

  // Buildings standing on the horizon.
  static constexpr Rgb kFacades[] = {{0.62f, 0.40f, 0.30f}, {0.72f, 0.66f, 0.55f}, {0.50f, 0.50f, 0.56f},
                                     {0.80f, 0.76f, 0.68f}};
  const int n_buildings = count_in(rng, spec.buildings);
  for (int i = 0; i < n_buildings; ++i) {
    const int bw = static_cast<int>(std::lround(rng.uniform(6.0f, 16.0f) * sx));
    const int x0 = rng.uniform_int(0, std::max(0, w - bw));
    const int bottom = hz + rng.uniform_int(0, static_cast<int>(2 * sy));
    const int bh = rng.uniform_int(static_cast<int>(6 * sy), std::max(static_cast<int>(6 * sy), hz - 2));
    const Rgb c = jitter(rng, kFacades[rng.uniform_int(0, 3)], 0.05f);
    canvas.rect(bottom - bh, x0, bottom, x0 + bw, c, kBuilding);
  }

  // Trees.
  const int n_trees = count_in(rng, spec.trees);
  for (int i = 0; i < n_trees; ++i) {
    const float cy = static_cast<float>(hz) + rng.uniform(-7.0f, 2.0f) * sy;
    const float cx = rng.uniform(0.0f, static_cast<float>(w));
    const Rgb c = jitter(rng, {0.15f, 0.38f, 0.14f}, 0.04f);
    canvas.ellipse(cy, cx, rng.uniform(3.0f, 7.0f) * sy, rng.uniform(3.0f, 6.0f) * sx, c, kVegetation);
  }

  // Road users, painted far to near.
  std::vector<PendingActor> actors;
  auto on_road = [&](int row, float spread) {
    return road.center(row, h) + rng.uniform(-spread, spread) * road.half(row, h);
  };
  static constexpr Rgb kCarPaint[] = {{0.80f, 0.12f, 0.10f}, {0.12f, 0.22f, 0.75f}, {0.92f, 0.92f, 0.90f},
                                      {0.08f, 0.08f, 0.10f}, {0.90f, 0.75f, 0.10f}};
  const int n_vehicles = count_in(rng, spec.vehicles);
  for (int i = 0; i < n_vehicles; ++i) {
    const int row = rng.uniform_int(hz + static_cast<int>(4 * sy), h - 2);
    actors.push_back({Actor::vehicle, row, on_road(row, 0.6f), jitter(rng, kCarPaint[rng.uniform_int(0, 4)], 0.05f)});
  }
  static constexpr Rgb kClothes[] = {{0.85f, 0.30f, 0.50f}, {0.20f, 0.20f, 0.25f}, {0.95f, 0.55f, 0.15f},
                                     {0.30f, 0.65f, 0.85f}};
  const int n_peds = count_in(rng, spec.pedestrians);
  for (int i = 0; i < n_peds; ++i) {
    const int row = rng.uniform_int(hz + static_cast<int>(3 * sy), h - 1);
    const float side = rng.bernoulli(0.5f) ? 1.0f : -1.0f;
    const float x = road.center(row, h) + side * (road.half(row, h) + rng.uniform(-3.0f, 3.0f) * sx);
    actors.push_back({Actor::pedestrian, row, x, jitter(rng, kClothes[rng.uniform_int(0, 3)], 0.05f)});
  }
  const int n_rickshaws = count_in(rng, spec.rickshaws);
  for (int i = 0; i < n_rickshaws; ++i) {
    const int row = rng.uniform_int(hz + static_cast<int>(4 * sy), h - 2);
    actors.push_back({Actor::rickshaw, row, on_road(row, 0.8f), jitter(rng, {0.78f, 0.80f, 0.12f}, 0.05f)});
  }
  const int n_animals = count_in(rng, spec.animals);
  for (int i = 0; i < n_animals; ++i) {
    const int row = rng.uniform_int(hz + static_cast<int>(4 * sy), h - 2);
    actors.push_back({Actor::animal, row, on_road(row, 1.0f), jitter(rng, {0.55f, 0.38f, 0.22f}, 0.05f)});
  }
  std::stable_sort(actors.begin(), actors.end(),
                   [](const PendingActor& a, const PendingActor& b) { return a.base_row < b.base_row; });

  for (const auto& a : actors) {
    const float s = road.depth_scale(a.base_row, h);
    const int xc = static_cast<int>(std::lround(a.x));
    switch (a.kind) {
      case Actor::vehicle: {
        const int vw = static_cast<int>(std::lround(14.0f * s * sx)) + 2;
        const int vh = static_cast<int>(std::lround(8.0f * s * sy)) + 2;
        const int top = a.base_row - vh, left = xc - vw / 2;
        canvas.rect(top, left, a.base_row, left + vw, a.color, kVehicle);
        const Rgb glass = {0.15f, 0.18f, 0.22f};
        canvas.rect(top + 1, left + 1, top + 1 + vh / 3, left + vw - 1, glass, kVehicle);
        break;
      }
      case Actor::pedestrian: {
        const int ph = static_cast<int>(std::lround(10.0f * s * sy)) + 3;
        const int pw = s > 0.8f ? 3 : 2;
        canvas.rect(a.base_row - ph, xc, a.base_row, xc + pw, a.color, kPedestrian);
        const Rgb skin = {0.85f, 0.65f, 0.50f};
        canvas.rect(a.base_row - ph, xc, a.base_row - ph + 1, xc + pw, skin, kPedestrian);
        break;
      }
      case Actor::rickshaw: {
        const int rw = static_cast<int>(std::lround(8.0f * s * sx)) + 2;
        const int rh = static_cast<int>(std::lround(8.0f * s * sy)) + 2;
        const int top = a.base_row - rh, left = xc - rw / 2;
        canvas.rect(top, left, a.base_row, left + rw, a.color, kRickshaw);
        canvas.rect(top, left, top + std::max(1, rh / 4), left + rw, {0.05f, 0.05f, 0.05f}, kRickshaw);
        break;
      }
      case Actor::animal: {
        const float ry = (2.0f + 1.5f * s) * sy, rx = (3.0f + 2.5f * s) * sx;
        canvas.ellipse(static_cast<float>(a.base_row) - ry, a.x, ry, rx, a.color, kAnimal);
        break;
      }
    }
  }
  Scene scene = std::move(canvas).finish();
  for (int pass = 0; pass < spec.lens_blur_passes; ++pass) smooth121(scene.image);
  return scene;
}

Tensor apply_domain(const Tensor& image, const DomainTransform& tf, Rng& rng) {
  if (image.ndim() != 3 || image.dim(0) != 3) {
    throw DimensionError("apply_domain: expected [3,h,w], got " + shape_str(image.shape()));
  }
  const int h = image.dim(1), w = image.dim(2);
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  Tensor out = image.clone();
  if (tf.kind == DomainKind::day || tf.kind == DomainKind::unstructured) return out;
  float* p = out.ptr();

  if (tf.desaturation > 0.0f) {
    for (std::size_t i = 0; i < hw; ++i) {
      const float lum = 0.299f * p[i] + 0.587f * p[hw + i] + 0.114f * p[2 * hw + i];
      for (int c = 0; c < 3; ++c) p[c * hw + i] = lum + (1.0f - tf.desaturation) * (p[c * hw + i] - lum);
    }
  }
  if (tf.contrast != 1.0f) {
    const float pivot = mean_luminance(out);
    for (float& v : out.data()) v = pivot + tf.contrast * (v - pivot);
  }
  if (tf.luminance_scale != 1.0f || tf.tint != std::array<float, 3>{1.0f, 1.0f, 1.0f}) {
    for (int c = 0; c < 3; ++c) {
      const float k = tf.luminance_scale * tf.tint[c];
      for (std::size_t i = 0; i < hw; ++i) p[c * hw + i] *= k;
    }
  }
  if (tf.haze_alpha_far > 0.0f || tf.haze_alpha_near > 0.0f) {
    const int hz = static_cast<int>(tf.horizon_frac * static_cast<float>(h));
    for (int y = 0; y < h; ++y) {
      float alpha = tf.haze_alpha_far;
      if (y > hz) {
        const float t = static_cast<float>(y - hz) / static_cast<float>(std::max(1, h - 1 - hz));
        alpha = tf.haze_alpha_far + (tf.haze_alpha_near - tf.haze_alpha_far) * t;
      }
      for (int c = 0; c < 3; ++c) {
        float* row = p + c * hw + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) row[x] = (1.0f - alpha) * row[x] + alpha * tf.haze_gray;
      }
    }
  }
  if (tf.box_blur) {
    std::vector<float> src(out.data().begin(), out.data().end());
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          float acc = 0.0f;
          int cnt = 0;
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const int yy = y + dy, xx = x + dx;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
              acc += src[c * hw + static_cast<std::size_t>(yy) * w + xx];
              ++cnt;
            }
          }
          p[c * hw + static_cast<std::size_t>(y) * w + x] = acc / static_cast<float>(cnt);
        }
      }
    }
  }
  if (tf.streak_density > 0.0f) {
    // Each seeded pixel starts a short streak running down and to the left.
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!rng.bernoulli(tf.streak_density)) continue;
        const int len = rng.uniform_int(3, 6);
        for (int k = 0; k < len; ++k) {
          const int yy = y + k, xx = x - k / 2;
          if (yy >= h || xx < 0) break;
          for (int c = 0; c < 3; ++c) {
            float& v = p[c * hw + static_cast<std::size_t>(yy) * w + xx];
            v = (1.0f - tf.streak_alpha) * v + tf.streak_alpha * tf.streak_value;
          }
        }
      }
    }
  }
  if (tf.noise_sigma > 0.0f) {
    for (float& v : out.data()) v += rng.normal(0.0f, tf.noise_sigma);
  }
  for (float& v : out.data()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

DatasetShard generate_dataset(std::string_view domain, int n, std::uint64_t seed, std::string_view split,
                              int height, int width) {
  if (n <= 0) throw std::invalid_argument("generate_dataset: n must be positive, got " + std::to_string(n));
  const DomainKind kind = parse_domain(domain);
  const SceneSpec scene = SceneSpec::for_domain(kind, height, width);
  const DomainTransform tf = DomainTransform::defaults(kind);

  DatasetShard shard;
  shard.manifest = {std::string(domain), seed, std::string(split), height, width, scene.label_space()};
  shard.samples.reserve(static_cast<std::size_t>(n));
  const std::uint64_t stream = derive_seed(derive_seed(seed, hash_tag(domain)), hash_tag(split));
  for (int i = 0; i < n; ++i) {
    const std::uint64_t sample_seed = derive_seed(stream, static_cast<std::uint64_t>(i));
    Rng scene_rng(sample_seed);
    Rng photo_rng(derive_seed(sample_seed, 1));
    Scene s = generate_scene(scene_rng, scene);
    shard.samples.push_back({apply_domain(s.image, tf, photo_rng), std::move(s.mask), std::string(domain)});
  }
  return shard;
}

float mean_luminance(const Tensor& image) {
  const std::size_t hw = image.numel() / 3;
  const float* p = image.ptr();
  double acc = 0.0;
  for (std::size_t i = 0; i < hw; ++i) acc += 0.299 * p[i] + 0.587 * p[hw + i] + 0.114 * p[2 * hw + i];
  return static_cast<float>(acc / static_cast<double>(hw));
}

}  // namespace pss
