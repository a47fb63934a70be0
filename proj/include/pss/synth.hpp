#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pss/dataset.hpp"
#include "pss/rng.hpp"

namespace pss {

enum class DomainKind : std::uint8_t { day, night, fog, rain, overcast, dusk, unstructured };

std::string_view domain_name(DomainKind kind);
/// Throws std::invalid_argument for names outside the known set.
DomainKind parse_domain(std::string_view name);
std::vector<DomainKind> all_domains();

/// Photometric condition applied to a clean render. The mask is never touched.
struct DomainTransform {
  DomainKind kind = DomainKind::day;
  float luminance_scale = 1.0f;              // night 0.25, rain 0.8, dusk 0.5
  float noise_sigma = 0.0f;                  // night 0.05
  float haze_gray = 0.7f;                    // fog target value
  float haze_alpha_far = 0.0f;               // fog blend at and above the horizon
  float haze_alpha_near = 0.0f;              // fog blend at the bottom row
  float horizon_frac = 0.375f;               // nominal horizon row / height
  bool box_blur = false;                     // fog 3x3 blur
  float streak_density = 0.0f;               // rain: fraction of pixels seeding a streak
  float streak_value = 0.9f;
  float streak_alpha = 0.5f;
  float desaturation = 0.0f;                 // overcast 0.5
  float contrast = 1.0f;                     // overcast 0.7
  std::array<float, 3> tint{1.0f, 1.0f, 1.0f};  // dusk warm tint

  static DomainTransform defaults(DomainKind kind);
};

enum class SceneStyle : std::uint8_t { structured, unstructured };

struct SceneSpec {
  int height = 64;
  int width = 64;
  SceneStyle style = SceneStyle::structured;
  std::array<int, 2> buildings{0, 3};
  std::array<int, 2> trees{0, 2};
  std::array<int, 2> vehicles{0, 2};
  std::array<int, 2> pedestrians{0, 2};
  std::array<int, 2> rickshaws{0, 0};
  std::array<int, 2> animals{0, 0};
  int lens_blur_passes = 3;  // separable [1,2,1]/4 passes over the clean render

  LabelSpace label_space() const;
  static SceneSpec for_domain(DomainKind kind, int height = 64, int width = 64);
};

/// Class ids shared by both label spaces (the extended space appends 6 and 7).
enum ClassId : std::uint8_t {
  kSky = 0,
  kBuilding = 1,
  kRoad = 2,
  kVehicle = 3,
  kPedestrian = 4,
  kVegetation = 5,
  kRickshaw = 6,
  kAnimal = 7,
};

struct Scene {
  Tensor image;  // [3,h,w] clean render
  std::vector<std::uint8_t> mask;
};

/// Layered painter's-order composition: sky band, grass verge, road
/// trapezoid, buildings on the horizon, tree blobs, then road users sorted far
/// to near.
Scene generate_scene(Rng& rng, const SceneSpec& spec = {});

/// Returns a new image in [0,1]; `image` is not modified.
Tensor apply_domain(const Tensor& image, const DomainTransform& transform, Rng& rng);

/// n samples of `domain`. Every sample draws from its own substream of
/// (seed, domain, split, index), so train and val never share a stream.
DatasetShard generate_dataset(std::string_view domain, int n, std::uint64_t seed, std::string_view split,
                              int height = 64, int width = 64);

/// Mean luminance (Rec. 601 weights) of a [3,h,w] image.
float mean_luminance(const Tensor& image);

}  // namespace pss
