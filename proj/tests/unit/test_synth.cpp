#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include "pss/synth.hpp"

using namespace pss;

namespace {

// Pearson correlation over all values.
double correlation(const Tensor& a, const Tensor& b) {
  const auto n = static_cast<double>(a.numel());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    ma += a.data()[i];
    mb += b.data()[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double da = a.data()[i] - ma, db = b.data()[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  return sab / std::sqrt(saa * sbb);
}

bool same_bytes(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

}  // namespace

TEST_SUITE("synth") {
  TEST_CASE("every scene has sky and road and a full mask") {
    Rng rng(11);
    for (int i = 0; i < 200; ++i) {
      Scene s = generate_scene(rng);
      CHECK(s.image.shape() == Shape{3, 64, 64});
      REQUIRE(s.mask.size() == 64u * 64u);
      CHECK(std::count(s.mask.begin(), s.mask.end(), kSky) > 0);
      CHECK(std::count(s.mask.begin(), s.mask.end(), kRoad) > 0);
      for (auto v : s.mask) CHECK(v < 6);
      for (float v : s.image.data()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
      }
    }
  }

  TEST_CASE("scene generation is deterministic") {
    Rng a(5), b(5);
    for (int i = 0; i < 5; ++i) {
      Scene x = generate_scene(a), y = generate_scene(b);
      CHECK(same_bytes(x.image, y.image));
      CHECK(x.mask == y.mask);
    }
  }

  TEST_CASE("each base class appears in at least half of 1000 scenes") {
    Rng rng(3);
    std::array<int, 6> present{};
    for (int i = 0; i < 1000; ++i) {
      Scene s = generate_scene(rng);
      std::array<bool, 6> seen{};
      for (auto v : s.mask) seen[v] = true;
      for (int c = 0; c < 6; ++c) present[c] += seen[c];
    }
    for (int c = 0; c < 6; ++c) {
      MESSAGE("class " << c << " present in " << present[c] << " scenes");
      CHECK(present[c] >= 500);
    }
  }

  TEST_CASE("unstructured scenes use the extended label space") {
    const auto spec = SceneSpec::for_domain(DomainKind::unstructured);
    CHECK(spec.label_space() == extended_label_space());
    Rng rng(8);
    std::array<int, 8> present{};
    for (int i = 0; i < 200; ++i) {
      Scene s = generate_scene(rng, spec);
      std::array<bool, 8> seen{};
      for (auto v : s.mask) {
        REQUIRE(v < 8);
        seen[v] = true;
      }
      for (int c = 0; c < 8; ++c) present[c] += seen[c];
    }
    CHECK(present[kRickshaw] > 0);
    CHECK(present[kAnimal] > 0);
    CHECK(SceneSpec::for_domain(DomainKind::day).label_space() == base_label_space());
  }

  TEST_CASE("day transform is the identity and the input is untouched") {
    Rng rng(1);
    Scene s = generate_scene(rng);
    const Tensor before = s.image.clone();
    Rng photo(2);
    CHECK(same_bytes(apply_domain(s.image, DomainTransform::defaults(DomainKind::day), photo), s.image));
    for (auto kind : all_domains()) {
      Rng r(3);
      Tensor out = apply_domain(s.image, DomainTransform::defaults(kind), r);
      CHECK(out.shape() == s.image.shape());
      for (float v : out.data()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
      }
    }
    CHECK(same_bytes(before, s.image));
  }

  TEST_CASE("night is much darker than day on the same scene") {
    Rng rng(21);
    for (int i = 0; i < 50; ++i) {
      Scene s = generate_scene(rng);
      Rng photo(static_cast<std::uint64_t>(i));
      Tensor night = apply_domain(s.image, DomainTransform::defaults(DomainKind::night), photo);
      CHECK(mean_luminance(night) < 0.3f * mean_luminance(s.image));
    }
  }

  TEST_CASE("transforms are deterministic given the stream") {
    Rng rng(4);
    Scene s = generate_scene(rng);
    for (auto kind : {DomainKind::night, DomainKind::rain}) {
      Rng a(9), b(9), c(10);
      const auto tf = DomainTransform::defaults(kind);
      Tensor x = apply_domain(s.image, tf, a), y = apply_domain(s.image, tf, b), z = apply_domain(s.image, tf, c);
      CHECK(same_bytes(x, y));
      CHECK_FALSE(same_bytes(x, z));
    }
  }

  TEST_CASE("a night image correlates with its own day scene more than with another") {
    Rng rng(30);
    int wins = 0;
    for (int i = 0; i < 50; ++i) {
      Scene a = generate_scene(rng), b = generate_scene(rng);
      Rng photo(static_cast<std::uint64_t>(i));
      Tensor na = apply_domain(a.image, DomainTransform::defaults(DomainKind::night), photo);
      wins += correlation(na, a.image) > correlation(na, b.image);
    }
    CHECK(wins >= 48);
  }

  TEST_CASE("domain names round trip and unknown names throw") {
    for (auto kind : all_domains()) CHECK(parse_domain(domain_name(kind)) == kind);
    CHECK(all_domains().size() == 7);
    CHECK_THROWS_AS(parse_domain("snow"), std::invalid_argument);
    CHECK_THROWS_AS(parse_domain(""), std::invalid_argument);
  }

  TEST_CASE("dataset generation") {
    auto a = generate_dataset("fog", 6, 42, "train");
    auto b = generate_dataset("fog", 6, 42, "train");
    CHECK(a.size() == 6);
    CHECK(a.manifest.domain == "fog");
    CHECK(a.manifest.split == "train");
    CHECK(a.manifest.seed == 42);
    CHECK(shard_checksum(a) == shard_checksum(b));
    for (const auto& s : a.samples) CHECK(s.domain_id == "fog");
    CHECK(shard_checksum(generate_dataset("fog", 6, 43, "train")) != shard_checksum(a));
    // A prefix of a larger shard is the smaller shard.
    auto big = generate_dataset("fog", 9, 42, "train");
    for (int i = 0; i < 6; ++i) CHECK(sample_checksum(big.samples[i]) == sample_checksum(a.samples[i]));
    CHECK_THROWS_AS(generate_dataset("fog", 0, 1, "train"), std::invalid_argument);
    CHECK_THROWS_AS(generate_dataset("fog", -3, 1, "train"), std::invalid_argument);
    CHECK_THROWS_AS(generate_dataset("hail", 3, 1, "train"), std::invalid_argument);
    auto small = generate_dataset("day", 2, 1, "val", 32, 48);
    CHECK(small.samples[0].image.shape() == Shape{3, 32, 48});
    CHECK(small.samples[0].mask.size() == 32u * 48u);
  }

  TEST_CASE("train and val shards are disjoint") {
    auto train = generate_dataset("day", 1000, 7, "train");
    auto val = generate_dataset("day", 1000, 7, "val");
    std::set<std::uint64_t> seen;
    for (const auto& s : train.samples) seen.insert(sample_checksum(s));
    CHECK(seen.size() == 1000);
    int shared = 0;
    for (const auto& s : val.samples) shared += seen.count(sample_checksum(s)) > 0;
    CHECK(shared == 0);
  }
}
