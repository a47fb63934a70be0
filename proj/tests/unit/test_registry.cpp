#include <doctest.h>

#include "../common/tiny.hpp"
#include "pss/registry.hpp"
#include "pss/synth.hpp"

using namespace pss;

namespace {

RegistryEntry untrained_entry(const std::string& domain, std::uint64_t seed) {
  RegistryEntry e;
  e.domain_id = domain;
  e.label_space = base_label_space();
  e.task_expert = build_autoencoder(tiny::ae_spec(), seed);
  e.domain_expert = build_segmenter(tiny::seg_spec(), e.label_space, seed);
  return e;
}

}  // namespace

TEST_SUITE("registry") {
  TEST_CASE("argmin takes the lowest index on ties") {
    const std::vector<float> a{0.3f, 0.1f, 0.1f, 0.2f};
    CHECK(argmin_lowest_index(a) == 1);
    const std::vector<float> b{0.5f, 0.5f};
    CHECK(argmin_lowest_index(b) == 0);
    CHECK_THROWS_AS(argmin_lowest_index(std::vector<float>{}), std::invalid_argument);
  }

  TEST_CASE("an empty registry cannot route") {
    ExpertRegistry reg;
    CHECK(reg.empty());
    CHECK_THROWS_AS(infer_domain(reg, Tensor({3, 32, 32}, 0.5f)), std::invalid_argument);
  }

  TEST_CASE("a singleton routes to itself") {
    ExpertRegistry reg;
    reg.append(untrained_entry("day", 1));
    auto d = infer_domain(reg, Tensor({3, 32, 32}, 0.5f));
    CHECK(d.chosen_index == 0);
    CHECK(d.chosen_domain_id == "day");
    CHECK(d.losses.size() == 1);
    CHECK(d.winning_loss() == d.losses[0]);
  }

  TEST_CASE("identical task experts tie and the first one wins") {
    ExpertRegistry reg;
    auto a = untrained_entry("a", 4);
    auto b = untrained_entry("b", 5);
    b.task_expert = a.task_expert.clone();
    reg.append(std::move(a));
    reg.append(std::move(b));
    auto d = infer_domain(reg, Tensor({3, 32, 32}, 0.25f));
    CHECK(d.losses[0] == d.losses[1]);
    CHECK(d.chosen_index == 0);
  }

  TEST_CASE("append rejects duplicates and resolution changes") {
    ExpertRegistry reg;
    reg.append(untrained_entry("day", 1));
    CHECK_THROWS_AS(reg.append(untrained_entry("day", 2)), std::invalid_argument);
    auto big = untrained_entry("night", 2);
    big.task_expert = build_autoencoder({}, 2);
    CHECK_THROWS_AS(reg.append(std::move(big)), std::invalid_argument);
    CHECK(reg.size() == 1);
    CHECK(reg.index_of("day") == 0u);
    CHECK_FALSE(reg.index_of("night"));
  }

  TEST_CASE("expert seeds are distinct per domain and role") {
    auto a = expert_seeds(7, "day"), b = expert_seeds(7, "night"), c = expert_seeds(7, "day");
    CHECK(a.ae_init == c.ae_init);
    CHECK(a.seg_shuffle == c.seg_shuffle);
    CHECK(a.ae_init != b.ae_init);
    CHECK(a.ae_init != a.ae_shuffle);
    CHECK(a.seg_init != a.ae_init);
  }

  TEST_CASE("learn_task validation") {
    auto tasks = tiny::tasks({"day", "night"}, 8, 4);
    ExpertRegistry reg;
    DatasetShard empty;
    empty.manifest = tasks[0].train.manifest;
    CHECK_THROWS_AS(learn_task(reg, "day", empty, tiny::ae_spec(), tiny::seg_spec(), 1), std::invalid_argument);
    learn_task(reg, "day", tasks[0].train, tiny::ae_spec(), tiny::seg_spec(), 1);
    CHECK_THROWS_AS(learn_task(reg, "day", tasks[0].train, tiny::ae_spec(), tiny::seg_spec(), 1),
                    std::invalid_argument);
    AutoencoderSpec other = tiny::ae_spec();
    other.height = other.width = 64;
    CHECK_THROWS_AS(learn_task(reg, "night", tasks[1].train, other, tiny::seg_spec(), 1), std::invalid_argument);
    auto ext = generate_dataset("unstructured", 4, 1, "train", tiny::kSize, tiny::kSize);
    CHECK_THROWS_AS(learn_task_with_expert(reg, "unstructured", ext, tiny::ae_spec(), reg.at(0).domain_expert, 1),
                    std::invalid_argument);
    CHECK(reg.size() == 1);
  }

  TEST_CASE("learning new tasks leaves earlier entries bit-identical") {
    auto tasks = tiny::tasks({"day", "night", "fog"}, 12, 6);
    ExpertRegistry reg;
    std::vector<std::uint64_t> sums;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      const auto r = learn_task(reg, tasks[i].domain, tasks[i].train, tiny::ae_spec(), tiny::seg_spec(), 2);
      CHECK(reg.size() == i + 1);
      CHECK(r.task_expert.epochs_run() >= 1);
      CHECK(r.domain_expert.epochs_run() == tiny::seg_spec().epochs);
      for (std::size_t j = 0; j < sums.size(); ++j) CHECK(entry_checksum(reg.at(j)) == sums[j]);
      sums.push_back(entry_checksum(reg.at(i)));
    }
    CHECK(sums[0] != sums[1]);
    CHECK(reg.at(1).task_expert.domain_id == "night");

    SUBCASE("routing is a pure function of the image") {
      const auto& img = tasks[1].val.samples[0].image;
      auto a = infer_domain(reg, img), b = infer_domain(reg, img);
      CHECK(a.losses == b.losses);
      CHECK(a.chosen_index == b.chosen_index);
    }

    SUBCASE("parallel routing matches serial routing") {
      for (const auto& t : tasks)
        for (const auto& s : t.val.samples) {
          auto a = infer_domain(reg, s.image, false), b = infer_domain(reg, s.image, true);
          CHECK(a.losses == b.losses);
          CHECK(a.chosen_index == b.chosen_index);
        }
    }

    SUBCASE("segment uses the routed expert") {
      const auto& img = tasks[0].val.samples[1].image;
      auto r = segment(reg, img);
      CHECK(r.mask == predict_mask(reg.at(r.routing.chosen_index).domain_expert, img));
      CHECK(r.label_space == "base6");
    }
  }
}
