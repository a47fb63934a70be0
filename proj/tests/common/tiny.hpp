#pragma once
// Small, fast configurations shared by the tests that train whole pipelines.

#include <string>
#include <vector>

#include "pss/experiments.hpp"
#include "pss/runner.hpp"

namespace tiny {

inline constexpr int kSize = 32;

inline pss::AutoencoderSpec ae_spec() {
  pss::AutoencoderSpec s;
  s.height = s.width = kSize;
  s.channels = {8, 8, 8, 8};
  s.max_epochs = 4;
  return s;
}

inline pss::SegmenterSpec seg_spec() {
  pss::SegmenterSpec s;
  s.height = s.width = kSize;
  s.base_width = 8;
  s.epochs = 2;
  return s;
}

inline pss::BaselineConfig baseline(std::uint64_t seed = 3) { return {ae_spec(), seg_spec(), seed, false}; }

inline std::vector<pss::DomainTask> tasks(std::vector<std::string> domains, int train = 24, int val = 12,
                                          std::uint64_t seed = 5) {
  return pss::make_tasks(domains, train, val, seed, kSize, kSize);
}

}  // namespace tiny
