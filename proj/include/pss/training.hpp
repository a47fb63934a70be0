#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pss {

struct TrainResult {
  std::vector<float> loss_history;  // per-epoch mean loss
  bool converged = true;            // false: threshold not reached within max_epochs
  float final_loss = 0.0f;
  std::vector<std::string> warnings;

  int epochs_run() const { return static_cast<int>(loss_history.size()); }
};

/// Deterministic Fisher-Yates permutation of [0, n) for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

}  // namespace pss
