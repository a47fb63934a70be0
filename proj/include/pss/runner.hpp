#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <vector>

#include "pss/experiments.hpp"
#include "pss/io.hpp"

namespace pss {

/// Generates the train/val shards of every curriculum domain.
std::vector<DomainTask> make_tasks(std::span<const std::string> domains, int train_size, int val_size,
                                   std::uint64_t data_seed, int height = 64, int width = 64);

struct RunArtifacts {
  ContinualOutcome outcome;
  std::vector<UnseenReport> unseen;
  std::optional<HybridOutcome> hybrid;
  std::optional<OverheadReport> overhead;
  std::vector<std::filesystem::path> files;  // every file written, in order
};

/// Checks the run-time invariants of a finished curriculum: prior entries
/// unchanged by later tasks, confusion rows summing to the validation sizes,
/// and PSS == ST wherever routing was perfect. Throws InvariantError.
void check_outcome(const ContinualOutcome& outcome, std::span<const DomainTask> tasks);

/// Runs a whole experiment and writes the registry and reports under `out`:
///   registry/                 PSS state (manifest.json + PSSM1 files)
///   continual.csv / .json     method x domain table
///   confusion.csv / .json     PSS routing over the validation shards
///   unseen.csv / .json        when config.unseen is set
///   hybrid.csv / .json        when config.hybrid is set
///   overhead.csv / .json      when config.overhead is set
/// `log` receives progress lines; pass nullptr for silence.
RunArtifacts run_experiment(const ExperimentConfig& config, const std::filesystem::path& out, std::ostream* log);

}  // namespace pss
