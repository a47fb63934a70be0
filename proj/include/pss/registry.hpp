#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pss/autoencoder.hpp"
#include "pss/dataset.hpp"
#include "pss/segmenter.hpp"

namespace pss {

/// One learned domain: the autoencoder that recognises it and the segmenter
/// that handles it. Label spaces may differ between entries.
struct RegistryEntry {
  std::string domain_id;
  AutoencoderModel task_expert;
  SegmenterModel domain_expert;
  LabelSpace label_space;
};

/// Append-only, ordered by task arrival.
class ExpertRegistry {
 public:
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const RegistryEntry& at(std::size_t i) const { return entries_.at(i); }
  std::span<const RegistryEntry> entries() const { return entries_; }
  std::optional<std::size_t> index_of(std::string_view domain_id) const;

  /// Rejects duplicate domain ids and autoencoders whose input resolution
  /// differs from the existing entries.
  void append(RegistryEntry entry);

 private:
  std::vector<RegistryEntry> entries_;
};

struct RoutingDecision {
  std::size_t chosen_index = 0;
  std::vector<float> losses;  // one per entry, registry order
  std::string chosen_domain_id;

  float winning_loss() const { return losses.at(chosen_index); }
};

/// Index of the smallest loss; exact ties go to the lowest index.
std::size_t argmin_lowest_index(std::span<const float> losses);

/// Seeds used to build and train the experts for one domain. Baselines that
/// train "the same expert" derive their seeds here too.
struct ExpertSeeds {
  std::uint64_t ae_init;
  std::uint64_t ae_shuffle;
  std::uint64_t seg_init;
  std::uint64_t seg_shuffle;
};
ExpertSeeds expert_seeds(std::uint64_t seed, std::string_view domain_id);

struct TaskTrainingReport {
  TrainResult task_expert;
  TrainResult domain_expert;
};

/// Trains a fresh autoencoder on the shard images and a fresh segmenter on the
/// shard, then appends them. Existing entries are not touched.
TaskTrainingReport learn_task(ExpertRegistry& registry, const std::string& domain_id, const DatasetShard& data,
                              const AutoencoderSpec& ae_spec, const SegmenterSpec& seg_spec, std::uint64_t seed);

/// learn_task with the domain expert supplied by the caller; only the task
/// expert is trained. Used when the expert already exists (e.g. the
/// single-task baseline trained it with the same seeds).
TaskTrainingReport learn_task_with_expert(ExpertRegistry& registry, const std::string& domain_id,
                                          const DatasetShard& data, const AutoencoderSpec& ae_spec,
                                          SegmenterModel domain_expert, std::uint64_t seed);

/// Same segmenter learn_task would produce. The class count comes from the
/// shard's label space. for (domain_id, data, seed).
SegmenterModel train_domain_expert(const std::string& domain_id, const DatasetShard& data,
                                   const SegmenterSpec& seg_spec, std::uint64_t seed, TrainResult* report = nullptr);

/// Reconstruction loss of every task expert, then argmin. With parallel set,
/// experts are evaluated on separate threads; the result is identical.
RoutingDecision infer_domain(const ExpertRegistry& registry, const Tensor& image, bool parallel = false);

struct SegmentResult {
  std::vector<std::uint8_t> mask;
  RoutingDecision routing;
  std::string label_space;  // name of the chosen entry's label space
};

SegmentResult segment(const ExpertRegistry& registry, const Tensor& image, bool parallel = false);

/// FNV-1a over every parameter of both experts, in named order.
std::uint64_t entry_checksum(const RegistryEntry& entry);

}  // namespace pss
