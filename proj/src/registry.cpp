#include "pss/registry.hpp"

#include <stdexcept>
#include <thread>

#include "pss/rng.hpp"

namespace pss {

std::optional<std::size_t> ExpertRegistry::index_of(std::string_view domain_id) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].domain_id == domain_id) return i;
  return std::nullopt;
}

void ExpertRegistry::append(RegistryEntry entry) {
  if (index_of(entry.domain_id)) throw std::invalid_argument("domain '" + entry.domain_id + "' already registered");
  if (!entries_.empty()) {
    const auto& ref = entries_.front().task_expert.spec;
    const auto& spec = entry.task_expert.spec;
    if (ref.height != spec.height || ref.width != spec.width || ref.in_channels != spec.in_channels) {
      throw std::invalid_argument("task expert resolution differs from the registry");
    }
  }
  entries_.push_back(std::move(entry));
}

std::size_t argmin_lowest_index(std::span<const float> losses) {
  if (losses.empty()) throw std::invalid_argument("argmin over an empty loss list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < losses.size(); ++i)
    if (losses[i] < losses[best]) best = i;
  return best;
}

ExpertSeeds expert_seeds(std::uint64_t seed, std::string_view domain_id) {
  const std::uint64_t base = derive_seed(seed, hash_tag(domain_id));
  return {derive_seed(base, 1), derive_seed(base, 2), derive_seed(base, 3), derive_seed(base, 4)};
}

SegmenterModel train_domain_expert(const std::string& domain_id, const DatasetShard& data,
                                   const SegmenterSpec& seg_spec, std::uint64_t seed, TrainResult* report) {
  const ExpertSeeds seeds = expert_seeds(seed, domain_id);
  SegmenterSpec spec = seg_spec;
  spec.num_classes = data.manifest.label_space.num_classes();
  SegmenterModel seg = build_segmenter(spec, data.manifest.label_space, seeds.seg_init);
  TrainResult r = train_segmenter(seg, data, seeds.seg_shuffle);
  if (report) *report = std::move(r);
  return seg;
}

namespace {

void check_new_task(const ExpertRegistry& registry, const std::string& domain_id, const DatasetShard& data,
                    const AutoencoderSpec& ae_spec) {
  if (data.empty()) throw std::invalid_argument("learn_task: empty data for domain '" + domain_id + "'");
  if (registry.index_of(domain_id)) throw std::invalid_argument("domain '" + domain_id + "' already registered");
  if (!registry.empty()) {
    const auto& ref = registry.at(0).task_expert.spec;
    if (ref.height != ae_spec.height || ref.width != ae_spec.width) {
      throw std::invalid_argument("learn_task: task expert resolution differs from the registry");
    }
  }
}

}  // namespace

TaskTrainingReport learn_task(ExpertRegistry& registry, const std::string& domain_id, const DatasetShard& data,
                              const AutoencoderSpec& ae_spec, const SegmenterSpec& seg_spec, std::uint64_t seed) {
  check_new_task(registry, domain_id, data, ae_spec);
  TrainResult seg_report;
  SegmenterModel expert = train_domain_expert(domain_id, data, seg_spec, seed, &seg_report);
  TaskTrainingReport report = learn_task_with_expert(registry, domain_id, data, ae_spec, std::move(expert), seed);
  report.domain_expert = std::move(seg_report);
  return report;
}

TaskTrainingReport learn_task_with_expert(ExpertRegistry& registry, const std::string& domain_id,
                                          const DatasetShard& data, const AutoencoderSpec& ae_spec,
                                          SegmenterModel domain_expert, std::uint64_t seed) {
  check_new_task(registry, domain_id, data, ae_spec);
  if (domain_expert.label_space != data.manifest.label_space) {
    throw std::invalid_argument("learn_task: expert label space '" + domain_expert.label_space.name +
                                "' differs from the data's '" + data.manifest.label_space.name + "'");
  }
  const ExpertSeeds seeds = expert_seeds(seed, domain_id);
  TaskTrainingReport report;

  RegistryEntry entry;
  entry.domain_id = domain_id;
  entry.label_space = data.manifest.label_space;
  entry.task_expert = build_autoencoder(ae_spec, seeds.ae_init);
  entry.task_expert.domain_id = domain_id;
  std::vector<Tensor> images;
  images.reserve(data.size());
  for (const auto& s : data.samples) images.push_back(s.image);
  report.task_expert = train_autoencoder(entry.task_expert, images, seeds.ae_shuffle);
  entry.domain_expert = std::move(domain_expert);
  registry.append(std::move(entry));
  return report;
}

RoutingDecision infer_domain(const ExpertRegistry& registry, const Tensor& image, bool parallel) {
  if (registry.empty()) throw std::invalid_argument("infer_domain: registry is empty");
  RoutingDecision d;
  d.losses.assign(registry.size(), 0.0f);
  if (parallel && registry.size() > 1) {
    std::vector<std::jthread> workers;
    workers.reserve(registry.size());
    for (std::size_t i = 0; i < registry.size(); ++i) {
      workers.emplace_back([&, i] { d.losses[i] = reconstruction_loss(registry.at(i).task_expert, image); });
    }
  } else {
    for (std::size_t i = 0; i < registry.size(); ++i) d.losses[i] = reconstruction_loss(registry.at(i).task_expert, image);
  }
  d.chosen_index = argmin_lowest_index(d.losses);
  d.chosen_domain_id = registry.at(d.chosen_index).domain_id;
  return d;
}

SegmentResult segment(const ExpertRegistry& registry, const Tensor& image, bool parallel) {
  SegmentResult r;
  r.routing = infer_domain(registry, image, parallel);
  const RegistryEntry& chosen = registry.at(r.routing.chosen_index);
  r.mask = predict_mask(chosen.domain_expert, image);
  r.label_space = chosen.label_space.name;
  return r;
}

std::uint64_t entry_checksum(const RegistryEntry& entry) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const std::string& name, const Tensor& t) {
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    const auto* p = reinterpret_cast<const unsigned char*>(t.ptr());
    for (std::size_t i = 0; i < t.numel() * sizeof(float); ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, t] : entry.task_expert.named_parameters()) feed("ae." + name, t);
  for (const auto& [name, t] : entry.domain_expert.named_parameters()) feed("seg." + name, t);
  return h;
}

}  // namespace pss
