#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pss/tensor.hpp"

namespace pss {

inline constexpr int kIgnoreLabel = 255;

/// Ordered class names; the position of a name is its label id.
struct LabelSpace {
  std::string name;
  std::vector<std::string> class_names;
  int ignore_label = kIgnoreLabel;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  void validate() const;
  bool operator==(const LabelSpace&) const = default;
};

/// sky, building, road, vehicle, pedestrian, vegetation
LabelSpace base_label_space();
/// base classes followed by rickshaw, animal
LabelSpace extended_label_space();

struct Sample {
  Tensor image;  // [3,h,w], values in [0,1]
  std::vector<std::uint8_t> mask;  // h*w class ids
  std::string domain_id;
};

struct ShardManifest {
  std::string domain;
  std::uint64_t seed = 0;
  std::string split;
  int height = 64;
  int width = 64;
  LabelSpace label_space;
  bool operator==(const ShardManifest&) const = default;
};

struct DatasetShard {
  ShardManifest manifest;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

/// Copies the selected images into one [n,3,h,w] batch.
Tensor stack_images(std::span<const Sample> samples, std::span<const std::size_t> indices);
Tensor stack_images(std::span<const Tensor> images, std::span<const std::size_t> indices);

/// Adds a leading batch axis to a single [c,h,w] image; [1,c,h,w] passes through.
Tensor as_batch(const Tensor& image);

/// Concatenates shards (used for joint training); the manifest of the result
/// names every source domain joined by '+'.
DatasetShard concat_shards(std::span<const DatasetShard> shards);

/// FNV-1a 64 over image bytes then mask bytes of every sample.
std::uint64_t shard_checksum(const DatasetShard& shard);
std::uint64_t sample_checksum(const Sample& sample);

}  // namespace pss
