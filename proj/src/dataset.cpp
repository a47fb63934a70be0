#include "pss/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <set>
#include <stdexcept>

namespace pss {

void LabelSpace::validate() const {
  if (class_names.empty()) throw std::invalid_argument("label space '" + name + "' has no classes");
  if (class_names.size() > 255) throw std::invalid_argument("label space '" + name + "' exceeds 255 classes");
  std::set<std::string> seen(class_names.begin(), class_names.end());
  if (seen.size() != class_names.size()) {
    throw std::invalid_argument("label space '" + name + "' has duplicate class names");
  }
  if (ignore_label >= 0 && ignore_label < num_classes()) {
    throw std::invalid_argument("ignore label collides with a class id");
  }
}

LabelSpace base_label_space() {
  return {"base6", {"sky", "building", "road", "vehicle", "pedestrian", "vegetation"}, kIgnoreLabel};
}

LabelSpace extended_label_space() {
  LabelSpace ls = base_label_space();
  ls.name = "extended8";
  ls.class_names.push_back("rickshaw");
  ls.class_names.push_back("animal");
  return ls;
}

namespace {

template <typename Get>
Tensor stack_impl(std::size_t count, std::span<const std::size_t> indices, Get get) {
  if (indices.empty()) throw std::invalid_argument("stack_images: empty selection");
  const Tensor& first = get(indices[0]);
  if (first.ndim() != 3) throw DimensionError("stack_images: expected [c,h,w], got " + shape_str(first.shape()));
  const std::size_t per = first.numel();
  Tensor out({static_cast<int>(indices.size()), first.dim(0), first.dim(1), first.dim(2)});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= count) throw std::out_of_range("stack_images: index out of range");
    const Tensor& img = get(indices[k]);
    if (img.shape() != first.shape()) {
      throw DimensionError("stack_images: mixed shapes " + shape_str(first.shape()) + " and " +
                           shape_str(img.shape()));
    }
    std::copy(img.data().begin(), img.data().end(), out.ptr() + k * per);
  }
  return out;
}

}  // namespace

Tensor stack_images(std::span<const Sample> samples, std::span<const std::size_t> indices) {
  return stack_impl(samples.size(), indices, [&](std::size_t i) -> const Tensor& { return samples[i].image; });
}

Tensor stack_images(std::span<const Tensor> images, std::span<const std::size_t> indices) {
  return stack_impl(images.size(), indices, [&](std::size_t i) -> const Tensor& { return images[i]; });
}

Tensor as_batch(const Tensor& image) {
  if (image.ndim() == 4 && image.dim(0) == 1) return image;
  if (image.ndim() != 3) throw DimensionError("expected image [c,h,w], got " + shape_str(image.shape()));
  return Tensor({1, image.dim(0), image.dim(1), image.dim(2)},
                std::vector<float>(image.data().begin(), image.data().end()));
}

DatasetShard concat_shards(std::span<const DatasetShard> shards) {
  if (shards.empty()) throw std::invalid_argument("concat_shards: nothing to concatenate");
  DatasetShard out;
  out.manifest = shards[0].manifest;
  out.manifest.domain.clear();
  for (const auto& s : shards) {
    if (s.manifest.height != out.manifest.height || s.manifest.width != out.manifest.width) {
      throw DimensionError("concat_shards: resolution mismatch");
    }
    if (!out.manifest.domain.empty()) out.manifest.domain += '+';
    out.manifest.domain += s.manifest.domain;
    out.samples.insert(out.samples.end(), s.samples.begin(), s.samples.end());
  }
  return out;
}

namespace {

void fnv(std::uint64_t& h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

std::uint64_t sample_checksum(const Sample& sample) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  fnv(h, sample.image.ptr(), sample.image.numel() * sizeof(float));
  fnv(h, sample.mask.data(), sample.mask.size());
  return h;
}

std::uint64_t shard_checksum(const DatasetShard& shard) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& s : shard.samples) {
    fnv(h, s.image.ptr(), s.image.numel() * sizeof(float));
    fnv(h, s.mask.data(), s.mask.size());
  }
  return h;
}

}  // namespace pss
