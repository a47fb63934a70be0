#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pss/ops.hpp"
#include "pss/training.hpp"

namespace pss {

/// Task expert configuration. Encoder widths run input -> channels[0..3]; the
/// decoder mirrors them back to in_channels.
struct AutoencoderSpec {
  int height = 64;
  int width = 64;
  int in_channels = 3;
  std::array<int, 4> channels{16, 32, 32, 32};
  float loss_threshold = 0.002f;
  int max_epochs = 200;
  int batch_size = 8;
  float lr = 1e-3f;

  void validate() const;
  /// Closed-form parameter count for this architecture.
  std::size_t expected_param_count() const;
  bool operator==(const AutoencoderSpec&) const = default;
};

/// Four conv3x3 -> ReLU -> maxpool stages, then four stride-2 transposed
/// convolutions (ReLU after the first three, Sigmoid after the last).
class AutoencoderModel {
 public:
  AutoencoderSpec spec;
  std::array<LayerParams, 4> encoder;
  std::array<LayerParams, 4> decoder;
  std::string domain_id;

  /// [n,c,h,w] -> reconstruction of the same shape, values in (0,1).
  Tensor forward(const Tensor& x) const;

  std::vector<Tensor> parameters() const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::size_t param_count() const;

  /// Deep copy; the plain copy constructor shares parameter storage.
  AutoencoderModel clone() const;
};

AutoencoderModel build_autoencoder(const AutoencoderSpec& spec, std::uint64_t seed);

/// Mini-batch Adam on the MSE reconstruction objective. Stops after the first
/// epoch whose mean loss is below spec.loss_threshold, or at spec.max_epochs
/// with converged = false. Images are [c,h,w] tensors used as-is.
TrainResult train_autoencoder(AutoencoderModel& model, std::span<const Tensor> images, std::uint64_t seed);

/// MSE between image and its reconstruction; records no graph.
float reconstruction_loss(const AutoencoderModel& model, const Tensor& image);

inline std::size_t param_count(const AutoencoderModel& model) { return model.param_count(); }

}  // namespace pss
