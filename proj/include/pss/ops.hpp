#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pss/rng.hpp"
#include "pss/tensor.hpp"

namespace pss {

enum class LayerKind : std::uint8_t { conv3x3, tconv2x2 };

/// Weights and bias of one learnable layer.
///   conv3x3:  weight [c_out, c_in, 3, 3]
///   tconv2x2: weight [c_in, c_out, 2, 2]
///   bias:     [c_out]
struct LayerParams {
  LayerKind kind = LayerKind::conv3x3;
  Tensor weight;
  Tensor bias;

  int in_channels() const;
  int out_channels() const;
  std::size_t param_count() const { return weight.numel() + bias.numel(); }
  /// Independent copy with gradients enabled.
  LayerParams clone() const;

  /// Uniform in [-s, s] with s = sqrt(1 / fan_in). For a stride-2 2x2
  /// transposed convolution every output pixel sees exactly one tap per input
  /// channel, so its fan-in is c_in.
  static LayerParams conv3x3(int c_in, int c_out, Rng& rng);
  static LayerParams tconv2x2(int c_in, int c_out, Rng& rng);
};

/// 3x3 cross-correlation, stride 1, zero padding 1. [n,c_in,h,w] -> [n,c_out,h,w].
Tensor conv2d(const Tensor& input, const LayerParams& params);

struct PoolResult {
  Tensor output;
  std::vector<std::int32_t> argmax;  // flat input index per output element
};

/// 2x2 max pooling, stride 2. Ties resolve to the first element in row-major
/// window order.
PoolResult maxpool2x2_with_indices(const Tensor& input);
Tensor maxpool2x2(const Tensor& input);

/// 2x2 transposed convolution, stride 2, no padding. [n,c_in,h,w] -> [n,c_out,2h,2w].
Tensor transposed_conv2d(const Tensor& input, const LayerParams& params);

Tensor relu(const Tensor& input);

/// Logistic function; outputs are clamped into the open interval (0, 1) so
/// float saturation never yields exactly 0 or 1.
Tensor sigmoid(const Tensor& input);

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& input, float factor);
Tensor sum(const Tensor& input);

/// Mean of squared differences over all elements.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

/// Mean over non-ignored pixels of -log softmax(logits)[label].
/// logits [n,C,h,w]; labels has n*h*w entries.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::uint8_t> labels,
                             int ignore_label = 255);

/// Per-pixel argmax over the channel axis of [n,C,h,w]; ties go to the lower
/// class index.
std::vector<std::uint8_t> argmax_channels(const Tensor& logits);

}  // namespace pss
