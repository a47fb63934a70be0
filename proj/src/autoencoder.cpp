#include "pss/autoencoder.hpp"

#include <numeric>
#include <stdexcept>

#include "pss/adam.hpp"
#include "pss/dataset.hpp"

namespace pss {

void AutoencoderSpec::validate() const {
  if (height <= 0 || width <= 0 || height % 16 != 0 || width % 16 != 0) {
    throw std::invalid_argument("autoencoder resolution must be positive and divisible by 16, got " +
                                std::to_string(height) + "x" + std::to_string(width));
  }
  if (in_channels <= 0) throw std::invalid_argument("autoencoder in_channels must be positive");
  for (int c : channels)
    if (c <= 0) throw std::invalid_argument("autoencoder channel widths must be positive");
  if (batch_size <= 0) throw std::invalid_argument("autoencoder batch_size must be positive");
  if (max_epochs <= 0) throw std::invalid_argument("autoencoder max_epochs must be positive");
  if (!(lr > 0.0f)) throw std::invalid_argument("autoencoder lr must be positive");
}

std::size_t AutoencoderSpec::expected_param_count() const {
  std::size_t total = 0;
  int c_in = in_channels;
  for (int c : channels) {
    total += 9u * c_in * c + c;
    c_in = c;
  }
  for (int i = 3; i >= 0; --i) {
    const int c_out = i > 0 ? channels[i - 1] : in_channels;
    total += 4u * channels[i] * c_out + c_out;
  }
  return total;
}

AutoencoderModel build_autoencoder(const AutoencoderSpec& spec, std::uint64_t seed) {
  spec.validate();
  AutoencoderModel m;
  m.spec = spec;
  Rng rng(seed);
  int c_in = spec.in_channels;
  for (int i = 0; i < 4; ++i) {
    m.encoder[i] = LayerParams::conv3x3(c_in, spec.channels[i], rng);
    c_in = spec.channels[i];
  }
  for (int i = 0; i < 4; ++i) {
    const int from = spec.channels[3 - i];
    const int to = i < 3 ? spec.channels[2 - i] : spec.in_channels;
    m.decoder[i] = LayerParams::tconv2x2(from, to, rng);
  }
  return m;
}

Tensor AutoencoderModel::forward(const Tensor& x) const {
  if (x.ndim() != 4 || x.dim(1) != spec.in_channels || x.dim(2) != spec.height || x.dim(3) != spec.width) {
    throw DimensionError("autoencoder expects [n," + std::to_string(spec.in_channels) + "," +
                         std::to_string(spec.height) + "," + std::to_string(spec.width) + "], got " +
                         shape_str(x.shape()));
  }
  Tensor h = x;
  for (const auto& layer : encoder) h = maxpool2x2(relu(conv2d(h, layer)));
  for (int i = 0; i < 4; ++i) {
    h = transposed_conv2d(h, decoder[i]);
    h = i < 3 ? relu(h) : sigmoid(h);
  }
  return h;
}

std::vector<std::pair<std::string, Tensor>> AutoencoderModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (int i = 0; i < 4; ++i) {
    out.emplace_back("encoder." + std::to_string(i) + ".weight", encoder[i].weight);
    out.emplace_back("encoder." + std::to_string(i) + ".bias", encoder[i].bias);
  }
  for (int i = 0; i < 4; ++i) {
    out.emplace_back("decoder." + std::to_string(i) + ".weight", decoder[i].weight);
    out.emplace_back("decoder." + std::to_string(i) + ".bias", decoder[i].bias);
  }
  return out;
}

std::vector<Tensor> AutoencoderModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::size_t AutoencoderModel::param_count() const {
  std::size_t n = 0;
  for (const auto& l : encoder) n += l.param_count();
  for (const auto& l : decoder) n += l.param_count();
  return n;
}

AutoencoderModel AutoencoderModel::clone() const {
  AutoencoderModel m;
  m.spec = spec;
  m.domain_id = domain_id;
  for (int i = 0; i < 4; ++i) {
    m.encoder[i] = encoder[i].clone();
    m.decoder[i] = decoder[i].clone();
  }
  return m;
}

TrainResult train_autoencoder(AutoencoderModel& model, std::span<const Tensor> images, std::uint64_t seed) {
  if (images.empty()) throw std::invalid_argument("train_autoencoder: empty dataset");
  const auto& spec = model.spec;
  std::vector<Tensor> params = model.parameters();
  AdamState adam(params, AdamConfig{.lr = spec.lr});
  TrainResult result;
  result.converged = false;

  const std::size_t n = images.size();
  const auto bs = static_cast<std::size_t>(spec.batch_size);
  for (int epoch = 0; epoch < spec.max_epochs; ++epoch) {
    const auto order = epoch_order(n, seed, epoch);
    double weighted = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      Tensor batch = stack_images(images, idx);
      zero_grads(params);
      Tensor loss = mse_loss(model.forward(batch), batch);
      weighted += static_cast<double>(loss.item()) * static_cast<double>(idx.size());
      backward(loss);
      adam_step(params, adam);
    }
    const auto mean = static_cast<float>(weighted / static_cast<double>(n));
    result.loss_history.push_back(mean);
    result.final_loss = mean;
    if (mean < spec.loss_threshold) {
      result.converged = true;
      break;
    }
  }
  zero_grads(params);
  if (!result.converged) {
    result.warnings.push_back("threshold not reached: final loss " + std::to_string(result.final_loss) +
                              " >= " + std::to_string(spec.loss_threshold) + " after " +
                              std::to_string(spec.max_epochs) + " epochs");
  }
  return result;
}

float reconstruction_loss(const AutoencoderModel& model, const Tensor& image) {
  NoGradGuard guard;
  Tensor batch = as_batch(image);
  return mse_loss(model.forward(batch), batch).item();
}

}  // namespace pss
