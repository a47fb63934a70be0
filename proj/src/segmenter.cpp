#include "pss/segmenter.hpp"

#include <stdexcept>

#include "pss/adam.hpp"

namespace pss {

void SegmenterSpec::validate() const {
  if (height <= 0 || width <= 0 || height % 4 != 0 || width % 4 != 0) {
    throw std::invalid_argument("segmenter resolution must be positive and divisible by 4, got " +
                                std::to_string(height) + "x" + std::to_string(width));
  }
  if (base_width <= 0) throw std::invalid_argument("segmenter base_width must be positive");
  if (num_classes <= 0 || num_classes > 255) throw std::invalid_argument("segmenter num_classes must be in [1,255]");
  if (epochs <= 0) throw std::invalid_argument("segmenter epochs must be positive");
  if (batch_size <= 0) throw std::invalid_argument("segmenter batch_size must be positive");
  if (!(lr > 0.0f)) throw std::invalid_argument("segmenter lr must be positive");
}

SegmenterModel build_segmenter(const SegmenterSpec& spec, const LabelSpace& label_space, std::uint64_t seed) {
  spec.validate();
  label_space.validate();
  if (spec.num_classes != label_space.num_classes()) {
    throw std::invalid_argument("segmenter num_classes " + std::to_string(spec.num_classes) +
                                " does not match label space '" + label_space.name + "' (" +
                                std::to_string(label_space.num_classes()) + ")");
  }
  SegmenterModel m;
  m.spec = spec;
  m.label_space = label_space;
  Rng rng(seed);
  const int w = spec.base_width;
  m.stem0 = LayerParams::conv3x3(3, w, rng);
  m.stem1 = LayerParams::conv3x3(w, w, rng);
  m.down = LayerParams::conv3x3(w, 2 * w, rng);
  m.ctx0 = LayerParams::conv3x3(2 * w, 2 * w, rng);
  m.ctx1 = LayerParams::conv3x3(2 * w, 2 * w, rng);
  m.up0 = LayerParams::tconv2x2(2 * w, 2 * w, rng);
  m.up1 = LayerParams::tconv2x2(2 * w, w, rng);
  m.head = LayerParams::conv3x3(w, spec.num_classes, rng);
  return m;
}

Tensor SegmenterModel::forward(const Tensor& x) const {
  if (x.ndim() != 4 || x.dim(1) != 3 || x.dim(2) != spec.height || x.dim(3) != spec.width) {
    throw DimensionError("segmenter expects [n,3," + std::to_string(spec.height) + "," +
                         std::to_string(spec.width) + "], got " + shape_str(x.shape()));
  }
  Tensor skip_a = relu(conv2d(relu(conv2d(x, stem0)), stem1));
  Tensor skip_b = relu(conv2d(maxpool2x2(skip_a), down));
  Tensor h = relu(conv2d(maxpool2x2(skip_b), ctx0));
  h = relu(conv2d(h, ctx1));
  h = relu(add(transposed_conv2d(h, up0), skip_b));
  h = relu(add(transposed_conv2d(h, up1), skip_a));
  return conv2d(h, head);
}

std::vector<std::pair<std::string, Tensor>> SegmenterModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  const std::pair<const char*, const LayerParams*> layers[] = {
      {"stem0", &stem0}, {"stem1", &stem1}, {"down", &down}, {"ctx0", &ctx0},
      {"ctx1", &ctx1},   {"up0", &up0},     {"up1", &up1},   {"head", &head}};
  for (const auto& [name, layer] : layers) {
    out.emplace_back(std::string(name) + ".weight", layer->weight);
    out.emplace_back(std::string(name) + ".bias", layer->bias);
  }
  return out;
}

std::vector<Tensor> SegmenterModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::size_t SegmenterModel::param_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t.numel();
  return n;
}

SegmenterModel SegmenterModel::clone() const {
  SegmenterModel m;
  m.spec = spec;
  m.label_space = label_space;
  m.stem0 = stem0.clone();
  m.stem1 = stem1.clone();
  m.down = down.clone();
  m.ctx0 = ctx0.clone();
  m.ctx1 = ctx1.clone();
  m.up0 = up0.clone();
  m.up1 = up1.clone();
  m.head = head.clone();
  return m;
}

TrainResult train_segmenter(SegmenterModel& model, const DatasetShard& data, std::uint64_t seed) {
  if (data.empty()) throw std::invalid_argument("train_segmenter: empty dataset");
  const int classes = model.spec.num_classes;
  const int ignore = model.label_space.ignore_label;
  const std::size_t hw = static_cast<std::size_t>(model.spec.height) * model.spec.width;
  for (const auto& s : data.samples) {
    if (s.mask.size() != hw) throw DimensionError("train_segmenter: mask size does not match resolution");
    for (std::uint8_t v : s.mask) {
      if (v >= classes && v != ignore) {
        throw std::invalid_argument("train_segmenter: mask value " + std::to_string(v) +
                                    " outside label space '" + model.label_space.name + "'");
      }
    }
  }

  std::vector<Tensor> params = model.parameters();
  AdamState adam(params, AdamConfig{.lr = model.spec.lr});
  TrainResult result;
  const std::size_t n = data.size();
  const auto bs = static_cast<std::size_t>(model.spec.batch_size);
  std::vector<std::uint8_t> labels;
  for (int epoch = 0; epoch < model.spec.epochs; ++epoch) {
    const auto order = epoch_order(n, seed, epoch);
    double weighted = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      Tensor batch = stack_images(std::span<const Sample>(data.samples), idx);
      labels.clear();
      for (std::size_t i : idx) labels.insert(labels.end(), data.samples[i].mask.begin(), data.samples[i].mask.end());
      zero_grads(params);
      Tensor loss = softmax_cross_entropy(model.forward(batch), labels, ignore);
      weighted += static_cast<double>(loss.item()) * static_cast<double>(idx.size());
      backward(loss);
      adam_step(params, adam);
    }
    const auto mean = static_cast<float>(weighted / static_cast<double>(n));
    result.loss_history.push_back(mean);
    result.final_loss = mean;
    const auto& h = result.loss_history;
    if (h.size() >= 5 && h.back() > h[h.size() - 5]) {
      result.warnings.push_back("loss rose over epochs " + std::to_string(h.size() - 4) + "-" +
                                std::to_string(h.size()));
    }
  }
  zero_grads(params);
  return result;
}

std::vector<std::uint8_t> predict_mask(const SegmenterModel& model, const Tensor& image) {
  NoGradGuard guard;
  return argmax_channels(model.forward(as_batch(image)));
}

}  // namespace pss
