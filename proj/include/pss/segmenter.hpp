#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pss/dataset.hpp"
#include "pss/ops.hpp"
#include "pss/training.hpp"

namespace pss {

struct SegmenterSpec {
  int height = 64;
  int width = 64;
  int base_width = 32;
  int num_classes = 6;
  int epochs = 30;
  int batch_size = 8;
  float lr = 1e-3f;

  void validate() const;
  bool operator==(const SegmenterSpec&) const = default;
};

/// Compact encoder-decoder domain expert.
///
///   stem0  conv 3->w        full res
///   stem1  conv w->w        full res     (skip A)
///   pool
///   down   conv w->2w       1/2          (skip B)
///   pool
///   ctx0   conv 2w->2w      1/4
///   ctx1   conv 2w->2w      1/4
///   up0    tconv 2w->2w     1/2   + skip B
///   up1    tconv 2w->w      full  + skip A
///   head   conv w->C        full  (logits)
///
/// Every layer except the head is followed by ReLU (after the skip sum for
/// the upsampling layers).
class SegmenterModel {
 public:
  SegmenterSpec spec;
  LabelSpace label_space;
  LayerParams stem0, stem1, down, ctx0, ctx1, up0, up1, head;

  /// [n,3,h,w] -> logits [n,C,h,w].
  Tensor forward(const Tensor& x) const;

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  std::size_t param_count() const;
  SegmenterModel clone() const;
};

SegmenterModel build_segmenter(const SegmenterSpec& spec, const LabelSpace& label_space, std::uint64_t seed);

/// Cross-entropy with Adam for spec.epochs. Rejects masks with values outside
/// [0,C) that are not the ignore label. A warning (never an error) is recorded
/// when the loss rises across a 5-epoch window.
TrainResult train_segmenter(SegmenterModel& model, const DatasetShard& data, std::uint64_t seed);

/// Per-pixel argmax of the logits; ties go to the lower class id.
std::vector<std::uint8_t> predict_mask(const SegmenterModel& model, const Tensor& image);

}  // namespace pss
