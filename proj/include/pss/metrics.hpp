#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pss/dataset.hpp"

namespace pss {

/// Per-class IoU; a class whose prediction and ground truth are both empty is
/// absent (std::nullopt) and excluded from the mean.
struct IoUReport {
  std::string domain_id;
  std::vector<std::optional<double>> per_class_iou;
  double miou = 0.0;  // in [0,1]
  std::uint64_t num_eval_pixels = 0;
};

/// Accumulates intersection/union counts over many mask pairs so that a
/// dataset-level mIoU can be formed (the standard benchmark convention).
class IoUAccumulator {
 public:
  explicit IoUAccumulator(const LabelSpace& label_space);

  void add(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);
  IoUReport report(std::string domain_id = {}) const;

 private:
  int num_classes_;
  int ignore_label_;
  std::vector<std::uint64_t> intersection_;
  std::vector<std::uint64_t> union_;
  std::uint64_t pixels_ = 0;
};

IoUReport iou_per_class(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                        const LabelSpace& label_space);

/// counts[true][predicted] over domain labels.
struct ConfusionMatrix {
  std::vector<std::string> domains;
  std::vector<std::vector<std::uint64_t>> counts;

  explicit ConfusionMatrix(std::vector<std::string> domain_names = {});
  void add(std::size_t truth, std::size_t predicted);
  std::uint64_t total() const;
  double accuracy() const;
  std::uint64_t row_sum(std::size_t truth) const;
};

}  // namespace pss
