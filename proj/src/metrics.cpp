#include "pss/metrics.hpp"

#include <stdexcept>

namespace pss {

IoUAccumulator::IoUAccumulator(const LabelSpace& label_space)
    : num_classes_(label_space.num_classes()),
      ignore_label_(label_space.ignore_label),
      intersection_(static_cast<std::size_t>(num_classes_), 0),
      union_(static_cast<std::size_t>(num_classes_), 0) {}

void IoUAccumulator::add(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  if (pred.size() != gt.size()) {
    throw DimensionError("iou: prediction has " + std::to_string(pred.size()) + " pixels, ground truth " +
                         std::to_string(gt.size()));
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int g = gt[i];
    if (g == ignore_label_) continue;
    const int p = pred[i];
    ++pixels_;
    if (p == g) {
      if (g < num_classes_) {
        ++intersection_[g];
        ++union_[g];
      }
      continue;
    }
    if (g < num_classes_) ++union_[g];
    if (p < num_classes_) ++union_[p];
  }
}

IoUReport IoUAccumulator::report(std::string domain_id) const {
  IoUReport r;
  r.domain_id = std::move(domain_id);
  r.num_eval_pixels = pixels_;
  r.per_class_iou.resize(static_cast<std::size_t>(num_classes_));
  double acc = 0.0;
  int defined = 0;
  for (int c = 0; c < num_classes_; ++c) {
    if (union_[c] == 0) continue;
    const double iou = static_cast<double>(intersection_[c]) / static_cast<double>(union_[c]);
    r.per_class_iou[c] = iou;
    acc += iou;
    ++defined;
  }
  r.miou = defined > 0 ? acc / defined : 0.0;
  return r;
}

IoUReport iou_per_class(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                        const LabelSpace& label_space) {
  IoUAccumulator acc(label_space);
  acc.add(pred, gt);
  return acc.report();
}

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> domain_names)
    : domains(std::move(domain_names)), counts(domains.size(), std::vector<std::uint64_t>(domains.size(), 0)) {}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
  if (truth >= counts.size() || predicted >= counts.size()) throw std::out_of_range("confusion matrix index");
  ++counts[truth][predicted];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (const auto& row : counts)
    for (auto v : row) t += v;
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t t = 0;
  for (auto v : counts.at(truth)) t += v;
  return t;
}

double ConfusionMatrix::accuracy() const {
  const std::uint64_t t = total();
  if (t == 0) return 0.0;
  std::uint64_t diag = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) diag += counts[i][i];
  return static_cast<double>(diag) / static_cast<double>(t);
}

}  // namespace pss
