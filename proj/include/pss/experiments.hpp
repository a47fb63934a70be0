#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pss/autoencoder.hpp"
#include "pss/dataset.hpp"
#include "pss/metrics.hpp"
#include "pss/registry.hpp"
#include "pss/segmenter.hpp"

namespace pss {

/// One step of a curriculum: the domain, its training shard and its
/// held-out validation shard.
struct DomainTask {
  std::string domain;
  DatasetShard train;
  DatasetShard val;
};

enum class Method : std::uint8_t { single_task, fine_tune, joint, pss };

/// "ST", "FT", "JT", "PSS"
std::string_view method_label(Method method);
/// Accepts the short labels (any case) and the long names.
Method parse_method(std::string_view text);
std::vector<Method> all_methods();

enum class CellCategory : std::uint8_t { reference, unchanged, gained, lost, not_learned };
std::string_view category_name(CellCategory category);

struct ContinualRow {
  Method method = Method::single_task;
  std::vector<IoUReport> cells;  // one per domain, curriculum order
};

/// Method x domain mIoU table. Values returned by the accessors are in
/// percentage points; the per-cell IoUReports keep fractions.
struct ContinualReport {
  std::vector<std::string> domains;
  std::vector<ContinualRow> rows;

  bool has(Method method) const;
  const ContinualRow& row(Method method) const;
  double miou(Method method, std::size_t domain) const;
  /// Unweighted mean over domains.
  double average(Method method) const;
  /// Signed difference to the ST cell; requires an ST row.
  double delta(Method method, std::size_t domain) const;
  /// gained (>0), lost (<0 on an earlier task), not_learned (<0 on the last
  /// task), unchanged (==0); the ST row is the reference.
  CellCategory category(Method method, std::size_t domain) const;
};

/// Scores one expert on every sample of a shard (oracle task id).
IoUReport evaluate_expert(const SegmenterModel& expert, const DatasetShard& shard);

/// Scores PSS routing + the routed expert on a shard. When `confusion` is
/// given, the routing outcome of every sample is counted into it.
IoUReport evaluate_routed(const ExpertRegistry& registry, const DatasetShard& shard,
                          ConfusionMatrix* confusion = nullptr, bool parallel = false);

/// Routes every sample of every shard. Rows and columns follow registry
/// order. Throws std::invalid_argument if a shard's domain is not registered.
ConfusionMatrix domain_confusion(const ExpertRegistry& registry, std::span<const DatasetShard> shards,
                                 bool parallel = false);

struct BaselineConfig {
  AutoencoderSpec ae_spec;
  SegmenterSpec seg_spec;
  std::uint64_t seed = 0;
  bool parallel_routing = false;
};

/// Trains and scores a single method over the curriculum (>= 2 tasks).
/// ST: one expert per domain with oracle task ids. FT: one segmenter trained
/// sequentially, scored after the last task. JT: one segmenter on the
/// concatenated training data. PSS: learn_task per domain, routed at eval.
ContinualReport run_baseline(Method method, std::span<const DomainTask> tasks, const BaselineConfig& config);

/// Everything a full curriculum run produces.
struct ContinualOutcome {
  ContinualReport report;
  ExpertRegistry registry;       // the PSS state after the last task
  ConfusionMatrix confusion;     // PSS routing over the validation shards
  std::vector<SegmenterModel> st_experts;
  std::optional<SegmenterModel> ft_model;
  std::vector<float> ft_first_task_trace;  // FT mIoU (points) on task 0 after each stage
  std::vector<TaskTrainingReport> task_reports;
  std::vector<TrainResult> ft_reports;
  std::optional<TrainResult> jt_report;
  // After learn_task k: checksum and oracle mIoU (points) of entries 0..k.
  std::vector<std::vector<std::uint64_t>> checksum_trace;
  std::vector<std::vector<double>> entry_miou_trace;
};

/// Runs the requested methods over one curriculum with shared seeds. Work is
/// shared where the methods provably coincide: PSS reuses the ST experts
/// (identical seeds and data) and FT starts from the first ST expert (its
/// first stage is the same training run).
ContinualOutcome run_continual(std::span<const DomainTask> tasks, std::span<const Method> methods,
                               const BaselineConfig& config);

/// Routing + segmentation quality on a domain that may be absent from the
/// registry.
struct UnseenReport {
  std::string domain;
  std::vector<std::string> expert_domains;  // registry order
  std::vector<std::size_t> routing_counts;  // samples routed to each entry
  IoUReport routed;
  std::vector<IoUReport> fixed;             // every sample sent to entry i

  std::size_t samples() const;
  double routed_fraction(std::size_t entry) const;
  std::size_t best_fixed() const;
  std::size_t worst_fixed() const;
};

UnseenReport unseen_domain_eval(const ExpertRegistry& registry, const DatasetShard& shard, bool parallel = false);

struct TimingStats {
  double median_ms = 0.0;
  double mean_ms = 0.0;
  double stddev_ms = 0.0;
  int samples = 0;
};

struct OverheadPoint {
  int k = 0;
  TimingStats routing;
};

struct OverheadReport {
  std::vector<OverheadPoint> points;  // k = 1..K
  TimingStats direct;                 // one segmenter forward (predict_mask)
  double slope_ms = 0.0;              // least squares of median vs k
  double intercept_ms = 0.0;
  double r_squared = 0.0;

  const OverheadPoint& at_k(int k) const;
};

struct BenchOptions {
  int samples = 100;  // timed calls per point
  int warmup = 1;     // untimed passes over the image set per point
  bool parallel = false;
};

/// Times infer_domain over registry prefixes of size 1..registry.size() and
/// predict_mask of the first entry's domain expert, interleaved call by call.
/// Requires >= 2 entries.
OverheadReport bench_overhead(const ExpertRegistry& registry, std::span<const Tensor> images,
                              const BenchOptions& options = {});

/// K untrained entries sharing one segmenter architecture. Timing does not
/// depend on weight values, so benchmarks need not train.
ExpertRegistry make_bench_registry(int k, const AutoencoderSpec& ae_spec, const SegmenterSpec& seg_spec,
                                   std::uint64_t seed);

/// Least squares y = a + b x; returns {a, b, r2}.
struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r_squared = 0.0;
};
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

struct HybridOutcome {
  ContinualReport report;  // ST and PSS rows, each domain in its own label space
  ConfusionMatrix confusion;
};

/// Scores a registry whose entries may use different label spaces. val[i]
/// must be the validation shard of registry entry i.
HybridOutcome hybrid_eval(const ExpertRegistry& registry, std::span<const DatasetShard> val, bool parallel = false);

}  // namespace pss
