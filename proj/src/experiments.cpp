#include "pss/experiments.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pss/rng.hpp"

namespace pss {

std::string_view method_label(Method method) {
  switch (method) {
    case Method::single_task: return "ST";
    case Method::fine_tune: return "FT";
    case Method::joint: return "JT";
    case Method::pss: return "PSS";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  std::string t(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "st" || t == "single_task") return Method::single_task;
  if (t == "ft" || t == "fine_tune") return Method::fine_tune;
  if (t == "jt" || t == "joint") return Method::joint;
  if (t == "pss") return Method::pss;
  throw std::invalid_argument("unknown method '" + std::string(text) + "'");
}

std::vector<Method> all_methods() { return {Method::single_task, Method::fine_tune, Method::joint, Method::pss}; }

std::string_view category_name(CellCategory category) {
  switch (category) {
    case CellCategory::reference: return "reference";
    case CellCategory::unchanged: return "unchanged";
    case CellCategory::gained: return "gained";
    case CellCategory::lost: return "lost";
    case CellCategory::not_learned: return "not_learned";
  }
  return "?";
}

bool ContinualReport::has(Method method) const {
  return std::any_of(rows.begin(), rows.end(), [method](const ContinualRow& r) { return r.method == method; });
}

const ContinualRow& ContinualReport::row(Method method) const {
  for (const auto& r : rows)
    if (r.method == method) return r;
  throw std::out_of_range("report has no " + std::string(method_label(method)) + " row");
}

double ContinualReport::miou(Method method, std::size_t domain) const { return 100.0 * row(method).cells.at(domain).miou; }

double ContinualReport::average(Method method) const {
  const auto& cells = row(method).cells;
  if (cells.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& c : cells) acc += c.miou;
  return 100.0 * acc / static_cast<double>(cells.size());
}

double ContinualReport::delta(Method method, std::size_t domain) const {
  return miou(method, domain) - miou(Method::single_task, domain);
}

CellCategory ContinualReport::category(Method method, std::size_t domain) const {
  if (method == Method::single_task) return CellCategory::reference;
  const double d = delta(method, domain);
  if (d > 0.0) return CellCategory::gained;
  if (d == 0.0) return CellCategory::unchanged;
  return domain + 1 == domains.size() ? CellCategory::not_learned : CellCategory::lost;
}

IoUReport evaluate_expert(const SegmenterModel& expert, const DatasetShard& shard) {
  IoUAccumulator acc(shard.manifest.label_space);
  for (const auto& s : shard.samples) acc.add(predict_mask(expert, s.image), s.mask);
  return acc.report(shard.manifest.domain);
}

IoUReport evaluate_routed(const ExpertRegistry& registry, const DatasetShard& shard, ConfusionMatrix* confusion,
                          bool parallel) {
  std::optional<std::size_t> truth;
  if (confusion) {
    truth = registry.index_of(shard.manifest.domain);
    if (!truth) throw std::invalid_argument("domain '" + shard.manifest.domain + "' is not in the registry");
  }
  IoUAccumulator acc(shard.manifest.label_space);
  for (const auto& s : shard.samples) {
    SegmentResult r = segment(registry, s.image, parallel);
    if (confusion) confusion->add(*truth, r.routing.chosen_index);
    acc.add(r.mask, s.mask);
  }
  return acc.report(shard.manifest.domain);
}

namespace {

std::vector<std::string> registry_domains(const ExpertRegistry& registry) {
  std::vector<std::string> names;
  for (const auto& e : registry.entries()) names.push_back(e.domain_id);
  return names;
}

void check_tasks(std::span<const DomainTask> tasks) {
  if (tasks.size() < 2) throw std::invalid_argument("a continual run needs at least 2 tasks");
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j)
      if (tasks[i].domain == tasks[j].domain) throw std::invalid_argument("duplicate domain '" + tasks[i].domain + "'");
    if (tasks[i].train.empty() || tasks[i].val.empty()) {
      throw std::invalid_argument("task '" + tasks[i].domain + "' has an empty train or val shard");
    }
  }
}

std::vector<std::string> task_domains(std::span<const DomainTask> tasks) {
  std::vector<std::string> names;
  for (const auto& t : tasks) names.push_back(t.domain);
  return names;
}

ContinualRow score_single_model(Method method, const SegmenterModel& model, std::span<const DomainTask> tasks) {
  ContinualRow row{method, {}};
  for (const auto& t : tasks) row.cells.push_back(evaluate_expert(model, t.val));
  return row;
}

// Continues training `model` on each task from `first` on, with that task's
// shuffle seed, mirroring the per-task expert recipe.
void fine_tune_from(SegmenterModel& model, std::span<const DomainTask> tasks, std::size_t first, std::uint64_t seed,
                    std::vector<TrainResult>* reports, std::vector<float>* first_task_trace) {
  for (std::size_t i = first; i < tasks.size(); ++i) {
    TrainResult r = train_segmenter(model, tasks[i].train, expert_seeds(seed, tasks[i].domain).seg_shuffle);
    if (reports) reports->push_back(std::move(r));
    if (first_task_trace) first_task_trace->push_back(100.0f * evaluate_expert(model, tasks[0].val).miou);
  }
}

SegmenterModel train_joint(std::span<const DomainTask> tasks, const SegmenterSpec& seg_spec, std::uint64_t seed,
                           TrainResult* report) {
  std::vector<DatasetShard> train;
  for (const auto& t : tasks) {
    if (t.train.manifest.label_space != tasks[0].train.manifest.label_space) {
      throw std::invalid_argument("joint training needs one label space across tasks");
    }
    train.push_back(t.train);
  }
  DatasetShard all = concat_shards(train);
  return train_domain_expert("joint", all, seg_spec, seed, report);
}

}  // namespace

ConfusionMatrix domain_confusion(const ExpertRegistry& registry, std::span<const DatasetShard> shards,
                                 bool parallel) {
  ConfusionMatrix m(registry_domains(registry));
  for (const auto& shard : shards) {
    const auto truth = registry.index_of(shard.manifest.domain);
    if (!truth) throw std::invalid_argument("domain '" + shard.manifest.domain + "' is not in the registry");
    for (const auto& s : shard.samples) m.add(*truth, infer_domain(registry, s.image, parallel).chosen_index);
  }
  return m;
}

ContinualReport run_baseline(Method method, std::span<const DomainTask> tasks, const BaselineConfig& config) {
  const Method methods[] = {method};
  return run_continual(tasks, methods, config).report;
}

ContinualOutcome run_continual(std::span<const DomainTask> tasks, std::span<const Method> methods,
                               const BaselineConfig& config) {
  check_tasks(tasks);
  auto wants = [&](Method m) { return std::find(methods.begin(), methods.end(), m) != methods.end(); };
  ContinualOutcome out;
  out.report.domains = task_domains(tasks);

  const bool need_st = wants(Method::single_task) || wants(Method::pss);
  if (need_st) {
    for (const auto& t : tasks) out.st_experts.push_back(train_domain_expert(t.domain, t.train, config.seg_spec, config.seed));
  }

  for (Method m : all_methods()) {
    if (!wants(m)) continue;
    switch (m) {
      case Method::single_task: {
        ContinualRow row{m, {}};
        for (std::size_t i = 0; i < tasks.size(); ++i) row.cells.push_back(evaluate_expert(out.st_experts[i], tasks[i].val));
        out.report.rows.push_back(std::move(row));
        break;
      }
      case Method::fine_tune: {
        SegmenterModel model;
        std::size_t first = 0;
        if (!out.st_experts.empty()) {
          model = out.st_experts[0].clone();
          out.ft_first_task_trace.push_back(100.0f * evaluate_expert(model, tasks[0].val).miou);
          first = 1;
        } else {
          SegmenterSpec spec = config.seg_spec;
          spec.num_classes = tasks[0].train.manifest.label_space.num_classes();
          model = build_segmenter(spec, tasks[0].train.manifest.label_space,
                                  expert_seeds(config.seed, tasks[0].domain).seg_init);
        }
        for (std::size_t i = first; i < tasks.size(); ++i) {
          if (tasks[i].train.manifest.label_space != model.label_space) {
            throw std::invalid_argument("fine-tuning needs one label space across tasks");
          }
        }
        fine_tune_from(model, tasks, first, config.seed, &out.ft_reports, &out.ft_first_task_trace);
        out.report.rows.push_back(score_single_model(m, model, tasks));
        out.ft_model = std::move(model);
        break;
      }
      case Method::joint: {
        TrainResult r;
        SegmenterModel model = train_joint(tasks, config.seg_spec, config.seed, &r);
        out.jt_report = std::move(r);
        out.report.rows.push_back(score_single_model(m, model, tasks));
        break;
      }
      case Method::pss: {
        for (std::size_t i = 0; i < tasks.size(); ++i) {
          out.task_reports.push_back(learn_task_with_expert(out.registry, tasks[i].domain, tasks[i].train,
                                                            config.ae_spec, out.st_experts[i], config.seed));
          std::vector<std::uint64_t> sums;
          std::vector<double> mious;
          for (std::size_t j = 0; j <= i; ++j) {
            sums.push_back(entry_checksum(out.registry.at(j)));
            mious.push_back(100.0 * evaluate_expert(out.registry.at(j).domain_expert, tasks[j].val).miou);
          }
          out.checksum_trace.push_back(std::move(sums));
          out.entry_miou_trace.push_back(std::move(mious));
        }
        out.confusion = ConfusionMatrix(registry_domains(out.registry));
        ContinualRow row{m, {}};
        for (const auto& t : tasks) {
          row.cells.push_back(evaluate_routed(out.registry, t.val, &out.confusion, config.parallel_routing));
        }
        out.report.rows.push_back(std::move(row));
        break;
      }
    }
  }
  return out;
}

std::size_t UnseenReport::samples() const { return std::accumulate(routing_counts.begin(), routing_counts.end(), std::size_t{0}); }

double UnseenReport::routed_fraction(std::size_t entry) const {
  const std::size_t n = samples();
  return n == 0 ? 0.0 : static_cast<double>(routing_counts.at(entry)) / static_cast<double>(n);
}

std::size_t UnseenReport::best_fixed() const {
  if (fixed.empty()) throw std::out_of_range("no fixed experts");
  std::size_t best = 0;
  for (std::size_t i = 1; i < fixed.size(); ++i)
    if (fixed[i].miou > fixed[best].miou) best = i;
  return best;
}

std::size_t UnseenReport::worst_fixed() const {
  if (fixed.empty()) throw std::out_of_range("no fixed experts");
  std::size_t worst = 0;
  for (std::size_t i = 1; i < fixed.size(); ++i)
    if (fixed[i].miou < fixed[worst].miou) worst = i;
  return worst;
}

UnseenReport unseen_domain_eval(const ExpertRegistry& registry, const DatasetShard& shard, bool parallel) {
  UnseenReport r;
  r.domain = shard.manifest.domain;
  r.expert_domains = registry_domains(registry);
  r.routing_counts.assign(registry.size(), 0);
  IoUAccumulator routed(shard.manifest.label_space);
  std::vector<IoUAccumulator> fixed(registry.size(), IoUAccumulator(shard.manifest.label_space));
  for (const auto& s : shard.samples) {
    const RoutingDecision d = infer_domain(registry, s.image, parallel);
    ++r.routing_counts[d.chosen_index];
    for (std::size_t i = 0; i < registry.size(); ++i) {
      auto mask = predict_mask(registry.at(i).domain_expert, s.image);
      if (i == d.chosen_index) routed.add(mask, s.mask);
      fixed[i].add(mask, s.mask);
    }
  }
  r.routed = routed.report(r.domain);
  for (std::size_t i = 0; i < registry.size(); ++i) r.fixed.push_back(fixed[i].report(r.domain));
  return r;
}

const OverheadPoint& OverheadReport::at_k(int k) const {
  for (const auto& p : points)
    if (p.k == k) return p;
  throw std::out_of_range("no overhead point for k=" + std::to_string(k));
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line needs >= 2 paired points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_line: x has no spread");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return f;
}

namespace {

TimingStats summarize(std::vector<double> ms) {
  TimingStats t;
  t.samples = static_cast<int>(ms.size());
  if (ms.empty()) return t;
  t.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  double var = 0.0;
  for (double v : ms) var += (v - t.mean_ms) * (v - t.mean_ms);
  t.stddev_ms = ms.size() > 1 ? std::sqrt(var / static_cast<double>(ms.size() - 1)) : 0.0;
  std::sort(ms.begin(), ms.end());
  const std::size_t mid = ms.size() / 2;
  t.median_ms = ms.size() % 2 ? ms[mid] : 0.5 * (ms[mid - 1] + ms[mid]);
  return t;
}

}  // namespace

OverheadReport bench_overhead(const ExpertRegistry& registry, std::span<const Tensor> images,
                              const BenchOptions& options) {
  if (registry.size() < 2) throw std::invalid_argument("bench_overhead needs at least 2 registry entries");
  if (images.empty()) throw std::invalid_argument("bench_overhead needs at least one image");
  if (options.samples < 1) throw std::invalid_argument("bench_overhead needs at least one timed sample");
  std::vector<ExpertRegistry> prefixes(registry.size());
  for (std::size_t k = 1; k <= registry.size(); ++k)
    for (std::size_t i = 0; i < k; ++i) prefixes[k - 1].append(registry.at(i));
  const SegmenterModel& seg = registry.at(0).domain_expert;

  // Slot k-1 routes with k experts; the last slot is the direct segmenter
  // pass. Slots are timed round-robin so slow drift in machine speed hits
  // every slot alike instead of skewing the later ones.
  const std::size_t slots = prefixes.size() + 1;
  auto call = [&](std::size_t slot, const Tensor& img) {
    if (slot < prefixes.size()) {
      (void)infer_domain(prefixes[slot], img, options.parallel);
    } else {
      (void)predict_mask(seg, img);
    }
  };
  for (int w = 0; w < options.warmup; ++w)
    for (std::size_t slot = 0; slot < slots; ++slot)
      for (const auto& img : images) call(slot, img);
  std::vector<std::vector<double>> ms(slots);
  for (int i = 0; i < options.samples; ++i) {
    const Tensor& img = images[static_cast<std::size_t>(i) % images.size()];
    for (std::size_t slot = 0; slot < slots; ++slot) {
      const auto t0 = std::chrono::steady_clock::now();
      call(slot, img);
      const auto t1 = std::chrono::steady_clock::now();
      ms[slot].push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  }

  OverheadReport r;
  std::vector<double> ks, medians;
  for (std::size_t k = 1; k <= prefixes.size(); ++k) {
    OverheadPoint p;
    p.k = static_cast<int>(k);
    p.routing = summarize(std::move(ms[k - 1]));
    ks.push_back(static_cast<double>(k));
    medians.push_back(p.routing.median_ms);
    r.points.push_back(p);
  }
  r.direct = summarize(std::move(ms.back()));
  const LinearFit fit = fit_line(ks, medians);
  r.slope_ms = fit.slope;
  r.intercept_ms = fit.intercept;
  r.r_squared = fit.r_squared;
  return r;
}

ExpertRegistry make_bench_registry(int k, const AutoencoderSpec& ae_spec, const SegmenterSpec& seg_spec,
                                   std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("make_bench_registry needs k >= 1");
  ExpertRegistry registry;
  LabelSpace ls = base_label_space();
  SegmenterSpec spec = seg_spec;
  spec.num_classes = ls.num_classes();
  for (int i = 0; i < k; ++i) {
    const std::string name = "bench" + std::to_string(i);
    const ExpertSeeds s = expert_seeds(seed, name);
    RegistryEntry e;
    e.domain_id = name;
    e.label_space = ls;
    e.task_expert = build_autoencoder(ae_spec, s.ae_init);
    e.task_expert.domain_id = name;
    e.domain_expert = build_segmenter(spec, ls, s.seg_init);
    registry.append(std::move(e));
  }
  return registry;
}

HybridOutcome hybrid_eval(const ExpertRegistry& registry, std::span<const DatasetShard> val, bool parallel) {
  if (val.size() != registry.size()) throw std::invalid_argument("hybrid_eval: one validation shard per entry expected");
  HybridOutcome out;
  out.confusion = ConfusionMatrix(registry_domains(registry));
  ContinualRow st{Method::single_task, {}};
  ContinualRow pss{Method::pss, {}};
  for (std::size_t i = 0; i < registry.size(); ++i) {
    if (val[i].manifest.domain != registry.at(i).domain_id) {
      throw std::invalid_argument("hybrid_eval: shard " + std::to_string(i) + " is '" + val[i].manifest.domain +
                                  "', entry is '" + registry.at(i).domain_id + "'");
    }
    out.report.domains.push_back(registry.at(i).domain_id);
    st.cells.push_back(evaluate_expert(registry.at(i).domain_expert, val[i]));
    pss.cells.push_back(evaluate_routed(registry, val[i], &out.confusion, parallel));
  }
  out.report.rows.push_back(std::move(st));
  out.report.rows.push_back(std::move(pss));
  return out;
}

}  // namespace pss
