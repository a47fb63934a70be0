#include "pss/runner.hpp"

#include <sstream>

#include "pss/synth.hpp"

namespace pss {

using nlohmann::json;

std::vector<DomainTask> make_tasks(std::span<const std::string> domains, int train_size, int val_size,
                                   std::uint64_t data_seed, int height, int width) {
  std::vector<DomainTask> tasks;
  for (const auto& d : domains) {
    tasks.push_back({d, generate_dataset(d, train_size, data_seed, "train", height, width),
                     generate_dataset(d, val_size, data_seed, "val", height, width)});
  }
  return tasks;
}

void check_outcome(const ContinualOutcome& o, std::span<const DomainTask> tasks) {
  for (std::size_t k = 0; k < o.checksum_trace.size(); ++k) {
    for (std::size_t j = 0; j < k; ++j) {
      if (o.checksum_trace[k][j] != o.checksum_trace[j][j]) {
        throw InvariantError("entry " + std::to_string(j) + " changed while learning task " + std::to_string(k));
      }
      if (o.entry_miou_trace[k][j] != o.entry_miou_trace[j][j]) {
        throw InvariantError("mIoU of entry " + std::to_string(j) + " changed while learning task " +
                             std::to_string(k));
      }
    }
  }
  if (!o.report.has(Method::pss)) return;
  if (o.confusion.counts.size() != tasks.size()) throw InvariantError("confusion matrix size differs from the curriculum");
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (o.confusion.row_sum(i) != tasks[i].val.size()) {
      throw InvariantError("confusion row '" + tasks[i].domain + "' does not sum to the validation size");
    }
    const bool perfect = o.confusion.counts[i][i] == o.confusion.row_sum(i);
    if (perfect && o.report.has(Method::single_task) &&
        o.report.miou(Method::pss, i) != o.report.miou(Method::single_task, i)) {
      throw InvariantError("PSS differs from ST on '" + tasks[i].domain + "' despite perfect routing");
    }
  }
}

namespace {

std::vector<LabelSpace> task_label_spaces(std::span<const DomainTask> tasks) {
  std::vector<LabelSpace> ls;
  for (const auto& t : tasks) ls.push_back(t.val.manifest.label_space);
  return ls;
}

std::string unseen_csv(const std::vector<UnseenReport>& reports) {
  std::ostringstream os;
  os << "domain,expert,routed_samples,fixed_miou\n";
  char buf[32];
  for (const auto& r : reports) {
    for (std::size_t i = 0; i < r.expert_domains.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.4f", 100.0 * r.fixed[i].miou);
      os << r.domain << ',' << r.expert_domains[i] << ',' << r.routing_counts[i] << ',' << buf << '\n';
    }
    std::snprintf(buf, sizeof buf, "%.4f", 100.0 * r.routed.miou);
    os << r.domain << ",routed," << r.samples() << ',' << buf << '\n';
  }
  return os.str();
}

}  // namespace

RunArtifacts run_experiment(const ExperimentConfig& config, const std::filesystem::path& out, std::ostream* log) {
  config.validate();
  auto say = [log](const std::string& s) {
    if (log) *log << s << std::endl;
  };
  std::filesystem::create_directories(out);
  RunArtifacts art;
  auto emit = [&art, &out](const std::string& name, const std::string& text) {
    write_text(out / name, text);
    art.files.push_back(out / name);
  };

  const int h = config.ae_spec.height, w = config.ae_spec.width;
  say("generating " + std::to_string(config.curriculum.size()) + " domains");
  const auto tasks = make_tasks(config.curriculum, config.train_size, config.val_size, config.data_seed, h, w);

  BaselineConfig bc{config.ae_spec, config.seg_spec, config.train_seed, config.parallel_routing};
  say("training curriculum");
  art.outcome = run_continual(tasks, config.methods, bc);
  const ContinualOutcome& o = art.outcome;
  check_outcome(o, tasks);

  if (o.report.has(Method::pss)) {
    save_registry(out / "registry", o.registry);
    art.files.push_back(out / "registry" / "manifest.json");
  }

  json cj = continual_json(o.report, task_label_spaces(tasks));
  cj["config"] = config;
  json training = json::object();
  for (std::size_t i = 0; i < o.task_reports.size(); ++i) {
    training["task_expert"][tasks[i].domain] = train_json(o.task_reports[i].task_expert);
  }
  for (std::size_t i = 0; i < o.ft_reports.size(); ++i) training["fine_tune"].push_back(train_json(o.ft_reports[i]));
  if (o.jt_report) training["joint"] = train_json(*o.jt_report);
  if (!o.ft_first_task_trace.empty()) training["fine_tune_first_task_miou"] = o.ft_first_task_trace;
  cj["training"] = training;
  emit("continual.csv", continual_csv(o.report));
  emit("continual.json", cj.dump(2) + "\n");
  if (o.report.has(Method::pss)) {
    emit("confusion.csv", confusion_csv(o.confusion));
    emit("confusion.json", confusion_json(o.confusion).dump(2) + "\n");
    say("routing accuracy " + std::to_string(o.confusion.accuracy()));
  }

  if (!config.unseen.empty()) {
    if (!o.report.has(Method::pss)) throw FormatError("unseen evaluation needs the PSS method");
    json uj = json::array();
    for (const auto& d : config.unseen) {
      say("unseen domain " + d);
      const DatasetShard shard = generate_dataset(d, config.val_size, config.data_seed, "val", h, w);
      art.unseen.push_back(unseen_domain_eval(o.registry, shard, config.parallel_routing));
      uj.push_back(unseen_json(art.unseen.back(), shard.manifest.label_space));
    }
    emit("unseen.csv", unseen_csv(art.unseen));
    emit("unseen.json", uj.dump(2) + "\n");
  }

  if (!config.hybrid.empty()) {
    say("hybrid curriculum");
    const auto htasks = make_tasks(config.hybrid, config.train_size, config.val_size, config.data_seed, h, w);
    ExpertRegistry hreg;
    for (const auto& t : htasks) {
      // Same domain, data and seeds as the main curriculum: that entry is the
      // one learn_task would produce.
      const auto idx = o.registry.index_of(t.domain);
      if (idx) {
        hreg.append(o.registry.at(*idx));
      } else {
        learn_task(hreg, t.domain, t.train, config.ae_spec, config.seg_spec, config.train_seed);
      }
    }
    std::vector<DatasetShard> vals;
    for (const auto& t : htasks) vals.push_back(t.val);
    art.hybrid = hybrid_eval(hreg, vals, config.parallel_routing);
    json hj = continual_json(art.hybrid->report, task_label_spaces(htasks));
    hj["confusion"] = confusion_json(art.hybrid->confusion);
    emit("hybrid.csv", continual_csv(art.hybrid->report));
    emit("hybrid.json", hj.dump(2) + "\n");
  }

  if (config.overhead) {
    say("overhead benchmark");
    const auto& oc = *config.overhead;
    ExpertRegistry breg = make_bench_registry(oc.max_k, config.ae_spec, config.seg_spec, config.train_seed);
    const DatasetShard imgs = generate_dataset("day", oc.images, config.data_seed, "bench", h, w);
    std::vector<Tensor> images;
    for (const auto& s : imgs.samples) images.push_back(s.image);
    BenchOptions bo;
    bo.samples = oc.samples;
    bo.parallel = config.parallel_routing;
    art.overhead = bench_overhead(breg, images, bo);
    emit("overhead.csv", overhead_csv(*art.overhead));
    emit("overhead.json", overhead_json(*art.overhead).dump(2) + "\n");
  }
  return art;
}

}  // namespace pss
