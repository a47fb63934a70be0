// pss: command-line front end.
//
//   pss gen <domain> <n> --out shard.pssd [--split train] [--seed S]
//   pss run --config cfg.json --out dir [--seed S]
//   pss infer <registry_dir> <image.pssd> --out dir [--index i]
//   pss bench --out dir [--registry dir] [--max-k 8] [--samples 100]
//   pss report <dir-or-json> [--out summary.md]
//
// Exit codes: 0 ok, 2 usage, 3 data/format, 4 invariant violation.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include "pss/io.hpp"
#include "pss/runner.hpp"
#include "pss/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitInvariant = 4;

struct Globals {
  std::uint64_t seed = 7;
  bool seed_set = false;
  std::string out;
  std::string config;
  bool quiet = false;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::ostream* log_stream(const Globals& g) { return g.quiet ? nullptr : &std::cerr; }

fs::path require_out(const Globals& g, const char* cmd) {
  if (g.out.empty()) throw UsageError(std::string(cmd) + " requires --out");
  return g.out;
}

json read_json(const fs::path& p) {
  const auto bytes = pss::read_file(p);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw pss::FormatError("'" + p.string() + "' is not JSON: " + e.what());
  }
}

// ---- gen -------------------------------------------------------------------

struct GenArgs {
  std::string domain;
  int n = 0;
  std::string split = "train";
  int height = 64;
  int width = 64;
};

int cmd_gen(const Globals& g, const GenArgs& a) {
  const fs::path out = require_out(g, "gen");
  try {
    (void)pss::parse_domain(a.domain);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (a.n <= 0) throw UsageError("gen: n must be positive");
  const pss::DatasetShard shard = pss::generate_dataset(a.domain, a.n, g.seed, a.split, a.height, a.width);
  const auto bytes = pss::encode_dataset(shard);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  pss::write_file(out, bytes);
  std::cout << "samples " << shard.size() << "\n"
            << "shard_checksum " << pss::hex64(pss::shard_checksum(shard)) << "\n"
            << "file_checksum " << pss::hex64(pss::fnv1a64(bytes)) << "\n";
  return 0;
}

// ---- run -------------------------------------------------------------------

int cmd_run(const Globals& g) {
  if (g.config.empty()) throw UsageError("run requires --config");
  const fs::path out = require_out(g, "run");
  pss::ExperimentConfig cfg = pss::load_config(g.config);
  if (g.seed_set) {
    cfg.data_seed = g.seed;
    cfg.train_seed = g.seed;
  }
  const pss::RunArtifacts art = pss::run_experiment(cfg, out, log_stream(g));
  const auto& r = art.outcome.report;
  if (!g.quiet) {
    std::cout << std::fixed << std::setprecision(2);
    std::cout << "method";
    for (const auto& d : r.domains) std::cout << '\t' << d;
    std::cout << "\tavg\n";
    for (const auto& row : r.rows) {
      std::cout << pss::method_label(row.method);
      for (std::size_t d = 0; d < r.domains.size(); ++d) std::cout << '\t' << r.miou(row.method, d);
      std::cout << '\t' << r.average(row.method) << '\n';
    }
    if (r.has(pss::Method::pss)) std::cout << "routing_accuracy " << art.outcome.confusion.accuracy() << '\n';
    for (const auto& f : art.files) std::cout << "wrote " << f.string() << '\n';
  }
  return 0;
}

// ---- infer -----------------------------------------------------------------

struct InferArgs {
  std::string registry;
  std::string image;
  int index = 0;
};

int cmd_infer(const Globals& g, const InferArgs& a) {
  const fs::path out = require_out(g, "infer");
  const pss::ExpertRegistry registry = pss::load_registry(a.registry);
  if (registry.empty()) throw pss::FormatError("registry '" + a.registry + "' has no entries");
  const pss::DatasetShard shard = pss::load_dataset(a.image);
  if (a.index < 0 || static_cast<std::size_t>(a.index) >= shard.size()) {
    throw UsageError("--index " + std::to_string(a.index) + " outside [0, " + std::to_string(shard.size()) + ")");
  }
  const auto& ae = registry.at(0).task_expert.spec;
  if (shard.manifest.height != ae.height || shard.manifest.width != ae.width) {
    throw pss::FormatError("image resolution differs from the registry");
  }
  const pss::SegmentResult r = pss::segment(registry, shard.samples[static_cast<std::size_t>(a.index)].image);
  const pss::RegistryEntry& chosen = registry.at(r.routing.chosen_index);

  fs::create_directories(out);
  pss::ShardManifest m = shard.manifest;
  m.domain = chosen.domain_id;
  m.split = "prediction";
  m.label_space = chosen.label_space;
  pss::save_mask(out / "mask.pssd", m, r.mask);
  json rj = pss::routing_json(r.routing, registry);
  rj["label_space"] = r.label_space;
  rj["source"] = {{"file", a.image}, {"index", a.index}, {"domain", shard.manifest.domain}};
  pss::write_text(out / "routing.json", rj.dump(2) + "\n");
  if (!g.quiet) {
    std::cout << "chosen " << r.routing.chosen_domain_id << " (index " << r.routing.chosen_index << ")\n";
    for (std::size_t i = 0; i < registry.size(); ++i) {
      std::cout << "  " << registry.at(i).domain_id << "\t" << r.routing.losses[i] << '\n';
    }
  }
  return 0;
}

// ---- bench -----------------------------------------------------------------

struct BenchArgs {
  std::string registry;
  int max_k = 8;
  int samples = 100;
  int images = 10;
  bool parallel = false;
};

int cmd_bench(const Globals& g, const BenchArgs& a) {
  const fs::path out = require_out(g, "bench");
  pss::ExpertRegistry registry;
  if (!a.registry.empty()) {
    registry = pss::load_registry(a.registry);
  } else {
    if (a.max_k < 2) throw UsageError("bench: --max-k must be >= 2");
    registry = pss::make_bench_registry(a.max_k, {}, {}, g.seed);
  }
  if (registry.size() < 2) throw UsageError("bench needs a registry with at least 2 entries");
  const auto& spec = registry.at(0).task_expert.spec;
  const pss::DatasetShard shard = pss::generate_dataset("day", a.images, g.seed, "bench", spec.height, spec.width);
  std::vector<pss::Tensor> images;
  for (const auto& s : shard.samples) images.push_back(s.image);
  pss::BenchOptions opt;
  opt.samples = a.samples;
  opt.parallel = a.parallel;
  const pss::OverheadReport r = pss::bench_overhead(registry, images, opt);
  fs::create_directories(out);
  pss::write_text(out / "overhead.csv", pss::overhead_csv(r));
  pss::write_text(out / "overhead.json", pss::overhead_json(r).dump(2) + "\n");
  if (!g.quiet) {
    std::cout << std::fixed << std::setprecision(3);
    for (const auto& p : r.points) std::cout << "k=" << p.k << "\t" << p.routing.median_ms << " ms\n";
    std::cout << "direct\t" << r.direct.median_ms << " ms\n"
              << "slope " << r.slope_ms << " ms/expert, r2 " << r.r_squared << '\n';
  }
  return 0;
}

// ---- report ----------------------------------------------------------------

void summarize_continual(const json& j, std::ostream& os, const std::string& title) {
  os << "## " << title << "\n\n| method |";
  for (const auto& d : j.at("domains")) os << ' ' << d.get<std::string>() << " |";
  os << " avg |\n|---|";
  for (std::size_t i = 0; i <= j.at("domains").size(); ++i) os << "---|";
  os << '\n';
  os << std::fixed << std::setprecision(2);
  for (const auto& row : j.at("rows")) {
    os << "| " << row.at("method").get<std::string>() << " |";
    for (const auto& c : row.at("cells")) {
      os << ' ' << c.at("miou_points").get<double>();
      if (c.contains("delta_vs_st") && row.at("method") != "ST") {
        os << " (" << std::showpos << c.at("delta_vs_st").get<double>() << std::noshowpos << ", "
           << c.at("category").get<std::string>() << ")";
      }
      os << " |";
    }
    os << ' ' << row.at("average").get<double>() << " |\n";
  }
  os << '\n';
}

void summarize_confusion(const json& j, std::ostream& os) {
  os << "## Domain inference\n\n| truth \\ predicted |";
  for (const auto& d : j.at("domains")) os << ' ' << d.get<std::string>() << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < j.at("domains").size(); ++i) os << "---|";
  os << '\n';
  for (std::size_t i = 0; i < j.at("domains").size(); ++i) {
    os << "| " << j.at("domains")[i].get<std::string>() << " |";
    for (const auto& v : j.at("counts")[i]) os << ' ' << v.get<std::uint64_t>() << " |";
    os << '\n';
  }
  os << std::fixed << std::setprecision(4) << "\naccuracy " << j.at("accuracy").get<double>() << "\n\n";
}

void summarize_unseen(const json& j, std::ostream& os) {
  os << "## Unseen domains\n\n";
  os << std::fixed << std::setprecision(2);
  for (const auto& u : j) {
    os << "- " << u.at("domain").get<std::string>() << ": routed mIoU " << 100.0 * u.at("routed").at("miou").get<double>()
       << ", routing";
    for (auto it = u.at("routing").begin(); it != u.at("routing").end(); ++it) {
      os << ' ' << it.key() << '=' << it.value().get<std::uint64_t>();
    }
    os << "; fixed";
    for (const auto& f : u.at("fixed")) {
      os << ' ' << f.at("expert").get<std::string>() << '=' << 100.0 * f.at("iou").at("miou").get<double>();
    }
    os << '\n';
  }
  os << '\n';
}

void summarize_overhead(const json& j, std::ostream& os) {
  os << "## Routing overhead\n\n| k | median ms |\n|---|---|\n" << std::fixed << std::setprecision(3);
  for (const auto& p : j.at("routing")) os << "| " << p.at("k").get<int>() << " | " << p.at("median_ms").get<double>() << " |\n";
  os << "\ndirect segmenter " << j.at("direct").at("median_ms").get<double>() << " ms; slope "
     << j.at("fit").at("slope_ms").get<double>() << " ms/expert; r2 " << j.at("fit").at("r_squared").get<double>()
     << "\n\n";
}

int cmd_report(const Globals& g, const std::string& target) {
  const fs::path p(target);
  std::ostringstream os;
  auto one = [&os](const fs::path& f) {
    const json j = read_json(f);
    const std::string stem = f.stem().string();
    try {
      if (stem == "confusion") {
        summarize_confusion(j, os);
      } else if (stem == "unseen") {
        summarize_unseen(j, os);
      } else if (stem == "overhead") {
        summarize_overhead(j, os);
      } else if (j.is_object() && j.contains("rows")) {
        summarize_continual(j, os, stem == "hybrid" ? "Hybrid" : "Continual");
      } else {
        throw pss::FormatError("'" + f.string() + "' is not a known report");
      }
    } catch (const json::exception& e) {
      throw pss::FormatError("'" + f.string() + "': " + e.what());
    }
  };
  if (fs::is_directory(p)) {
    int found = 0;
    for (const char* name : {"continual.json", "confusion.json", "unseen.json", "hybrid.json", "overhead.json"}) {
      if (fs::exists(p / name)) {
        one(p / name);
        ++found;
      }
    }
    if (found == 0) throw pss::FormatError("no reports found in '" + p.string() + "'");
  } else {
    one(p);
  }
  if (!g.out.empty()) {
    pss::write_text(g.out, os.str());
  }
  if (!g.quiet) std::cout << os.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Progressive semantic segmentation: data generation, training, routing and benchmarks"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for data generation and training")->each([&g](const std::string&) {
    g.seed_set = true;
  });
  app.add_option("--out", g.out, "Output file or directory");
  app.add_option("--config", g.config, "Experiment configuration (JSON)");
  app.add_flag("--quiet", g.quiet, "Suppress progress and summaries");

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen", "Generate a synthetic dataset shard (PSSD1)");
  c_gen->add_option("domain", gen.domain, "day|night|fog|rain|overcast|dusk|unstructured")->required();
  c_gen->add_option("n", gen.n, "Number of samples")->required();
  c_gen->add_option("--split", gen.split, "Split tag (train, val, ...)");
  c_gen->add_option("--height", gen.height, "Image height");
  c_gen->add_option("--width", gen.width, "Image width");

  auto* c_run = app.add_subcommand("run", "Run an experiment configuration");

  InferArgs inf;
  auto* c_infer = app.add_subcommand("infer", "Route and segment one image with a saved registry");
  c_infer->add_option("registry", inf.registry, "Registry directory")->required();
  c_infer->add_option("image", inf.image, "PSSD1 file holding the image")->required();
  c_infer->add_option("--index", inf.index, "Sample index inside the file");

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "Time routing overhead against registry size");
  c_bench->add_option("--registry", bench.registry, "Registry directory (default: untrained experts)");
  c_bench->add_option("--max-k", bench.max_k, "Largest registry size when no registry is given");
  c_bench->add_option("--samples", bench.samples, "Timed calls per registry size");
  c_bench->add_option("--images", bench.images, "Distinct images cycled through");
  c_bench->add_flag("--parallel", bench.parallel, "Evaluate experts on separate threads");

  std::string report_target;
  auto* c_report = app.add_subcommand("report", "Summarize report files as markdown tables");
  c_report->add_option("path", report_target, "Run directory or report JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*c_gen) return cmd_gen(g, gen);
    if (*c_run) return cmd_run(g);
    if (*c_infer) return cmd_infer(g, inf);
    if (*c_bench) return cmd_bench(g, bench);
    if (*c_report) return cmd_report(g, report_target);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const pss::InvariantError& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
