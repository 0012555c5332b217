// ibhc: command-line front end.
//
//   ibhc fit        --data X.csv [--label col] --iterations N --out dir
//   ibhc experiment --config run.json --out dir
//   ibhc serve      --data name=path[:label] ... [--port 8080]
//   ibhc eval       --target t.nwk --tree s.nwk
//   ibhc baseline   --data X.csv --out dir
//
// Exit status: 0 success, 2 usage or config error, 1 anything else.

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ibhc/dataset.hpp"
#include "ibhc/experiment.hpp"
#include "ibhc/newick.hpp"
#include "ibhc/server.hpp"
#include "ibhc/tree_metrics.hpp"

namespace fs = std::filesystem;

namespace {

// Usage and config problems; reported with exit status 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> config;
  std::optional<fs::path> out;
};

fs::path RequireOut(const Globals& g) {
  if (!g.out) throw UsageError("--out is required");
  fs::create_directories(*g.out);
  return *g.out;
}

std::ofstream OpenOut(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

ibhc::LoadOptions DataOptions(const std::string& label, std::size_t subsample,
                              std::uint64_t seed) {
  ibhc::LoadOptions opts;
  if (!label.empty()) opts.label_column = label;
  opts.subsample = subsample;
  opts.seed = seed;
  return opts;
}

struct FitArgs {
  fs::path data;
  std::string label;
  std::size_t subsample = 0;
  std::uint64_t iterations = 1000;
  std::optional<double> sigma2;
  double c = 1.0;
};

int Fit(const Globals& g, const FitArgs& a) {
  const fs::path out_dir = RequireOut(g);
  ibhc::ExperimentConfig config;
  if (g.config) {
    try {
      config = ibhc::LoadExperimentConfig(*g.config);
    } catch (const ibhc::ConfigError& e) {
      throw UsageError(e.what());
    }
  }
  if (!a.data.empty()) {
    config.dataset = a.data;
    config.load = DataOptions(a.label, a.subsample, g.seed.value_or(0));
  }
  if (config.dataset.empty()) throw UsageError("fit needs --data or --config");
  if (a.sigma2) config.sigma2 = a.sigma2;
  if (a.c != 1.0) config.c = a.c;
  if (g.seed) config.seed = *g.seed;

  ibhc::Dataset data = ibhc::LoadDataset(config.dataset, config.load);
  if (data.size() < 3) throw std::runtime_error("dataset needs at least three points");
  ibhc::DdtParams params = ibhc::ResolveParams(config, data);
  std::vector<int> leaves(data.size());
  for (std::size_t i = 0; i < leaves.size(); ++i) leaves[i] = static_cast<int>(i);
  ibhc::Rng init(ibhc::Rng::Derive(config.seed, 0));
  ibhc::Tree start = ibhc::SimulatePriorTree(leaves, leaves.size(), params, init);
  auto features = std::make_shared<const ibhc::Matrix>(data.features);
  ibhc::Chain chain(features, params, std::move(start), ibhc::Rng::Derive(config.seed, 1),
                    config.sampler);

  std::ofstream trace_out = OpenOut(out_dir / "trace.jsonl");
  ibhc::SampleTrace trace(config.trace_capacity);
  const std::uint64_t stride = config.snapshot_stride;
  ibhc::Run(chain, {a.iterations, stride}, trace,
            [&](const ibhc::Chain& c, const ibhc::StepResult&) {
              if (c.iteration() % stride == 0)
                ibhc::WriteTraceRecord(trace_out, c.iteration(), c.log_prior(), c.log_likelihood(),
                                       c.tree());
            });
  ibhc::WriteNewickFile(out_dir / "tree.nwk", chain.tree());
  std::printf("iterations %llu\nlog_posterior %.12g\n",
              static_cast<unsigned long long>(chain.iteration()), chain.log_posterior());
  if (!data.labels.empty()) {
    ibhc::Tree target = ibhc::TargetFromLabels(data.labels);
    std::printf("triplet_distance %.12g\n", ibhc::TripletDistance(target, chain.tree()));
  }
  return 0;
}

int Experiment(const Globals& g) {
  if (!g.config) throw UsageError("experiment needs --config");
  const fs::path out_dir = RequireOut(g);
  ibhc::ExperimentConfig config;
  try {
    config = ibhc::LoadExperimentConfig(*g.config);
  } catch (const ibhc::ConfigError& e) {
    throw UsageError(e.what());
  }
  if (g.seed) config.seed = *g.seed;
  auto [data, target] = ibhc::LoadExperimentInputs(config);
  ibhc::ExperimentResult result = ibhc::RunExperiment(config, data, target, {}, out_dir);
  std::ofstream metrics = OpenOut(out_dir / "metrics.csv");
  ibhc::WriteMetricsCsv(metrics, result.rows);
  std::ofstream summary = OpenOut(out_dir / "summary.csv");
  ibhc::WriteSummaryCsv(summary, result.summary);
  for (const auto& row : result.summary)
    if (row.query_index == config.total_queries)
      std::printf("%-16s TD %.4f  log_posterior %.2f\n", row.scheme.c_str(), row.triplet_distance,
                  row.log_posterior);
  return 0;
}

struct ServeArgs {
  std::vector<std::string> data;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<fs::path> static_dir;
  std::optional<fs::path> log_dir;
  std::size_t subsample = 0;
};

std::atomic<ibhc::SessionServer*> g_server{nullptr};

void OnSignal(int) {
  if (auto* s = g_server.load()) s->Stop();
}

int Serve(const Globals& g, const ServeArgs& a) {
  if (a.data.empty()) throw UsageError("serve needs at least one --data name=path[:label]");
  std::vector<std::shared_ptr<const ibhc::DatasetEntry>> entries;
  for (const std::string& spec : a.data) {
    auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
      throw UsageError("--data expects name=path[:label], got '" + spec + "'");
    std::string name = spec.substr(0, eq);
    std::string path = spec.substr(eq + 1);
    std::string label;
    if (auto colon = path.rfind(':'); colon != std::string::npos) {
      label = path.substr(colon + 1);
      path = path.substr(0, colon);
    }
    auto entry = std::make_shared<ibhc::DatasetEntry>();
    entry->name = name;
    entry->data = ibhc::LoadDataset(path, DataOptions(label, a.subsample, g.seed.value_or(0)));
    if (!entry->data.labels.empty()) entry->target = ibhc::TargetFromLabels(entry->data.labels);
    std::fprintf(stderr, "dataset %s: %zu points, %zu dims%s\n", name.c_str(), entry->data.size(),
                 entry->data.dim(), entry->target ? ", labeled" : "");
    entries.push_back(std::move(entry));
  }
  ibhc::ServerOptions options;
  options.static_dir = a.static_dir;
  options.log_dir = a.log_dir;
  if (options.log_dir) fs::create_directories(*options.log_dir);
  ibhc::SessionServer server(std::move(entries), options);
  if (!server.Bind(a.host, a.port))
    throw std::runtime_error("cannot bind " + a.host + ":" + std::to_string(a.port));
  g_server = &server;
  std::signal(SIGINT, OnSignal);
  std::signal(SIGTERM, OnSignal);
  std::fprintf(stderr, "listening on http://%s:%d\n", a.host.c_str(), a.port);
  server.ListenAfterBind();
  g_server = nullptr;
  return 0;
}

int Eval(const fs::path& target_path, const fs::path& tree_path) {
  ibhc::NewickOptions opts;
  opts.universe = std::max(ibhc::ReadNewickFile(target_path).universe(),
                           ibhc::ReadNewickFile(tree_path).universe());
  ibhc::Tree target = ibhc::ReadNewickFile(target_path, opts);
  ibhc::Tree tree = ibhc::ReadNewickFile(tree_path, opts);
  if (tree.leaf_set(tree.root()) != target.leaf_set(target.root()))
    throw std::runtime_error("trees have different leaf sets");
  std::printf("%.12g\n", ibhc::TripletDistance(target, tree));
  return 0;
}

int Baseline(const Globals& g, const std::string& data_path, const std::string& label,
             std::size_t subsample) {
  if (data_path.empty()) throw UsageError("baseline needs --data");
  const fs::path out_dir = RequireOut(g);
  ibhc::Dataset data =
      ibhc::LoadDataset(data_path, DataOptions(label, subsample, g.seed.value_or(0)));
  ibhc::Tree tree = ibhc::AverageLinkage(data.features);
  ibhc::WriteNewickFile(out_dir / "average_linkage.nwk", tree);
  if (!data.labels.empty())
    std::printf("triplet_distance %.12g\n",
                ibhc::TripletDistance(ibhc::TargetFromLabels(data.labels), tree));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive Bayesian hierarchical clustering"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--config", g.config, "JSON config file");
  app.add_option("--out", g.out, "Output directory");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Unconstrained sampling on a dataset");
  fit_cmd->add_option("--data", fit.data, "CSV file");
  fit_cmd->add_option("--label", fit.label, "Label column (name or index)");
  fit_cmd->add_option("--subsample", fit.subsample, "Keep this many random rows");
  fit_cmd->add_option("--iterations", fit.iterations, "Sampler iterations")
      ->check(CLI::PositiveNumber);
  fit_cmd->add_option("--sigma2", fit.sigma2, "Diffusion variance (default: from data)")
      ->check(CLI::PositiveNumber);
  fit_cmd->add_option("--c", fit.c, "Divergence rate")->check(CLI::PositiveNumber);

  auto* exp_cmd = app.add_subcommand("experiment", "Simulated interactive runs from a config");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Start the session server");
  serve_cmd->add_option("--data", serve.data, "Dataset as name=path[:label]; repeatable")
      ->required();
  serve_cmd->add_option("--host", serve.host, "Bind address");
  serve_cmd->add_option("--port", serve.port, "Port")->check(CLI::Range(1, 65535));
  serve_cmd->add_option("--static", serve.static_dir, "Directory served at /")
      ->check(CLI::ExistingDirectory);
  serve_cmd->add_option("--log-dir", serve.log_dir, "Write per-session answer logs here");
  serve_cmd->add_option("--subsample", serve.subsample, "Keep this many random rows");

  fs::path target_path, tree_path;
  auto* eval_cmd = app.add_subcommand("eval", "Triplet distance between two Newick trees");
  eval_cmd->add_option("--target", target_path, "Target tree")->required()->check(
      CLI::ExistingFile);
  eval_cmd->add_option("--tree", tree_path, "Tree to score")->required()->check(CLI::ExistingFile);

  std::string base_data, base_label;
  std::size_t base_subsample = 0;
  auto* base_cmd = app.add_subcommand("baseline", "Average-linkage tree of a dataset");
  base_cmd->add_option("--data", base_data, "CSV file");
  base_cmd->add_option("--label", base_label, "Label column (name or index)");
  base_cmd->add_option("--subsample", base_subsample, "Keep this many random rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*fit_cmd) return Fit(g, fit);
    if (*exp_cmd) return Experiment(g);
    if (*serve_cmd) return Serve(g, serve);
    if (*eval_cmd) return Eval(target_path, tree_path);
    if (*base_cmd) return Baseline(g, base_data, base_label, base_subsample);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
