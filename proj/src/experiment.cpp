#include "ibhc/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "ibhc/newick.hpp"
#include "ibhc/tree_metrics.hpp"

namespace ibhc {

namespace {

using nlohmann::json;

void CheckKeys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + std::string(where));
  }
}

template <typename T>
T Get(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "'");
  }
}

std::size_t Count(const json& j, const char* key, std::size_t fallback, std::size_t min) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min))
    throw ConfigError(std::string("'") + key + "' must be an integer >= " + std::to_string(min));
  return v.get<std::size_t>();
}

std::filesystem::path Resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string Format(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

double Distance(const LcaIndex& target, std::span<const int> leaves, const Tree& tree) {
  return TripletDistance(target, leaves, LcaIndex(tree));
}

double FullPosterior(const Tree& tree, const Matrix& data, const DdtParams& params) {
  return LogPrior(tree, params) + MarginalLeafLogLik(tree, data, params);
}

}  // namespace

ExperimentConfig ParseExperimentConfig(const json& j, const std::filesystem::path& base_dir) {
  CheckKeys(j, "config",
            {"dataset", "target", "scheme", "iterations_per_query", "total_queries", "subset_size",
             "candidates_L", "runs", "seed", "sigma2", "c", "trace_capacity", "snapshot_stride",
             "baselines", "likelihood", "splice", "gibbs_sweeps", "mh_steps_per_iteration",
             "resample_all_times"});
  ExperimentConfig cfg;

  if (!j.contains("dataset")) throw ConfigError("missing 'dataset'");
  const json& ds = j.at("dataset");
  if (ds.is_string()) {
    cfg.dataset = Resolve(base_dir, ds.get<std::string>());
  } else {
    CheckKeys(ds, "dataset", {"path", "label_column", "subsample", "subsample_seed", "center"});
    if (!ds.contains("path") || !ds.at("path").is_string())
      throw ConfigError("dataset.path must be a string");
    cfg.dataset = Resolve(base_dir, ds.at("path").get<std::string>());
    if (ds.contains("label_column")) cfg.load.label_column = Get<std::string>(ds, "label_column", "");
    cfg.load.subsample = Count(ds, "subsample", 0, 0);
    cfg.load.seed = Get<std::uint64_t>(ds, "subsample_seed", 0);
    cfg.load.center = Get<bool>(ds, "center", true);
  }

  if (!j.contains("target")) throw ConfigError("missing 'target'");
  const json& target = j.at("target");
  CheckKeys(target, "target", {"labels", "newick"});
  if (target.contains("labels") == target.contains("newick"))
    throw ConfigError("target needs exactly one of 'labels' or 'newick'");
  if (target.contains("labels")) {
    cfg.target_labels = Get<std::string>(target, "labels", "");
    if (!cfg.load.label_column) cfg.load.label_column = cfg.target_labels;
  } else {
    cfg.target_newick = Resolve(base_dir, Get<std::string>(target, "newick", ""));
  }

  if (j.contains("scheme")) {
    const json& s = j.at("scheme");
    std::vector<std::string> names;
    if (s.is_string())
      names.push_back(s.get<std::string>());
    else if (s.is_array())
      names = Get<std::vector<std::string>>(j, "scheme", {});
    else
      throw ConfigError("'scheme' must be a string or a list");
    if (names.empty()) throw ConfigError("'scheme' is empty");
    cfg.schemes.clear();
    for (const auto& name : names) {
      try {
        cfg.schemes.push_back(ParseScheme(name));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
  }
  cfg.iterations_per_query = Count(j, "iterations_per_query", 100, 1);
  cfg.total_queries = Count(j, "total_queries", 30, 0);
  cfg.subset_size = Count(j, "subset_size", 10, 3);
  cfg.candidates = Count(j, "candidates_L", 20, 1);
  cfg.runs = Count(j, "runs", 4, 1);
  cfg.seed = Get<std::uint64_t>(j, "seed", 0);
  if (j.contains("sigma2")) {
    const json& s = j.at("sigma2");
    if (s.is_string()) {
      if (s.get<std::string>() != "auto") throw ConfigError("'sigma2' must be \"auto\" or a number");
    } else if (s.is_number() && s.get<double>() > 0) {
      cfg.sigma2 = s.get<double>();
    } else {
      throw ConfigError("'sigma2' must be \"auto\" or a positive number");
    }
  }
  cfg.c = Get<double>(j, "c", 1.0);
  if (!(cfg.c > 0)) throw ConfigError("'c' must be positive");
  cfg.trace_capacity = Count(j, "trace_capacity", 20, 1);
  cfg.snapshot_stride = Count(j, "snapshot_stride", 5, 1);
  cfg.baselines = Get<bool>(j, "baselines", true);

  const std::string likelihood = Get<std::string>(j, "likelihood", "collapsed");
  if (likelihood == "collapsed")
    cfg.sampler.likelihood = LikelihoodMode::kCollapsed;
  else if (likelihood == "instantiated")
    cfg.sampler.likelihood = LikelihoodMode::kInstantiated;
  else
    throw ConfigError("'likelihood' must be \"collapsed\" or \"instantiated\"");
  const std::string splice = Get<std::string>(j, "splice", "follow_tree");
  if (splice == "follow_tree")
    cfg.sampler.splice = SplicePolicy::kFollowTree;
  else if (splice == "minimum_index")
    cfg.sampler.splice = SplicePolicy::kMinimumIndex;
  else
    throw ConfigError("'splice' must be \"follow_tree\" or \"minimum_index\"");
  cfg.sampler.gibbs_sweeps_per_step = static_cast<int>(Count(j, "gibbs_sweeps", 1, 0));
  cfg.sampler.mh_steps_per_iteration =
      static_cast<int>(Count(j, "mh_steps_per_iteration", 1, 1));
  cfg.sampler.resample_all_times = Get<bool>(j, "resample_all_times", false);
  return cfg;
}

ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return ParseExperimentConfig(j, path.parent_path());
}

std::pair<Dataset, Tree> LoadExperimentInputs(const ExperimentConfig& config) {
  Dataset data = LoadDataset(config.dataset, config.load);
  if (data.size() < 3) throw DataError("dataset needs at least three rows");
  if (config.target_labels) {
    if (data.labels.empty()) throw DataError("dataset has no label column");
    Tree target = TargetFromLabels(data.labels);
    return {std::move(data), std::move(target)};
  }
  Tree target = TargetFromNewick(*config.target_newick, data.size());
  return {std::move(data), std::move(target)};
}

DdtParams ResolveParams(const ExperimentConfig& config, const Dataset& data) {
  DdtParams params;
  params.dim = data.dim();
  params.c = config.c;
  params.sigma2 = config.sigma2 ? *config.sigma2 : EstimateSigma2(data.features);
  params.Validate();
  return params;
}

ExperimentResult RunExperiment(const ExperimentConfig& config, const Dataset& data,
                               const Tree& target, const ExperimentHooks& hooks,
                               const std::optional<std::filesystem::path>& out_dir) {
  const DdtParams params = ResolveParams(config, data);
  auto features = std::make_shared<const Matrix>(data.features);
  const std::size_t n = data.size();
  std::vector<int> leaves(n);
  for (std::size_t i = 0; i < n; ++i) leaves[i] = static_cast<int>(i);
  const LcaIndex target_index(target);
  if (out_dir) {
    std::filesystem::create_directories(*out_dir / "traces");
    std::filesystem::create_directories(*out_dir / "queries");
  }

  ExperimentResult result;
  auto initial_tree = [&](std::size_t run) {
    Rng rng(Rng::Derive(config.seed, 2 * run));
    return SimulatePriorTree(leaves, n, params, rng);
  };
  auto chain_seed = [&](std::size_t run) { return Rng::Derive(config.seed, 2 * run + 1); };
  const RunSchedule block{config.iterations_per_query, config.snapshot_stride};

  for (SchemeKind kind : config.schemes) {
    const std::string name(SchemeName(kind));
    QueryScheme scheme{kind, config.subset_size, config.candidates, 0};
    for (std::size_t run = 0; run < config.runs; ++run) {
      Chain chain(features, params, initial_tree(run), chain_seed(run), config.sampler);
      SampleTrace trace(config.trace_capacity);
      Rng query_rng(Rng::Derive(config.seed, 1000 + run));
      std::ofstream trace_out, query_out;
      if (out_dir) {
        const std::string stem = name + "_run" + std::to_string(run) + ".jsonl";
        trace_out.open(*out_dir / "traces" / stem);
        query_out.open(*out_dir / "queries" / stem);
      }
      auto record = [&](std::size_t q) {
        result.rows.push_back({name, run, q, Distance(target_index, leaves, chain.tree()),
                               chain.log_posterior(), chain.constraints().size()});
        if (trace_out.is_open())
          WriteTraceRecord(trace_out, chain.iteration(), chain.log_prior(), chain.log_likelihood(),
                           chain.tree());
      };
      record(0);
      IterationObserver observer;
      if (hooks.on_iteration)
        observer = [&](const Chain& c, const StepResult&) { hooks.on_iteration(kind, run, c); };
      for (std::size_t q = 0; q < config.total_queries; ++q) {
        Run(chain, block, trace, observer);
        if (trace.empty())
          trace.Push(MakeSnapshot(chain.tree(), chain.log_posterior(), chain.iteration()));
        QuerySelection sel = SelectQuery(scheme, q, leaves, trace, query_rng);
        QueryRecord rec{q, sel.turn, sel.subset, std::nullopt};
        if (sel.turn == SchemeKind::kSimple) {
          rec.answer = SimpleOracle(target_index, sel.subset[0], sel.subset[1], sel.subset[2]);
        } else {
          Tree shown = InduceSubtree(chain.tree(), sel.subset);
          rec.answer = SimulatedOracle(target_index, shown, query_rng);
        }
        if (rec.answer) chain.AddConstraint(*rec.answer);
        if (query_out.is_open()) query_out << ToJson(rec).dump() << '\n';
        if (hooks.on_query) hooks.on_query(kind, run, rec);
        record(q + 1);
      }
    }
  }

  if (config.baselines) {
    for (std::size_t run = 0; run < config.runs; ++run) {
      Chain chain(features, params, initial_tree(run), chain_seed(run), config.sampler);
      SampleTrace trace(config.trace_capacity);
      auto record = [&](std::size_t q) {
        result.rows.push_back({"vanilla", run, q, Distance(target_index, leaves, chain.tree()),
                               chain.log_posterior(), 0});
      };
      record(0);
      for (std::size_t q = 0; q < config.total_queries; ++q) {
        Run(chain, block, trace);
        record(q + 1);
      }
    }
    const Tree linkage = AverageLinkage(data.features);
    const double td = Distance(target_index, leaves, linkage);
    const double lp = FullPosterior(linkage, data.features, params);
    for (std::size_t q = 0; q <= config.total_queries; ++q)
      result.rows.push_back({"average_linkage", 0, q, td, lp, 0});
  }

  // Averages in first-appearance order of schemes.
  std::vector<std::string> order;
  std::map<std::pair<std::string, std::size_t>, SummaryRow> acc;
  for (const MetricRow& r : result.rows) {
    if (std::find(order.begin(), order.end(), r.scheme) == order.end()) order.push_back(r.scheme);
    SummaryRow& sum = acc[{r.scheme, r.query_index}];
    sum.scheme = r.scheme;
    sum.query_index = r.query_index;
    sum.triplet_distance += r.triplet_distance;
    sum.log_posterior += r.log_posterior;
    sum.constraints += static_cast<double>(r.constraints);
    ++sum.runs;
  }
  for (const auto& name : order)
    for (std::size_t q = 0; q <= config.total_queries; ++q) {
      auto it = acc.find({name, q});
      if (it == acc.end()) continue;
      SummaryRow m = it->second;
      const double k = static_cast<double>(m.runs);
      m.triplet_distance /= k;
      m.log_posterior /= k;
      m.constraints /= k;
      result.summary.push_back(m);
    }
  return result;
}

void WriteMetricsCsv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "scheme,run,query_index,triplet_distance,log_posterior,constraints_count\n";
  for (const MetricRow& r : rows)
    out << r.scheme << ',' << r.run << ',' << r.query_index << ',' << Format(r.triplet_distance)
        << ',' << Format(r.log_posterior) << ',' << r.constraints << '\n';
}

void WriteSummaryCsv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "scheme,runs,query_index,triplet_distance,log_posterior,constraints_count\n";
  for (const SummaryRow& r : rows)
    out << r.scheme << ',' << r.runs << ',' << r.query_index << ',' << Format(r.triplet_distance)
        << ',' << Format(r.log_posterior) << ',' << Format(r.constraints) << '\n';
}

}  // namespace ibhc
