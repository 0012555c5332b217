// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// fails. `--only 3,5` runs a subset.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>

#include <CLI11.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "ibhc/constraints.hpp"
#include "ibhc/experiment.hpp"
#include "ibhc/sampler.hpp"
#include "ibhc/tree_metrics.hpp"
#include "test_support.hpp"

using namespace ibhc;
using namespace testsupport;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kOrderingSlack = 0.05;           // TD(interleaved) <= TD(random) + slack
constexpr double kRuntimeBudgetSeconds = 30 * 60;  // per dataset
constexpr double kLikelihoodRelTol = 1e-8;
constexpr double kChiSquaredMinP = 0.01;
constexpr double kKsMax = 0.01;
constexpr double kNormalizationTol = 1e-4;
constexpr double kRegraftTvMax = 0.02;
constexpr int kCoverageSteps = 50000;

struct Outcome {
  bool pass;
  std::string detail;
};

std::string Fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

DdtParams Unit(std::size_t dim = 1) {
  DdtParams p;
  p.dim = dim;
  return p;
}

// ---------------------------------------------------------------- 1 and 2

struct SchemeRun {
  std::map<std::string, double> final_td;  // scheme -> mean TD after the last query
  double seconds = 0.0;
  std::size_t interleaved_trees = 0;
  std::size_t violations = 0;
};

SchemeRun RunConfig(const fs::path& config_path) {
  ExperimentConfig cfg = LoadExperimentConfig(config_path);
  // Every MH step re-checks C (throws on violation); the hook below also
  // counts every tree the sampler hands back.
  cfg.sampler.check_constraints = true;
  auto [data, target] = LoadExperimentInputs(cfg);
  SchemeRun out;
  ExperimentHooks hooks;
  hooks.on_iteration = [&](SchemeKind kind, std::size_t, const Chain& chain) {
    if (kind == SchemeKind::kInterleaved) ++out.interleaved_trees;
    out.violations += !CheckSatisfies(chain.tree(), chain.constraints());
  };
  const auto start = std::chrono::steady_clock::now();
  ExperimentResult r = RunExperiment(cfg, data, target, hooks);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const SummaryRow& row : r.summary)
    if (row.query_index == cfg.total_queries) out.final_td[row.scheme] = row.triplet_distance;
  return out;
}

std::optional<SchemeRun> g_iris;

const SchemeRun& Iris() {
  if (!g_iris) g_iris = RunConfig(IBHC_SOURCE_DIR "/configs/iris.json");
  return *g_iris;
}

Outcome ConstraintSafety() {
  const SchemeRun& r = Iris();
  return {r.violations == 0 && r.interleaved_trees >= 12000,
          Fmt("%zu interleaved trees checked, %zu violations", r.interleaved_trees, r.violations)};
}

std::pair<bool, std::string> Ordering(const std::string& name, const SchemeRun& r) {
  auto td = [&](const char* s) { return r.final_td.at(s); };
  bool ok = td("smart") <= td("interleaved") && td("interleaved") <= td("random") + kOrderingSlack;
  for (const char* s : {"smart", "interleaved", "random", "active"})
    ok = ok && td(s) < td("vanilla") && td(s) < td("average_linkage");
  ok = ok && r.seconds < kRuntimeBudgetSeconds;
  return {ok, Fmt("%s: smart %.4f interleaved %.4f random %.4f active %.4f simple %.4f | vanilla "
                  "%.4f linkage %.4f | %.0fs",
                  name.c_str(), td("smart"), td("interleaved"), td("random"), td("active"),
                  td("simple"), td("vanilla"), td("average_linkage"), r.seconds)};
}

Outcome SchemeOrdering() {
  auto [iris_ok, iris_msg] = Ordering("iris", Iris());
  auto [dig_ok, dig_msg] = Ordering("digits", RunConfig(IBHC_SOURCE_DIR "/configs/digits.json"));
  return {iris_ok && dig_ok, iris_msg + "; " + dig_msg};
}

// ---------------------------------------------------------------- 3

Outcome RefinementEndpoint() {
  std::mt19937_64 g(301);
  const int n = 20;
  Tree target = Coarsen(RandomBinaryTree(n, g), 0.6, g);
  DdtParams p = Unit(2);
  Rng rng(302);
  std::vector<int> leaves(n);
  std::iota(leaves.begin(), leaves.end(), 0);
  Tree generative = SimulatePriorTree(leaves, n, p, rng);
  SimulateValues(generative, p, rng);
  auto data = std::make_shared<Matrix>(n, 2);
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < 2; ++d) (*data)(i, d) = generative.value(generative.LeafNode(i))[d];

  Chain chain(data, p, SimulatePriorTree(leaves, n, p, rng), 303,
              {.mh_steps_per_iteration = 10, .check_constraints = true});
  const TripletSet all = ExtractTriplets(target);
  for (const Triplet& t : all) chain.AddConstraint(t);
  std::size_t trees = 0, nonzero = 0;
  auto check = [&] {
    ++trees;
    nonzero += TripletDistance(target, chain.tree()) != 0.0;
  };
  check();
  for (int i = 0; i < 1000; ++i) {
    chain.Iterate();
    check();
  }
  return {nonzero == 0, Fmt("|C| = %zu, %zu sampled trees, %zu with TD != 0", all.size(), trees,
                            nonzero)};
}

// ---------------------------------------------------------------- 4

Outcome RefinementLemma() {
  std::mt19937_64 g(401);
  int mismatches = 0, refinements = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const int n = 3 + static_cast<int>(g() % 8);
    Tree t = RandomBinaryTree(n, g);
    if (g() % 3 == 0) t = Coarsen(t, 0.7, g);
    Tree target = g() % 2 ? Coarsen(t, 0.5, g) : Coarsen(RandomBinaryTree(n, g), 0.5, g);
    // Cluster definition, independently of the library.
    auto tc = Clusters(t);
    bool by_clusters = true;
    for (const auto& c : Clusters(target)) by_clusters &= tc.count(c) == 1;
    auto dt = BruteTriplets(t), dtarget = BruteTriplets(target);
    const bool by_triplets = std::includes(dt.begin(), dt.end(), dtarget.begin(), dtarget.end());
    const bool library = IsRefinement(t, target);
    mismatches += (by_clusters != by_triplets) || (library != by_clusters);
    refinements += by_clusters;
  }
  return {mismatches == 0,
          Fmt("1000 pairs, %d refinements, %d disagreements", refinements, mismatches)};
}

// ---------------------------------------------------------------- 5

Outcome LikelihoodOracle() {
  std::mt19937_64 g(501);
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 2 + static_cast<int>(g() % 7);
    const std::size_t d = 1 + g() % 3;
    Tree t = RandomTimedTree(n, g);
    Matrix x = RandomData(n, d, g);
    DdtParams p = Unit(d);
    p.sigma2 = 0.25 + (g() % 100) / 25.0;
    const double fast = MarginalLeafLogLik(t, x, p);
    const double dense = DenseMarginal(t, x, p);
    worst = std::max(worst, std::abs(fast - dense) / std::abs(dense));
  }
  return {worst <= kLikelihoodRelTol, Fmt("max relative error %.3g over 200 trees", worst)};
}

// ---------------------------------------------------------------- 6

// ((a,b),c) with the root at t1 and the pair joining at t2.
Tree Triple(int a, int b, int c, double t1, double t2) {
  Tree tree(3, 1);
  NodeId root = tree.AddInternal(t1);
  NodeId inner = tree.AddInternal(t2);
  tree.AddChild(tree.stem(), root);
  tree.AddChild(root, inner);
  tree.AddChild(root, tree.AddLeaf(c));
  tree.AddChild(inner, tree.AddLeaf(a));
  tree.AddChild(inner, tree.AddLeaf(b));
  return tree;
}

Outcome PriorSanity() {
  DdtParams p = Unit();
  Rng rng(601);
  std::map<std::string, int> counts;
  const int sims = 100000;
  std::vector<int> three{0, 1, 2};
  for (int i = 0; i < sims; ++i) ++counts[TopologyKey(SimulatePriorTree(three, 3, p, rng))];
  double chi2 = 0.0;
  for (auto& [k, c] : counts) chi2 += std::pow(c - sims / 3.0, 2) / (sims / 3.0);
  const double pval = counts.size() == 3 ? boost::math::cdf(boost::math::complement(
                                               boost::math::chi_squared(2), chi2))
                                         : 0.0;

  std::vector<int> two{0, 1};
  std::vector<double> times(sims);
  for (double& t : times) {
    Tree tree = SimulatePriorTree(two, 2, p, rng);
    t = tree.time(tree.root());
  }
  std::sort(times.begin(), times.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double cdf = 1.0 - std::exp(-CumulativeHazard(times[i], p));
    ks = std::max({ks, std::abs(cdf - static_cast<double>(i) / sims),
                   std::abs(cdf - static_cast<double>(i + 1) / sims)});
  }

  using boost::math::quadrature::gauss_kronrod;
  double total = 0.0;
  for (const auto& [a, b, c] : {Trip{0, 1, 2}, Trip{0, 2, 1}, Trip{1, 2, 0}}) {
    total += gauss_kronrod<double, 31>::integrate(
        [&](double t1) {
          return gauss_kronrod<double, 31>::integrate(
              [&](double t2) {
                return std::exp(LogPrior(Triple(a, b, c, t1, t2), p));
              },
              t1, 1.0, 8, 1e-12);
        },
        0.0, 1.0, 8, 1e-12);
  }
  const bool ok = pval > kChiSquaredMinP && ks < kKsMax &&
                  std::abs(total - 1.0) <= kNormalizationTol;
  return {ok, Fmt("(a) chi2 p = %.3f (b) KS = %.4f (c) integral = %.8f", pval, ks, total)};
}

// ---------------------------------------------------------------- 7

double RegraftTv(Tree t, NodeId s, const TripletSet& c, std::uint64_t seed) {
  DdtParams p = Unit();
  Detachment d = t.Detach(s);
  RegraftDistribution dist(t, s, c, p);
  Rng ra(seed), rb(seed + 1);
  const int draws = 100000;
  std::map<NodeId, int> fast, reference;
  const double ceiling = t.time(s);
  for (int i = 0; i < draws; ++i) {
    ++fast[dist.Sample(ra).child];
    for (;;) {
      AttachLocation loc = SampleAttachLocation(t, p, rb, ceiling);
      Tree copy = t;
      copy.Reattach(d.joint, loc.child, loc.time, d.subtree_slot);
      if (CheckSatisfies(copy, c)) {
        ++reference[loc.child];
        break;
      }
    }
  }
  std::set<NodeId> keys;
  for (auto& [k, v] : fast) keys.insert(k);
  for (auto& [k, v] : reference) keys.insert(k);
  double tv = 0.0;
  for (NodeId k : keys) tv += std::abs(fast[k] - reference[k]);
  return tv / (2.0 * draws);
}

Outcome RegraftEquivalence() {
  const char* shape = "(((0,1),(2,3)),(4,5));";
  TripletSet partner{Triplet(2, 3, 4)};
  TripletSet both{Triplet(2, 3, 4), Triplet(0, 1, 5)};
  Tree a = Nwk(shape), b = Nwk(shape), c = Nwk(shape);
  double tv[3] = {RegraftTv(a, a.LeafNode(2), partner, 701),
                  RegraftTv(b, b.LeafNode(4), both, 702),
                  RegraftTv(c, c.Lca(0, 1), both, 703)};
  const double worst = *std::max_element(std::begin(tv), std::end(tv));
  return {worst < kRegraftTvMax, Fmt("TV %.4f (prune 2 under ({2,3},4)), %.4f (prune 4), %.4f "
                                     "(prune {0,1})",
                                     tv[0], tv[1], tv[2])};
}

// ---------------------------------------------------------------- 8

Outcome Coverage() {
  // All rooted binary topologies on 0..4 by leaf insertion.
  std::vector<std::set<Cluster>> tops{{{0}}};
  for (int k = 1; k < 5; ++k) {
    std::vector<std::set<Cluster>> next;
    for (const auto& fam : tops)
      for (const Cluster& x : fam) {
        std::set<Cluster> grown;
        for (Cluster y : fam) {
          if (y != x && std::includes(y.begin(), y.end(), x.begin(), x.end())) y.push_back(k);
          grown.insert(y);
        }
        Cluster joined = x;
        joined.push_back(k);
        grown.insert(joined);
        grown.insert({k});
        next.push_back(grown);
      }
    tops = std::move(next);
  }
  std::mt19937_64 g(801);
  std::vector<int> leaves{0, 1, 2, 3, 4};
  int complete = 0, worst_steps = 0;
  for (int rep = 0; rep < 20; ++rep) {
    TripletSet c = RandomRealizable(5, 1 + g() % 4, g);
    std::set<std::string> allowed;
    for (const auto& fam : tops) {
      Tree t = TreeFromClusters(5, fam);
      bool ok = true;
      for (const Triplet& x : c) ok &= NaiveSatisfies(t, Key(x));
      if (ok) allowed.insert(TopologyKey(t));
    }
    Chain chain(std::make_shared<const Matrix>(5, 1, 0.0), Unit(), Build(c, leaves, 5, 1),
                802 + rep, {.likelihood = LikelihoodMode::kFlat, .accept_all = true});
    for (const Triplet& x : c) chain.AddConstraint(x);
    std::set<std::string> seen{TopologyKey(chain.tree())};
    int steps = 0;
    while (steps < kCoverageSteps && seen.size() < allowed.size()) {
      chain.MhStep();
      ++steps;
      seen.insert(TopologyKey(chain.tree()));
    }
    complete += seen == allowed;
    worst_steps = std::max(worst_steps, steps);
  }
  return {complete == 20, Fmt("%d/20 constraint sets fully covered, slowest after %d steps",
                              complete, worst_steps)};
}

// ---------------------------------------------------------------- 9

Outcome TripletDistanceOracle() {
  std::mt19937_64 g(901);
  int exact = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 3 + static_cast<int>(g() % 10);
    Tree target = RandomBinaryTree(n, g);
    if (g() % 2 && n > 3) {
      Tree coarse = Coarsen(target, 0.6, g);
      if (!BruteTriplets(coarse).empty()) target = coarse;
    }
    Tree t = RandomBinaryTree(n, g);
    exact += TripletDistance(target, t) == BruteTripletDistance(target, t);
  }
  return {exact == 100, Fmt("%d/100 pairs identical", exact)};
}

// ---------------------------------------------------------------- 10

Outcome Determinism() {
  const fs::path dir = fs::temp_directory_path() / "ibhc_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  nlohmann::json cfg = {
      {"dataset", {{"path", IBHC_SOURCE_DIR "/data/iris.csv"}, {"label_column", "species"}}},
      {"target", {{"labels", "species"}}},
      {"scheme", {"smart", "interleaved", "random", "active", "simple"}},
      {"iterations_per_query", 10},
      {"total_queries", 5},
      {"runs", 2},
      {"seed", 17},
      {"mh_steps_per_iteration", 5}};
  std::ofstream(dir / "config.json") << cfg.dump(2);
  std::string bytes[2];
  for (int i = 0; i < 2; ++i) {
    const fs::path out = dir / ("out" + std::to_string(i));
    const std::string cmd = std::string("\"") + IBHC_CLI + "\" experiment --config \"" +
                            (dir / "config.json").string() + "\" --out \"" + out.string() +
                            "\" > /dev/null";
    if (std::system(cmd.c_str()) != 0) return {false, "experiment invocation failed"};
    std::ifstream in(out / "metrics.csv", std::ios::binary);
    bytes[i].assign(std::istreambuf_iterator<char>(in), {});
  }
  return {!bytes[0].empty() && bytes[0] == bytes[1],
          Fmt("two invocations, metrics.csv %zu and %zu bytes, %s", bytes[0].size(),
              bytes[1].size(), bytes[0] == bytes[1] ? "identical" : "different")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "Criteria to run")->delimiter(',')->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"constraint safety", ConstraintSafety},
      {"scheme ordering", SchemeOrdering},
      {"refinement endpoint", RefinementEndpoint},
      {"refinement lemma", RefinementLemma},
      {"likelihood oracle", LikelihoodOracle},
      {"prior sanity", PriorSanity},
      {"constrained regraft equivalence", RegraftEquivalence},
      {"constrained coverage", Coverage},
      {"triplet distance oracle", TripletDistanceOracle},
      {"determinism", Determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), number) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", number, criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
