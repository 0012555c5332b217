#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "ibhc/tree_metrics.hpp"
#include "test_support.hpp"

using namespace ibhc;
using namespace testsupport;
using boost::math::quadrature::gauss_kronrod;

namespace {

DdtParams Params(double sigma2 = 1.0, double c = 1.0, std::size_t dim = 1) {
  DdtParams p;
  p.sigma2 = sigma2;
  p.c = c;
  p.dim = dim;
  return p;
}

// Cherry over leaves 0 and 1 at time t.
Tree Cherry(double t, std::size_t dim = 1) {
  Tree tree(2, dim);
  NodeId v = tree.AddInternal(t);
  tree.AddChild(tree.stem(), v);
  tree.AddChild(v, tree.AddLeaf(0));
  tree.AddChild(v, tree.AddLeaf(1));
  return tree;
}

// Three-leaf tree: `pair` joins at t2 below the root at t1.
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

double Gauss1(double x, double mean, double var) {
  return -0.5 * std::log(2.0 * M_PI * var) - (x - mean) * (x - mean) / (2.0 * var);
}

}  // namespace

TEST_CASE("acquisition and cumulative hazard") {
  DdtParams p = Params();
  CHECK(CumulativeHazard(0.0, p) == 0.0);
  CHECK(Acquisition(0.5, p) == doctest::Approx(2.0));
  CHECK(CumulativeHazard(0.5, p) == doctest::Approx(0.693147180559945));
  CHECK_THROWS_AS(CumulativeHazard(1.0, p), std::domain_error);
  CHECK_THROWS_AS(Acquisition(-0.1, p), std::domain_error);
  for (double c : {0.5, 1.0, 3.0}) {
    DdtParams q = Params(1.0, c);
    for (int k = 1; k <= 9; ++k) {
      const double t = k / 10.0;
      double integral = gauss_kronrod<double, 61>::integrate(
          [&](double u) { return Acquisition(u, q); }, 0.0, t, 0, 1e-14);
      CHECK(std::abs(integral - CumulativeHazard(t, q)) < 1e-8);
      if (k > 1) CHECK(CumulativeHazard(t, q) > CumulativeHazard(t - 0.1, q));
    }
  }
}

TEST_CASE("parameter validation and variance estimate") {
  CHECK_THROWS(Params(0.0).Validate());
  CHECK_THROWS(Params(1.0, -1.0).Validate());
  Matrix x(3, 2);
  // Column variances (n - 1 denominator): 1 and 4.
  x(0, 0) = 1; x(1, 0) = 2; x(2, 0) = 3;
  x(0, 1) = 0; x(1, 1) = 2; x(2, 1) = 4;
  CHECK(EstimateSigma2(x) == doctest::Approx(2.5));
}

TEST_CASE("two-leaf prior is the divergence time density") {
  for (double t : {0.1, 0.5, 0.9}) CHECK(std::abs(LogPrior(Cherry(t), Params())) < 1e-12);
  // For general c the density c (1 - t)^(c - 1) integrates to one.
  for (double c : {0.5, 2.0}) {
    boost::math::quadrature::tanh_sinh<double> quad;
    double total = quad.integrate(
        [&](double t) { return std::exp(LogPrior(Cherry(t), Params(1.0, c))); }, 0.0, 1.0);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("three-leaf prior integrates to one over topologies and times") {
  for (double c : {1.0, 2.0}) {
    DdtParams p = Params(1.0, c);
    double total = 0.0;
    const int pairs[3][3] = {{0, 1, 2}, {0, 2, 1}, {1, 2, 0}};
    for (const auto& pc : pairs) {
      total += gauss_kronrod<double, 31>::integrate(
          [&](double t1) {
            return gauss_kronrod<double, 31>::integrate(
                [&](double t2) {
                  return std::exp(LogPrior(Triple(pc[0], pc[1], pc[2], t1, t2), p));
                },
                t1, 1.0, 8, 1e-12);
          },
          0.0, 1.0, 8, 1e-12);
    }
    CHECK(std::abs(total - 1.0) < 1e-4);
  }
}

TEST_CASE("prior rejects bad trees and stays finite") {
  Tree bad = Triple(0, 1, 2, 0.6, 0.4);
  CHECK_THROWS_AS(LogPrior(bad, Params()), std::domain_error);
  std::mt19937_64 g(31);
  for (int rep = 0; rep < 50; ++rep) CHECK(std::isfinite(LogPrior(RandomTimedTree(9, g), Params())));
}

TEST_CASE("Brownian likelihood of instantiated values") {
  DdtParams p = Params();
  Tree t = Cherry(0.5);
  t.mutable_value(t.root())[0] = 0.0;
  t.mutable_value(t.LeafNode(0))[0] = 1.0;
  t.mutable_value(t.LeafNode(1))[0] = -1.0;
  const double edge = -0.5 * std::log(2.0 * M_PI * 0.5);
  CHECK(LogDataLikelihood(t, p) == doctest::Approx(3 * edge - 1.0 - 1.0));

  // Equal values everywhere: only normalization terms remain.
  Tree flat = Cherry(0.25);
  CHECK(LogDataLikelihood(flat, p) ==
        doctest::Approx(-0.5 * std::log(2 * M_PI * 0.25) - std::log(2 * M_PI * 0.75)));

  // Doubling the variance: per edge and dimension -log(2)/2, quadratic part halved.
  std::mt19937_64 g(32);
  for (int rep = 0; rep < 20; ++rep) {
    Tree r = RandomTimedTree(7, g, 3);
    std::normal_distribution<double> z;
    for (NodeId v : r.Preorder())
      for (double& x : r.mutable_value(v)) x = z(g);
    double norm = 0.0, quad = 0.0;
    std::size_t edges = 0;
    for (NodeId v : r.Preorder()) {
      NodeId u = r.parent(v);
      const double dt = r.time(v) - r.time(u);
      ++edges;
      for (std::size_t d = 0; d < 3; ++d) {
        const double from = u == r.stem() ? 0.0 : r.value(u)[d];
        norm += -0.5 * std::log(2 * M_PI * dt);
        quad += -(r.value(v)[d] - from) * (r.value(v)[d] - from) / (2 * dt);
      }
    }
    CHECK(LogDataLikelihood(r, Params(1.0, 1.0, 3)) == doctest::Approx(norm + quad));
    CHECK(LogDataLikelihood(r, Params(2.0, 1.0, 3)) ==
          doctest::Approx(norm - edges * 3 / 2.0 * std::log(2.0) + quad / 2));
  }
}

TEST_CASE("marginal likelihood small cases") {
  DdtParams p = Params(2.0);
  Tree one(1, 1);
  one.AddChild(one.stem(), one.AddLeaf(0));
  Matrix x(1, 1, 0.7);
  CHECK(MarginalLeafLogLik(one, x, p) == doctest::Approx(Gauss1(0.7, 0.0, 2.0)));

  // Cherry at 0.25: covariance [[1, 0.25], [0.25, 1]].
  Matrix y(2, 1);
  y(0, 0) = 0.3;
  y(1, 0) = -1.1;
  const double det = 1.0 - 0.0625;
  const double q = (y(0, 0) * y(0, 0) - 2 * 0.25 * y(0, 0) * y(1, 0) + y(1, 0) * y(1, 0)) / det;
  CHECK(MarginalLeafLogLik(Cherry(0.25), y, Params()) ==
        doctest::Approx(-std::log(2 * M_PI) - 0.5 * std::log(det) - 0.5 * q));
}

TEST_CASE("message passing matches the dense covariance") {
  std::mt19937_64 g(33);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 1 + static_cast<int>(g() % 8);
    const std::size_t d = 1 + g() % 3;
    Tree t = n == 1 ? Nwk("(0);") : RandomTimedTree(n, g);
    Matrix x = RandomData(n, d, g);
    DdtParams p = Params(0.5 + (g() % 100) / 50.0, 1.0, d);
    const double fast = MarginalLeafLogLik(t, x, p);
    const double dense = DenseMarginal(t, x, p);
    CHECK(std::abs(fast - dense) <= 1e-8 * std::abs(dense));
  }
}

TEST_CASE("marginal likelihood ignores child order; covariance is PSD") {
  Matrix x(3, 2);
  std::mt19937_64 g(34);
  x = RandomData(3, 2, g);
  Tree a = Nwk("((0:0.3,1:0.3):0.4,2:0.7);");
  Tree b = Nwk("(2:0.7,(1:0.3,0:0.3):0.4);");
  DdtParams p = Params(1.0, 1.0, 2);
  CHECK(MarginalLeafLogLik(a, x, p) == doctest::Approx(MarginalLeafLogLik(b, x, p)));
  for (int rep = 0; rep < 50; ++rep) {
    Tree t = RandomTimedTree(8, g);
    Eigen::MatrixXd cov(8, 8);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) cov(i, j) = t.time(NaiveLca(t, t.LeafNode(i), t.LeafNode(j)));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    CHECK(eig.eigenvalues().minCoeff() > -1e-12);
  }
}

TEST_CASE("divergence time on a single branch follows 1 - exp(-A)") {
  for (double c : {1.0, 2.0}) {
    DdtParams p = Params(1.0, c);
    Tree one(1, 0);
    one.AddChild(one.stem(), one.AddLeaf(0));
    Rng rng(35);
    std::vector<double> times(100000);
    for (double& t : times) {
      AttachLocation loc = SampleAttachLocation(one, p, rng);
      REQUIRE(loc.child == one.LeafNode(0));
      t = loc.time;
    }
    std::sort(times.begin(), times.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      const double cdf = 1.0 - std::exp(-CumulativeHazard(times[i], p));
      ks = std::max({ks, std::abs(cdf - static_cast<double>(i) / times.size()),
                     std::abs(cdf - static_cast<double>(i + 1) / times.size())});
    }
    CHECK(ks < 0.01);
  }
}

TEST_CASE("walk picks children in proportion to their points") {
  Tree t = Nwk("((0,1),2);");
  Rng rng(36);
  const NodeId cherry = t.Lca(0, 1);
  int below = 0, to_cherry = 0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    AttachLocation loc = SampleAttachLocation(t, Params(), rng);
    if (loc.child == t.root()) continue;
    ++below;
    to_cherry += t.Contains(cherry, static_cast<int>(t.leaf_set(loc.child).find_first())) &&
                 t.leaf_set(loc.child).is_subset_of(t.leaf_set(cherry));
  }
  const double p = 2.0 / 3.0;
  const double sd = std::sqrt(p * (1 - p) / below);
  CHECK(std::abs(static_cast<double>(to_cherry) / below - p) < 2 * sd);
}

TEST_CASE("time ceiling") {
  Tree t = Nwk("((0,1),2);");
  Rng rng(37);
  for (int i = 0; i < 5000; ++i) {
    AttachLocation loc = SampleAttachLocation(t, Params(), rng, 0.3);
    CHECK(loc.time < 0.3);
    CHECK(loc.time > t.time(loc.parent));
    CHECK(loc.time < t.time(loc.child));
  }
}

TEST_CASE("attach density integrates to one over all branches") {
  std::mt19937_64 g(38);
  for (int rep = 0; rep < 5; ++rep) {
    Tree t = RandomTimedTree(5, g);
    DdtParams p = Params(1.0, 1.0 + rep * 0.5);
    double total = 0.0;
    for (NodeId v : t.Preorder()) {
      NodeId u = t.parent(v);
      const double hi = t.is_leaf(v) ? 1.0 : t.time(v);
      total += gauss_kronrod<double, 61>::integrate(
          [&](double s) { return std::exp(AttachLogDensity(t, {u, v, s}, p)); }, t.time(u), hi, 10,
          1e-12);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-7));
  }
}

TEST_CASE("three-point prior simulation gives uniform topologies") {
  Rng rng(39);
  std::map<std::string, int> counts;
  const int runs = 100000;
  std::vector<int> leaves{0, 1, 2};
  for (int i = 0; i < runs; ++i) ++counts[TopologyKey(SimulatePriorTree(leaves, 3, Params(), rng))];
  REQUIRE(counts.size() == 3);
  double chi2 = 0.0;
  for (const auto& [key, n] : counts) chi2 += std::pow(n - runs / 3.0, 2) / (runs / 3.0);
  boost::math::chi_squared dist(2);
  CHECK(boost::math::cdf(boost::math::complement(dist, chi2)) > 0.01);
}

TEST_CASE("simulated values have the lca covariance") {
  DdtParams p = Params(1.5);
  Tree t = Triple(0, 1, 2, 0.3, 0.7);
  Rng rng(40);
  const int runs = 40000;
  Eigen::Matrix3d acc = Eigen::Matrix3d::Zero();
  for (int i = 0; i < runs; ++i) {
    SimulateValues(t, p, rng);
    Eigen::Vector3d x(t.value(t.LeafNode(0))[0], t.value(t.LeafNode(1))[0],
                      t.value(t.LeafNode(2))[0]);
    acc += x * x.transpose();
  }
  acc /= runs;
  CHECK(acc(0, 0) == doctest::Approx(1.5).epsilon(0.04));
  CHECK(acc(0, 1) == doctest::Approx(1.5 * 0.7).epsilon(0.04));
  CHECK(acc(0, 2) == doctest::Approx(1.5 * 0.3).epsilon(0.08));
}

TEST_CASE("prior simulation builds valid trees") {
  Rng rng(41);
  std::vector<int> leaves{3, 5, 8, 9, 12};
  Tree t = SimulatePriorTree(leaves, 13, Params(), rng);
  t.Validate(true);
  CHECK(t.Leaves() == leaves);
}

TEST_CASE("value conditional of an internal node") {
  Tree t(1, 1);
  NodeId v = t.AddInternal(0.5);
  t.AddChild(t.stem(), v);
  NodeId leaf = t.AddLeaf(0);
  t.AddChild(v, leaf);
  t.mutable_value(leaf)[0] = 1.0;
  ValueConditional c = NodeValueConditional(t, v, Params());
  CHECK(c.mean[0] == doctest::Approx(0.5));
  CHECK(c.variance == doctest::Approx(0.25));

  Tree s = Cherry(0.5);
  s.mutable_value(s.LeafNode(0))[0] = 2.0;
  s.mutable_value(s.LeafNode(1))[0] = 2.0;
  // Neighbors: stem (0, dt .5), two leaves (2, dt .5): mean 4/3.
  CHECK(NodeValueConditional(s, s.root(), Params()).mean[0] == doctest::Approx(4.0 / 3.0));
}
