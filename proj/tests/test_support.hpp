#pragma once

// Generators and brute-force references shared by the test binaries. The
// references deliberately avoid the library's own LCA and metric code.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "ibhc/ddt_model.hpp"
#include "ibhc/matrix.hpp"
#include "ibhc/newick.hpp"
#include "ibhc/tree.hpp"
#include "ibhc/triplet.hpp"

namespace testsupport {

using ibhc::NodeId;
using ibhc::Tree;

inline Tree Nwk(const std::string& text, std::size_t universe = 0, std::size_t dim = 0) {
  ibhc::NewickOptions opts;
  opts.universe = universe;
  opts.dim = dim;
  return ibhc::ParseNewick(text, opts);
}

// Random binary tree over leaves 0..n-1 by random pairwise merging; merge k
// (1-based) sits at time 1 - k/n, so the root is at 1/n.
inline Tree RandomBinaryTree(int n, std::mt19937_64& g, std::size_t dim = 0) {
  Tree t(static_cast<std::size_t>(n), dim);
  std::vector<NodeId> pool;
  for (int i = 0; i < n; ++i) pool.push_back(t.AddLeaf(i, 1.0));
  for (int k = 1; k < n; ++k) {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::size_t i = pick(g), j = pick(g);
    while (j == i) j = pick(g);
    NodeId m = t.AddInternal(1.0 - static_cast<double>(k) / n);
    t.AddChild(m, pool[i]);
    t.AddChild(m, pool[j]);
    if (i < j) std::swap(i, j);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(i));
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(j));
    pool.push_back(m);
  }
  t.AddChild(t.stem(), pool.front());
  return t;
}

// Random binary tree with random strictly increasing times.
inline Tree RandomTimedTree(int n, std::mt19937_64& g, std::size_t dim = 0) {
  Tree t = RandomBinaryTree(n, g, dim);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (NodeId v : t.Preorder()) {
    if (t.is_leaf(v)) continue;
    double lo = t.time(t.parent(v));
    t.set_time(v, lo + (1.0 - lo) * u(g) * 0.9);
  }
  return t;
}

using Cluster = std::vector<int>;

// Leaf sets of every internal node (root included) plus singletons.
inline std::set<Cluster> Clusters(const Tree& t) {
  std::set<Cluster> out;
  for (NodeId v : t.Preorder()) {
    Cluster c;
    const auto& m = t.leaf_set(v);
    for (auto i = m.find_first(); i != ibhc::LeafSet::npos; i = m.find_next(i))
      c.push_back(static_cast<int>(i));
    out.insert(c);
  }
  return out;
}

// Tree from a laminar family over 0..n-1 (the full set is added if missing).
// Internal times are 1 - 1/(depth+2)-style: parent strictly above child.
inline Tree TreeFromClusters(int n, std::set<Cluster> clusters) {
  Cluster all(n);
  for (int i = 0; i < n; ++i) all[i] = i;
  clusters.insert(all);
  std::vector<Cluster> order;
  for (const auto& c : clusters)
    if (c.size() >= 2) order.push_back(c);
  std::sort(order.begin(), order.end(),
            [](const Cluster& a, const Cluster& b) { return a.size() > b.size(); });
  Tree t(static_cast<std::size_t>(n), 0);
  std::vector<NodeId> nodes;
  std::vector<int> depth;
  std::vector<int> owner(n, -1);  // innermost cluster index holding each leaf
  for (std::size_t k = 0; k < order.size(); ++k) {
    int parent = owner[order[k].front()];
    int d = parent < 0 ? 0 : depth[parent] + 1;
    NodeId v = t.AddInternal(0.0);
    nodes.push_back(v);
    depth.push_back(d);
    if (parent < 0)
      t.AddChild(t.stem(), v);
    else
      t.AddChild(nodes[parent], v);
    for (int leaf : order[k]) owner[leaf] = static_cast<int>(k);
  }
  for (int i = 0; i < n; ++i) t.AddChild(nodes[owner[i]], t.AddLeaf(i, 1.0));
  int max_depth = *std::max_element(depth.begin(), depth.end());
  for (std::size_t k = 0; k < nodes.size(); ++k)
    t.set_time(nodes[k], (depth[k] + 1.0) / (max_depth + 2.0));
  return t;
}

// Coarsening of t: each non-root internal cluster survives with probability keep.
inline Tree Coarsen(const Tree& t, double keep, std::mt19937_64& g) {
  std::bernoulli_distribution coin(keep);
  std::set<Cluster> kept;
  for (const auto& c : Clusters(t))
    if (c.size() >= 2 && coin(g)) kept.insert(c);
  return TreeFromClusters(static_cast<int>(t.universe()), kept);
}

// Ancestor chain of a node from itself up to the cladogram root.
inline std::vector<NodeId> Ancestors(const Tree& t, NodeId v) {
  std::vector<NodeId> out;
  for (; v != t.stem(); v = t.parent(v)) out.push_back(v);
  return out;
}

inline NodeId NaiveLca(const Tree& t, NodeId a, NodeId b) {
  auto A = Ancestors(t, a);
  auto B = Ancestors(t, b);
  std::set<NodeId> in_b(B.begin(), B.end());
  for (NodeId x : A)
    if (in_b.count(x)) return x;
  return ibhc::kNoNode;
}

inline int NaiveDepth(const Tree& t, NodeId v) { return static_cast<int>(Ancestors(t, v).size()); }

using Trip = std::tuple<int, int, int>;  // ({a,b},c) with a < b

// Every triplet the tree embodies, by the definition over all leaf triples.
inline std::set<Trip> BruteTriplets(const Tree& t) {
  std::set<Trip> out;
  auto leaves = t.Leaves();
  auto lca_depth = [&](int a, int b) {
    return NaiveDepth(t, NaiveLca(t, t.LeafNode(a), t.LeafNode(b)));
  };
  for (std::size_t i = 0; i < leaves.size(); ++i)
    for (std::size_t j = i + 1; j < leaves.size(); ++j)
      for (std::size_t k = j + 1; k < leaves.size(); ++k) {
        int x = leaves[i], y = leaves[j], z = leaves[k];
        int dxy = lca_depth(x, y), dxz = lca_depth(x, z), dyz = lca_depth(y, z);
        if (dxy > dxz && dxy > dyz) out.insert({x, y, z});
        if (dxz > dxy && dxz > dyz) out.insert({x, z, y});
        if (dyz > dxy && dyz > dxz) out.insert({y, z, x});
      }
  return out;
}

inline Trip Key(const ibhc::Triplet& t) {
  return {std::min(t.a(), t.b()), std::max(t.a(), t.b()), t.c()};
}

inline bool NaiveSatisfies(const Tree& t, const Trip& x) {
  auto [a, b, c] = x;
  NodeId ab = NaiveLca(t, t.LeafNode(a), t.LeafNode(b));
  NodeId abc = NaiveLca(t, ab, t.LeafNode(c));
  return ab != abc;
}

inline double BruteTripletDistance(const Tree& target, const Tree& t) {
  auto want = BruteTriplets(target);
  auto have = BruteTriplets(t);
  std::size_t missing = 0;
  for (const auto& x : want) missing += !have.count(x);
  return static_cast<double>(missing) / static_cast<double>(want.size());
}

inline int NaiveTreeDistance(const Tree& t, int u, int v) {
  NodeId a = t.LeafNode(u), b = t.LeafNode(v);
  NodeId l = NaiveLca(t, a, b);
  return NaiveDepth(t, a) + NaiveDepth(t, b) - 2 * NaiveDepth(t, l);
}

// Leaf log density from the dense covariance sigma2 * t(lca(i, j)).
inline double DenseMarginal(const Tree& t, const ibhc::Matrix& x, const ibhc::DdtParams& p) {
  auto leaves = t.Leaves();
  const int n = static_cast<int>(leaves.size());
  Eigen::MatrixXd cov(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      NodeId l = NaiveLca(t, t.LeafNode(leaves[i]), t.LeafNode(leaves[j]));
      cov(i, j) = p.sigma2 * t.time(l);
    }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  double total = 0.0;
  for (std::size_t d = 0; d < x.cols(); ++d) {
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y(i) = x(leaves[i], d);
    total += -0.5 * (n * std::log(2.0 * M_PI) + logdet + y.dot(llt.solve(y)));
  }
  return total;
}

inline ibhc::Matrix RandomData(std::size_t n, std::size_t d, std::mt19937_64& g) {
  std::normal_distribution<double> z;
  ibhc::Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) m(i, j) = z(g);
  return m;
}

// Random constraint set drawn from the triplets of a random tree.
inline ibhc::TripletSet RandomRealizable(int n, std::size_t count, std::mt19937_64& g) {
  Tree t = RandomBinaryTree(n, g);
  std::vector<Trip> all;
  for (const auto& x : BruteTriplets(t)) all.push_back(x);
  std::shuffle(all.begin(), all.end(), g);
  ibhc::TripletSet out;
  for (std::size_t i = 0; i < std::min(count, all.size()); ++i) {
    auto [a, b, c] = all[i];
    out.Insert(ibhc::Triplet(a, b, c));
  }
  return out;
}

}  // namespace testsupport
