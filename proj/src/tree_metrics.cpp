#include "ibhc/tree_metrics.hpp"

#include <algorithm>
#include <bit>
#include <stdexcept>

namespace ibhc {

LcaIndex::LcaIndex(const Tree& tree) {
  std::size_t cap = 0;
  auto order = tree.Preorder();
  for (NodeId v : order) cap = std::max<std::size_t>(cap, v.value() + 1);
  depth_.assign(cap, -1);
  rank_.assign(cap, -1);
  first_.assign(cap, -1);
  leaf_nodes_.assign(tree.universe(), kNoNode);
  if (order.empty()) return;

  // Iterative Euler tour.
  struct Frame {
    NodeId v;
    std::size_t next_child;
  };
  std::vector<Frame> stack{{tree.root(), 0}};
  depth_[tree.root().value()] = 0;
  int next_rank = 0;
  euler_.reserve(2 * order.size());
  while (!stack.empty()) {
    Frame& f = stack.back();
    NodeId v = f.v;
    if (f.next_child == 0) {
      rank_[v.value()] = next_rank++;
      first_[v.value()] = static_cast<int>(euler_.size());
      if (tree.is_leaf(v)) leaf_nodes_[tree.leaf_id(v)] = v;
    }
    euler_.push_back(v);
    auto ch = tree.children(v);
    if (f.next_child < ch.size()) {
      NodeId c = ch[f.next_child++];
      depth_[c.value()] = depth_[v.value()] + 1;
      stack.push_back({c, 0});
    } else {
      stack.pop_back();
    }
  }

  const std::size_t m = euler_.size();
  const int levels = std::bit_width(m);
  table_.assign(levels, {});
  table_[0].resize(m);
  for (std::size_t i = 0; i < m; ++i) table_[0][i] = static_cast<int>(i);
  for (int k = 1; k < levels; ++k) {
    std::size_t span = std::size_t{1} << k;
    table_[k].resize(m - span + 1);
    for (std::size_t i = 0; i + span <= m; ++i) {
      int x = table_[k - 1][i];
      int y = table_[k - 1][i + span / 2];
      table_[k][i] = depth_[euler_[x].value()] <= depth_[euler_[y].value()] ? x : y;
    }
  }
}

NodeId LcaIndex::LeafNode(int leaf) const {
  if (leaf < 0 || static_cast<std::size_t>(leaf) >= leaf_nodes_.size() ||
      !leaf_nodes_[leaf].valid())
    throw std::invalid_argument("unknown leaf " + std::to_string(leaf));
  return leaf_nodes_[leaf];
}

NodeId LcaIndex::Lca(NodeId a, NodeId b) const {
  int i = first_[a.value()];
  int j = first_[b.value()];
  if (i > j) std::swap(i, j);
  int k = std::bit_width(static_cast<unsigned>(j - i + 1)) - 1;
  int x = table_[k][i];
  int y = table_[k][j - (1 << k) + 1];
  return depth_[euler_[x].value()] <= depth_[euler_[y].value()] ? euler_[x] : euler_[y];
}

std::optional<Triplet> LcaIndex::Resolve(int a, int b, int c) const {
  NodeId na = LeafNode(a), nb = LeafNode(b), nc = LeafNode(c);
  int ab = Depth(Lca(na, nb));
  int ac = Depth(Lca(na, nc));
  if (ab > ac) return Triplet(a, b, c);
  if (ac > ab) return Triplet(a, c, b);
  int bc = Depth(Lca(nb, nc));
  if (bc > ab) return Triplet(b, c, a);
  return std::nullopt;
}

NodeId Lca(const Tree& tree, int u, int v) {
  if (u == v) throw std::invalid_argument("lca needs two distinct leaves");
  return tree.Lca(u, v);
}

TripletSet ExtractTriplets(const Tree& tree) {
  LcaIndex index(tree);
  auto leaves = tree.Leaves();
  TripletSet out;
  const std::size_t n = leaves.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      for (std::size_t k = j + 1; k < n; ++k)
        if (auto t = index.Resolve(leaves[i], leaves[j], leaves[k])) out.Insert(*t);
  return out;
}

namespace {

void RequireSameLeaves(const Tree& a, const Tree& b) {
  if (a.Leaves() != b.Leaves()) throw std::invalid_argument("trees have different leaf sets");
}

std::vector<LeafSet> Clusters(const Tree& tree, std::size_t bits) {
  std::vector<LeafSet> out;
  for (NodeId v : tree.Preorder()) {
    LeafSet m = tree.leaf_set(v);
    m.resize(bits);
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace

bool IsRefinement(const Tree& tree, const Tree& target) {
  RequireSameLeaves(tree, target);
  std::size_t bits = std::max(tree.universe(), target.universe());
  auto have = Clusters(tree, bits);
  std::sort(have.begin(), have.end());
  for (const auto& cluster : Clusters(target, bits))
    if (!std::binary_search(have.begin(), have.end(), cluster)) return false;
  return true;
}

double TripletDistance(const LcaIndex& target, std::span<const int> leaves,
                       const LcaIndex& tree) {
  const std::size_t n = leaves.size();
  std::size_t total = 0;
  std::size_t missing = 0;
  for (std::size_t i = 0; i < n; ++i) {
    NodeId ti = target.LeafNode(leaves[i]);
    NodeId si = tree.LeafNode(leaves[i]);
    for (std::size_t j = i + 1; j < n; ++j) {
      NodeId tj = target.LeafNode(leaves[j]);
      NodeId sj = tree.LeafNode(leaves[j]);
      int t_ij = target.Depth(target.Lca(ti, tj));
      int s_ij = tree.Depth(tree.Lca(si, sj));
      for (std::size_t k = j + 1; k < n; ++k) {
        NodeId tk = target.LeafNode(leaves[k]);
        int t_ik = target.Depth(target.Lca(ti, tk));
        // Which pair does the target group? 0: (i,j), 1: (i,k), 2: (j,k).
        int pair;
        if (t_ij > t_ik) {
          pair = 0;
        } else if (t_ik > t_ij) {
          pair = 1;
        } else if (target.Depth(target.Lca(tj, tk)) > t_ij) {
          pair = 2;
        } else {
          continue;
        }
        ++total;
        NodeId sk = tree.LeafNode(leaves[k]);
        int s_ik = tree.Depth(tree.Lca(si, sk));
        bool kept;
        switch (pair) {
          case 0: kept = s_ij > s_ik; break;
          case 1: kept = s_ik > s_ij; break;
          default: kept = s_ij == s_ik && tree.Depth(tree.Lca(sj, sk)) > s_ij; break;
        }
        if (!kept) ++missing;
      }
    }
  }
  if (total == 0) throw std::domain_error("target tree embodies no triplet");
  return static_cast<double>(missing) / static_cast<double>(total);
}

double TripletDistance(const Tree& target, const Tree& tree) {
  RequireSameLeaves(target, tree);
  LcaIndex ti(target), si(tree);
  auto leaves = target.Leaves();
  return TripletDistance(ti, leaves, si);
}

double TripletDistanceSampled(const Tree& target, const Tree& tree, std::size_t samples,
                              Rng& rng) {
  RequireSameLeaves(target, tree);
  LcaIndex ti(target), si(tree);
  auto leaves = target.Leaves();
  if (leaves.size() < 3) throw std::domain_error("target tree embodies no triplet");
  std::size_t found = 0, missing = 0, attempts = 0;
  const std::size_t max_attempts = samples * 1000;
  while (found < samples && attempts < max_attempts) {
    ++attempts;
    int a = leaves[rng.Index(leaves.size())];
    int b = leaves[rng.Index(leaves.size())];
    int c = leaves[rng.Index(leaves.size())];
    if (a == b || a == c || b == c) continue;
    auto t = ti.Resolve(a, b, c);
    if (!t) continue;
    ++found;
    if (si.Resolve(a, b, c) != t) ++missing;
  }
  if (found == 0) throw std::domain_error("target tree embodies no triplet");
  return static_cast<double>(missing) / static_cast<double>(found);
}

namespace {

NodeId CopyInduced(const Tree& tree, const LeafSet& keep, NodeId v, Tree& out) {
  // Skip down through nodes with a single contributing child.
  for (;;) {
    if (tree.is_leaf(v)) break;
    NodeId only = kNoNode;
    int contributing = 0;
    for (NodeId c : tree.children(v))
      if (tree.leaf_set(c).intersects(keep)) {
        ++contributing;
        only = c;
      }
    if (contributing >= 2) break;
    v = only;
  }
  NodeId copy = tree.is_leaf(v) ? out.AddLeaf(tree.leaf_id(v), tree.time(v))
                                : out.AddInternal(tree.time(v));
  auto src = tree.value(v);
  std::copy(src.begin(), src.end(), out.mutable_value(copy).begin());
  if (!tree.is_leaf(v)) {
    for (NodeId c : tree.children(v)) {
      if (!tree.leaf_set(c).intersects(keep)) continue;
      out.AddChild(copy, CopyInduced(tree, keep, c, out));
    }
  }
  return copy;
}

}  // namespace

Tree InduceSubtree(const Tree& tree, std::span<const int> leaves) {
  if (leaves.empty()) throw std::invalid_argument("cannot induce over an empty leaf set");
  LeafSet keep(tree.universe());
  for (int leaf : leaves) {
    tree.LeafNode(leaf);
    keep.set(leaf);
  }
  Tree out(tree.universe(), tree.dim());
  NodeId top = CopyInduced(tree, keep, tree.root(), out);
  // The stem keeps the origin value.
  out.AddChild(out.stem(), top);
  return out;
}

int TreeDistance(const Tree& tree, int u, int v) {
  NodeId nu = tree.LeafNode(u);
  NodeId nv = tree.LeafNode(v);
  if (u == v) return 0;
  auto depth = [&](NodeId x) {
    int d = 0;
    for (NodeId r = tree.root(); x != r; x = tree.parent(x)) ++d;
    return d;
  };
  NodeId l = tree.Lca(u, v);
  return depth(nu) + depth(nv) - 2 * depth(l);
}

std::vector<int> InducedPairDistances(const LcaIndex& index, std::span<const int> leaves) {
  const std::size_t k = leaves.size();
  std::vector<NodeId> nodes;
  nodes.reserve(2 * k);
  for (int leaf : leaves) nodes.push_back(index.LeafNode(leaf));
  auto by_rank = [&](NodeId x, NodeId y) { return index.PreorderRank(x) < index.PreorderRank(y); };
  std::sort(nodes.begin(), nodes.end(), by_rank);
  for (std::size_t i = 0; i + 1 < k; ++i) nodes.push_back(index.Lca(nodes[i], nodes[i + 1]));
  std::sort(nodes.begin(), nodes.end(), by_rank);
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

  // Depth of each node within the induced tree, via a stack over preorder.
  std::vector<int> vdepth(index.capacity(), -1);
  std::vector<NodeId> stack;
  for (NodeId v : nodes) {
    while (!stack.empty() && index.Lca(stack.back(), v) != stack.back()) stack.pop_back();
    vdepth[v.value()] = stack.empty() ? 0 : vdepth[stack.back().value()] + 1;
    stack.push_back(v);
  }

  std::vector<int> out(k * k, 0);
  for (std::size_t i = 0; i < k; ++i) {
    NodeId a = index.LeafNode(leaves[i]);
    for (std::size_t j = i + 1; j < k; ++j) {
      NodeId b = index.LeafNode(leaves[j]);
      int d = vdepth[a.value()] + vdepth[b.value()] - 2 * vdepth[index.Lca(a, b).value()];
      out[i * k + j] = out[j * k + i] = d;
    }
  }
  return out;
}

}  // namespace ibhc
