#include "ibhc/constraints.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>

namespace ibhc {

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int Find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void Join(int a, int b) {
    a = Find(a);
    b = Find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

// Components of the Aho graph over `vertices` (sorted) using only the triplets
// at `active` positions, all of which must lie inside `vertices`. `slot` is a
// universe-sized scratch map from leaf to position (-1 elsewhere) that the
// caller has filled for `vertices`.
std::vector<std::vector<int>> Components(const TripletSet& triplets,
                                         std::span<const std::size_t> active,
                                         std::span<const int> vertices,
                                         std::span<const int> slot) {
  UnionFind uf(vertices.size());
  for (std::size_t i : active) uf.Join(slot[triplets[i].a()], slot[triplets[i].b()]);
  std::vector<int> label(vertices.size(), -1);
  std::vector<std::vector<int>> out;
  // vertices are sorted, so components come out ordered by minimum member.
  for (std::size_t v = 0; v < vertices.size(); ++v) {
    int root = uf.Find(static_cast<int>(v));
    if (label[root] < 0) {
      label[root] = static_cast<int>(out.size());
      out.emplace_back();
    }
    out[label[root]].push_back(vertices[v]);
  }
  return out;
}

bool Inside(const Triplet& t, std::span<const int> slot) {
  return slot[t.a()] >= 0 && slot[t.b()] >= 0 && slot[t.c()] >= 0;
}

// Chooses which components go left (true) at one BUILD level.
using SplitPolicy =
    std::function<std::vector<bool>(std::span<const int> leaves,
                                    const std::vector<std::vector<int>>& comps)>;

class BuildRecursion {
 public:
  BuildRecursion(const TripletSet& triplets, Tree& out, std::size_t universe, SplitPolicy policy)
      : triplets_(triplets), out_(out), slot_(universe, -1), policy_(std::move(policy)) {}

  NodeId Run(std::vector<int> leaves, std::vector<std::size_t> active, int depth) {
    max_depth_ = std::max(max_depth_, depth);
    if (leaves.size() == 1) return out_.AddLeaf(leaves.front(), 1.0);

    for (std::size_t i = 0; i < leaves.size(); ++i) slot_[leaves[i]] = static_cast<int>(i);
    auto comps = Components(triplets_, active, leaves, slot_);
    for (int leaf : leaves) slot_[leaf] = -1;
    if (comps.size() == 1) {
      std::ostringstream msg;
      msg << "triplets are not realizable: Aho graph over " << leaves.size()
          << " leaves is connected";
      throw UnrealizableError(msg.str());
    }
    std::vector<bool> goes_left(comps.size(), false);
    if (policy_) {
      goes_left = policy_(leaves, comps);
    } else {
      goes_left[0] = true;
    }
    std::vector<int> left, right;
    for (std::size_t k = 0; k < comps.size(); ++k) {
      auto& side = goes_left[k] ? left : right;
      side.insert(side.end(), comps[k].begin(), comps[k].end());
    }
    if (left.empty() || right.empty()) throw std::logic_error("BUILD split left a side empty");
    std::sort(left.begin(), left.end());
    std::sort(right.begin(), right.end());

    // Split the surviving triplets by side; ones spanning the split are now satisfied.
    for (int leaf : left) slot_[leaf] = 0;
    for (int leaf : right) slot_[leaf] = 1;
    std::vector<std::size_t> left_active, right_active;
    for (std::size_t i : active) {
      const Triplet& t = triplets_[i];
      int side = slot_[t.a()];
      if (slot_[t.b()] == side && slot_[t.c()] == side)
        (side == 0 ? left_active : right_active).push_back(i);
    }
    for (int leaf : leaves) slot_[leaf] = -1;

    NodeId node = out_.AddInternal(static_cast<double>(depth));
    out_.AddChild(node, Run(std::move(left), std::move(left_active), depth + 1));
    out_.AddChild(node, Run(std::move(right), std::move(right_active), depth + 1));
    return node;
  }

  int max_depth() const { return max_depth_; }

 private:
  const TripletSet& triplets_;
  Tree& out_;
  std::vector<int> slot_;
  SplitPolicy policy_;
  int max_depth_ = 0;
};

// Runs BUILD over `leaves` with the triplets lying inside them. Internal
// node times are left as recursion depths (root = 1).
Tree RunBuild(const TripletSet& triplets, std::span<const int> leaves, std::size_t universe,
              std::size_t dim, SplitPolicy policy, int* max_depth) {
  if (leaves.empty()) throw std::invalid_argument("BUILD needs at least one leaf");
  std::vector<int> sorted(leaves.begin(), leaves.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("BUILD leaves must be distinct");
  if (sorted.front() < 0 || static_cast<std::size_t>(sorted.back()) >= universe)
    throw std::invalid_argument("BUILD leaf outside universe");

  std::vector<int> slot(universe, -1);
  for (std::size_t i = 0; i < sorted.size(); ++i) slot[sorted[i]] = static_cast<int>(i);
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const Triplet& t = triplets[i];
    if (static_cast<std::size_t>(std::max({t.a(), t.b(), t.c()})) < universe && Inside(t, slot))
      active.push_back(i);
  }

  Tree out(universe, dim);
  BuildRecursion rec(triplets, out, universe, std::move(policy));
  NodeId top = rec.Run(std::move(sorted), std::move(active), 1);
  out.AddChild(out.stem(), top);
  *max_depth = rec.max_depth();
  return out;
}

// Smallest node of `tree` whose leaves include all of `leaves`.
NodeId CoveringNode(const Tree& tree, std::span<const int> leaves) {
  LeafSet want(tree.universe());
  for (int leaf : leaves) want.set(leaf);
  NodeId v = tree.LeafNode(leaves.front());
  while (!want.is_subset_of(tree.leaf_set(v))) v = tree.parent(v);
  return v;
}

// Sends each component to the side of `guide`'s split holding most of its
// leaves, so the rebuilt clade keeps the guide's shape where it can.
SplitPolicy FollowTree(const Tree& guide) {
  return [&guide](std::span<const int> leaves, const std::vector<std::vector<int>>& comps) {
    NodeId w = CoveringNode(guide, leaves);
    NodeId first = guide.children(w).front();
    std::vector<double> share(comps.size());
    std::vector<bool> left(comps.size());
    std::size_t n_left = 0;
    for (std::size_t k = 0; k < comps.size(); ++k) {
      int inside = 0;
      for (int leaf : comps[k]) inside += guide.Contains(first, leaf);
      share[k] = static_cast<double>(inside) / static_cast<double>(comps[k].size());
      left[k] = share[k] >= 0.5;
      n_left += left[k];
    }
    if (n_left == 0 || n_left == comps.size()) {
      // Everything landed on one side: move the component that fits it worst.
      const bool side = n_left != 0;
      std::size_t worst = 0;
      for (std::size_t k = 1; k < comps.size(); ++k) {
        double fit_k = side ? share[k] : 1.0 - share[k];
        double fit_w = side ? share[worst] : 1.0 - share[worst];
        if (fit_k < fit_w) worst = k;
      }
      left[worst] = !side;
    }
    return left;
  };
}

}  // namespace

AhoGraph::AhoGraph(const TripletSet& triplets, std::span<const int> vertices)
    : vertices_(vertices.begin(), vertices.end()) {
  if (vertices_.empty()) throw std::invalid_argument("Aho graph needs at least one vertex");
  std::sort(vertices_.begin(), vertices_.end());
  vertices_.erase(std::unique(vertices_.begin(), vertices_.end()), vertices_.end());
  int top = vertices_.back();
  for (const auto& t : triplets) top = std::max({top, t.a(), t.b(), t.c()});
  std::vector<int> slot(static_cast<std::size_t>(top) + 1, -1);
  for (std::size_t i = 0; i < vertices_.size(); ++i) slot[vertices_[i]] = static_cast<int>(i);
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < triplets.size(); ++i)
    if (Inside(triplets[i], slot)) active.push_back(i);
  edges_ = active.size();
  components_ = Components(triplets, active, vertices_, slot);
  labels_.assign(vertices_.size(), -1);
  for (std::size_t k = 0; k < components_.size(); ++k)
    for (int leaf : components_[k])
      labels_[std::lower_bound(vertices_.begin(), vertices_.end(), leaf) - vertices_.begin()] =
          static_cast<int>(k);
}

Tree Build(const TripletSet& triplets, std::span<const int> leaves, std::size_t universe,
           std::size_t dim) {
  int max_depth = 0;
  Tree out = RunBuild(triplets, leaves, universe, dim, nullptr, &max_depth);
  // Depth d (root = 1) maps to time d / (max_depth + 1); leaves stay at 1.
  const double scale = 1.0 / (max_depth + 1);
  for (NodeId v : out.InternalNodes()) out.set_time(v, out.time(v) * scale);
  return out;
}

bool Satisfies(const Tree& tree, const Triplet& t) {
  NodeId v = tree.Lca(t.a(), t.b());
  tree.LeafNode(t.c());
  return !tree.Contains(v, t.c());
}

std::optional<Triplet> FirstViolation(const Tree& tree, const TripletSet& triplets) {
  for (const auto& t : triplets)
    if (!Satisfies(tree, t)) return t;
  return std::nullopt;
}

NodeId IncorporateTriplet(Tree& tree, const TripletSet& triplets, const Triplet& added,
                          SplicePolicy policy) {
  if (Satisfies(tree, added)) return kNoNode;
  NodeId z = tree.Lca(added.a(), added.b());
  std::vector<int> clade;
  const LeafSet& mask = tree.leaf_set(z);
  for (auto i = mask.find_first(); i != LeafSet::npos; i = mask.find_next(i))
    clade.push_back(static_cast<int>(i));

  TripletSet all = triplets;
  all.Insert(added);
  const double floor = tree.time(tree.parent(z));
  Tree rebuilt;
  if (policy == SplicePolicy::kMinimumIndex) {
    rebuilt = Build(all, clade, tree.universe(), 0);
    for (NodeId v : rebuilt.InternalNodes())
      rebuilt.set_time(v, floor + (1.0 - floor) * rebuilt.time(v));
  } else {
    int max_depth = 0;
    rebuilt = RunBuild(all, clade, tree.universe(), 0, FollowTree(tree), &max_depth);
    // Each new node takes the time of the old node covering its leaves, nudged
    // upward where that would not sit strictly below its parent.
    std::vector<int> height(rebuilt.capacity(), 0);
    for (NodeId v : rebuilt.Postorder())
      for (NodeId c : rebuilt.children(v))
        height[v.value()] = std::max(height[v.value()], height[c.value()] + 1);
    for (NodeId v : rebuilt.Preorder()) {
      if (rebuilt.is_leaf(v)) continue;
      std::vector<int> under;
      const LeafSet& m = rebuilt.leaf_set(v);
      for (auto i = m.find_first(); i != LeafSet::npos; i = m.find_next(i))
        under.push_back(static_cast<int>(i));
      const double parent_time =
          rebuilt.parent(v) == rebuilt.stem() ? floor : rebuilt.time(rebuilt.parent(v));
      const double inherited = tree.time(CoveringNode(tree, under));
      const double spaced = parent_time + (1.0 - parent_time) / (height[v.value()] + 1);
      rebuilt.set_time(v, inherited > parent_time ? inherited : spaced);
    }
  }
  NodeId fresh = tree.ReplaceClade(z, rebuilt);

  // Placeholder values: mean of the children, bottom-up. The caller resamples.
  if (tree.dim() > 0) {
    std::vector<NodeId> order;
    std::vector<NodeId> stack{fresh};
    while (!stack.empty()) {
      NodeId v = stack.back();
      stack.pop_back();
      if (tree.is_leaf(v)) continue;
      order.push_back(v);
      for (NodeId c : tree.children(v)) stack.push_back(c);
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      auto out = tree.mutable_value(*it);
      std::fill(out.begin(), out.end(), 0.0);
      auto ch = tree.children(*it);
      for (NodeId c : ch) {
        auto in = tree.value(c);
        for (std::size_t d = 0; d < out.size(); ++d) out[d] += in[d] / static_cast<double>(ch.size());
      }
    }
  }
  return fresh;
}

}  // namespace ibhc
