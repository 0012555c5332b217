#pragma once

// Queries over a fixed tree: lowest common ancestors, the triplets a tree
// embodies, refinement, triplet distance, induced subtrees and path lengths.

#include <optional>
#include <span>
#include <vector>

#include "ibhc/rng.hpp"
#include "ibhc/tree.hpp"
#include "ibhc/triplet.hpp"

namespace ibhc {

// Constant-time LCA over an immutable tree (Euler tour + sparse table).
// Depths count edges from the cladogram root; the stem is not part of it.
class LcaIndex {
 public:
  explicit LcaIndex(const Tree& tree);

  NodeId Lca(NodeId a, NodeId b) const;
  NodeId LcaOfLeaves(int a, int b) const { return Lca(LeafNode(a), LeafNode(b)); }
  int Depth(NodeId v) const { return depth_[v.value()]; }
  int PreorderRank(NodeId v) const { return rank_[v.value()]; }
  NodeId LeafNode(int leaf) const;
  std::size_t capacity() const { return depth_.size(); }

  // The pair of {a,b,c} whose LCA lies strictly below the LCA of all three,
  // or nullopt when the tree leaves the three unresolved.
  std::optional<Triplet> Resolve(int a, int b, int c) const;

 private:
  std::vector<NodeId> leaf_nodes_;
  std::vector<int> depth_;
  std::vector<int> rank_;
  std::vector<int> first_;
  std::vector<NodeId> euler_;
  std::vector<std::vector<int>> table_;  // indices into euler_
};

// Deepest node whose leaf set contains both leaves.
NodeId Lca(const Tree& tree, int u, int v);

// Every proper triplet constraint embodied in the tree.
TripletSet ExtractTriplets(const Tree& tree);

// True iff every cluster of `target` is a cluster of `tree`.
bool IsRefinement(const Tree& tree, const Tree& target);

// Fraction of the target's triplets that `tree` does not embody.
// Throws std::domain_error when the target embodies no triplet.
double TripletDistance(const Tree& target, const Tree& tree);
double TripletDistance(const LcaIndex& target, std::span<const int> leaves,
                       const LcaIndex& tree);
// Monte Carlo estimate from `samples` random target-resolved triples; meant for
// large n where full enumeration is too slow.
double TripletDistanceSampled(const Tree& target, const Tree& tree, std::size_t samples,
                              Rng& rng);

// Restriction of the tree to the given leaves, unary nodes suppressed, times
// and values of the retained nodes preserved.
Tree InduceSubtree(const Tree& tree, std::span<const int> leaves);

// Number of edges on the path between two leaves.
int TreeDistance(const Tree& tree, int u, int v);

// Path lengths between every pair of `leaves` measured in the subtree induced
// by those leaves. Row-major |leaves| x |leaves|.
std::vector<int> InducedPairDistances(const LcaIndex& index, std::span<const int> leaves);

}  // namespace ibhc
