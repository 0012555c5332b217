#pragma once

// Triplet consistency: the Aho graph, the BUILD algorithm, satisfaction
// checks and splicing a new user triplet into a sampled tree.

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ibhc/tree.hpp"
#include "ibhc/triplet.hpp"

namespace ibhc {

class UnrealizableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Graph on an active leaf subset with an edge {a,b} for every triplet
// ({a,b},c) lying entirely inside the subset.
class AhoGraph {
 public:
  AhoGraph(const TripletSet& triplets, std::span<const int> vertices);

  std::span<const int> vertices() const { return vertices_; }
  std::size_t edge_count() const { return edges_; }
  // Component label of each vertex (parallel to vertices()); labels are
  // numbered by increasing minimum member.
  std::span<const int> labels() const { return labels_; }
  // Components sorted by their smallest member; members sorted.
  const std::vector<std::vector<int>>& components() const { return components_; }

 private:
  std::vector<int> vertices_;
  std::vector<int> labels_;
  std::vector<std::vector<int>> components_;
  std::size_t edges_ = 0;
};

// A binary tree over `leaves` satisfying every triplet of `triplets` that lies
// inside `leaves`. At each level the component holding the smallest leaf index
// becomes the left child and the remaining components the right child.
// Internal times are spaced evenly by depth. Throws UnrealizableError when
// the Aho graph of some level is connected.
Tree Build(const TripletSet& triplets, std::span<const int> leaves, std::size_t universe,
           std::size_t dim = 0);

// True iff lca(a,b) sits strictly below lca(a,b,c).
bool Satisfies(const Tree& tree, const Triplet& t);

// nullopt when every triplet holds; otherwise the first violated one.
std::optional<Triplet> FirstViolation(const Tree& tree, const TripletSet& triplets);

inline bool CheckSatisfies(const Tree& tree, const TripletSet& triplets) {
  return !FirstViolation(tree, triplets).has_value();
}

// How IncorporateTriplet splits each level of the rebuilt clade.
enum class SplicePolicy {
  // Components go to the side of the current tree's split holding most of
  // their leaves; times are inherited from the current tree.
  kFollowTree,
  // Build's minimum-index split with times spaced evenly between z's parent
  // and 1.
  kMinimumIndex,
};

// Rebuilds the clade under z = lca(a,b) with BUILD over the accumulated
// triplets plus `added`, leaving everything outside z in place. Returns the
// root of the new clade, or kNoNode when `added` already held (tree
// untouched). New internal values are placeholders (child means) for the
// caller to resample. `triplets` is not modified.
NodeId IncorporateTriplet(Tree& tree, const TripletSet& triplets, const Triplet& added,
                          SplicePolicy policy = SplicePolicy::kFollowTree);

}  // namespace ibhc
