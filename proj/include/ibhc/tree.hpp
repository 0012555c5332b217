#pragma once

// Rooted hierarchy over data-point leaves, stored as an index arena.
//
// Every tree carries a "stem" node at time 0 whose single child is the root of
// the cladogram. Leaves sit at time 1 and carry the dataset index of their
// point. Each node caches the bitmask of leaves below it, so "is leaf x under
// node v" is a single bit test; the masks are kept current by every mutation.
//
// Sampler states are binary. Target trees read from Newick or built from class
// labels may have internal nodes with more than two children.

#include <boost/dynamic_bitset.hpp>

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ibhc {

using LeafSet = boost::dynamic_bitset<std::uint64_t>;

class NodeId {
 public:
  constexpr NodeId() = default;
  constexpr explicit NodeId(std::uint32_t value) : value_(value) {}

  constexpr std::uint32_t value() const { return value_; }
  constexpr bool valid() const { return value_ != kInvalid; }

  friend constexpr bool operator==(NodeId, NodeId) = default;
  friend constexpr auto operator<=>(NodeId, NodeId) = default;

 private:
  static constexpr std::uint32_t kInvalid = 0xffffffffu;
  std::uint32_t value_ = kInvalid;
};

inline constexpr NodeId kNoNode{};

// Positions of a pruned subtree, enough to put it back exactly.
struct Detachment {
  NodeId subtree;       // s
  NodeId joint;         // p, the removed parent; still owns s as its only child
  NodeId sibling;       // s's former sibling, now a child of `grandparent`
  NodeId grandparent;   // p's former parent
  int subtree_slot = 0; // index of s among p's children
  int joint_slot = 0;   // index of p among the grandparent's children
  double joint_time = 0.0;
};

class Tree {
 public:
  Tree() = default;
  // Empty tree (stem only) over leaf ids in [0, universe) with value dimension
  // `dim` (0 for trees without latent values).
  Tree(std::size_t universe, std::size_t dim);

  std::size_t universe() const { return universe_; }
  std::size_t dim() const { return dim_; }

  NodeId stem() const { return stem_; }
  // Root of the cladogram (the stem's child), or kNoNode for an empty tree.
  NodeId root() const;

  bool HasLeaf(int leaf) const;
  NodeId LeafNode(int leaf) const;
  std::size_t LeafCount() const { return leaf_count_; }
  // Sorted leaf ids present in the tree.
  std::vector<int> Leaves() const;
  // Mask of all leaves present.
  const LeafSet& AllLeaves() const;

  NodeId parent(NodeId v) const { return at(v).parent; }
  std::span<const NodeId> children(NodeId v) const { return at(v).children; }
  bool is_leaf(NodeId v) const { return at(v).leaf >= 0; }
  int leaf_id(NodeId v) const { return at(v).leaf; }
  double time(NodeId v) const { return at(v).time; }
  void set_time(NodeId v, double t) { at(v).time = t; }
  const LeafSet& leaf_set(NodeId v) const { return at(v).mask; }
  int leaf_count(NodeId v) const { return at(v).count; }
  bool Contains(NodeId v, int leaf) const { return at(v).mask.test(leaf); }
  // The other child of v's parent. Requires a binary parent.
  NodeId Sibling(NodeId v) const;
  int ChildSlot(NodeId v) const;

  std::span<const double> value(NodeId v) const;
  std::span<double> mutable_value(NodeId v);

  bool IsBinary() const;
  // Live nodes other than the stem.
  std::size_t NodeCount() const { return live_count_ - 1; }
  // Preorder over the cladogram (stem excluded), children in stored order.
  std::vector<NodeId> Preorder() const;
  std::vector<NodeId> Postorder() const;
  std::vector<NodeId> InternalNodes() const;

  // Node with the deepest leaf set containing both leaves.
  NodeId Lca(int a, int b) const;

  // --- construction ---
  NodeId AddLeaf(int leaf, double time = 1.0);
  NodeId AddInternal(double time);
  void AddChild(NodeId parent, NodeId child);
  // Recomputes every cached mask and count from the structure.
  void Refresh();

  // --- editing ---
  // Prunes the subtree rooted at s: its parent p is lifted out and s's sibling
  // takes p's place. p keeps s as its only child until Reattach.
  Detachment Detach(NodeId s);
  // Reinserts the joint p (carrying its subtree) on the branch above v at time
  // t, with the subtree at position `subtree_slot` among p's two children.
  void Reattach(NodeId joint, NodeId v, double t, int subtree_slot);
  // Puts a detachment back exactly where it came from.
  void Undo(const Detachment& d);

  // Replaces the clade below z by `replacement`, whose leaves must equal the
  // leaves of z. Leaf nodes keep their ids; internal nodes are reallocated.
  // Times come from `replacement`. Returns the new clade root.
  NodeId ReplaceClade(NodeId z, const Tree& replacement);

  // Throws std::logic_error describing the first broken invariant.
  void Validate(bool require_binary) const;

  // One past the largest node id ever allocated; sizes per-node side tables.
  std::size_t capacity() const { return nodes_.size(); }

  bool live(NodeId v) const {
    return v.valid() && v.value() < nodes_.size() && nodes_[v.value()].live;
  }

 private:
  struct Node {
    NodeId parent;
    std::vector<NodeId> children;
    double time = 0.0;
    int leaf = -1;
    int count = 0;
    LeafSet mask;
    bool live = false;
  };

  Node& at(NodeId v);
  const Node& at(NodeId v) const;
  NodeId Allocate();
  void Release(NodeId v);
  void AddToAncestors(NodeId from, const LeafSet& mask, int count);
  void RemoveFromAncestors(NodeId from, const LeafSet& mask, int count);
  NodeId CopyClade(const Tree& source, NodeId v);
  void RefreshBelow(NodeId v);

  std::size_t universe_ = 0;
  std::size_t dim_ = 0;
  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<NodeId> free_;
  std::vector<NodeId> leaf_nodes_;
  std::size_t leaf_count_ = 0;
  std::size_t live_count_ = 0;
  NodeId stem_;
};

// Structural equality: same leaves under the same clusters, children unordered.
bool SameTopology(const Tree& a, const Tree& b);
// Canonical string of the topology (children sorted), useful as a map key.
std::string TopologyKey(const Tree& tree);

}  // namespace ibhc
