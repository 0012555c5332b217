#include "ibhc/tree.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace ibhc {

Tree::Tree(std::size_t universe, std::size_t dim) : universe_(universe), dim_(dim) {
  leaf_nodes_.assign(universe, kNoNode);
  stem_ = Allocate();
  at(stem_).time = 0.0;
}

Tree::Node& Tree::at(NodeId v) {
  if (!live(v)) throw std::out_of_range("stale or invalid node id");
  return nodes_[v.value()];
}

const Tree::Node& Tree::at(NodeId v) const {
  if (!live(v)) throw std::out_of_range("stale or invalid node id");
  return nodes_[v.value()];
}

NodeId Tree::Allocate() {
  NodeId id;
  if (!free_.empty()) {
    id = free_.back();
    free_.pop_back();
  } else {
    id = NodeId(static_cast<std::uint32_t>(nodes_.size()));
    nodes_.emplace_back();
    values_.resize(nodes_.size() * dim_, 0.0);
  }
  Node& node = nodes_[id.value()];
  node = Node{};
  node.mask.resize(universe_);
  node.live = true;
  std::fill_n(values_.begin() + static_cast<std::ptrdiff_t>(id.value() * dim_), dim_, 0.0);
  ++live_count_;
  return id;
}

void Tree::Release(NodeId v) {
  Node& node = at(v);
  if (node.leaf >= 0) {
    leaf_nodes_[node.leaf] = kNoNode;
    --leaf_count_;
  }
  node.live = false;
  node.children.clear();
  node.parent = kNoNode;
  free_.push_back(v);
  --live_count_;
}

NodeId Tree::root() const {
  const Node& s = at(stem_);
  return s.children.empty() ? kNoNode : s.children.front();
}

bool Tree::HasLeaf(int leaf) const {
  return leaf >= 0 && static_cast<std::size_t>(leaf) < universe_ &&
         leaf_nodes_[leaf].valid();
}

NodeId Tree::LeafNode(int leaf) const {
  if (!HasLeaf(leaf)) throw std::invalid_argument("unknown leaf " + std::to_string(leaf));
  return leaf_nodes_[leaf];
}

std::vector<int> Tree::Leaves() const {
  std::vector<int> out;
  out.reserve(leaf_count_);
  for (std::size_t i = 0; i < universe_; ++i)
    if (leaf_nodes_[i].valid()) out.push_back(static_cast<int>(i));
  return out;
}

const LeafSet& Tree::AllLeaves() const { return at(stem_).mask; }

NodeId Tree::Sibling(NodeId v) const {
  const Node& p = at(at(v).parent);
  if (p.children.size() != 2) throw std::logic_error("sibling of a non-binary child");
  return p.children[0] == v ? p.children[1] : p.children[0];
}

int Tree::ChildSlot(NodeId v) const {
  const Node& p = at(at(v).parent);
  auto it = std::find(p.children.begin(), p.children.end(), v);
  return static_cast<int>(it - p.children.begin());
}

std::span<const double> Tree::value(NodeId v) const {
  at(v);
  return {values_.data() + v.value() * dim_, dim_};
}

std::span<double> Tree::mutable_value(NodeId v) {
  at(v);
  return {values_.data() + v.value() * dim_, dim_};
}

bool Tree::IsBinary() const {
  for (NodeId v : Preorder()) {
    auto n = at(v).children.size();
    if (n != 0 && n != 2) return false;
  }
  return true;
}

std::vector<NodeId> Tree::Preorder() const {
  std::vector<NodeId> out;
  NodeId r = root();
  if (!r.valid()) return out;
  out.reserve(live_count_);
  std::vector<NodeId> stack{r};
  while (!stack.empty()) {
    NodeId v = stack.back();
    stack.pop_back();
    out.push_back(v);
    const auto& ch = at(v).children;
    for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

std::vector<NodeId> Tree::Postorder() const {
  // Reverse of a preorder that visits children right-to-left.
  std::vector<NodeId> out;
  NodeId r = root();
  if (!r.valid()) return out;
  std::vector<NodeId> stack{r};
  while (!stack.empty()) {
    NodeId v = stack.back();
    stack.pop_back();
    out.push_back(v);
    for (NodeId c : at(v).children) stack.push_back(c);
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<NodeId> Tree::InternalNodes() const {
  std::vector<NodeId> out;
  for (NodeId v : Preorder())
    if (!is_leaf(v)) out.push_back(v);
  return out;
}

NodeId Tree::Lca(int a, int b) const {
  NodeId v = LeafNode(a);
  LeafNode(b);
  while (!at(v).mask.test(b)) v = at(v).parent;
  return v;
}

NodeId Tree::AddLeaf(int leaf, double time) {
  if (leaf < 0 || static_cast<std::size_t>(leaf) >= universe_)
    throw std::invalid_argument("leaf id " + std::to_string(leaf) + " outside universe");
  if (leaf_nodes_[leaf].valid())
    throw std::invalid_argument("duplicate leaf " + std::to_string(leaf));
  NodeId v = Allocate();
  Node& node = at(v);
  node.leaf = leaf;
  node.time = time;
  node.count = 1;
  node.mask.set(leaf);
  leaf_nodes_[leaf] = v;
  ++leaf_count_;
  return v;
}

NodeId Tree::AddInternal(double time) {
  NodeId v = Allocate();
  at(v).time = time;
  return v;
}

void Tree::AddChild(NodeId parent, NodeId child) {
  Node& p = at(parent);
  if (p.leaf >= 0) throw std::logic_error("cannot add a child to a leaf");
  if (parent == stem_ && !p.children.empty())
    throw std::logic_error("stem already has a child");
  if (at(child).parent.valid()) throw std::logic_error("child already attached");
  p.children.push_back(child);
  at(child).parent = parent;
  AddToAncestors(parent, at(child).mask, at(child).count);
}

void Tree::AddToAncestors(NodeId from, const LeafSet& mask, int count) {
  for (NodeId v = from; v.valid(); v = nodes_[v.value()].parent) {
    Node& n = nodes_[v.value()];
    n.mask |= mask;
    n.count += count;
  }
}

void Tree::RemoveFromAncestors(NodeId from, const LeafSet& mask, int count) {
  for (NodeId v = from; v.valid(); v = nodes_[v.value()].parent) {
    Node& n = nodes_[v.value()];
    n.mask -= mask;
    n.count -= count;
  }
}

void Tree::RefreshBelow(NodeId v) {
  Node& n = at(v);
  if (n.leaf >= 0) {
    n.mask.reset();
    n.mask.set(n.leaf);
    n.count = 1;
    return;
  }
  n.mask.reset();
  n.count = 0;
  for (NodeId c : n.children) {
    RefreshBelow(c);
    n.mask |= nodes_[c.value()].mask;
    n.count += nodes_[c.value()].count;
  }
}

void Tree::Refresh() { RefreshBelow(stem_); }

Detachment Tree::Detach(NodeId s) {
  if (s == stem_ || !at(s).parent.valid() || at(s).parent == stem_)
    throw std::invalid_argument("cannot prune the root or the stem");
  Detachment d;
  d.subtree = s;
  d.joint = at(s).parent;
  Node& p = at(d.joint);
  if (p.children.size() != 2) throw std::logic_error("prune requires a binary parent");
  d.subtree_slot = p.children[0] == s ? 0 : 1;
  d.sibling = p.children[1 - d.subtree_slot];
  d.grandparent = p.parent;
  d.joint_time = p.time;
  d.joint_slot = ChildSlot(d.joint);

  at(d.grandparent).children[d.joint_slot] = d.sibling;
  at(d.sibling).parent = d.grandparent;
  p.children.assign(1, s);
  p.parent = kNoNode;
  const Node& sub = at(s);
  RemoveFromAncestors(d.grandparent, sub.mask, sub.count);
  p.mask = sub.mask;
  p.count = sub.count;
  return d;
}

void Tree::Reattach(NodeId joint, NodeId v, double t, int subtree_slot) {
  Node& p = at(joint);
  if (p.parent.valid() || p.children.size() != 1)
    throw std::logic_error("reattach expects a detached joint");
  NodeId u = at(v).parent;
  if (!u.valid()) throw std::invalid_argument("regraft branch has no parent");
  NodeId s = p.children.front();
  if (at(v).mask.intersects(at(s).mask))
    throw std::invalid_argument("regraft location inside the pruned subtree");
  int slot = ChildSlot(v);
  at(u).children[slot] = joint;
  p.parent = u;
  at(v).parent = joint;
  if (subtree_slot == 0)
    p.children.push_back(v);
  else
    p.children.insert(p.children.begin(), v);
  p.time = t;
  const Node& vn = at(v);
  p.mask |= vn.mask;
  p.count += vn.count;
  const Node& sub = at(s);
  AddToAncestors(u, sub.mask, sub.count);
}

void Tree::Undo(const Detachment& d) {
  if (at(d.joint).parent.valid()) Detach(d.subtree);
  Reattach(d.joint, d.sibling, d.joint_time, d.subtree_slot);
}

NodeId Tree::CopyClade(const Tree& source, NodeId v) {
  if (source.is_leaf(v)) {
    NodeId leaf = LeafNode(source.leaf_id(v));
    Node& n = at(leaf);
    n.parent = kNoNode;
    return leaf;
  }
  NodeId copy = AddInternal(source.time(v));
  for (NodeId c : source.children(v)) {
    NodeId cc = CopyClade(source, c);
    at(copy).children.push_back(cc);
    at(cc).parent = copy;
    at(copy).mask |= at(cc).mask;
    at(copy).count += at(cc).count;
  }
  return copy;
}

NodeId Tree::ReplaceClade(NodeId z, const Tree& replacement) {
  const LeafSet& target = at(z).mask;
  std::vector<int> want = replacement.Leaves();
  if (static_cast<int>(want.size()) != at(z).count)
    throw std::invalid_argument("replacement leaf set differs from clade");
  for (int leaf : want)
    if (!HasLeaf(leaf) || !target.test(leaf))
      throw std::invalid_argument("replacement leaf set differs from clade");
  if (at(z).leaf >= 0) return z;

  NodeId u = at(z).parent;
  int slot = ChildSlot(z);
  // Release internal nodes of the old clade, keeping leaves.
  std::vector<NodeId> stack{z};
  while (!stack.empty()) {
    NodeId v = stack.back();
    stack.pop_back();
    for (NodeId c : at(v).children) stack.push_back(c);
    if (at(v).leaf < 0) Release(v);
  }
  NodeId fresh = CopyClade(replacement, replacement.root());
  at(u).children[slot] = fresh;
  at(fresh).parent = u;
  return fresh;
}

void Tree::Validate(bool require_binary) const {
  auto fail = [](const std::string& what) { throw std::logic_error("invalid tree: " + what); };
  const Node& s = at(stem_);
  if (s.time != 0.0) fail("stem time must be 0");
  if (s.children.size() > 1) fail("stem has more than one child");
  std::size_t seen_leaves = 0;
  std::size_t seen_nodes = 1;
  for (NodeId v : Preorder()) {
    ++seen_nodes;
    const Node& n = at(v);
    const Node& p = at(n.parent);
    if (std::find(p.children.begin(), p.children.end(), v) == p.children.end())
      fail("parent does not list child");
    if (!(n.time > p.time)) fail("time does not increase from parent to child");
    if (n.leaf >= 0) {
      ++seen_leaves;
      if (!n.children.empty()) fail("leaf with children");
      if (n.time != 1.0) fail("leaf time must be 1");
      if (leaf_nodes_[n.leaf] != v) fail("leaf map out of date");
      if (n.count != 1 || n.mask.count() != 1 || !n.mask.test(n.leaf)) fail("leaf mask");
      continue;
    }
    if (n.children.size() < 2) fail("internal node with fewer than two children");
    if (require_binary && n.children.size() != 2) fail("non-binary internal node");
    if (!(n.time < 1.0)) fail("internal time must be below 1");
    LeafSet m(universe_);
    int c = 0;
    for (NodeId ch : n.children) {
      if (at(ch).parent != v) fail("child does not point back to parent");
      m |= at(ch).mask;
      c += at(ch).count;
    }
    if (m != n.mask || c != n.count || static_cast<int>(m.count()) != c) fail("stale leaf mask");
  }
  if (seen_leaves != leaf_count_) fail("unreachable leaves");
  if (seen_nodes != live_count_) fail("unreachable nodes");
  if (root().valid() && (s.mask != at(root()).mask)) fail("stem mask");
}

namespace {

std::string KeyOf(const Tree& tree, NodeId v) {
  if (tree.is_leaf(v)) return std::to_string(tree.leaf_id(v));
  std::vector<std::string> parts;
  for (NodeId c : tree.children(v)) parts.push_back(KeyOf(tree, c));
  std::sort(parts.begin(), parts.end());
  std::string out = "(";
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ',';
    out += parts[i];
  }
  return out + ")";
}

}  // namespace

std::string TopologyKey(const Tree& tree) {
  NodeId r = tree.root();
  return r.valid() ? KeyOf(tree, r) : std::string();
}

bool SameTopology(const Tree& a, const Tree& b) { return TopologyKey(a) == TopologyKey(b); }

}  // namespace ibhc
