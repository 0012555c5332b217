#include "ibhc/newick.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <vector>

namespace ibhc {

namespace {

struct RawNode {
  std::vector<int> children;
  std::string label;
  std::optional<double> length;
  std::size_t offset = 0;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  std::vector<RawNode> Parse() {
    SkipSpace();
    ParseSubtree();
    SkipSpace();
    Expect(';');
    SkipSpace();
    if (pos_ != text_.size()) throw NewickError("trailing characters after ';'", pos_);
    return std::move(nodes_);
  }

 private:
  static bool IsDelimiter(char c) {
    return c == '(' || c == ')' || c == ',' || c == ':' || c == ';' || c == '[' || c == ']' ||
           c == '\'' || std::isspace(static_cast<unsigned char>(c));
  }

  void SkipSpace() {
    for (;;) {
      while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      if (pos_ < text_.size() && text_[pos_] == '[') {
        std::size_t close = text_.find(']', pos_);
        if (close == std::string_view::npos) throw NewickError("unterminated comment", pos_);
        pos_ = close + 1;
        continue;
      }
      return;
    }
  }

  char Peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void Expect(char c) {
    if (Peek() != c) {
      if (pos_ >= text_.size())
        throw NewickError(std::string("unexpected end of input, expected '") + c + "'", pos_);
      throw NewickError(std::string("expected '") + c + "' but found '" + Peek() + "'", pos_);
    }
    ++pos_;
  }

  std::string ParseLabel() {
    SkipSpace();
    if (Peek() == '\'') {
      std::string out;
      ++pos_;
      for (;;) {
        if (pos_ >= text_.size()) throw NewickError("unterminated quoted label", pos_);
        char c = text_[pos_++];
        if (c == '\'') {
          if (Peek() == '\'') {
            out += '\'';
            ++pos_;
            continue;
          }
          return out;
        }
        out += c;
      }
    }
    std::size_t start = pos_;
    while (pos_ < text_.size() && !IsDelimiter(text_[pos_])) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  std::optional<double> ParseLength() {
    SkipSpace();
    if (Peek() != ':') return std::nullopt;
    ++pos_;
    SkipSpace();
    std::size_t start = pos_;
    while (pos_ < text_.size() && !IsDelimiter(text_[pos_])) ++pos_;
    std::string token(text_.substr(start, pos_ - start));
    char* end = nullptr;
    double value = std::strtod(token.c_str(), &end);
    if (token.empty() || end != token.c_str() + token.size())
      throw NewickError("malformed branch length", start);
    return value;
  }

  int ParseSubtree() {
    SkipSpace();
    int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    nodes_[id].offset = pos_;
    if (Peek() == '(') {
      ++pos_;
      for (;;) {
        int child = ParseSubtree();
        nodes_[id].children.push_back(child);
        SkipSpace();
        if (Peek() == ',') {
          ++pos_;
          continue;
        }
        if (Peek() == ')') {
          ++pos_;
          break;
        }
        if (pos_ >= text_.size()) throw NewickError("unexpected end of input", pos_);
        throw NewickError(std::string("expected ',' or ')' but found '") + Peek() + "'", pos_);
      }
      nodes_[id].label = ParseLabel();
    } else {
      std::size_t at = pos_;
      nodes_[id].label = ParseLabel();
      if (nodes_[id].label.empty()) {
        if (pos_ >= text_.size()) throw NewickError("unexpected end of input", pos_);
        throw NewickError(std::string("expected a leaf label but found '") + Peek() + "'", at);
      }
    }
    nodes_[id].length = ParseLength();
    return id;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::vector<RawNode> nodes_;
};

struct Builder {
  const std::vector<RawNode>& raw;
  const NewickOptions& options;
  std::vector<int> leaf_of;  // raw node -> leaf id, -1 for internal

  int ResolveLabel(const RawNode& node) const {
    if (options.labels) {
      auto it = options.labels->find(node.label);
      if (it == options.labels->end())
        throw NewickError("unknown leaf label '" + node.label + "'", node.offset);
      return it->second;
    }
    int value = 0;
    const char* first = node.label.data();
    const char* last = first + node.label.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || value < 0)
      throw NewickError("leaf label '" + node.label + "' is not a dataset index", node.offset);
    return value;
  }

  // Follows single-child chains; returns the effective node and the summed
  // length along the chain (nullopt if any link lacks a length).
  std::pair<int, std::optional<double>> Effective(int id) const {
    std::optional<double> len = raw[id].length;
    while (raw[id].children.size() == 1) {
      id = raw[id].children.front();
      if (len && raw[id].length)
        *len += *raw[id].length;
      else
        len.reset();
    }
    return {id, len};
  }
};

}  // namespace

Tree ParseNewick(std::string_view text, const NewickOptions& options) {
  std::vector<RawNode> raw = Parser(text).Parse();
  Builder b{raw, options, std::vector<int>(raw.size(), -1)};

  int max_leaf = -1;
  std::vector<bool> seen;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!raw[i].children.empty()) continue;
    int leaf = b.ResolveLabel(raw[i]);
    if (static_cast<std::size_t>(leaf) >= seen.size()) seen.resize(leaf + 1, false);
    if (seen[leaf]) throw NewickError("duplicate leaf label '" + raw[i].label + "'", raw[i].offset);
    seen[leaf] = true;
    b.leaf_of[i] = leaf;
    max_leaf = std::max(max_leaf, leaf);
  }
  std::size_t universe = options.universe ? options.universe : static_cast<std::size_t>(max_leaf + 1);
  if (static_cast<std::size_t>(max_leaf) >= universe)
    throw NewickError("leaf index outside the dataset", 0);

  // Decide between branch-length times and depth times.
  struct Item {
    int id;
    double start;  // cumulative length of the parent
    int depth;
  };
  bool use_lengths = true;
  int max_internal_depth = 0;
  std::vector<double> cumulative(raw.size(), 0.0);
  std::vector<int> depth(raw.size(), 0);
  {
    std::vector<Item> stack;
    auto [top, top_len] = b.Effective(0);
    if (!top_len || *top_len <= 0) use_lengths = false;
    stack.push_back({top, top_len.value_or(0.0), 1});
    while (!stack.empty()) {
      Item it = stack.back();
      stack.pop_back();
      cumulative[it.id] = it.start;
      depth[it.id] = it.depth;
      if (raw[it.id].children.empty()) {
        if (std::abs(it.start - 1.0) > 1e-6) use_lengths = false;
        continue;
      }
      max_internal_depth = std::max(max_internal_depth, it.depth);
      for (int c : raw[it.id].children) {
        auto [eff, len] = b.Effective(c);
        if (!len || *len <= 0) use_lengths = false;
        stack.push_back({eff, it.start + len.value_or(0.0), it.depth + 1});
      }
    }
  }

  Tree tree(universe, options.dim);
  auto time_of = [&](int id) {
    if (raw[id].children.empty()) return 1.0;
    if (use_lengths) return cumulative[id];
    return static_cast<double>(depth[id]) / (max_internal_depth + 1);
  };
  // Build top-down.
  std::vector<std::pair<int, NodeId>> stack;
  auto [top, _] = b.Effective(0);
  auto make = [&](int id) {
    return raw[id].children.empty() ? tree.AddLeaf(b.leaf_of[id], 1.0)
                                    : tree.AddInternal(time_of(id));
  };
  NodeId top_node = make(top);
  tree.AddChild(tree.stem(), top_node);
  stack.emplace_back(top, top_node);
  while (!stack.empty()) {
    auto [id, node] = stack.back();
    stack.pop_back();
    for (int c : raw[id].children) {
      int eff = b.Effective(c).first;
      NodeId child = make(eff);
      tree.AddChild(node, child);
      stack.emplace_back(eff, child);
    }
  }
  if (use_lengths) {
    // Lengths must describe strictly increasing times; fall back otherwise.
    try {
      tree.Validate(false);
    } catch (const std::logic_error&) {
      use_lengths = false;
    }
    if (!use_lengths) {
      for (NodeId v : tree.Preorder()) {
        // Recompute depth-based times in place.
        int d = 0;
        for (NodeId x = v; x != tree.root(); x = tree.parent(x)) ++d;
        if (!tree.is_leaf(v)) tree.set_time(v, static_cast<double>(d + 1) / (max_internal_depth + 1));
      }
    }
  }
  return tree;
}

namespace {

std::string QuoteLabel(const std::string& name) {
  bool plain = !name.empty();
  for (char c : name)
    if (c == '(' || c == ')' || c == ',' || c == ':' || c == ';' || c == '[' || c == ']' ||
        c == '\'' || std::isspace(static_cast<unsigned char>(c)))
      plain = false;
  if (plain) return name;
  std::string out = "'";
  for (char c : name) {
    if (c == '\'') out += '\'';
    out += c;
  }
  return out + "'";
}

void FormatLength(std::string& out, double length) {
  char buf[32];
  std::snprintf(buf, sizeof buf, ":%.17g", length);
  out += buf;
}

void Write(const Tree& tree, NodeId v, std::span<const std::string> names, std::string& out) {
  if (tree.is_leaf(v)) {
    int leaf = tree.leaf_id(v);
    if (!names.empty() && static_cast<std::size_t>(leaf) < names.size())
      out += QuoteLabel(names[leaf]);
    else
      out += std::to_string(leaf);
  } else {
    out += '(';
    bool first = true;
    for (NodeId c : tree.children(v)) {
      if (!first) out += ',';
      first = false;
      Write(tree, c, names, out);
    }
    out += ')';
  }
  FormatLength(out, tree.time(v) - tree.time(tree.parent(v)));
}

}  // namespace

std::string ToNewick(const Tree& tree, std::span<const std::string> names) {
  std::string out;
  if (tree.root().valid()) Write(tree, tree.root(), names, out);
  out += ';';
  return out;
}

Tree ReadNewickFile(const std::filesystem::path& path, const NewickOptions& options) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return ParseNewick(buf.str(), options);
}

void WriteNewickFile(const std::filesystem::path& path, const Tree& tree,
                     std::span<const std::string> names) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << ToNewick(tree, names) << '\n';
}

}  // namespace ibhc
