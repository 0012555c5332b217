#include "ibhc/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "ibhc/newick.hpp"
#include "ibhc/rng.hpp"

namespace ibhc {

namespace {

std::string Trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  s = s.substr(b, e - b);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return std::string(s);
}

std::vector<std::string> SplitCsv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') quoted = !quoted;
    if (ch == ',' && !quoted) {
      out.push_back(Trim(cell));
      cell.clear();
    } else {
      cell += ch;
    }
  }
  out.push_back(Trim(cell));
  return out;
}

std::optional<double> ParseNumber(const std::string& cell) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

bool AllDigits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

Dataset ParseDataset(std::istream& in, const LoadOptions& options) {
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (Trim(line).empty()) continue;
    rows.emplace_back(line_no, SplitCsv(line));
  }
  if (rows.empty()) throw DataError("no data rows");
  const std::size_t width = rows.front().second.size();
  for (const auto& [no, cells] : rows)
    if (cells.size() != width)
      throw DataError("line " + std::to_string(no) + ": expected " + std::to_string(width) +
                      " columns, found " + std::to_string(cells.size()));

  bool header = options.header == HeaderMode::kPresent;
  if (options.header == HeaderMode::kAuto) {
    // A header is a first line with some cell that does not parse as a number
    // where the second line does.
    if (rows.size() >= 2)
      for (std::size_t j = 0; j < width; ++j)
        if (!ParseNumber(rows[0].second[j]) && ParseNumber(rows[1].second[j])) header = true;
  }

  std::optional<std::size_t> label;
  if (options.label_column) {
    const std::string& key = *options.label_column;
    if (header) {
      const auto& names = rows.front().second;
      auto it = std::find(names.begin(), names.end(), key);
      if (it != names.end()) label = static_cast<std::size_t>(it - names.begin());
    }
    if (!label && AllDigits(key)) label = std::stoul(key);
    if (!label || *label >= width) throw DataError("label column '" + key + "' not found");
  }

  Dataset out;
  for (std::size_t j = 0; j < width; ++j) {
    if (label && j == *label) continue;
    out.columns.push_back(header ? rows.front().second[j] : "x" + std::to_string(j));
  }
  std::vector<double> values;
  for (std::size_t r = header ? 1 : 0; r < rows.size(); ++r) {
    const auto& [no, cells] = rows[r];
    values.clear();
    for (std::size_t j = 0; j < width; ++j) {
      if (label && j == *label) {
        out.labels.push_back(cells[j]);
        continue;
      }
      auto v = ParseNumber(cells[j]);
      if (!v)
        throw DataError("line " + std::to_string(no) + ", column " + std::to_string(j + 1) +
                        ": not a finite number: '" + cells[j] + "'");
      values.push_back(*v);
    }
    out.features.AppendRow(values);
    out.source_rows.push_back(r - (header ? 1 : 0));
  }
  if (out.features.cols() == 0) throw DataError("no feature columns");

  if (options.subsample > 0 && options.subsample < out.features.rows()) {
    Rng rng(options.seed);
    std::vector<std::size_t> order(out.features.rows());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = 0; i < options.subsample; ++i)
      std::swap(order[i], order[i + rng.Index(order.size() - i)]);
    order.resize(options.subsample);
    std::sort(order.begin(), order.end());
    Matrix kept;
    std::vector<std::string> labels;
    std::vector<std::size_t> source;
    for (std::size_t i : order) {
      kept.AppendRow(out.features.row(i));
      if (!out.labels.empty()) labels.push_back(out.labels[i]);
      source.push_back(out.source_rows[i]);
    }
    out.features = std::move(kept);
    out.labels = std::move(labels);
    out.source_rows = std::move(source);
    out.subsample_seed = options.seed;
  }

  if (options.center) {
    const std::size_t n = out.features.rows();
    for (std::size_t j = 0; j < out.features.cols(); ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += out.features(i, j);
      mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) out.features(i, j) -= mean;
    }
  }
  return out;
}

Dataset LoadDataset(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    Dataset out = ParseDataset(in, options);
    out.source = path;
    return out;
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

Tree TargetFromLabels(const std::vector<std::string>& labels) {
  if (labels.empty()) throw std::invalid_argument("no labels");
  std::vector<std::string> classes;
  std::vector<std::vector<int>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = std::find(classes.begin(), classes.end(), labels[i]);
    std::size_t k = static_cast<std::size_t>(it - classes.begin());
    if (it == classes.end()) {
      classes.push_back(labels[i]);
      members.emplace_back();
    }
    members[k].push_back(static_cast<int>(i));
  }
  if (classes.size() < 2) throw std::invalid_argument("target needs at least two classes");

  Tree tree(labels.size(), 0);
  NodeId root = tree.AddInternal(1.0 / 3.0);
  tree.AddChild(tree.stem(), root);
  for (const auto& group : members) {
    if (group.size() == 1) {
      tree.AddChild(root, tree.AddLeaf(group.front(), 1.0));
      continue;
    }
    NodeId cluster = tree.AddInternal(2.0 / 3.0);
    tree.AddChild(root, cluster);
    for (int leaf : group) tree.AddChild(cluster, tree.AddLeaf(leaf, 1.0));
  }
  return tree;
}

Tree TargetFromNewick(const std::filesystem::path& path, std::size_t n,
                      const std::unordered_map<std::string, int>* names) {
  NewickOptions options;
  options.labels = names;
  options.universe = n;
  Tree tree = ReadNewickFile(path, options);
  if (tree.LeafCount() != n)
    throw DataError("target tree has " + std::to_string(tree.LeafCount()) + " leaves, dataset " +
                    std::to_string(n));
  return tree;
}

Tree AverageLinkage(const Matrix& data) {
  const std::size_t n = data.rows();
  if (n < 1) throw std::invalid_argument("average linkage needs at least one point");
  Tree tree(n, 0);
  if (n == 1) {
    tree.AddChild(tree.stem(), tree.AddLeaf(0, 1.0));
    return tree;
  }

  // dist[i][j] between active clusters; a cluster lives in the slot of its
  // smallest member.
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double sq = 0.0;
      for (std::size_t d = 0; d < data.cols(); ++d) {
        double diff = data(i, d) - data(j, d);
        sq += diff * diff;
      }
      dist[i * n + j] = dist[j * n + i] = std::sqrt(sq);
    }
  std::vector<NodeId> node(n);
  std::vector<std::size_t> size(n, 1);
  std::vector<bool> active(n, true);
  for (std::size_t i = 0; i < n; ++i) node[i] = tree.AddLeaf(static_cast<int>(i), 1.0);

  for (std::size_t k = 1; k < n; ++k) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        if (dist[i * n + j] < best) {
          best = dist[i * n + j];
          bi = i;
          bj = j;
        }
      }
    }
    NodeId merged = tree.AddInternal(1.0 - static_cast<double>(k) / static_cast<double>(n));
    tree.AddChild(merged, node[bi]);
    tree.AddChild(merged, node[bj]);
    for (std::size_t x = 0; x < n; ++x) {
      if (!active[x] || x == bi || x == bj) continue;
      double d = (static_cast<double>(size[bi]) * dist[x * n + bi] +
                  static_cast<double>(size[bj]) * dist[x * n + bj]) /
                 static_cast<double>(size[bi] + size[bj]);
      dist[x * n + bi] = dist[bi * n + x] = d;
    }
    size[bi] += size[bj];
    active[bj] = false;
    node[bi] = merged;
  }
  tree.AddChild(tree.stem(), node[0]);
  return tree;
}

}  // namespace ibhc
