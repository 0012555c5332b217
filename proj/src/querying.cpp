#include "ibhc/querying.hpp"

#include <algorithm>
#include <stdexcept>

namespace ibhc {

namespace {

constexpr std::pair<SchemeKind, std::string_view> kNames[] = {
    {SchemeKind::kSimple, "simple"},
    {SchemeKind::kSmart, "smart"},
    {SchemeKind::kRandom, "random"},
    {SchemeKind::kActive, "active"},
    {SchemeKind::kInterleaved, "interleaved"},
};

std::vector<int> RandomSubset(std::span<const int> leaves, std::size_t size, Rng& rng) {
  std::vector<int> pool(leaves.begin(), leaves.end());
  size = std::min(size, pool.size());
  for (std::size_t i = 0; i < size; ++i) std::swap(pool[i], pool[i + rng.Index(pool.size() - i)]);
  pool.resize(size);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<int> LeavesUnder(const Tree& tree, NodeId v) {
  std::vector<int> out;
  const LeafSet& mask = tree.leaf_set(v);
  for (auto i = mask.find_first(); i != LeafSet::npos; i = mask.find_next(i))
    out.push_back(static_cast<int>(i));
  return out;
}

std::optional<Triplet> ViolatedAt(const LcaIndex& target, const Tree& shown, NodeId v, Rng& rng) {
  if (shown.is_leaf(v)) return std::nullopt;
  auto ch = shown.children(v);
  if (ch.size() != 2) throw std::invalid_argument("shown tree must be binary");
  const std::vector<int> left = LeavesUnder(shown, ch[0]);
  const std::vector<int> right = LeavesUnder(shown, ch[1]);
  const std::vector<int> all = LeavesUnder(shown, v);

  // Pairs split here have their LCA at v, so ({a,b},c) is violated exactly
  // when c is also under v.
  std::optional<Triplet> picked;
  std::size_t seen = 0;
  for (int a : left)
    for (int b : right)
      for (int c : all) {
        if (c == a || c == b) continue;
        auto resolved = target.Resolve(a, b, c);
        if (!resolved || resolved->c() != c) continue;
        if (rng.Index(++seen) == 0) picked = *resolved;
      }
  if (picked) return picked;
  for (NodeId w : ch)
    if (auto found = ViolatedAt(target, shown, w, rng)) return found;
  return std::nullopt;
}

}  // namespace

std::string_view SchemeName(SchemeKind kind) {
  for (const auto& [k, name] : kNames)
    if (k == kind) return name;
  return "unknown";
}

SchemeKind ParseScheme(std::string_view name) {
  for (const auto& [k, n] : kNames)
    if (n == name) return k;
  throw std::invalid_argument("unknown query scheme '" + std::string(name) + "'");
}

void QueryScheme::Validate() const {
  if (subset_size < 3) throw std::invalid_argument("subset size must be at least 3");
  if (candidates < 1) throw std::invalid_argument("candidate count must be at least 1");
}

QuerySelection SelectQuery(const QueryScheme& scheme, std::size_t query_index,
                           std::span<const int> leaves, const SampleTrace& trace, Rng& rng) {
  scheme.Validate();
  if (leaves.size() < 3) throw std::invalid_argument("need at least three leaves to query");
  SchemeKind turn = scheme.kind;
  if (turn == SchemeKind::kInterleaved)
    turn = static_cast<int>(query_index % 2) == scheme.random_parity ? SchemeKind::kRandom
                                                                     : SchemeKind::kActive;
  QuerySelection out{{}, turn};
  switch (turn) {
    case SchemeKind::kSimple:
      out.subset = RandomSubset(leaves, 3, rng);
      break;
    case SchemeKind::kSmart:
      out.subset.assign(leaves.begin(), leaves.end());
      std::sort(out.subset.begin(), out.subset.end());
      break;
    case SchemeKind::kRandom:
      out.subset = RandomSubset(leaves, scheme.subset_size, rng);
      break;
    case SchemeKind::kActive: {
      if (trace.empty()) throw std::invalid_argument("active query needs posterior samples");
      double best = -1.0;
      for (std::size_t l = 0; l < scheme.candidates; ++l) {
        std::vector<int> candidate = RandomSubset(leaves, scheme.subset_size, rng);
        double score = TreeDistanceVariance(trace, candidate);
        if (score > best) {
          best = score;
          out.subset = std::move(candidate);
        }
      }
      break;
    }
    case SchemeKind::kInterleaved:
      break;
  }
  return out;
}

std::optional<Triplet> SimulatedOracle(const LcaIndex& target, const Tree& shown, Rng& rng) {
  if (!shown.root().valid()) return std::nullopt;
  for (int leaf : shown.Leaves())
    if (!target.LeafNode(leaf).valid())
      throw std::invalid_argument("shown leaf " + std::to_string(leaf) + " not in target");
  return ViolatedAt(target, shown, shown.root(), rng);
}

std::optional<Triplet> SimpleOracle(const LcaIndex& target, int a, int b, int c) {
  if (a == b || b == c || a == c) throw std::invalid_argument("oracle needs three distinct leaves");
  return target.Resolve(a, b, c);
}

nlohmann::json ToJson(const QueryRecord& record) {
  nlohmann::json j = {{"query_index", record.query_index},
                      {"scheme_turn", SchemeName(record.turn)},
                      {"subset", record.subset}};
  if (record.answer)
    j["answer"] = {record.answer->a(), record.answer->b(), record.answer->c()};
  else
    j["answer"] = "accept";
  return j;
}

QueryRecord QueryRecordFromJson(const nlohmann::json& j) {
  QueryRecord r;
  r.query_index = j.at("query_index").get<std::size_t>();
  r.turn = ParseScheme(j.at("scheme_turn").get<std::string>());
  r.subset = j.at("subset").get<std::vector<int>>();
  const auto& answer = j.at("answer");
  if (answer.is_array()) {
    auto v = answer.get<std::vector<int>>();
    if (v.size() != 3) throw std::invalid_argument("answer must list three leaves");
    r.answer = Triplet(v[0], v[1], v[2]);
  } else if (!answer.is_string() || answer.get<std::string>() != "accept") {
    throw std::invalid_argument("answer must be a triplet or \"accept\"");
  }
  return r;
}

}  // namespace ibhc
