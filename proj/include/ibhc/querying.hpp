#pragma once

// Choosing which leaves to show the user, and simulated users that answer
// from a known target hierarchy.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ibhc/rng.hpp"
#include "ibhc/sample_trace.hpp"
#include "ibhc/tree.hpp"
#include "ibhc/tree_metrics.hpp"
#include "ibhc/triplet.hpp"

namespace ibhc {

enum class SchemeKind { kSimple, kSmart, kRandom, kActive, kInterleaved };

std::string_view SchemeName(SchemeKind kind);
// Throws std::invalid_argument for unknown names.
SchemeKind ParseScheme(std::string_view name);

struct QueryScheme {
  SchemeKind kind = SchemeKind::kInterleaved;
  std::size_t subset_size = 10;
  std::size_t candidates = 20;
  // Interleaved: queries whose index has this parity are random, the others active.
  int random_parity = 0;

  void Validate() const;
};

struct QuerySelection {
  std::vector<int> subset;  // sorted leaf ids
  SchemeKind turn;          // simple, smart, random or active
};

// Picks the leaves for query number `query_index` (0-based). Active turns
// need a nonempty trace; candidates are compared by tree-distance variance
// and the first of equal candidates wins.
QuerySelection SelectQuery(const QueryScheme& scheme, std::size_t query_index,
                           std::span<const int> leaves, const SampleTrace& trace, Rng& rng);

// A triplet of the target that `shown` violates at the highest node where any
// violation occurs (children visited first to last), picked uniformly among
// those at that node. nullopt when `shown` refines the target over its leaves.
// `shown` must be binary.
std::optional<Triplet> SimulatedOracle(const LcaIndex& target, const Tree& shown, Rng& rng);

// The target's triplet over three leaves, if it resolves them.
std::optional<Triplet> SimpleOracle(const LcaIndex& target, int a, int b, int c);

// One line of a query log.
struct QueryRecord {
  std::size_t query_index = 0;
  SchemeKind turn = SchemeKind::kRandom;
  std::vector<int> subset;
  std::optional<Triplet> answer;  // nullopt: the user accepted
};

nlohmann::json ToJson(const QueryRecord& record);
QueryRecord QueryRecordFromJson(const nlohmann::json& j);

}  // namespace ibhc
