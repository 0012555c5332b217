#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace ibhc {

// ({a,b},c): some cluster holds a and b but not c. The pair is stored with
// a < b so that equal constraints compare equal.
class Triplet {
 public:
  Triplet(int a, int b, int c);

  int a() const { return a_; }
  int b() const { return b_; }
  int c() const { return c_; }
  bool Touches(int leaf) const { return leaf == a_ || leaf == b_ || leaf == c_; }

  friend bool operator==(const Triplet&, const Triplet&) = default;
  friend auto operator<=>(const Triplet&, const Triplet&) = default;

 private:
  int a_;
  int b_;
  int c_;
};

struct TripletHash {
  std::size_t operator()(const Triplet& t) const noexcept {
    std::size_t h = static_cast<std::size_t>(t.a());
    h = h * 0x9e3779b97f4a7c15ULL + static_cast<std::size_t>(t.b());
    h = h * 0x9e3779b97f4a7c15ULL + static_cast<std::size_t>(t.c());
    return h ^ (h >> 29);
  }
};

// Duplicate-free set of triplets that remembers insertion order, so iteration
// is reproducible, plus a per-leaf index of the triplets touching each leaf.
class TripletSet {
 public:
  TripletSet() = default;
  TripletSet(std::initializer_list<Triplet> items);

  // Returns false if the triplet was already present.
  bool Insert(const Triplet& t);
  bool Contains(const Triplet& t) const { return lookup_.contains(t); }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }

  std::span<const Triplet> items() const { return items_; }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  const Triplet& operator[](std::size_t i) const { return items_[i]; }

  // Positions (into items()) of the triplets mentioning `leaf`.
  std::span<const std::size_t> Touching(int leaf) const;

  // True if every triplet of this set is in `other`.
  bool IsSubsetOf(const TripletSet& other) const;

 private:
  std::vector<Triplet> items_;
  std::unordered_set<Triplet, TripletHash> lookup_;
  std::unordered_map<int, std::vector<std::size_t>> by_leaf_;
};

std::ostream& operator<<(std::ostream& os, const Triplet& t);

// Triplet files: one "a b | c" per line, '#' starts a comment.
TripletSet ReadTriplets(std::istream& in);
void WriteTriplets(std::ostream& out, const TripletSet& set);

}  // namespace ibhc
