#include "ibhc/triplet.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace ibhc {

Triplet::Triplet(int a, int b, int c) : a_(std::min(a, b)), b_(std::max(a, b)), c_(c) {
  if (a == b || a == c || b == c)
    throw std::invalid_argument("triplet leaves must be distinct");
  if (a < 0 || b < 0 || c < 0) throw std::invalid_argument("triplet leaves must be >= 0");
}

TripletSet::TripletSet(std::initializer_list<Triplet> items) {
  for (const auto& t : items) Insert(t);
}

bool TripletSet::Insert(const Triplet& t) {
  if (!lookup_.insert(t).second) return false;
  std::size_t pos = items_.size();
  items_.push_back(t);
  by_leaf_[t.a()].push_back(pos);
  by_leaf_[t.b()].push_back(pos);
  by_leaf_[t.c()].push_back(pos);
  return true;
}

std::span<const std::size_t> TripletSet::Touching(int leaf) const {
  auto it = by_leaf_.find(leaf);
  if (it == by_leaf_.end()) return {};
  return it->second;
}

bool TripletSet::IsSubsetOf(const TripletSet& other) const {
  return std::all_of(items_.begin(), items_.end(),
                     [&](const Triplet& t) { return other.Contains(t); });
}

std::ostream& operator<<(std::ostream& os, const Triplet& t) {
  return os << "({" << t.a() << "," << t.b() << "}," << t.c() << ")";
}

TripletSet ReadTriplets(std::istream& in) {
  TripletSet out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto bar = line.find('|');
    if (bar == std::string::npos)
      throw std::runtime_error("triplet line " + std::to_string(line_no) + ": missing '|'");
    std::istringstream pair(line.substr(0, bar));
    std::istringstream out_group(line.substr(bar + 1));
    int a, b, c;
    std::string extra;
    if (!(pair >> a >> b) || (pair >> extra) || !(out_group >> c) || (out_group >> extra))
      throw std::runtime_error("triplet line " + std::to_string(line_no) +
                               ": expected \"a b | c\"");
    out.Insert(Triplet(a, b, c));
  }
  return out;
}

void WriteTriplets(std::ostream& out, const TripletSet& set) {
  for (const auto& t : set) out << t.a() << ' ' << t.b() << " | " << t.c() << '\n';
}

}  // namespace ibhc
