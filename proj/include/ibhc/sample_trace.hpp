#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <span>

#include "ibhc/tree.hpp"
#include "ibhc/tree_metrics.hpp"

namespace ibhc {

// Immutable posterior sample. Safe to share across threads.
struct Snapshot {
  std::shared_ptr<const Tree> tree;
  std::shared_ptr<const LcaIndex> index;
  double log_posterior = 0.0;
  std::uint64_t iteration = 0;
};

Snapshot MakeSnapshot(const Tree& tree, double log_posterior, std::uint64_t iteration);

// Ring buffer of the most recent `capacity` posterior samples.
class SampleTrace {
 public:
  explicit SampleTrace(std::size_t capacity);

  void Push(Snapshot snapshot);
  void Clear() { snapshots_.clear(); }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return snapshots_.size(); }
  bool empty() const { return snapshots_.empty(); }
  const Snapshot& operator[](std::size_t i) const { return snapshots_[i]; }
  const Snapshot& back() const { return snapshots_.back(); }

 private:
  std::size_t capacity_;
  std::deque<Snapshot> snapshots_;
};

// Tree-distance variance: the largest population variance, across the trace,
// of any pair's path length in the subtree induced by `subset`.
double TreeDistanceVariance(const SampleTrace& trace, std::span<const int> subset);

}  // namespace ibhc
