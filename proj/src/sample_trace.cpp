#include "ibhc/sample_trace.hpp"

#include <algorithm>
#include <stdexcept>

namespace ibhc {

Snapshot MakeSnapshot(const Tree& tree, double log_posterior, std::uint64_t iteration) {
  auto copy = std::make_shared<const Tree>(tree);
  auto index = std::make_shared<const LcaIndex>(*copy);
  return Snapshot{std::move(copy), std::move(index), log_posterior, iteration};
}

SampleTrace::SampleTrace(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("trace capacity must be positive");
}

void SampleTrace::Push(Snapshot snapshot) {
  if (snapshots_.size() == capacity_) snapshots_.pop_front();
  snapshots_.push_back(std::move(snapshot));
}

double TreeDistanceVariance(const SampleTrace& trace, std::span<const int> subset) {
  if (trace.empty()) throw std::invalid_argument("tree-distance variance of an empty trace");
  if (subset.size() < 2) throw std::invalid_argument("tree-distance variance needs two leaves");
  const std::size_t k = subset.size();
  std::vector<double> sum(k * k, 0.0), sum_sq(k * k, 0.0);
  for (std::size_t s = 0; s < trace.size(); ++s) {
    auto d = InducedPairDistances(*trace[s].index, subset);
    for (std::size_t i = 0; i < k * k; ++i) {
      sum[i] += d[i];
      sum_sq[i] += static_cast<double>(d[i]) * d[i];
    }
  }
  const double m = static_cast<double>(trace.size());
  double best = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      double mean = sum[i * k + j] / m;
      double var = sum_sq[i * k + j] / m - mean * mean;
      best = std::max(best, var);
    }
  return std::max(best, 0.0);
}

}  // namespace ibhc
