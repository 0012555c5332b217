#pragma once

// Dirichlet diffusion tree with acquisition function a(t) = c / (1 - t).
//
// A point follows earlier paths from the origin at t = 0, diverging from a
// branch traversed by m earlier points with hazard a(t) / m, and picking a
// child at each node with probability proportional to the points that went
// that way. After diverging it moves by independent Brownian motion with
// variance sigma2 per unit time until t = 1.

#include <optional>
#include <span>
#include <vector>

#include "ibhc/matrix.hpp"
#include "ibhc/rng.hpp"
#include "ibhc/tree.hpp"

namespace ibhc {

struct DdtParams {
  double sigma2 = 1.0;  // Brownian variance per unit time, per dimension
  double c = 1.0;       // acquisition scale
  std::size_t dim = 1;

  void Validate() const;
};

// Mean over dimensions of the per-dimension sample variance.
double EstimateSigma2(const Matrix& data);

double Acquisition(double t, const DdtParams& params);
// A(t) = -c log(1 - t). Throws for t outside [0, 1).
double CumulativeHazard(double t, const DdtParams& params);

// Log density of structure and divergence times. Requires a binary tree.
double LogPrior(const Tree& tree, const DdtParams& params);

// Brownian log density of every node value given its parent's, with the stem
// pinned at the origin.
double LogDataLikelihood(const Tree& tree, const DdtParams& params);

// Log density of the leaves (row i of `data` for leaf i) with internal values
// integrated out, by upward Gaussian message passing.
double MarginalLeafLogLik(const Tree& tree, const Matrix& data, const DdtParams& params);

// A point on the branch parent -> child at time t, strictly inside the branch.
struct AttachLocation {
  NodeId parent;
  NodeId child;
  double time = 0.0;
};

// Simulates where a new point would diverge. With a ceiling, walks whose
// divergence time is at or above it are discarded and the walk restarts.
AttachLocation SampleAttachLocation(const Tree& tree, const DdtParams& params, Rng& rng,
                                    std::optional<double> time_ceiling = std::nullopt);

// Log density of `loc` under the (unrestricted) divergence walk.
double AttachLogDensity(const Tree& tree, const AttachLocation& loc, const DdtParams& params);

// Inserts a new leaf at `loc`; the new internal node is returned.
NodeId AttachLeaf(Tree& tree, int leaf, const AttachLocation& loc);

// Sequential prior simulation over the given leaves, in random order.
Tree SimulatePriorTree(std::span<const int> leaves, std::size_t universe,
                       const DdtParams& params, Rng& rng);

// Draws every node value by Brownian motion down the tree (leaves included).
void SimulateValues(Tree& tree, const DdtParams& params, Rng& rng);

// Gaussian full conditional of an internal node's value given its neighbors.
struct ValueConditional {
  std::vector<double> mean;
  double variance = 0.0;
};
ValueConditional NodeValueConditional(const Tree& tree, NodeId v, const DdtParams& params);

}  // namespace ibhc
