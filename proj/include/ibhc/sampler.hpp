#pragma once

// Metropolis-Hastings over binary trees with subtree-prune-and-regraft moves
// that never leave the set of trees satisfying the constraint set.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <vector>

#include "ibhc/constraints.hpp"
#include "ibhc/ddt_model.hpp"
#include "ibhc/matrix.hpp"
#include "ibhc/rng.hpp"
#include "ibhc/sample_trace.hpp"
#include "ibhc/tree.hpp"
#include "ibhc/triplet.hpp"

namespace ibhc {

// Distribution of regraft locations for a pruned subtree: the divergence walk
// of SampleAttachLocation conditioned on (a) divergence before the subtree
// root's time and (b) the regrafted tree satisfying every constraint.
//
// Constraints only restrict the walk through a handful of node tests:
//   c pruned, a and b not: the node splitting a from b may not be entered;
//   a pruned, b and c not: nodes holding b and c must be entered, nodes holding
//     c but not b (or neither, once inside lca(b,c)) are off limits.
// Each option of the walk is weighted by the probability that the rest of the
// walk ends somewhere valid, so draws follow the conditioned walk exactly and
// no restarts are needed.
class RegraftDistribution {
 public:
  // `tree` must be the remainder after Detach (the subtree hangs off
  // `joint`, which is not part of it).
  RegraftDistribution(const Tree& tree, NodeId subtree, const TripletSet& constraints,
                      const DdtParams& params);

  // Probability that an unconstrained walk ends at a valid location.
  double mass() const { return total_; }

  AttachLocation Sample(Rng& rng) const;
  bool Allowed(const AttachLocation& loc) const;
  // Log density of `loc`; -infinity for locations the distribution excludes.
  double LogDensity(const AttachLocation& loc) const;

 private:
  enum class Kind : std::uint8_t { kPair, kPartner };
  struct Rule {
    Kind kind;
    int x;  // kPair: a; kPartner: the unpruned pair member
    int y;  // kPair: b; kPartner: c
  };

  double Visit(NodeId v, const std::vector<int>& active);

  const Tree& tree_;
  const DdtParams& params_;
  double ceiling_;
  std::vector<Rule> rules_;
  // Indexed by node id.
  std::vector<double> diverge_;   // probability mass of valid divergence on the branch into v
  std::vector<double> mass_;      // total valid mass of walks reaching v's branch
  std::vector<char> reach_;       // the walk may enter v's branch
  std::vector<char> may_diverge_;
  double total_ = 0.0;
};

enum class LikelihoodMode {
  kCollapsed,     // internal values integrated out
  kInstantiated,  // explicit internal values, moved by Gibbs sweeps
  kFlat,          // likelihood ignored (prior or constraint exploration)
};

struct SamplerOptions {
  LikelihoodMode likelihood = LikelihoodMode::kCollapsed;
  // Accept every proposal; used to explore the constrained state space.
  bool accept_all = false;
  // SPR proposals per iteration.
  int mh_steps_per_iteration = 1;
  // Gibbs sweeps over internal values after each proposal when values are
  // instantiated, once per iteration otherwise.
  int gibbs_sweeps_per_step = 1;
  // Also propose a new time for every internal node after each move.
  bool resample_all_times = false;
  // Re-check every constraint after every step (throws std::logic_error).
  bool check_constraints = false;
  // How a violated new constraint is spliced into the tree.
  SplicePolicy splice = SplicePolicy::kFollowTree;
};

struct StepResult {
  // Of the last proposal.
  bool accepted = false;
  double log_accept_ratio = 0.0;
  // Over the whole iteration.
  int accepted_moves = 0;
};

// One Markov chain: the current tree, its constraints and cached densities.
class Chain {
 public:
  Chain(std::shared_ptr<const Matrix> data, const DdtParams& params, Tree initial,
        std::uint64_t seed, SamplerOptions options = {});

  const Tree& tree() const { return tree_; }
  const TripletSet& constraints() const { return constraints_; }
  const DdtParams& params() const { return params_; }
  const SamplerOptions& options() const { return options_; }
  std::uint64_t iteration() const { return iteration_; }
  Rng& rng() { return rng_; }

  double log_prior() const { return log_prior_; }
  double log_likelihood() const { return log_likelihood_; }
  double log_posterior() const { return log_prior_ + log_likelihood_; }

  // One SPR proposal with its accept/reject decision.
  StepResult MhStep();
  // Redraws every internal value from its Gaussian full conditional, preorder.
  void GibbsInternalValues();
  // Single-node time moves over every internal node.
  void ResampleTimes();
  // The configured MH steps and Gibbs sweeps, then optional time moves.
  StepResult Iterate();

  // Adds a constraint, rebuilding the offending clade when the current tree
  // violates it. Returns false for an exact duplicate. Throws
  // UnrealizableError (state untouched) when the set becomes contradictory.
  bool AddConstraint(const Triplet& t);

  // Collapsed marginal of the leaves, whatever the sampling mode.
  double MarginalLogLikelihood() const;

 private:
  double LikelihoodTerm() const;
  void CheckConstraints() const;
  void Recompute();
  void SetLeafValues();

  std::shared_ptr<const Matrix> data_;
  DdtParams params_;
  Tree tree_;
  TripletSet constraints_;
  SamplerOptions options_;
  Rng rng_;
  std::uint64_t iteration_ = 0;
  double log_prior_ = 0.0;
  double log_likelihood_ = 0.0;
};

struct RunSchedule {
  std::uint64_t iterations = 0;
  // A snapshot enters the trace after every `snapshot_stride` iterations.
  std::uint64_t snapshot_stride = 5;
};

// Called after every iteration with the chain in its new state.
using IterationObserver = std::function<void(const Chain&, const StepResult&)>;

// Runs the schedule, pushing snapshots into `trace`. Returns the per-iteration
// log-posterior series.
std::vector<double> Run(Chain& chain, const RunSchedule& schedule, SampleTrace& trace,
                        const IterationObserver& observer = {});

// One trace line: {"iteration", "log_prior", "log_likelihood", "newick"}.
void WriteTraceRecord(std::ostream& out, std::uint64_t iteration, double log_prior,
                      double log_likelihood, const Tree& tree);

}  // namespace ibhc
