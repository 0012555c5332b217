#include "ibhc/sampler.hpp"

#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ibhc/constraints.hpp"
#include "ibhc/newick.hpp"

namespace ibhc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double Hazard(double t, double c) { return t >= 1.0 ? kInf : -c * std::log1p(-t); }

double LogNormalDensity(std::span<const double> x, std::span<const double> mean, double var) {
  double sq = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) sq += (x[d] - mean[d]) * (x[d] - mean[d]);
  return -0.5 * (static_cast<double>(x.size()) * std::log(2.0 * M_PI * var) + sq / var);
}

}  // namespace

RegraftDistribution::RegraftDistribution(const Tree& tree, NodeId subtree,
                                         const TripletSet& constraints, const DdtParams& params)
    : tree_(tree), params_(params), ceiling_(tree.time(subtree)) {
  const LeafSet& pruned = tree.leaf_set(subtree);
  std::vector<char> seen(constraints.size(), 0);
  for (auto leaf = pruned.find_first(); leaf != LeafSet::npos; leaf = pruned.find_next(leaf)) {
    for (std::size_t i : constraints.Touching(static_cast<int>(leaf))) {
      if (seen[i]) continue;
      seen[i] = 1;
      const Triplet& t = constraints[i];
      const bool in_a = pruned.test(t.a());
      const bool in_b = pruned.test(t.b());
      const bool in_c = pruned.test(t.c());
      if (in_c && !in_a && !in_b) {
        rules_.push_back({Kind::kPair, t.a(), t.b()});
      } else if (in_a != in_b && !in_c) {
        rules_.push_back({Kind::kPartner, in_a ? t.b() : t.a(), t.c()});
      } else if (in_c && !(in_a && in_b)) {
        std::ostringstream msg;
        msg << "pruned subtree already violates " << t;
        throw std::logic_error(msg.str());
      }
    }
  }

  const std::size_t cap = tree.capacity();
  diverge_.assign(cap, 0.0);
  mass_.assign(cap, 0.0);
  reach_.assign(cap, 0);
  may_diverge_.assign(cap, 0);
  std::vector<int> all(rules_.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  total_ = Visit(tree.root(), all);
}

double RegraftDistribution::Visit(NodeId v, const std::vector<int>& active) {
  reach_[v.value()] = 1;
  const double tu = tree_.time(tree_.parent(v));
  const double tv = tree_.time(v);
  const double m = tree_.leaf_count(v);

  bool may_diverge = true;
  std::vector<int> passed;
  for (int r : active) {
    const Rule& rule = rules_[r];
    if (rule.kind == Kind::kPair) {
      passed.push_back(r);
      continue;
    }
    const bool has_partner = tree_.Contains(v, rule.x);
    const bool has_c = tree_.Contains(v, rule.y);
    if (has_partner && has_c) {
      may_diverge = false;
      passed.push_back(r);
    } else if (!has_partner) {
      return 0.0;  // every location at or below this branch violates the rule
    }
    // partner without c: anything here or below is fine, rule retires.
  }
  may_diverge_[v.value()] = may_diverge;

  double diverge = 0.0;
  const double top = std::min(tv, ceiling_);
  if (may_diverge && top > tu) {
    const double x = Hazard(top, params_.c) - Hazard(tu, params_.c);
    diverge = -std::expm1(-x / m);
  }

  double descend = 0.0;
  if (!tree_.is_leaf(v) && tv < ceiling_) {
    const double survive = std::exp(-(Hazard(tv, params_.c) - Hazard(tu, params_.c)) / m);
    double inner = 0.0;
    for (NodeId w : tree_.children(v)) {
      std::vector<int> next;
      bool banned = false;
      for (int r : passed) {
        const Rule& rule = rules_[r];
        if (rule.kind == Kind::kPair) {
          const bool ha = tree_.Contains(w, rule.x);
          const bool hb = tree_.Contains(w, rule.y);
          if (ha && hb)
            next.push_back(r);
          else if (ha || hb)
            banned = true;  // w's parent splits the pair
        } else {
          next.push_back(r);
        }
      }
      if (banned) continue;
      inner += tree_.leaf_count(w) / m * Visit(w, next);
    }
    descend = survive * inner;
  }
  diverge_[v.value()] = diverge;
  mass_[v.value()] = diverge + descend;
  return diverge + descend;
}

AttachLocation RegraftDistribution::Sample(Rng& rng) const {
  if (!(total_ > 0.0)) throw std::logic_error("no valid regraft location");
  NodeId v = tree_.root();
  for (;;) {
    const std::size_t id = v.value();
    const double m = tree_.leaf_count(v);
    bool diverge = tree_.is_leaf(v) || rng.Uniform() * mass_[id] < diverge_[id];
    if (!diverge) {
      double weight_sum = 0.0;
      for (NodeId w : tree_.children(v)) weight_sum += tree_.leaf_count(w) * mass_[w.value()];
      if (weight_sum > 0.0) {
        double pick = rng.Uniform() * weight_sum;
        NodeId chosen = kNoNode;
        for (NodeId w : tree_.children(v)) {
          double wt = tree_.leaf_count(w) * mass_[w.value()];
          if (wt <= 0.0) continue;
          chosen = w;
          if (pick < wt) break;
          pick -= wt;
        }
        v = chosen;
        continue;
      }
      diverge = true;
    }
    if (!(diverge_[id] > 0.0)) throw std::logic_error("regraft walk reached a dead end");
    const NodeId u = tree_.parent(v);
    const double tu = tree_.time(u);
    const double top = std::min(tree_.time(v), ceiling_);
    const double x = Hazard(top, params_.c) - Hazard(tu, params_.c);
    const double cap = -std::expm1(-x / m);
    for (;;) {
      const double y = -m * std::log1p(-rng.Uniform() * cap);
      const double t = 1.0 - (1.0 - tu) * std::exp(-y / params_.c);
      if (t > tu && t < top) return {u, v, t};
    }
  }
}

bool RegraftDistribution::Allowed(const AttachLocation& loc) const {
  if (!tree_.live(loc.child) || loc.child.value() >= reach_.size()) return false;
  if (tree_.parent(loc.child) != loc.parent) return false;
  const std::size_t id = loc.child.value();
  return reach_[id] && may_diverge_[id] && loc.time > tree_.time(loc.parent) &&
         loc.time < tree_.time(loc.child) && loc.time < ceiling_;
}

double RegraftDistribution::LogDensity(const AttachLocation& loc) const {
  if (!Allowed(loc)) return -kInf;
  return AttachLogDensity(tree_, loc, params_) - std::log(total_);
}

Chain::Chain(std::shared_ptr<const Matrix> data, const DdtParams& params, Tree initial,
             std::uint64_t seed, SamplerOptions options)
    : data_(std::move(data)), params_(params), tree_(std::move(initial)), options_(options),
      rng_(seed) {
  if (!data_) throw std::invalid_argument("chain needs data");
  params_.dim = data_->cols();
  params_.Validate();
  if (tree_.dim() != data_->cols())
    throw std::invalid_argument("tree value dimension differs from the data");
  if (tree_.LeafCount() != data_->rows())
    throw std::invalid_argument("tree must hold one leaf per data row");
  tree_.Validate(true);
  SetLeafValues();
  // Start internal values at child means, then draw them properly.
  for (NodeId v : tree_.Postorder()) {
    if (tree_.is_leaf(v)) continue;
    auto out = tree_.mutable_value(v);
    std::fill(out.begin(), out.end(), 0.0);
    for (NodeId c : tree_.children(v))
      for (std::size_t d = 0; d < out.size(); ++d) out[d] += 0.5 * tree_.value(c)[d];
  }
  GibbsInternalValues();
  Recompute();
}

void Chain::SetLeafValues() {
  for (int leaf : tree_.Leaves()) {
    auto row = data_->row(leaf);
    auto out = tree_.mutable_value(tree_.LeafNode(leaf));
    std::copy(row.begin(), row.end(), out.begin());
  }
}

double Chain::LikelihoodTerm() const {
  switch (options_.likelihood) {
    case LikelihoodMode::kCollapsed:
      return MarginalLeafLogLik(tree_, *data_, params_);
    case LikelihoodMode::kInstantiated:
      return LogDataLikelihood(tree_, params_);
    case LikelihoodMode::kFlat:
      return 0.0;
  }
  return 0.0;
}

double Chain::MarginalLogLikelihood() const { return MarginalLeafLogLik(tree_, *data_, params_); }

void Chain::Recompute() {
  log_prior_ = LogPrior(tree_, params_);
  log_likelihood_ = LikelihoodTerm();
}

StepResult Chain::MhStep() {
  StepResult result;
  std::vector<NodeId> candidates = tree_.Preorder();
  candidates.erase(candidates.begin());  // the root cannot be pruned
  if (candidates.size() < 2) return result;
  const NodeId s = candidates[rng_.Index(candidates.size())];
  const bool values = options_.likelihood == LikelihoodMode::kInstantiated;

  const NodeId joint = tree_.parent(s);
  std::vector<double> old_value(tree_.value(joint).begin(), tree_.value(joint).end());
  double log_q_reverse = 0.0;
  if (values) {
    ValueConditional cond = NodeValueConditional(tree_, joint, params_);
    log_q_reverse += LogNormalDensity(old_value, cond.mean, cond.variance);
  }

  const double old_posterior = log_posterior();
  const Detachment d = tree_.Detach(s);
  AttachLocation loc;
  double log_q_forward = 0.0;
  {
    RegraftDistribution dist(tree_, s, constraints_, params_);
    const double back = dist.LogDensity({d.grandparent, d.sibling, d.joint_time});
    if (!std::isfinite(back)) {
      tree_.Undo(d);
      throw std::logic_error("current location excluded by the regraft distribution");
    }
    loc = dist.Sample(rng_);
    log_q_reverse += back;
    log_q_forward += dist.LogDensity(loc);
  }
  tree_.Reattach(d.joint, loc.child, loc.time, d.subtree_slot);

  if (values) {
    ValueConditional cond = NodeValueConditional(tree_, joint, params_);
    auto out = tree_.mutable_value(joint);
    for (std::size_t k = 0; k < out.size(); ++k)
      out[k] = cond.mean[k] + std::sqrt(cond.variance) * rng_.Normal();
    log_q_forward += LogNormalDensity(tree_.value(joint), cond.mean, cond.variance);
  }

  const double new_prior = LogPrior(tree_, params_);
  const double new_likelihood = LikelihoodTerm();
  result.log_accept_ratio =
      new_prior + new_likelihood - old_posterior + log_q_reverse - log_q_forward;
  result.accepted = options_.accept_all ||
                    std::log(rng_.UniformOpen()) < result.log_accept_ratio;
  if (result.accepted) {
    log_prior_ = new_prior;
    log_likelihood_ = new_likelihood;
  } else {
    tree_.Undo(d);
    auto out = tree_.mutable_value(joint);
    std::copy(old_value.begin(), old_value.end(), out.begin());
  }
  return result;
}

void Chain::GibbsInternalValues() {
  for (NodeId v : tree_.Preorder()) {
    if (tree_.is_leaf(v)) continue;
    ValueConditional cond = NodeValueConditional(tree_, v, params_);
    const double sd = std::sqrt(cond.variance);
    auto out = tree_.mutable_value(v);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = cond.mean[k] + sd * rng_.Normal();
  }
  if (options_.likelihood == LikelihoodMode::kInstantiated) log_likelihood_ = LikelihoodTerm();
}

void Chain::ResampleTimes() {
  for (NodeId v : tree_.InternalNodes()) {
    const double old_time = tree_.time(v);
    const double lo = tree_.time(tree_.parent(v));
    double hi = 1.0;
    for (NodeId c : tree_.children(v)) hi = std::min(hi, tree_.time(c));
    const double proposed = lo + (hi - lo) * rng_.UniformOpen();
    const double before = log_posterior();
    tree_.set_time(v, proposed);
    const double prior = LogPrior(tree_, params_);
    const double likelihood = LikelihoodTerm();
    if (options_.accept_all || std::log(rng_.UniformOpen()) < prior + likelihood - before) {
      log_prior_ = prior;
      log_likelihood_ = likelihood;
    } else {
      tree_.set_time(v, old_time);
    }
  }
}

StepResult Chain::Iterate() {
  // Values only enter the acceptance ratio when instantiated; otherwise one
  // refresh per iteration is enough.
  const bool values = options_.likelihood == LikelihoodMode::kInstantiated;
  StepResult r;
  int accepted = 0;
  for (int m = 0; m < options_.mh_steps_per_iteration; ++m) {
    r = MhStep();
    accepted += r.accepted;
    if (values)
      for (int k = 0; k < options_.gibbs_sweeps_per_step; ++k) GibbsInternalValues();
    if (options_.check_constraints) CheckConstraints();
  }
  if (!values)
    for (int k = 0; k < options_.gibbs_sweeps_per_step; ++k) GibbsInternalValues();
  if (options_.resample_all_times) ResampleTimes();
  ++iteration_;
  if (options_.check_constraints) CheckConstraints();
  r.accepted_moves = accepted;
  return r;
}

void Chain::CheckConstraints() const {
  if (auto bad = FirstViolation(tree_, constraints_)) {
    std::ostringstream msg;
    msg << "constraint " << *bad << " violated at iteration " << iteration_;
    throw std::logic_error(msg.str());
  }
}

bool Chain::AddConstraint(const Triplet& t) {
  const std::size_t n = data_->rows();
  if (static_cast<std::size_t>(t.c()) >= n || static_cast<std::size_t>(t.b()) >= n)
    throw std::out_of_range("triplet leaf outside the dataset");
  if (constraints_.Contains(t)) return false;
  NodeId fresh = IncorporateTriplet(tree_, constraints_, t, options_.splice);
  constraints_.Insert(t);
  if (fresh.valid()) {
    GibbsInternalValues();
    Recompute();
  }
  return true;
}

std::vector<double> Run(Chain& chain, const RunSchedule& schedule, SampleTrace& trace,
                        const IterationObserver& observer) {
  if (schedule.snapshot_stride == 0) throw std::invalid_argument("snapshot stride must be positive");
  std::vector<double> series;
  series.reserve(schedule.iterations);
  for (std::uint64_t i = 1; i <= schedule.iterations; ++i) {
    StepResult r = chain.Iterate();
    series.push_back(chain.log_posterior());
    if (i % schedule.snapshot_stride == 0)
      trace.Push(MakeSnapshot(chain.tree(), chain.log_posterior(), chain.iteration()));
    if (observer) observer(chain, r);
  }
  return series;
}

void WriteTraceRecord(std::ostream& out, std::uint64_t iteration, double log_prior,
                      double log_likelihood, const Tree& tree) {
  nlohmann::json record = {{"iteration", iteration},
                           {"log_prior", log_prior},
                           {"log_likelihood", log_likelihood},
                           {"newick", ToNewick(tree)}};
  out << record.dump() << '\n';
}

}  // namespace ibhc
