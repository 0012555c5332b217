#include "ibhc/ddt_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ibhc {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double Hazard(double t, double c) { return -c * std::log1p(-t); }

// log N(x; mean, var I) summed over dimensions.
double LogNormal(std::span<const double> x, std::span<const double> mean, double var) {
  double sq = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    double diff = x[d] - mean[d];
    sq += diff * diff;
  }
  return -0.5 * (static_cast<double>(x.size()) * (kLog2Pi + std::log(var)) + sq / var);
}

double LogNormalAtOrigin(std::span<const double> x, double var) {
  double sq = 0.0;
  for (double v : x) sq += v * v;
  return -0.5 * (static_cast<double>(x.size()) * (kLog2Pi + std::log(var)) + sq / var);
}

void CheckBranch(const Tree& tree, NodeId v) {
  double tu = tree.time(tree.parent(v));
  double tv = tree.time(v);
  if (!(tv > tu))
    throw std::domain_error("node time " + std::to_string(tv) + " not above parent time " +
                            std::to_string(tu));
}

}  // namespace

void DdtParams::Validate() const {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
    throw std::invalid_argument("sigma2 must be positive");
  if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("c must be positive");
}

double EstimateSigma2(const Matrix& data) {
  if (data.rows() < 2 || data.cols() == 0)
    throw std::invalid_argument("need at least two rows to estimate sigma2");
  double total = 0.0;
  const double n = static_cast<double>(data.rows());
  for (std::size_t d = 0; d < data.cols(); ++d) {
    double mean = 0.0;
    for (std::size_t i = 0; i < data.rows(); ++i) mean += data(i, d);
    mean /= n;
    double ss = 0.0;
    for (std::size_t i = 0; i < data.rows(); ++i) ss += (data(i, d) - mean) * (data(i, d) - mean);
    total += ss / (n - 1.0);
  }
  double s2 = total / static_cast<double>(data.cols());
  if (!(s2 > 0.0)) throw std::invalid_argument("data has zero variance");
  return s2;
}

double Acquisition(double t, const DdtParams& params) {
  if (!(t >= 0.0 && t < 1.0)) throw std::domain_error("acquisition time must be in [0, 1)");
  return params.c / (1.0 - t);
}

double CumulativeHazard(double t, const DdtParams& params) {
  if (!(t >= 0.0 && t < 1.0)) throw std::domain_error("hazard time must be in [0, 1)");
  return Hazard(t, params.c);
}

double LogPrior(const Tree& tree, const DdtParams& params) {
  const std::size_t n = tree.LeafCount();
  std::vector<double> harmonic(n + 1, 0.0);
  for (std::size_t k = 1; k <= n; ++k) harmonic[k] = harmonic[k - 1] + 1.0 / static_cast<double>(k);

  double total = 0.0;
  for (NodeId v : tree.InternalNodes()) {
    auto ch = tree.children(v);
    if (ch.size() != 2) throw std::domain_error("prior needs a binary tree");
    CheckBranch(tree, v);
    const double tv = tree.time(v);
    if (!(tv < 1.0)) throw std::domain_error("internal node time must be below 1");
    const double tu = tree.time(tree.parent(v));
    const int l = tree.leaf_count(ch[0]);
    const int r = tree.leaf_count(ch[1]);
    const int m = l + r;
    total += std::log(params.c) - std::log1p(-tv);
    total += std::lgamma(l) + std::lgamma(r) - std::lgamma(m);
    total -= (Hazard(tv, params.c) - Hazard(tu, params.c)) * harmonic[m - 1];
  }
  return total;
}

double LogDataLikelihood(const Tree& tree, const DdtParams& params) {
  double total = 0.0;
  for (NodeId v : tree.Preorder()) {
    CheckBranch(tree, v);
    NodeId u = tree.parent(v);
    double var = params.sigma2 * (tree.time(v) - tree.time(u));
    if (u == tree.stem())
      total += LogNormalAtOrigin(tree.value(v), var);
    else
      total += LogNormal(tree.value(v), tree.value(u), var);
  }
  return total;
}

double MarginalLeafLogLik(const Tree& tree, const Matrix& data, const DdtParams& params) {
  const std::size_t dim = data.cols();
  if (!tree.root().valid()) return 0.0;
  // Per node: message mean (flat), and variance of the message.
  std::vector<double> mean;
  std::vector<double> var;
  std::vector<std::size_t> slot;
  std::vector<NodeId> order = tree.Postorder();
  std::size_t max_id = 0;
  for (NodeId v : order) max_id = std::max<std::size_t>(max_id, v.value());
  slot.assign(max_id + 1, 0);
  mean.resize(order.size() * dim);
  var.resize(order.size());

  double total = 0.0;
  std::vector<double> acc(dim);
  for (std::size_t k = 0; k < order.size(); ++k) {
    NodeId v = order[k];
    slot[v.value()] = k;
    double* mk = mean.data() + k * dim;
    if (tree.is_leaf(v)) {
      int leaf = tree.leaf_id(v);
      if (static_cast<std::size_t>(leaf) >= data.rows())
        throw std::out_of_range("leaf " + std::to_string(leaf) + " has no data row");
      auto x = data.row(leaf);
      std::copy(x.begin(), x.end(), mk);
      var[k] = 0.0;
      continue;
    }
    const double tv = tree.time(v);
    bool first = true;
    double w_acc = 0.0;
    for (NodeId c : tree.children(v)) {
      std::size_t j = slot[c.value()];
      const double w = var[j] + params.sigma2 * (tree.time(c) - tv);
      const double* mj = mean.data() + j * dim;
      if (first) {
        std::copy(mj, mj + dim, acc.begin());
        w_acc = w;
        first = false;
        continue;
      }
      const double s = w_acc + w;
      total += LogNormal({acc.data(), dim}, {mj, dim}, s);
      for (std::size_t d = 0; d < dim; ++d) acc[d] = (acc[d] * w + mj[d] * w_acc) / s;
      w_acc = w_acc * w / s;
    }
    std::copy(acc.begin(), acc.end(), mk);
    var[k] = w_acc;
  }
  NodeId root = tree.root();
  std::size_t r = slot[root.value()];
  total += LogNormalAtOrigin({mean.data() + r * dim, dim},
                             var[r] + params.sigma2 * tree.time(root));
  return total;
}

AttachLocation SampleAttachLocation(const Tree& tree, const DdtParams& params, Rng& rng,
                                    std::optional<double> time_ceiling) {
  if (!tree.root().valid()) throw std::invalid_argument("cannot attach to an empty tree");
  for (;;) {
    NodeId u = tree.stem();
    NodeId v = tree.root();
    double t = 0.0;
    for (;;) {
      const double m = tree.leaf_count(v);
      const double x = m * rng.Exponential();
      t = 1.0 - (1.0 - tree.time(u)) * std::exp(-x / params.c);
      if (t < tree.time(v)) break;
      auto ch = tree.children(v);
      auto pick = static_cast<double>(rng.Index(static_cast<std::size_t>(m)));
      std::size_t k = 0;
      while (pick >= tree.leaf_count(ch[k])) pick -= tree.leaf_count(ch[k++]);
      u = v;
      v = ch[k];
    }
    if (!(t > tree.time(u))) continue;
    if (time_ceiling && t >= *time_ceiling) continue;
    return {u, v, t};
  }
}

double AttachLogDensity(const Tree& tree, const AttachLocation& loc, const DdtParams& params) {
  if (tree.parent(loc.child) != loc.parent)
    throw std::invalid_argument("attach location is not a branch");
  if (!(loc.time > tree.time(loc.parent) && loc.time < tree.time(loc.child)))
    throw std::domain_error("attach time outside its branch");
  std::vector<NodeId> path;
  for (NodeId v = loc.child; v != tree.stem(); v = tree.parent(v)) path.push_back(v);
  double total = 0.0;
  for (std::size_t i = path.size(); i-- > 1;) {
    NodeId v = path[i];
    const double m = tree.leaf_count(v);
    total -= (Hazard(tree.time(v), params.c) - Hazard(tree.time(tree.parent(v)), params.c)) / m;
    total += std::log(tree.leaf_count(path[i - 1]) / m);
  }
  const double m = tree.leaf_count(loc.child);
  total += std::log(params.c / (1.0 - loc.time) / m);
  total -= (Hazard(loc.time, params.c) - Hazard(tree.time(loc.parent), params.c)) / m;
  return total;
}

NodeId AttachLeaf(Tree& tree, int leaf, const AttachLocation& loc) {
  if (tree.parent(loc.child) != loc.parent)
    throw std::invalid_argument("attach location is not a branch");
  NodeId node = tree.AddLeaf(leaf, 1.0);
  NodeId joint = tree.AddInternal(loc.time);
  tree.AddChild(joint, node);
  tree.Reattach(joint, loc.child, loc.time, 1);
  return joint;
}

Tree SimulatePriorTree(std::span<const int> leaves, std::size_t universe,
                       const DdtParams& params, Rng& rng) {
  if (leaves.empty()) throw std::invalid_argument("need at least one leaf");
  std::vector<int> order(leaves.begin(), leaves.end());
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.Index(i)]);
  Tree tree(universe, params.dim);
  tree.AddChild(tree.stem(), tree.AddLeaf(order.front(), 1.0));
  for (std::size_t i = 1; i < order.size(); ++i)
    AttachLeaf(tree, order[i], SampleAttachLocation(tree, params, rng));
  return tree;
}

void SimulateValues(Tree& tree, const DdtParams& params, Rng& rng) {
  if (tree.dim() == 0) throw std::invalid_argument("tree has no value storage");
  for (NodeId v : tree.Preorder()) {
    NodeId u = tree.parent(v);
    const double sd = std::sqrt(params.sigma2 * (tree.time(v) - tree.time(u)));
    auto out = tree.mutable_value(v);
    for (std::size_t d = 0; d < out.size(); ++d) {
      double base = u == tree.stem() ? 0.0 : tree.value(u)[d];
      out[d] = base + sd * rng.Normal();
    }
  }
}

ValueConditional NodeValueConditional(const Tree& tree, NodeId v, const DdtParams& params) {
  if (tree.is_leaf(v) || v == tree.stem())
    throw std::invalid_argument("value conditional is for internal nodes");
  const std::size_t dim = tree.dim();
  ValueConditional out;
  out.mean.assign(dim, 0.0);
  double precision = 0.0;
  NodeId u = tree.parent(v);
  {
    double w = 1.0 / (params.sigma2 * (tree.time(v) - tree.time(u)));
    precision += w;
    if (u != tree.stem()) {
      auto x = tree.value(u);
      for (std::size_t d = 0; d < dim; ++d) out.mean[d] += w * x[d];
    }
  }
  for (NodeId c : tree.children(v)) {
    double w = 1.0 / (params.sigma2 * (tree.time(c) - tree.time(v)));
    precision += w;
    auto x = tree.value(c);
    for (std::size_t d = 0; d < dim; ++d) out.mean[d] += w * x[d];
  }
  for (double& m : out.mean) m /= precision;
  out.variance = 1.0 / precision;
  return out;
}

}  // namespace ibhc
