#include "r3d/quantile.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace r3d {

namespace {

// Sorted (value, weight) atoms with tied values pooled.
struct Atoms {
  std::vector<double> value;
  std::vector<double> weight;  // cumulative
  double total = 0.0;
};

Atoms build_atoms(const Eigen::Ref<const Eigen::VectorXd>& draws,
                  const Eigen::Ref<const Eigen::VectorXd>& weights) {
  const Eigen::Index n = draws.size();
  if (n == 0) throw ValidationError("empirical quantile needs at least one draw");
  const bool weighted = weights.size() != 0;
  if (weighted && weights.size() != n)
    throw ValidationError("draws and weights must have equal length");

  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](int a, int b) { return draws(a) < draws(b); });

  Atoms at;
  at.value.reserve(idx.size());
  at.weight.reserve(idx.size());
  double cum = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double v = draws(idx[k]);
    const double w = weighted ? weights(idx[k]) : 1.0;
    if (w < 0.0) throw ValidationError("negative sampling weight");
    cum += w;
    if (!at.value.empty() && at.value.back() == v) {
      at.weight.back() = cum;  // pool ties into one atom
    } else {
      at.value.push_back(v);
      at.weight.push_back(cum);
    }
  }
  at.total = cum;
  if (!(at.total > 0.0)) throw ValidationError("sampling weights sum to zero");
  return at;
}

}  // namespace

Eigen::VectorXd empirical_quantiles(const Eigen::Ref<const Eigen::VectorXd>& draws,
                                    const Eigen::Ref<const Eigen::VectorXd>& weights,
                                    const Eigen::Ref<const Eigen::VectorXd>& probs) {
  const Atoms at = build_atoms(draws, weights);
  Eigen::VectorXd out(probs.size());
  std::size_t k = 0;
  for (Eigen::Index j = 0; j < probs.size(); ++j) {
    if (j > 0 && probs(j) < probs(j - 1)) k = 0;  // tolerate non-sorted probes
    const double target = probs(j) * at.total;
    while (k + 1 < at.value.size() && at.weight[k] < target) ++k;
    out(j) = at.value[k];
  }
  return out;
}

QuantileCurve empirical_qf(const Eigen::Ref<const Eigen::VectorXd>& draws,
                           const Eigen::Ref<const Eigen::VectorXd>& weights,
                           const QuantileGrid& grid) {
  QuantileCurve curve;
  curve.grid = grid;
  curve.values = empirical_quantiles(draws, weights, grid.points);
  curve.monotone = true;
  return curve;
}

QuantileCurve empirical_qf(const UnitRecord& unit, const QuantileGrid& grid) {
  return empirical_qf(unit.draws, unit.weights, grid);
}

Eigen::MatrixXd unit_quantile_matrix(const UnitSample& sample, const QuantileGrid& grid) {
  Eigen::MatrixXd q(sample.size(), grid.size());
  for (int i = 0; i < sample.size(); ++i)
    q.row(i) = empirical_quantiles(sample.units[i].draws, sample.units[i].weights,
                                   grid.points)
                   .transpose();
  return q;
}

Eigen::VectorXd winsorize(const Eigen::Ref<const Eigen::VectorXd>& draws,
                          const Eigen::Ref<const Eigen::VectorXd>& weights,
                          double upper) {
  if (!(upper > 0.0 && upper <= 1.0))
    throw ValidationError("winsorize level must be in (0, 1]");
  Eigen::VectorXd probs(1);
  probs(0) = upper;
  const double cap = empirical_quantiles(draws, weights, probs)(0);
  return draws.cwiseMin(cap);
}

Eigen::VectorXd winsorize(const Eigen::Ref<const Eigen::VectorXd>& draws, double upper) {
  return winsorize(draws, Eigen::VectorXd(), upper);
}

}  // namespace r3d
