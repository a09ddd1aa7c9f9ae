#include "r3d/localpoly.hpp"

#include <cmath>
#include <set>

#include <Eigen/Cholesky>

namespace r3d {

namespace {

constexpr int kMaxOrder = 4;

// The Gram solve runs in extended precision: normal equations square the
// conditioning of the window (an order-3 Gram is Hilbert-like, condition
// ~1e4 even in the continuous limit), and the wider mantissa keeps the
// intercept weights accurate near machine precision of double.
using WideMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using WideVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

// Inverse of the (p+1)x(p+1) Gram matrix, Cholesky first, pivoted LDLT as the
// symmetric fallback, plus one Newton-Schulz step to sharpen the inverse on
// poorly conditioned windows.
template <class Mat>
Mat invert_gram(const Mat& m) {
  using Scalar = typename Mat::Scalar;
  const Mat id = Mat::Identity(m.rows(), m.cols());
  Mat inv;
  Eigen::LLT<Mat> llt(m);
  if (llt.info() == Eigen::Success) {
    inv = llt.solve(id);
  } else {
    Eigen::LDLT<Mat> ldlt(m);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw EstimationError("insufficient data in bandwidth window");
    inv = ldlt.solve(id);
  }
  if (!inv.allFinite()) throw EstimationError("insufficient data in bandwidth window");
  inv = inv * (Scalar(2) * id - m * inv);
  if (!inv.allFinite()) throw EstimationError("insufficient data in bandwidth window");
  return inv;
}

}  // namespace

WeightSet lp_weights(const Eigen::Ref<const Eigen::VectorXd>& xs, double h, int p,
                     Side side, const KernelSpec& kernel) {
  if (!(h > 0.0) || !std::isfinite(h)) throw ValidationError("bandwidth must be positive");
  if (p < 0 || p > kMaxOrder)
    throw ValidationError("polynomial order must be between 0 and 4");

  const Eigen::Index n = xs.size();
  WeightSet ws;
  ws.side = side;
  ws.order = p;
  ws.bandwidth = h;
  ws.weights = Eigen::VectorXd::Zero(n);
  ws.coefficient_map = Eigen::MatrixXd::Zero(p + 1, n);

  // Gram matrix sum_i K(u_i) r(u_i) r(u_i)' over in-window same-side units.
  WideMatrix gram = WideMatrix::Zero(p + 1, p + 1);
  WideVector r(p + 1);
  std::set<double> support;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!on_side(xs(i), side)) continue;
    const double u = xs(i) / h;
    const double k = kernel_eval(kernel, u);
    if (!(k > 0.0)) continue;
    support.insert(xs(i));
    r(0) = 1.0L;
    for (int j = 1; j <= p; ++j) r(j) = r(j - 1) * static_cast<long double>(u);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(r, static_cast<long double>(k));
  }
  if (static_cast<int>(support.size()) < p + 1)
    throw EstimationError("insufficient data in bandwidth window");
  gram = gram.selfadjointView<Eigen::Lower>();

  const WideMatrix inv = invert_gram(gram);

  for (Eigen::Index i = 0; i < n; ++i) {
    if (!on_side(xs(i), side)) continue;
    const double u = xs(i) / h;
    const double k = kernel_eval(kernel, u);
    if (!(k > 0.0)) continue;
    r(0) = 1.0L;
    for (int j = 1; j <= p; ++j) r(j) = r(j - 1) * static_cast<long double>(u);
    ws.coefficient_map.col(i) =
        (inv * (static_cast<long double>(k) * r)).cast<double>();
  }
  ws.weights = ws.coefficient_map.row(0);
  if (!ws.weights.allFinite())
    throw EstimationError("insufficient data in bandwidth window");
  return ws;
}

QuantileCurve conditional_mean(const WeightSet& ws,
                               const Eigen::Ref<const Eigen::MatrixXd>& unit_qf,
                               const QuantileGrid& grid) {
  if (unit_qf.rows() != ws.weights.size())
    throw ValidationError("quantile matrix rows must match the weight vector");
  if (unit_qf.cols() != grid.size())
    throw ValidationError("quantile matrix columns must match the grid");
  QuantileCurve out;
  out.grid = grid;
  out.values = unit_qf.transpose() * ws.weights;
  out.monotone = false;  // negative weights can break monotonicity
  return out;
}

QuantileCurve conditional_mean(const WeightSet& ws,
                               const std::vector<QuantileCurve>& qfs) {
  if (qfs.empty()) throw ValidationError("conditional mean needs at least one curve");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(qfs.size()), qfs.front().values.size());
  for (std::size_t i = 0; i < qfs.size(); ++i) {
    require_same_grid(qfs[i].grid, qfs.front().grid);
    m.row(static_cast<Eigen::Index>(i)) = qfs[i].values.transpose();
  }
  return conditional_mean(ws, m, qfs.front().grid);
}

double treatment_share(const WeightSet& ws, const Eigen::Ref<const Eigen::VectorXd>& ts) {
  if (ts.size() != ws.weights.size())
    throw ValidationError("treatment vector must match the weight vector");
  return ws.weights.dot(ts);
}

EffectCurve sharp_effect(const QuantileCurve& m_plus, const QuantileCurve& m_minus) {
  require_same_grid(m_plus.grid, m_minus.grid);
  EffectCurve e;
  e.grid = m_plus.grid;
  e.tau = m_plus.values - m_minus.values;
  e.variant = EffectVariant::sharp;
  return e;
}

EffectCurve fuzzy_effect(const EffectCurve& numerator, double share_plus,
                         double share_minus, double weak_floor) {
  const double jump = share_plus - share_minus;
  if (!(std::abs(jump) > weak_floor))
    throw EstimationError("weak first stage: treatment share jump " +
                          std::to_string(jump));
  EffectCurve e = numerator;
  e.tau /= jump;
  e.variant = EffectVariant::fuzzy;
  e.denominator = jump;
  return e;
}

Eigen::VectorXd fit_coefficients(const WeightSet& ws,
                                 const Eigen::Ref<const Eigen::VectorXd>& responses) {
  if (responses.size() != ws.coefficient_map.cols())
    throw ValidationError("response vector must match the weight vector");
  return ws.coefficient_map * responses;
}

double poly_fit_eval(const WeightSet& ws,
                     const Eigen::Ref<const Eigen::VectorXd>& responses, double x) {
  if (!on_side(x, ws.side))
    throw ValidationError("evaluation point is on the wrong side of the cutoff");
  const Eigen::VectorXd alpha = fit_coefficients(ws, responses);
  const double u = x / ws.bandwidth;
  double value = 0.0;
  for (Eigen::Index j = alpha.size() - 1; j >= 0; --j) value = value * u + alpha(j);
  return value;
}

}  // namespace r3d
