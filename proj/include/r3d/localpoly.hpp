#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "r3d/kernels.hpp"
#include "r3d/types.hpp"

namespace r3d {

// One-sided local polynomial fit at the cutoff, represented by the closed-form
// unit weights plus the full coefficient map of the underlying weighted
// least-squares solve.
struct WeightSet {
  Side side = Side::plus;
  int order = 0;
  double bandwidth = 0.0;
  // Intercept weights s_i, one per unit; zero off-side and outside the window.
  Eigen::VectorXd weights;
  // (p+1) x n map onto polynomial coefficients in the scaled basis u = x/h:
  // alpha = coefficient_map * responses, and coefficient_map.row(0) == weights.
  Eigen::MatrixXd coefficient_map;
};

enum class EffectVariant { sharp, fuzzy };

struct EffectCurve {
  QuantileGrid grid;
  Eigen::VectorXd tau;
  EffectVariant variant = EffectVariant::sharp;
  bool projected = false;
  std::optional<double> denominator;  // fuzzy first-stage jump
};

// Closed-form weights s_i = e0' (X'WX)^{-1} r_p(x_i/h) K(x_i/h) delta_i. Throws
// EstimationError("insufficient data in bandwidth window") when fewer than p+1
// distinct in-window support points exist or the design is singular.
WeightSet lp_weights(const Eigen::Ref<const Eigen::VectorXd>& xs, double h, int p,
                     Side side, const KernelSpec& kernel);

// Weighted sum of unit quantile curves; rows of unit_qf are units aligned with
// the weight vector, columns the grid points.
QuantileCurve conditional_mean(const WeightSet& ws,
                               const Eigen::Ref<const Eigen::MatrixXd>& unit_qf,
                               const QuantileGrid& grid);
QuantileCurve conditional_mean(const WeightSet& ws,
                               const std::vector<QuantileCurve>& qfs);

// Weighted sum of treatment indicators; may leave [0,1] in finite samples.
double treatment_share(const WeightSet& ws, const Eigen::Ref<const Eigen::VectorXd>& ts);

EffectCurve sharp_effect(const QuantileCurve& m_plus, const QuantileCurve& m_minus);

// Wald ratio: numerator tau divided by the treatment-share jump.
EffectCurve fuzzy_effect(const EffectCurve& numerator, double share_plus,
                         double share_minus, double weak_floor = 1e-6);

// Polynomial coefficients (scaled basis) for given responses.
Eigen::VectorXd fit_coefficients(const WeightSet& ws,
                                 const Eigen::Ref<const Eigen::VectorXd>& responses);

// Fitted one-sided polynomial evaluated at x on the matching side.
double poly_fit_eval(const WeightSet& ws,
                     const Eigen::Ref<const Eigen::VectorXd>& responses, double x);

}  // namespace r3d
