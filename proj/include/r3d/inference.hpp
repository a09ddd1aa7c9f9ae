#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>

#include "r3d/bandwidth.hpp"
#include "r3d/kernels.hpp"
#include "r3d/localpoly.hpp"
#include "r3d/types.hpp"

namespace r3d {

// Estimated residual surfaces feeding the multiplier bootstrap. Every entry
// is exactly zero outside its window mask.
struct ResidualSet {
  Eigen::MatrixXd e1;     // units x grid: quantile residuals at h1(q)
  Eigen::MatrixXd e2;     // units x grid: treatment residuals at h2
  Eigen::MatrixXd mask1;  // 1{|x_i| <= h1(q)}
  Eigen::VectorXd mask2;  // 1{|x_i| <= h2}; zero when no treatment column
};

// Residuals against the main-stage one-sided fits of order p, evaluated at
// each unit's own location. The fit keeps only the leading t_order + 1
// coefficients (t_order = -1 means p). The Frechet path uses the shared
// bandwidth and projects each unit's fitted curve onto the quantile cone
// before differencing; the local polynomial path uses the per-quantile
// bandwidths as is. Treatment residuals appear only when every unit carries
// an indicator, and never vary across the grid.
ResidualSet residuals(const UnitSample& sample,
                      const Eigen::Ref<const Eigen::MatrixXd>& unit_qf,
                      const QuantileGrid& grid, const BandwidthPlan& plan,
                      int p, int t_order, EstimatorKind method,
                      const KernelSpec& kernel);

// One multiplier draw of the one-sided bootstrap process on the grid:
//   nu(q) = sum_i xi_i * row' r_p(x_i/h(q)) K(x_i/h(q)) E(i,q) delta_i
//           / (sqrt(n h(q)) f0)
// with row = intercept_row(kernel, p, side) and E = e1 (k = 1) or e2 (k = 2).
Eigen::VectorXd multiplier_process(const ResidualSet& res,
                                   const Eigen::Ref<const Eigen::VectorXd>& xi,
                                   const Eigen::Ref<const Eigen::VectorXd>& xs,
                                   const Eigen::Ref<const Eigen::VectorXd>& hk,
                                   const KernelSpec& kernel, int p, double f0,
                                   int k, Side side);

struct BootstrapConfig {
  int draws = 5000;       // bootstrap replications B
  double level = 0.10;    // uniform band misses with this probability
  std::uint64_t seed = 1;
  int order = 2;          // main-stage polynomial order p
  KernelSpec kernel;
  EstimatorKind method = EstimatorKind::frechet;
  int threads = 0;        // 0 = R3D_THREADS or hardware
  bool add_one = true;    // p-values as (r + 1) / (B + 1)
  // Test subinterval; NaN endpoints default to the grid ends.
  double test_lo = std::numeric_limits<double>::quiet_NaN();
  double test_hi = std::numeric_limits<double>::quiet_NaN();
};

// B bootstrap processes on the grid, each row one draw of the limit of
// sqrt(n h_base) (tau_hat - tau). h_base is the geometric mean of the
// effective numerator bandwidths (the shared bandwidth itself on the Frechet
// path); the per-quantile scalings sqrt(h_base / h_k(q)) realign the two
// equations to that baseline.
struct BootstrapDraws {
  Eigen::MatrixXd g;  // draws x grid
  double h_base = 0.0;
  Eigen::Index n = 0;
  bool add_one = true;
};

BootstrapDraws bootstrap_draws(const UnitSample& sample, const EffectCurve& effect,
                               const ResidualSet& res, const BandwidthPlan& plan,
                               const BootstrapConfig& config);

// Empirical (1 - level) quantile, index ceil((1 - level) B) - 1 of the sorted
// sup-norm draws.
double critical_value(const BootstrapDraws& draws, double level);

// Sup tests on [lo, hi]: p-value of max sqrt(n h_base) |tau| against the sup
// draws, and of the sup deviation from the trapezoid mean against centered
// draws. Throws ValidationError when no grid point falls inside [lo, hi].
double test_nullity(const EffectCurve& effect, const BootstrapDraws& draws,
                    double lo, double hi);
double test_homogeneity(const EffectCurve& effect, const BootstrapDraws& draws,
                        double lo, double hi);

struct InferenceReport {
  EffectCurve effect;
  Eigen::VectorXd band_low;
  Eigen::VectorXd band_high;
  double critical_value = 0.0;
  double p_nullity = 1.0;
  double p_homogeneity = 1.0;
  int draws = 0;
  double level = 0.0;
  std::uint64_t seed = 0;
  double h_base = 0.0;
};

// Full inference pass: bootstrap draws, critical value, per-quantile band
// tau(q) -+ c / sqrt(n h1(q)), and both sup tests on the configured
// subinterval.
InferenceReport bootstrap_bands(const UnitSample& sample, const EffectCurve& effect,
                                const ResidualSet& res, const BandwidthPlan& plan,
                                const BootstrapConfig& config);

}  // namespace r3d
