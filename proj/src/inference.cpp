#include "r3d/inference.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "r3d/parallel.hpp"
#include "r3d/projection.hpp"
#include "r3d/rng.hpp"

namespace r3d {

namespace {

void check_order(int p) {
  if (p < 0 || p > 4) throw ValidationError("polynomial order must lie in [0, 4]");
}

// Horner evaluation of the leading t + 1 coefficients at u = x / h.
double eval_leading(const Eigen::VectorXd& coef, double u, int t) {
  double acc = coef(t);
  for (int j = t - 1; j >= 0; --j) acc = acc * u + coef(j);
  return acc;
}

// Effective numerator bandwidth at each grid point: the per-quantile path for
// the local polynomial estimator, the shared bandwidth for the Frechet one.
Eigen::VectorXd numerator_path(const BandwidthPlan& plan, EstimatorKind method,
                               Eigen::Index m) {
  Eigen::VectorXd h1(m);
  if (method == EstimatorKind::frechet) {
    if (!(plan.h_frechet > 0.0))
      throw ValidationError("shared bandwidth must be positive");
    h1.setConstant(plan.h_frechet);
  } else {
    if (plan.h1.size() != m)
      throw ValidationError("bandwidth plan does not match the grid");
    if (!(plan.h1.minCoeff() > 0.0))
      throw ValidationError("numerator bandwidths must be positive");
    h1 = plan.h1;
  }
  return h1;
}

// (grid x units) multiplier coefficients of one side's process: column i
// holds unit i's loading on each grid point, zero off-side and outside the
// window, so a draw is just tensor * xi.
Eigen::MatrixXd side_tensor(const Eigen::Ref<const Eigen::MatrixXd>& resid,
                            const Eigen::Ref<const Eigen::VectorXd>& xs,
                            const Eigen::Ref<const Eigen::VectorXd>& hk,
                            const KernelSpec& kernel, int p, double f0, Side side) {
  const Eigen::Index n = xs.size();
  const Eigen::Index m = hk.size();
  const Eigen::VectorXd row = intercept_row(kernel, p, side);
  const int top = static_cast<int>(row.size()) - 1;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, n);
  const double dn = static_cast<double>(n);
  for (Eigen::Index q = 0; q < m; ++q) {
    const double h = hk(q);
    const double denom = std::sqrt(dn * h) * f0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!on_side(xs(i), side)) continue;
      const double u = xs(i) / h;
      const double kv = kernel_eval(kernel, u);
      if (kv <= 0.0) continue;
      a(q, i) = eval_leading(row, u, top) * kv * resid(i, q) / denom;
    }
  }
  return a;
}

double p_from_count(Eigen::Index hits, Eigen::Index b, bool add_one) {
  if (add_one) return (static_cast<double>(hits) + 1.0) / (static_cast<double>(b) + 1.0);
  return static_cast<double>(hits) / static_cast<double>(b);
}

// Grid indices falling inside [lo, hi]; NaN endpoints default to the ends.
std::vector<Eigen::Index> sub_indices(const QuantileGrid& grid, double lo, double hi) {
  const Eigen::Index m = grid.points.size();
  if (std::isnan(lo)) lo = grid.points(0);
  if (std::isnan(hi)) hi = grid.points(m - 1);
  std::vector<Eigen::Index> idx;
  for (Eigen::Index j = 0; j < m; ++j) {
    if (grid.points(j) >= lo - 1e-12 && grid.points(j) <= hi + 1e-12) idx.push_back(j);
  }
  if (idx.empty()) throw ValidationError("test subinterval contains no grid points");
  return idx;
}

// Trapezoid average of f over the subinterval spanned by idx.
double trapezoid_mean(const Eigen::VectorXd& qs,
                      const Eigen::Ref<const Eigen::VectorXd>& f,
                      const std::vector<Eigen::Index>& idx) {
  if (idx.size() == 1) return f(idx.front());
  double area = 0.0;
  for (std::size_t j = 1; j < idx.size(); ++j) {
    const double dq = qs(idx[j]) - qs(idx[j - 1]);
    area += 0.5 * dq * (f(idx[j]) + f(idx[j - 1]));
  }
  return area / (qs(idx.back()) - qs(idx.front()));
}

double sup_over(const Eigen::Ref<const Eigen::VectorXd>& f,
                const std::vector<Eigen::Index>& idx) {
  double s = 0.0;
  for (const Eigen::Index j : idx) s = std::max(s, std::abs(f(j)));
  return s;
}

void check_draws_match(const EffectCurve& effect, const BootstrapDraws& draws) {
  if (draws.g.cols() != effect.grid.points.size() ||
      effect.tau.size() != effect.grid.points.size())
    throw ValidationError("bootstrap draws do not match the effect grid");
  if (draws.g.rows() < 1) throw ValidationError("no bootstrap draws");
  if (!(draws.n > 0) || !(draws.h_base > 0.0))
    throw ValidationError("bootstrap draws carry no valid scaling");
}

}  // namespace

ResidualSet residuals(const UnitSample& sample,
                      const Eigen::Ref<const Eigen::MatrixXd>& unit_qf,
                      const QuantileGrid& grid, const BandwidthPlan& plan,
                      int p, int t_order, EstimatorKind method,
                      const KernelSpec& kernel) {
  grid.validate();
  check_order(p);
  if (t_order == -1) t_order = p;
  if (t_order < 0 || t_order > p)
    throw ValidationError("residual fit order must lie in [0, p]");
  const Eigen::Index n = sample.size();
  const Eigen::Index m = grid.points.size();
  if (unit_qf.rows() != n || unit_qf.cols() != m)
    throw ValidationError("quantile matrix does not match sample and grid");

  const Eigen::VectorXd h1 = numerator_path(plan, method, m);
  const Eigen::VectorXd xs = sample.xs();

  ResidualSet res;
  res.mask1.setZero(n, m);
  Eigen::MatrixXd fitted = Eigen::MatrixXd::Zero(n, m);

  double cached_h = 0.0;
  WeightSet wplus, wminus;
  for (Eigen::Index q = 0; q < m; ++q) {
    const double h = h1(q);
    if (h != cached_h) {
      wplus = lp_weights(xs, h, p, Side::plus, kernel);
      wminus = lp_weights(xs, h, p, Side::minus, kernel);
      cached_h = h;
    }
    const Eigen::VectorXd cp = fit_coefficients(wplus, unit_qf.col(q));
    const Eigen::VectorXd cm = fit_coefficients(wminus, unit_qf.col(q));
    for (Eigen::Index i = 0; i < n; ++i) {
      const double u = xs(i) / h;
      if (std::abs(u) > 1.0) continue;
      res.mask1(i, q) = 1.0;
      fitted(i, q) = eval_leading(on_side(xs(i), Side::plus) ? cp : cm, u, t_order);
    }
  }
  if (method == EstimatorKind::frechet) {
    // Mirror the main estimator: each unit's fitted curve becomes a quantile
    // function before differencing. The shared bandwidth makes window
    // membership uniform across the grid, so whole rows are in or out.
    for (Eigen::Index i = 0; i < n; ++i) {
      if (res.mask1(i, 0) <= 0.0) continue;
      fitted.row(i) = isotone_project(fitted.row(i).transpose()).transpose();
    }
  }
  res.e1 = (unit_qf - fitted).cwiseProduct(res.mask1);

  res.e2.setZero(n, m);
  res.mask2.setZero(n);
  bool has_t = n > 0;
  for (const UnitRecord& unit : sample.units) {
    if (!unit.t) {
      has_t = false;
      break;
    }
  }
  if (has_t) {
    if (!(plan.h2 > 0.0))
      throw ValidationError("denominator bandwidth must be positive");
    const double h2 = plan.h2;
    const Eigen::VectorXd ts = sample.treatments();
    const Eigen::VectorXd cp =
        fit_coefficients(lp_weights(xs, h2, p, Side::plus, kernel), ts);
    const Eigen::VectorXd cm =
        fit_coefficients(lp_weights(xs, h2, p, Side::minus, kernel), ts);
    Eigen::VectorXd col = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double u = xs(i) / h2;
      if (std::abs(u) > 1.0) continue;
      res.mask2(i) = 1.0;
      col(i) = ts(i) - eval_leading(on_side(xs(i), Side::plus) ? cp : cm, u, t_order);
    }
    res.e2 = col.replicate(1, m);
  }
  return res;
}

Eigen::VectorXd multiplier_process(const ResidualSet& res,
                                   const Eigen::Ref<const Eigen::VectorXd>& xi,
                                   const Eigen::Ref<const Eigen::VectorXd>& xs,
                                   const Eigen::Ref<const Eigen::VectorXd>& hk,
                                   const KernelSpec& kernel, int p, double f0,
                                   int k, Side side) {
  check_order(p);
  if (k != 1 && k != 2) throw ValidationError("process index must be 1 or 2");
  const Eigen::MatrixXd& resid = k == 1 ? res.e1 : res.e2;
  if (resid.rows() < 1 || resid.cols() < 1)
    throw ValidationError("empty residual set");
  if (xs.size() != resid.rows() || xi.size() != resid.rows())
    throw ValidationError("multipliers and sample do not match the residuals");
  if (hk.size() != resid.cols())
    throw ValidationError("bandwidth path does not match the residual grid");
  if (!(hk.minCoeff() > 0.0)) throw ValidationError("bandwidths must be positive");
  if (!(f0 > 0.0))
    throw ValidationError("density at the cutoff must be positive");
  return side_tensor(resid, xs, hk, kernel, p, f0, side) * xi;
}

BootstrapDraws bootstrap_draws(const UnitSample& sample, const EffectCurve& effect,
                               const ResidualSet& res, const BandwidthPlan& plan,
                               const BootstrapConfig& config) {
  check_order(config.order);
  if (config.draws < 1) throw ValidationError("bootstrap needs at least one draw");
  if (!(config.level > 0.0 && config.level < 1.0))
    throw ValidationError("band level must lie in (0, 1)");
  effect.grid.validate();
  const Eigen::Index n = sample.size();
  const Eigen::Index m = effect.grid.points.size();
  if (effect.tau.size() != m)
    throw ValidationError("effect curve does not match its grid");
  if (res.e1.rows() != n || res.e1.cols() != m)
    throw ValidationError("residuals do not match the sample and grid");
  if (!(plan.density_at_cutoff > 0.0))
    throw ValidationError("density at the cutoff must be positive");

  const Eigen::VectorXd h1 = numerator_path(plan, config.method, m);
  // Baseline for the sqrt(n h) scaling: the shared bandwidth on the Frechet
  // path, the geometric mean of the per-quantile path otherwise.
  const double h_base = config.method == EstimatorKind::frechet
                            ? plan.h_frechet
                            : std::exp(h1.array().log().mean());
  Eigen::VectorXd c1p(m);
  for (Eigen::Index q = 0; q < m; ++q) c1p(q) = std::sqrt(h_base / h1(q));

  const Eigen::VectorXd xs = sample.xs();
  const double f0 = plan.density_at_cutoff;
  const KernelSpec& kern = config.kernel;
  const int p = config.order;
  const Eigen::MatrixXd a1 = side_tensor(res.e1, xs, h1, kern, p, f0, Side::plus) -
                             side_tensor(res.e1, xs, h1, kern, p, f0, Side::minus);

  const bool fuzzy = effect.variant == EffectVariant::fuzzy;
  Eigen::MatrixXd a2;
  Eigen::VectorXd numer;
  double c2p = 0.0;
  double jump = 1.0;
  if (fuzzy) {
    if (!effect.denominator || *effect.denominator == 0.0)
      throw ValidationError("fuzzy inference needs a nonzero first-stage jump");
    if (res.e2.rows() != n || res.e2.cols() != m)
      throw ValidationError("residuals do not match the sample and grid");
    if (!(plan.h2 > 0.0))
      throw ValidationError("denominator bandwidth must be positive");
    jump = *effect.denominator;
    numer = effect.tau * jump;
    c2p = std::sqrt(h_base / plan.h2);
    const Eigen::VectorXd h2v = Eigen::VectorXd::Constant(m, plan.h2);
    a2 = side_tensor(res.e2, xs, h2v, kern, p, f0, Side::plus) -
         side_tensor(res.e2, xs, h2v, kern, p, f0, Side::minus);
  }

  BootstrapDraws out;
  out.g.resize(config.draws, m);
  out.h_base = h_base;
  out.n = n;
  out.add_one = config.add_one;
  const int threads = resolve_threads(config.threads);
  // Multipliers are a pure function of (seed, draw, unit) and every draw owns
  // its row, so the result is identical for any thread count.
  parallel_for(static_cast<std::size_t>(config.draws), threads, [&](std::size_t bi) {
    const Eigen::Index b = static_cast<Eigen::Index>(bi);
    Eigen::VectorXd xi(n);
    for (Eigen::Index i = 0; i < n; ++i)
      xi(i) = multiplier_xi(config.seed, static_cast<std::uint64_t>(bi),
                            static_cast<std::uint64_t>(i));
    const Eigen::VectorXd nu1 = a1 * xi;
    if (!fuzzy) {
      for (Eigen::Index q = 0; q < m; ++q) out.g(b, q) = c1p(q) * nu1(q);
    } else {
      const Eigen::VectorXd nu2 = a2 * xi;
      for (Eigen::Index q = 0; q < m; ++q)
        out.g(b, q) =
            (c1p(q) * jump * nu1(q) - c2p * numer(q) * nu2(q)) / (jump * jump);
    }
  });
  return out;
}

double critical_value(const BootstrapDraws& draws, double level) {
  if (!(level > 0.0 && level < 1.0))
    throw ValidationError("band level must lie in (0, 1)");
  const Eigen::Index b = draws.g.rows();
  if (b < 1) throw ValidationError("no bootstrap draws");
  std::vector<double> sups(static_cast<std::size_t>(b));
  for (Eigen::Index i = 0; i < b; ++i)
    sups[static_cast<std::size_t>(i)] = draws.g.row(i).cwiseAbs().maxCoeff();
  // Slack keeps exact-integer ranks from rounding up a representation error.
  const double rank = std::ceil((1.0 - level) * static_cast<double>(b) - 1e-9);
  const Eigen::Index k =
      std::clamp<Eigen::Index>(static_cast<Eigen::Index>(rank), 1, b);
  std::nth_element(sups.begin(), sups.begin() + (k - 1), sups.end());
  return sups[static_cast<std::size_t>(k - 1)];
}

double test_nullity(const EffectCurve& effect, const BootstrapDraws& draws,
                    double lo, double hi) {
  check_draws_match(effect, draws);
  const std::vector<Eigen::Index> idx = sub_indices(effect.grid, lo, hi);
  const double scale =
      std::sqrt(static_cast<double>(draws.n) * draws.h_base);
  const double stat = scale * sup_over(effect.tau, idx);
  Eigen::Index hits = 0;
  for (Eigen::Index b = 0; b < draws.g.rows(); ++b) {
    if (sup_over(draws.g.row(b).transpose(), idx) >= stat) ++hits;
  }
  return p_from_count(hits, draws.g.rows(), draws.add_one);
}

double test_homogeneity(const EffectCurve& effect, const BootstrapDraws& draws,
                        double lo, double hi) {
  check_draws_match(effect, draws);
  const std::vector<Eigen::Index> idx = sub_indices(effect.grid, lo, hi);
  const double scale =
      std::sqrt(static_cast<double>(draws.n) * draws.h_base);
  const double center = trapezoid_mean(effect.grid.points, effect.tau, idx);
  double dev = 0.0;
  for (const Eigen::Index j : idx)
    dev = std::max(dev, std::abs(effect.tau(j) - center));
  const double stat = scale * dev;
  Eigen::Index hits = 0;
  for (Eigen::Index b = 0; b < draws.g.rows(); ++b) {
    const Eigen::VectorXd row = draws.g.row(b).transpose();
    const double rc = trapezoid_mean(effect.grid.points, row, idx);
    double d = 0.0;
    for (const Eigen::Index j : idx) d = std::max(d, std::abs(row(j) - rc));
    if (d >= stat) ++hits;
  }
  return p_from_count(hits, draws.g.rows(), draws.add_one);
}

InferenceReport bootstrap_bands(const UnitSample& sample, const EffectCurve& effect,
                                const ResidualSet& res, const BandwidthPlan& plan,
                                const BootstrapConfig& config) {
  const BootstrapDraws draws = bootstrap_draws(sample, effect, res, plan, config);
  InferenceReport rep;
  rep.effect = effect;
  rep.critical_value = critical_value(draws, config.level);
  const Eigen::Index m = effect.grid.points.size();
  const Eigen::VectorXd h1 = numerator_path(plan, config.method, m);
  const double dn = static_cast<double>(sample.size());
  rep.band_low.resize(m);
  rep.band_high.resize(m);
  for (Eigen::Index q = 0; q < m; ++q) {
    const double w = rep.critical_value / std::sqrt(dn * h1(q));
    rep.band_low(q) = effect.tau(q) - w;
    rep.band_high(q) = effect.tau(q) + w;
  }
  rep.p_nullity = test_nullity(effect, draws, config.test_lo, config.test_hi);
  rep.p_homogeneity = test_homogeneity(effect, draws, config.test_lo, config.test_hi);
  rep.draws = config.draws;
  rep.level = config.level;
  rep.seed = config.seed;
  rep.h_base = draws.h_base;
  return rep;
}

}  // namespace r3d
