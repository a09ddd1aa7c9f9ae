#include "r3d/estimate.hpp"

#include <chrono>
#include <cmath>

#include "r3d/projection.hpp"
#include "r3d/quantile.hpp"

namespace r3d {

namespace {

double seconds_since(std::chrono::steady_clock::time_point& mark) {
  const auto now = std::chrono::steady_clock::now();
  const double dt = std::chrono::duration<double>(now - mark).count();
  mark = now;
  return dt;
}

}  // namespace

EstimateResult estimate(const UnitSample& sample, const EstimateConfig& config) {
  EstimateConfig cfg = config;
  if (cfg.grid.points.size() == 0) cfg.grid = default_grid();
  cfg.grid.validate();
  if (cfg.order < 1 || cfg.order > 4)
    throw ValidationError("estimation order must lie in [1, 4]");
  const int s = cfg.pilot_order == -1 ? cfg.order - 1 : cfg.pilot_order;
  if (cfg.bandwidth < 0.0 || cfg.bandwidth2 < 0.0)
    throw ValidationError("bandwidth overrides must be positive");
  if (cfg.draws < 0) throw ValidationError("bootstrap draw count must be nonnegative");
  sample.validate(cfg.fuzzy);

  const auto start = std::chrono::steady_clock::now();
  auto mark = start;
  EstimateResult out;

  const Eigen::MatrixXd qf = unit_quantile_matrix(sample, cfg.grid);
  out.timings.quantiles = seconds_since(mark);

  const Eigen::VectorXd xs = sample.xs();
  const Eigen::Index m = cfg.grid.points.size();
  if (cfg.bandwidth > 0.0) {
    out.plan.h1 = Eigen::VectorXd::Constant(m, cfg.bandwidth);
    out.plan.h_frechet = cfg.bandwidth;
    out.plan.h2 = cfg.bandwidth2 > 0.0 ? cfg.bandwidth2 : cfg.bandwidth;
    out.plan.density_at_cutoff = density_at_cutoff(xs, cfg.kernel);
    out.plan.notes.push_back("manual bandwidth override");
    if (!(out.plan.density_at_cutoff > 0.0))
      throw EstimationError("running-variable density at the cutoff is zero");
  } else {
    out.plan = select_bandwidths(sample, cfg.grid, cfg.kernel, s, cfg.fuzzy,
                                 cfg.rot, cfg.pilots);
    if (cfg.bandwidth2 > 0.0) {
      out.plan.h2 = cfg.bandwidth2;
      out.plan.notes.push_back("manual denominator bandwidth override");
    }
  }
  out.timings.bandwidths = seconds_since(mark);

  QuantileCurve mp, mm;
  if (cfg.method == EstimatorKind::frechet) {
    const WeightSet wp =
        lp_weights(xs, out.plan.h_frechet, cfg.order, Side::plus, cfg.kernel);
    const WeightSet wm =
        lp_weights(xs, out.plan.h_frechet, cfg.order, Side::minus, cfg.kernel);
    mp = project_qf(conditional_mean(wp, qf, cfg.grid));
    mm = project_qf(conditional_mean(wm, qf, cfg.grid));
  } else {
    mp.grid = cfg.grid;
    mm.grid = cfg.grid;
    mp.values.resize(m);
    mm.values.resize(m);
    double cached_h = 0.0;
    WeightSet wp, wm;
    for (Eigen::Index q = 0; q < m; ++q) {
      const double h = out.plan.h1(q);
      if (h != cached_h) {
        wp = lp_weights(xs, h, cfg.order, Side::plus, cfg.kernel);
        wm = lp_weights(xs, h, cfg.order, Side::minus, cfg.kernel);
        cached_h = h;
      }
      mp.values(q) = wp.weights.dot(qf.col(q));
      mm.values(q) = wm.weights.dot(qf.col(q));
    }
    if (cfg.rearrange) {
      mp = rearrange(mp);
      mm = rearrange(mm);
    }
  }
  EffectCurve effect = sharp_effect(mp, mm);
  effect.projected = cfg.method == EstimatorKind::frechet;
  if (cfg.fuzzy) {
    const Eigen::VectorXd ts = sample.treatments();
    out.share_plus = treatment_share(
        lp_weights(xs, out.plan.h2, cfg.order, Side::plus, cfg.kernel), ts);
    out.share_minus = treatment_share(
        lp_weights(xs, out.plan.h2, cfg.order, Side::minus, cfg.kernel), ts);
    effect = fuzzy_effect(effect, out.share_plus, out.share_minus);
  }
  out.m_plus = mp;
  out.m_minus = mm;
  out.timings.estimation = seconds_since(mark);

  if (cfg.draws == 0) {
    // Point estimates only: no residual pass, no bands, NaN p-values.
    out.report.effect = effect;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.report.band_low = Eigen::VectorXd::Constant(cfg.grid.size(), nan);
    out.report.band_high = Eigen::VectorXd::Constant(cfg.grid.size(), nan);
    out.report.critical_value = nan;
    out.report.p_nullity = nan;
    out.report.p_homogeneity = nan;
    out.report.draws = 0;
    out.report.level = cfg.level;
    out.report.seed = cfg.seed;
  } else {
    const ResidualSet res = residuals(sample, qf, cfg.grid, out.plan, cfg.order,
                                      cfg.t_order, cfg.method, cfg.kernel);
    BootstrapConfig bc;
    bc.draws = cfg.draws;
    bc.level = cfg.level;
    bc.seed = cfg.seed;
    bc.order = cfg.order;
    bc.kernel = cfg.kernel;
    bc.method = cfg.method;
    bc.threads = cfg.threads;
    bc.add_one = cfg.add_one;
    bc.test_lo = cfg.test_lo;
    bc.test_hi = cfg.test_hi;
    out.report = bootstrap_bands(sample, effect, res, out.plan, bc);
  }
  out.timings.bootstrap = seconds_since(mark);
  out.timings.total =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace r3d
