#include "r3d/bandwidth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "r3d/errors.hpp"
#include "r3d/localpoly.hpp"
#include "r3d/quantile.hpp"

namespace r3d {

namespace {

double sample_sd(const Eigen::Ref<const Eigen::VectorXd>& xs) {
  const Eigen::Index n = xs.size();
  if (n < 2) throw ValidationError("need at least 2 observations");
  const double mean = xs.mean();
  const double ss = (xs.array() - mean).square().sum();
  return std::sqrt(ss / static_cast<double>(n - 1));
}

// Bias constant row e0' Gamma^{-1} Lambda and variance quadratic form
// e0' Gamma^{-1} Psi Gamma^{-1} e0 for one side.
struct SideConstants {
  double bias_row = 0.0;
  double var_quad = 0.0;
};

SideConstants side_constants(const KernelSpec& kernel, int s, Side side) {
  const KernelMoments& mom = kernel_moments(kernel, s, side);
  const Eigen::VectorXd w = intercept_row(kernel, s, side);
  SideConstants c;
  c.bias_row = w.dot(mom.lambda);
  c.var_quad = w.dot(mom.psi * w);
  return c;
}

// Same constants for the top coefficient of an order-p fit: bias row
// e_p' Gamma^{-1} Lambda and quadratic form e_p' Gamma^{-1} Psi Gamma^{-1} e_p.
SideConstants top_row_constants(const KernelSpec& kernel, int p, Side side) {
  const KernelMoments& mom = kernel_moments(kernel, p, side);
  Eigen::VectorXd ep = Eigen::VectorXd::Zero(p + 1);
  ep(p) = 1.0;
  const Eigen::VectorXd w = mom.gamma.ldlt().solve(ep);
  SideConstants c;
  c.bias_row = w.dot(mom.lambda);
  c.var_quad = w.dot(mom.psi * w);
  return c;
}

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

// Largest window that keeps both one-sided kernels inside the observed
// support. Widening past this point adds no data, so the continuous-limit
// constants stop describing the realized window. Zero when a side is empty.
double span_cap(const Eigen::Ref<const Eigen::VectorXd>& xs) {
  double plus = 0.0, minus = 0.0;
  for (Eigen::Index i = 0; i < xs.size(); ++i) {
    if (xs(i) >= 0.0)
      plus = std::max(plus, xs(i));
    else
      minus = std::max(minus, -xs(i));
  }
  return std::min(plus, minus);
}

// MSE-optimal window for the top coefficient of the order-(s+1) refit that
// supplies derivatives. The derivative's variance scales as h^(-(2s+3)), so
// its optimum sits far above the intercept pilot; reusing the intercept
// window would hand the bias constants pure noise. Bias is linear in h here,
// giving h = ((2s+3) V / (2 B^2))^(1/(2s+5)) n^(-1/(2s+5)) with unit guesses
// for the next derivative and the residual variance. Infinity when the bias
// row vanishes; callers clamp to the observed support.
double derivative_pilot(const KernelSpec& kernel, int s, double f_x0,
                        Eigen::Index n) {
  const int p = s + 1;
  const SideConstants top = top_row_constants(kernel, p, Side::plus);
  const double fac = factorial(p);
  const double cbias = top.bias_row / (p + 1.0);
  const double cvar = fac * fac * top.var_quad / f_x0;
  if (cbias == 0.0) return std::numeric_limits<double>::infinity();
  const double ratio = (2.0 * s + 3.0) * cvar / (2.0 * cbias * cbias);
  return std::pow(ratio, 1.0 / (2.0 * s + 5.0)) *
         std::pow(static_cast<double>(n), -1.0 / (2.0 * s + 5.0));
}

double rate_exponent_bandwidth(int s, Eigen::Index n) {
  return std::pow(static_cast<double>(n), -1.0 / (2.0 * s + 3.0));
}

// ((1/(2(s+1))) * cvar / cbias^2)^(1/(2s+3)) * n^(-1/(2s+3)).
double plugin_bandwidth(double cbias, double cvar, int s, Eigen::Index n) {
  const double ratio = cvar / (2.0 * (s + 1.0) * cbias * cbias);
  return std::pow(ratio, 1.0 / (2.0 * s + 3.0)) * rate_exponent_bandwidth(s, n);
}

double trapezoid(const QuantileGrid& grid, const Eigen::VectorXd& f) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j + 1 < f.size(); ++j)
    acc += 0.5 * (f(j) + f(j + 1)) * (grid.points(j + 1) - grid.points(j));
  return acc;
}

void add_note(std::vector<std::string>* notes, const std::string& msg) {
  if (!notes) return;
  for (const auto& existing : *notes)
    if (existing == msg) return;
  notes->push_back(msg);
}

Eigen::Index grid_index(const QuantileGrid& grid, double q) {
  Eigen::Index best = 0;
  double dist = std::abs(grid.points(0) - q);
  for (Eigen::Index j = 1; j < grid.size(); ++j) {
    const double d = std::abs(grid.points(j) - q);
    if (d < dist) {
      dist = d;
      best = j;
    }
  }
  if (dist > 1e-9) throw ValidationError("quantile is not on the estimation grid");
  return best;
}

void check_order(int s) {
  if (s < 0 || s > 3)
    throw ValidationError("bandwidth target order must be between 0 and 3");
}

}  // namespace

double density_at_cutoff(const Eigen::Ref<const Eigen::VectorXd>& xs,
                         const KernelSpec& kernel) {
  const Eigen::Index n = xs.size();
  const double sd = sample_sd(xs);
  if (!(sd > 0.0)) throw ValidationError("running variable has zero sample variance");
  const double cn = 1.06 * sd * std::pow(static_cast<double>(n), -0.2);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) acc += kernel_eval(kernel, xs(i) / cn);
  return acc / (static_cast<double>(n) * cn);
}

Pilots pilot_bandwidths(const UnitSample& sample, int s, const QuantileGrid& grid,
                        const KernelSpec& kernel, double f_x0,
                        const PilotGuesses& guesses) {
  check_order(s);
  grid.validate();
  if (!(f_x0 > 0.0) || !std::isfinite(f_x0))
    throw ValidationError("density at the cutoff must be positive");
  const Eigen::VectorXd xs = sample.xs();
  const Eigen::Index n = xs.size();
  const Eigen::Index m = grid.size();

  Eigen::VectorXd gd = guesses.derivative_m;
  Eigen::VectorXd gv = guesses.variance_m;
  if (gd.size() == 0) gd = Eigen::VectorXd::Ones(m);
  if (gv.size() == 0) gv = Eigen::VectorXd::Ones(m);
  if (gd.size() != m || gv.size() != m)
    throw ValidationError("pilot guesses must match the grid");
  if ((gd.array() <= 0.0).any() || (gv.array() <= 0.0).any() ||
      !(guesses.derivative_t > 0.0) || !(guesses.variance_t > 0.0))
    throw ValidationError("pilot guesses must be positive");

  const SideConstants plus = side_constants(kernel, s, Side::plus);
  const SideConstants minus = side_constants(kernel, s, Side::minus);
  // For symmetric kernels with odd s the two bias rows coincide exactly and
  // the plug-in constant vanishes; the rule-of-thumb fallback below is then
  // the standard path, not an anomaly.
  const double bias_gap = plus.bias_row - minus.bias_row;
  const double var_sum = plus.var_quad + minus.var_quad;
  const double fac = factorial(s + 1);
  // Pilots feed fits of order s+1, so the plug-in is evaluated one order up:
  // the n^(-1/(2s+5)) rate shrinks slower than the final bandwidth and keeps
  // the first-stage derivative estimates from degenerating into noise.
  const double rot = sample_sd(xs) * rate_exponent_bandwidth(s + 1, n);

  Pilots out;
  out.h1.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double cbias = gd(j) * bias_gap / fac;
    if (cbias == 0.0) {
      add_note(&out.notes,
               "pilot bias constant is zero; using sd(x) rate rule for h1 pilot");
      out.h1(j) = rot;
      continue;
    }
    const double cvar = gv(j) * var_sum / f_x0;
    out.h1(j) = plugin_bandwidth(cbias, cvar, s + 1, n);
  }
  const double cbias_t = guesses.derivative_t * bias_gap / fac;
  if (cbias_t == 0.0) {
    add_note(&out.notes,
             "pilot bias constant is zero; using sd(x) rate rule for h2 pilot");
    out.h2 = rot;
  } else {
    out.h2 = plugin_bandwidth(cbias_t, guesses.variance_t * var_sum / f_x0, s + 1, n);
  }
  return out;
}

namespace {

// Weighted order-s fit for one side at one bandwidth, reused across grid
// points while the pilot stays constant.
struct SideWindow {
  double h = -1.0;
  WeightSet narrow;  // order s
  Eigen::VectorXd kmask;
  double ksum = 0.0;

  void ensure(const Eigen::VectorXd& xs, double bandwidth, int s, Side side,
              const KernelSpec& kernel) {
    if (bandwidth == h) return;
    h = bandwidth;
    narrow = lp_weights(xs, h, s, side, kernel);
    kmask.resize(xs.size());
    for (Eigen::Index i = 0; i < xs.size(); ++i) {
      const bool in = on_side(xs(i), side);
      kmask(i) = in ? kernel_eval(kernel, xs(i) / h) : 0.0;
    }
    ksum = kmask.sum();
  }
};

}  // namespace

FirstStageFit first_stage(const UnitSample& sample, const Pilots& pilots, int s,
                          const QuantileGrid& grid, const KernelSpec& kernel,
                          double f_x0) {
  check_order(s);
  grid.validate();
  const Eigen::Index m = grid.size();
  if (pilots.h1.size() != m)
    throw ValidationError("pilot vector must match the grid");
  if ((pilots.h1.array() <= 0.0).any())
    throw ValidationError("pilot bandwidths must be positive");

  FirstStageFit fit;
  fit.grid = grid;
  fit.kernel = kernel;
  fit.order = s;
  fit.f_x0 = f_x0;
  fit.pilots = pilots;
  fit.has_treatment = true;
  for (const auto& u : sample.units)
    if (!u.t.has_value()) fit.has_treatment = false;

  const Eigen::VectorXd xs = sample.xs();
  const Eigen::MatrixXd qf = unit_quantile_matrix(sample, grid);
  const double fac = factorial(s + 1);

  // The order-(s+1) refit runs at its own derivative-targeted window, clamped
  // to the observed support. Levels and spreads keep the intercept pilots.
  double hd = derivative_pilot(kernel, s, f_x0, xs.size());
  const double cap = span_cap(xs);
  if (cap > 0.0 && cap < hd) hd = cap;
  if (!std::isfinite(hd))
    throw EstimationError("insufficient data in bandwidth window");
  fit.h_derivative = hd;

  for (Side side : {Side::plus, Side::minus}) {
    SideFit& sf = side == Side::plus ? fit.plus : fit.minus;
    sf.alpha.resize(s + 1, m);
    sf.level.resize(m);
    sf.derivative.resize(m);
    sf.sigma11.resize(m);
    const WeightSet wide = lp_weights(xs, hd, s + 1, side, kernel);
    SideWindow win;
    for (Eigen::Index j = 0; j < m; ++j) {
      win.ensure(xs, pilots.h1(j), s, side, kernel);
      const Eigen::VectorXd y = qf.col(j);
      sf.alpha.col(j) = fit_coefficients(win.narrow, y);
      sf.level(j) = sf.alpha(0, j);
      sf.derivative(j) =
          fit_coefficients(wide, y)(s + 1) * fac / std::pow(hd, s + 1);
      const double ss =
          (win.kmask.array() * (y.array() - sf.level(j)).square()).sum();
      sf.sigma11(j) = std::sqrt(ss / win.ksum);
    }
    if (fit.has_treatment) {
      if (!(pilots.h2 > 0.0))
        throw ValidationError("pilot bandwidths must be positive");
      const Eigen::VectorXd ts = sample.treatments();
      SideWindow win2;
      win2.ensure(xs, pilots.h2, s, side, kernel);
      sf.level_t = fit_coefficients(win2.narrow, ts)(0);
      sf.derivative_t =
          fit_coefficients(wide, ts)(s + 1) * fac / std::pow(hd, s + 1);
      const double ss =
          (win2.kmask.array() * (ts.array() - sf.level_t).square()).sum();
      sf.sigma22 = std::sqrt(ss / win2.ksum);
    }
  }
  return fit;
}

namespace {

// Bias gap and variance sum of the effect at grid index j, from first-stage
// estimates and continuous-limit kernel constants.
struct EffectConstants {
  double bias_gap = 0.0;
  double var_sum = 0.0;
};

EffectConstants effect_constants(const FirstStageFit& fit, Eigen::Index j, int s) {
  const SideConstants plus = side_constants(fit.kernel, s, Side::plus);
  const SideConstants minus = side_constants(fit.kernel, s, Side::minus);
  const double fac = factorial(s + 1);
  EffectConstants c;
  c.bias_gap = plus.bias_row * fit.plus.derivative(j) / fac -
               minus.bias_row * fit.minus.derivative(j) / fac;
  // sigma11 stores a standard deviation; the variance constant wants it squared
  const double v_plus = fit.plus.sigma11(j) * fit.plus.sigma11(j);
  const double v_minus = fit.minus.sigma11(j) * fit.minus.sigma11(j);
  c.var_sum = (v_plus * plus.var_quad + v_minus * minus.var_quad) / fit.f_x0;
  return c;
}

double pilot_scalar(const FirstStageFit& fit) {
  const double span =
      fit.grid.points(fit.grid.size() - 1) - fit.grid.points(0);
  if (span <= 0.0) return fit.pilots.h1(0);
  Eigen::VectorXd h = fit.pilots.h1;
  double acc = 0.0;
  for (Eigen::Index j = 0; j + 1 < h.size(); ++j)
    acc += 0.5 * (h(j) + h(j + 1)) * (fit.grid.points(j + 1) - fit.grid.points(j));
  return acc / span;
}

}  // namespace

double mse_bandwidth(const FirstStageFit& fit, double q, int s, Eigen::Index n,
                     std::vector<std::string>* notes) {
  check_order(s);
  if (s != fit.order)
    throw ValidationError("bandwidth order must match the first-stage order");
  const Eigen::Index j = grid_index(fit.grid, q);
  const EffectConstants c = effect_constants(fit, j, s);
  if (c.bias_gap == 0.0) {
    add_note(notes, "effect bias constant is zero; falling back to the pilot");
    return fit.pilots.h1(j);
  }
  if (!(c.var_sum > 0.0)) {
    add_note(notes, "effect variance constant is zero; falling back to the pilot");
    return fit.pilots.h1(j);
  }
  return plugin_bandwidth(c.bias_gap, c.var_sum, s, n);
}

double imse_bandwidth(const FirstStageFit& fit, const QuantileGrid& grid, int s,
                      Eigen::Index n, std::vector<std::string>* notes) {
  check_order(s);
  if (s != fit.order)
    throw ValidationError("bandwidth order must match the first-stage order");
  require_same_grid(grid, fit.grid);
  const Eigen::Index m = grid.size();
  Eigen::VectorXd bias2(m), var(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const EffectConstants c = effect_constants(fit, j, s);
    bias2(j) = c.bias_gap * c.bias_gap;
    var(j) = c.var_sum;
  }
  const double a_s = trapezoid(grid, bias2);
  const double b_s = trapezoid(grid, var);
  if (!(a_s > 0.0)) {
    add_note(notes, "integrated bias constant is zero; falling back to the pilot");
    return pilot_scalar(fit);
  }
  if (!(b_s > 0.0)) {
    add_note(notes,
             "integrated variance constant is zero; falling back to the pilot");
    return pilot_scalar(fit);
  }
  const double ratio = b_s / (2.0 * (s + 1.0) * a_s);
  return std::pow(ratio, 1.0 / (2.0 * s + 3.0)) * rate_exponent_bandwidth(s, n);
}

double treatment_bandwidth(const FirstStageFit& fit, int s, Eigen::Index n,
                           std::vector<std::string>* notes) {
  check_order(s);
  if (s != fit.order)
    throw ValidationError("bandwidth order must match the first-stage order");
  if (!fit.has_treatment)
    throw ValidationError("treatment bandwidth requires treatment status");
  const SideConstants plus = side_constants(fit.kernel, s, Side::plus);
  const SideConstants minus = side_constants(fit.kernel, s, Side::minus);
  const double fac = factorial(s + 1);
  const double bias_gap = plus.bias_row * fit.plus.derivative_t / fac -
                          minus.bias_row * fit.minus.derivative_t / fac;
  const double var_sum = (fit.plus.sigma22 * fit.plus.sigma22 * plus.var_quad +
                          fit.minus.sigma22 * fit.minus.sigma22 * minus.var_quad) /
                         fit.f_x0;
  if (bias_gap == 0.0) {
    add_note(notes, "treatment bias constant is zero; falling back to the pilot");
    return fit.pilots.h2;
  }
  if (!(var_sum > 0.0)) {
    add_note(notes,
             "treatment variance constant is zero; falling back to the pilot");
    return fit.pilots.h2;
  }
  return plugin_bandwidth(bias_gap, var_sum, s, n);
}

double rot_adjust(double h, int s, Eigen::Index n) {
  if (!(h > 0.0) || !std::isfinite(h))
    throw ValidationError("bandwidth must be positive");
  check_order(s);
  if (n < 1) throw ValidationError("sample size must be positive");
  const double expo =
      -static_cast<double>(s) / ((2.0 * s + 3.0) * (s + 3.0));
  return h * std::pow(static_cast<double>(n), expo);
}

BandwidthPlan select_bandwidths(const UnitSample& sample, const QuantileGrid& grid,
                                const KernelSpec& kernel, int s, bool fuzzy,
                                bool rot, const PilotGuesses& guesses) {
  sample.validate(fuzzy);
  const Eigen::Index n = static_cast<Eigen::Index>(sample.size());

  BandwidthPlan plan;
  plan.density_at_cutoff = density_at_cutoff(sample.xs(), kernel);
  plan.pilots =
      pilot_bandwidths(sample, s, grid, kernel, plan.density_at_cutoff, guesses);
  plan.notes = plan.pilots.notes;

  const FirstStageFit fit =
      first_stage(sample, plan.pilots, s, grid, kernel, plan.density_at_cutoff);

  plan.h1.resize(grid.size());
  for (Eigen::Index j = 0; j < grid.size(); ++j)
    plan.h1(j) = mse_bandwidth(fit, grid.points(j), s, n, &plan.notes);
  plan.h_frechet = imse_bandwidth(fit, grid, s, n, &plan.notes);
  if (fuzzy) {
    plan.h2 = treatment_bandwidth(fit, s, n, &plan.notes);
  } else {
    plan.h2 = plan.pilots.h2;
    plan.notes.push_back("sharp design: denominator bandwidth set to the pilot");
  }

  // Clamp to the observed support before any coverage adjustment: widening
  // past the data adds nothing, and a near-zero estimated bias gap would
  // otherwise send the plug-in to arbitrarily large windows.
  const double cap = span_cap(sample.xs());
  if (cap > 0.0) {
    bool clamped = false;
    for (Eigen::Index j = 0; j < grid.size(); ++j)
      if (plan.h1(j) > cap) {
        plan.h1(j) = cap;
        clamped = true;
      }
    if (plan.h_frechet > cap) {
      plan.h_frechet = cap;
      clamped = true;
    }
    if (plan.h2 > cap) {
      plan.h2 = cap;
      clamped = true;
    }
    if (clamped)
      plan.notes.push_back("plug-in bandwidth clamped to the observed support");
  }

  if (rot) {
    for (Eigen::Index j = 0; j < grid.size(); ++j)
      plan.h1(j) = rot_adjust(plan.h1(j), s, n);
    plan.h2 = rot_adjust(plan.h2, s, n);
    plan.h_frechet = rot_adjust(plan.h_frechet, s, n);
    plan.rot_applied = true;
  }

  if (!plan.h1.allFinite() || (plan.h1.array() <= 0.0).any() || !(plan.h2 > 0.0) ||
      !(plan.h_frechet > 0.0) || !std::isfinite(plan.h2) ||
      !std::isfinite(plan.h_frechet))
    throw EstimationError("bandwidth selection produced a degenerate bandwidth");
  return plan;
}

}  // namespace r3d
