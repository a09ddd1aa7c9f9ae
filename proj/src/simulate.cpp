#include "r3d/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include "r3d/parallel.hpp"
#include "r3d/rng.hpp"

namespace r3d {

namespace {

void check_dims(int n, int n_i) {
  if (n < 2) throw ValidationError("generator needs at least 2 units");
  if (n_i < 1) throw ValidationError("generator needs at least 1 draw per unit");
}

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double log_norm_cdf(double t) {
  if (t > -10.0) return std::log(norm_cdf(t));
  // deep tail: Phi(t) = phi(t)/(-t) * (1 - 1/t^2 + 3/t^4 - ...)
  const double t2 = t * t;
  return -0.5 * t2 - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(-t) +
         std::log1p(-1.0 / t2 + 3.0 / (t2 * t2));
}

// CDF at y of N(0,1) + Exp(rate r): Phi(y) - exp(r^2/2 - r y) Phi(y - r).
// The correction term is assembled in log space; its factors overflow and
// underflow separately once r is large even though the product stays in [0,1].
double emg_cdf(double y, double r) {
  return norm_cdf(y) - std::exp(0.5 * r * r - r * y + log_norm_cdf(y - r));
}

// Cubic interpolation weights at log-rate s on a uniform node ladder. The
// node index is clamped so boundary evaluations reuse the edge cell.
struct CubicAt {
  Eigen::Index k = 1;
  double w0 = 0.0, w1 = 0.0, w2 = 0.0, w3 = 0.0;
};

CubicAt cubic_at(double s, double s0, double ds, Eigen::Index nodes) {
  const double t = (s - s0) / ds;
  CubicAt c;
  c.k = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(t)), 1,
                                 nodes - 3);
  const double f = t - static_cast<double>(c.k);
  c.w0 = 0.5 * f * ((2.0 - f) * f - 1.0);
  c.w1 = 0.5 * (f * f * (3.0 * f - 5.0) + 2.0);
  c.w2 = 0.5 * f * ((4.0 - 3.0 * f) * f + 1.0);
  c.w3 = 0.5 * f * f * (f - 1.0);
  return c;
}

}  // namespace

const char* dgp_name(Dgp dgp) { return dgp == Dgp::dgp1 ? "dgp1" : "dgp2"; }

Dgp dgp_from_name(const std::string& name) {
  if (name == "dgp1" || name == "1") return Dgp::dgp1;
  if (name == "dgp2" || name == "2") return Dgp::dgp2;
  throw ValidationError("unknown dgp '" + name + "'");
}

UnitSample gen_dgp1(int n, int n_i, double delta, std::uint64_t seed,
                    std::uint64_t rep) {
  check_dims(n, n_i);
  if (!std::isfinite(delta)) throw ValidationError("delta must be finite");
  RngStream rng = RngStream::keyed({seed, kTagData, rep});
  UnitSample sample;
  sample.units.resize(n);
  for (int i = 0; i < n; ++i) {
    UnitRecord& u = sample.units[i];
    u.id = "u" + std::to_string(i);
    u.x = rng.uniform(-1.0, 1.0);
    const double treated = u.x >= 0.0 ? 1.0 : 0.0;
    const double mu = rng.normal(5.0 + 5.0 * u.x + treated * delta, 1.0);
    const double sigma = std::abs(rng.normal(1.0 + u.x, 1.0));
    u.t = u.x >= 0.0 ? 1 : 0;
    u.draws.resize(n_i);
    for (int j = 0; j < n_i; ++j) u.draws(j) = rng.normal(mu, sigma);
  }
  return sample;
}

UnitSample gen_dgp2(int n, int n_i, double delta, double delta_lambda,
                    std::uint64_t seed, std::uint64_t rep) {
  check_dims(n, n_i);
  if (!std::isfinite(delta) || !std::isfinite(delta_lambda))
    throw ValidationError("effect parameters must be finite");
  RngStream rng = RngStream::keyed({seed, kTagData, rep});
  UnitSample sample;
  sample.units.resize(n);
  for (int i = 0; i < n; ++i) {
    UnitRecord& u = sample.units[i];
    u.id = "u" + std::to_string(i);
    u.x = rng.uniform(-1.0, 1.0);
    const double treated = u.x >= 0.0 ? 1.0 : 0.0;
    const double mu = rng.uniform(-5.0, 5.0) + 2.0 * u.x;
    const double lambda = rng.uniform(0.5, 1.5);
    const double rate = lambda + treated * delta_lambda;
    if (!(rate > 0.0))
      throw ValidationError("effective exponential rate must be positive");
    u.t = u.x >= 0.0 ? 1 : 0;
    u.draws.resize(n_i);
    for (int j = 0; j < n_i; ++j)
      u.draws(j) =
          rng.normal(mu + treated * delta, 1.0) + 2.0 * rng.exponential(rate);
  }
  return sample;
}

QuantileCurve true_effect_dgp1(double delta, const QuantileGrid& grid) {
  grid.validate();
  if (!std::isfinite(delta)) throw ValidationError("delta must be finite");
  QuantileCurve curve;
  curve.grid = grid;
  curve.values = Eigen::VectorXd::Constant(grid.size(), delta);
  curve.monotone = true;
  return curve;
}

double emg_quantile(double q, double rate) {
  if (!(q > 0.0 && q < 1.0))
    throw ValidationError("quantile level must lie in (0,1)");
  if (!(rate > 0.0)) throw ValidationError("exponential rate must be positive");
  // Bracket: cdf(-9) < 1e-18 on the left; on the right the tail bound
  // P(Y > a + b) <= P(N > a) + P(Exp > b) keeps cdf(hi) above q.
  double lo = -9.0;
  double hi = 9.0 - std::log(0.5 * (1.0 - q)) / rate;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (emg_cdf(mid, rate) < q ? lo : hi) = mid;
    if (hi - lo <= 1e-13 * (1.0 + std::abs(lo) + std::abs(hi))) break;
  }
  return 0.5 * (lo + hi);
}

QuantileCurve true_effect_dgp2(double delta, double delta_lambda,
                               const QuantileGrid& grid, int oracle_n,
                               std::uint64_t seed, Eigen::VectorXd* se_out) {
  grid.validate();
  if (oracle_n < 100000)
    throw ValidationError(
        "oracle needs at least 100000 simulated quantile functions per side");
  if (!std::isfinite(delta) || !std::isfinite(delta_lambda))
    throw ValidationError("effect parameters must be finite");

  RngStream rng = RngStream::keyed({seed, kTagOracle});
  std::vector<double> lambdas(static_cast<std::size_t>(oracle_n));
  double lmin = 1.5, lmax = 0.5;
  for (double& l : lambdas) {
    l = rng.uniform(0.5, 1.5);
    lmin = std::min(lmin, l);
    lmax = std::max(lmax, l);
  }
  if (!(lmin + delta_lambda > 0.0))
    throw ValidationError("effective exponential rate must be positive");

  // Unit quantile functions are location shifts of N(0,1) + Exp(rate), so the
  // location part cancels in the treated-minus-untreated difference and only
  // the rate pair (lambda + delta_lambda, lambda) matters. Exact quantiles are
  // tabulated on a dense log-rate ladder and read back by cubic interpolation,
  // whose error is far below the Monte Carlo standard error.
  const double rlo = 0.5 * std::min(lmin, lmin + delta_lambda);
  const double rhi = 0.5 * std::max(lmax, lmax + delta_lambda);
  const Eigen::Index nodes = 513;
  const double span = std::max(std::log(rhi) - std::log(rlo), 1e-9);
  const double ds = span / static_cast<double>(nodes - 5);
  const double s0 = std::log(rlo) - 2.0 * ds;
  const int m = grid.size();
  Eigen::MatrixXd tbl(nodes, m);
  for (Eigen::Index a = 0; a < nodes; ++a) {
    const double rate = std::exp(s0 + ds * static_cast<double>(a));
    for (int j = 0; j < m; ++j) tbl(a, j) = emg_quantile(grid.points(j), rate);
  }

  const auto eval = [&](const CubicAt& c, int j) {
    return c.w0 * tbl(c.k - 1, j) + c.w1 * tbl(c.k, j) +
           c.w2 * tbl(c.k + 1, j) + c.w3 * tbl(c.k + 2, j);
  };

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd d(m);
  double count = 0.0;
  for (const double lambda : lambdas) {
    const CubicAt treated =
        cubic_at(std::log(0.5 * (lambda + delta_lambda)), s0, ds, nodes);
    const CubicAt control = cubic_at(std::log(0.5 * lambda), s0, ds, nodes);
    for (int j = 0; j < m; ++j)
      d(j) = delta + eval(treated, j) - eval(control, j);
    count += 1.0;
    for (int j = 0; j < m; ++j) {
      const double gap = d(j) - mean(j);
      mean(j) += gap / count;
      m2(j) += gap * (d(j) - mean(j));
    }
  }

  if (se_out)
    *se_out = (m2 / (count * std::max(count - 1.0, 1.0))).cwiseSqrt();
  QuantileCurve curve;
  curve.grid = grid;
  curve.values = std::move(mean);
  return curve;
}

double preset_delta(Dgp dgp, const std::string& name) {
  const bool d05 = name == "d05";
  if (!d05 && name != "d10")
    throw ValidationError("unknown effect-size preset '" + name + "'");
  if (dgp == Dgp::dgp1) return d05 ? 1.14 : 2.27;
  return d05 ? 1.86 : 3.72;
}

SimReport monte_carlo(const SimConfig& config) {
  if (config.n < 50)
    throw ValidationError("simulation needs at least 50 units per replicate");
  const int n_i = config.n_i > 0 ? config.n_i : config.n;
  if (n_i < 2)
    throw ValidationError("simulation needs at least 2 draws per unit");
  if (config.reps < 1) throw ValidationError("reps must be positive");
  if (config.draws < 100)
    throw ValidationError("coverage runs need at least 100 bootstrap draws");
  if (!(config.level > 0.0 && config.level < 1.0))
    throw ValidationError("level must lie in (0,1)");
  if (config.dgp == Dgp::dgp1 && config.delta_lambda != 0.0)
    throw ValidationError("delta_lambda applies to dgp2 only");

  QuantileGrid grid =
      config.grid.size() > 0 ? config.grid : make_grid(0.1, 0.9, 9);
  grid.validate();

  const auto start = std::chrono::steady_clock::now();
  const QuantileCurve truth =
      config.dgp == Dgp::dgp1
          ? true_effect_dgp1(config.delta, grid)
          : true_effect_dgp2(config.delta, config.delta_lambda, grid, 100000,
                             config.seed);

  const int reps = config.reps;
  const int m = grid.size();
  Eigen::MatrixXd taus = Eigen::MatrixXd::Zero(reps, m);
  std::vector<std::uint8_t> ok(reps, 0), covered(reps, 0), null_acc(reps, 0),
      hom_acc(reps, 0);
  std::vector<std::string> errors(reps);

  parallel_for(
      static_cast<std::size_t>(reps), resolve_threads(config.threads),
      [&](std::size_t r) {
        const std::uint64_t rep = static_cast<std::uint64_t>(r);
        try {
          const UnitSample sample =
              config.dgp == Dgp::dgp1
                  ? gen_dgp1(config.n, n_i, config.delta, config.seed, rep)
                  : gen_dgp2(config.n, n_i, config.delta, config.delta_lambda,
                             config.seed, rep);
          EstimateConfig ec;
          ec.method = config.method;
          ec.order = config.order;
          ec.grid = grid;
          ec.draws = config.draws;
          ec.level = config.level;
          ec.seed = stream_key({config.seed, kTagXi, rep});
          ec.threads = 1;  // replicates own the parallelism
          ec.bandwidth = config.bandwidth;
          const EstimateResult res = estimate(sample, ec);
          taus.row(static_cast<Eigen::Index>(r)) =
              res.report.effect.tau.transpose();
          covered[r] =
              (truth.values.array() >= res.report.band_low.array()).all() &&
              (truth.values.array() <= res.report.band_high.array()).all();
          null_acc[r] = res.report.p_nullity > config.level;
          hom_acc[r] = res.report.p_homogeneity > config.level;
          ok[r] = 1;
        } catch (const ValidationError& e) {
          errors[r] = e.what();
        } catch (const EstimationError& e) {
          errors[r] = e.what();
        }
      });

  SimReport report;
  report.grid = grid;
  report.true_tau = truth.values;

  int completed = 0;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(m);
  for (int r = 0; r < reps; ++r) {
    if (!ok[r]) continue;
    ++completed;
    sum += taus.row(r).transpose();
  }
  report.completed = completed;
  report.failed = reps - completed;
  for (int r = 0; r < reps && report.failures.size() < 20; ++r) {
    if (ok[r] || errors[r].empty()) continue;
    if (std::find(report.failures.begin(), report.failures.end(), errors[r]) ==
        report.failures.end())
      report.failures.push_back(errors[r]);
  }
  if (completed == 0)
    throw EstimationError(
        "every replicate failed: " +
        (report.failures.empty() ? std::string("unknown error")
                                 : report.failures.front()));

  report.mean_tau = sum / static_cast<double>(completed);
  Eigen::VectorXd ss = Eigen::VectorXd::Zero(m);
  for (int r = 0; r < reps; ++r) {
    if (!ok[r]) continue;
    const Eigen::VectorXd gap = taus.row(r).transpose() - report.mean_tau;
    ss += gap.cwiseProduct(gap);
  }
  report.variance = completed > 1
                        ? Eigen::VectorXd(ss / static_cast<double>(completed - 1))
                        : Eigen::VectorXd::Zero(m);
  report.bias = report.mean_tau - truth.values;
  report.rel_bias =
      report.bias.cwiseAbs().cwiseQuotient(truth.values.cwiseAbs());
  report.mean_se =
      (report.variance / static_cast<double>(completed)).cwiseSqrt();

  const auto rate_of = [&](const std::vector<std::uint8_t>& flags) {
    int hits = 0;
    for (int r = 0; r < reps; ++r)
      if (ok[r] && flags[r]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(completed);
  };
  const auto rate_se = [&](double p) {
    return std::sqrt(p * (1.0 - p) / static_cast<double>(completed));
  };
  report.coverage = rate_of(covered);
  report.coverage_se = rate_se(report.coverage);
  report.nullity_acceptance = rate_of(null_acc);
  report.nullity_se = rate_se(report.nullity_acceptance);
  report.homogeneity_acceptance = rate_of(hom_acc);
  report.homogeneity_se = rate_se(report.homogeneity_acceptance);

  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return report;
}

}  // namespace r3d
