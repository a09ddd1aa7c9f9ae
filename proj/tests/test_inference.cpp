#include <doctest.h>

#include <cmath>
#include <vector>

#include "r3d/errors.hpp"
#include "r3d/inference.hpp"

using namespace r3d;

namespace {

// Units evenly spread over [-1, 1], never exactly at the cutoff, with the
// sharp treatment step when requested.
UnitSample spread_sample(int n, bool with_t = true) {
  UnitSample s;
  for (int i = 0; i < n; ++i) {
    UnitRecord u;
    u.id = "u" + std::to_string(i);
    u.x = -1.0 + (2.0 * i + 1.0) / n;
    if (with_t) u.t = u.x >= 0.0 ? 1 : 0;
    u.draws = Eigen::VectorXd::Constant(1, 0.0);
    s.units.push_back(u);
  }
  return s;
}

BandwidthPlan flat_plan(int m, double h) {
  BandwidthPlan plan;
  plan.h1 = Eigen::VectorXd::Constant(m, h);
  plan.h2 = h;
  plan.h_frechet = h;
  plan.density_at_cutoff = 0.5;
  return plan;
}

bool all_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

}  // namespace

TEST_SUITE_BEGIN("inference");

TEST_CASE("residuals vanish on polynomial surfaces and honor the masks") {
  const int n = 60;
  const QuantileGrid grid = make_grid(0.2, 0.8, 5);
  const int m = grid.size();
  UnitSample sample = spread_sample(n);
  const Eigen::VectorXd xs = sample.xs();
  Eigen::MatrixXd qf(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const double q = grid.points(j);
      qf(i, j) = (1.0 + q) + (2.0 - q) * xs(i) + 3.0 * q * xs(i) * xs(i);
    }
  }
  KernelSpec tri;
  BandwidthPlan plan = flat_plan(m, 0.7);

  SUBCASE("quadratic surface, quadratic fit") {
    const ResidualSet res =
        residuals(sample, qf, grid, plan, 2, -1, EstimatorKind::localpoly, tri);
    CHECK(res.e1.cwiseAbs().maxCoeff() < 1e-6);
    CHECK(res.e2.cwiseAbs().maxCoeff() < 1e-8);  // exact step reproduced
    for (int i = 0; i < n; ++i) {
      const double in1 = std::abs(xs(i)) <= 0.7 ? 1.0 : 0.0;
      CHECK(res.mask1(i, 0) == in1);
      CHECK(res.mask1(i, m - 1) == in1);
      CHECK(res.mask2(i) == in1);
    }
    CHECK(((res.e1.array() * (1.0 - res.mask1.array())) == 0.0).all());
    CHECK(((res.e2.array().colwise() * (1.0 - res.mask2.array())) == 0.0).all());
  }

  SUBCASE("per-quantile bandwidths change the masks column by column") {
    plan.h1 = Eigen::VectorXd::LinSpaced(m, 0.5, 0.9);
    const ResidualSet res =
        residuals(sample, qf, grid, plan, 2, 2, EstimatorKind::localpoly, tri);
    CHECK(res.e1.cwiseAbs().maxCoeff() < 1e-6);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) {
        CHECK(res.mask1(i, j) == (std::abs(xs(i)) <= plan.h1(j) ? 1.0 : 0.0));
      }
    }
  }

  SUBCASE("truncated fit leaves exactly the dropped curvature") {
    const ResidualSet res =
        residuals(sample, qf, grid, plan, 2, 1, EstimatorKind::localpoly, tri);
    for (int i = 0; i < n; ++i) {
      if (std::abs(xs(i)) > 0.7) continue;
      for (int j = 0; j < m; ++j) {
        const double dropped = 3.0 * grid.points(j) * xs(i) * xs(i);
        CHECK(res.e1(i, j) == doctest::Approx(dropped).epsilon(1e-9));
      }
    }
    const ResidualSet full =
        residuals(sample, qf, grid, plan, 2, -1, EstimatorKind::localpoly, tri);
    const ResidualSet explicit_p =
        residuals(sample, qf, grid, plan, 2, 2, EstimatorKind::localpoly, tri);
    CHECK(all_equal(full.e1, explicit_p.e1));
  }

  SUBCASE("bad orders and shapes are rejected") {
    CHECK_THROWS_AS(
        residuals(sample, qf, grid, plan, 2, 3, EstimatorKind::localpoly, tri),
        ValidationError);
    CHECK_THROWS_AS(
        residuals(sample, qf, grid, plan, 5, -1, EstimatorKind::localpoly, tri),
        ValidationError);
    CHECK_THROWS_AS(residuals(sample, qf.topRows(n - 1), grid, plan, 2, -1,
                              EstimatorKind::localpoly, tri),
                    ValidationError);
    BandwidthPlan bad = plan;
    bad.h1 = Eigen::VectorXd::Constant(m - 1, 0.7);
    CHECK_THROWS_AS(
        residuals(sample, qf, grid, bad, 2, -1, EstimatorKind::localpoly, tri),
        ValidationError);
  }
}

TEST_CASE("frechet residuals pass the fitted curve through the quantile cone") {
  const int n = 40;
  const QuantileGrid grid = make_grid(0.25, 0.75, 3);
  UnitSample sample = spread_sample(n, false);
  const Eigen::VectorXd xs = sample.xs();
  // Every unit reports the same dipping curve, so both one-sided fits
  // reproduce it exactly and its projection pools the first two points.
  Eigen::MatrixXd qf(n, 3);
  for (int i = 0; i < n; ++i) qf.row(i) << 1.0, 0.5, 2.0;
  KernelSpec tri;
  const BandwidthPlan plan = flat_plan(3, 0.8);

  const ResidualSet raw =
      residuals(sample, qf, grid, plan, 2, -1, EstimatorKind::localpoly, tri);
  CHECK(raw.e1.cwiseAbs().maxCoeff() < 1e-9);

  const ResidualSet proj =
      residuals(sample, qf, grid, plan, 2, -1, EstimatorKind::frechet, tri);
  for (int i = 0; i < n; ++i) {
    if (std::abs(xs(i)) <= 0.8) {
      CHECK(proj.e1(i, 0) == doctest::Approx(0.25).epsilon(1e-9));
      CHECK(proj.e1(i, 1) == doctest::Approx(-0.25).epsilon(1e-9));
      CHECK(proj.e1(i, 2) == doctest::Approx(0.0).epsilon(1e-9));
    } else {
      CHECK(proj.e1.row(i).cwiseAbs().maxCoeff() == 0.0);
    }
  }
  // No treatment column: the second equation stays empty.
  CHECK(proj.e2.cwiseAbs().maxCoeff() == 0.0);
  CHECK(proj.mask2.maxCoeff() == 0.0);
}

TEST_CASE("multiplier process matches hand arithmetic and is linear") {
  KernelSpec tri;

  SUBCASE("single unit, hand value") {
    ResidualSet res;
    res.e1 = Eigen::MatrixXd::Constant(1, 1, 2.0);
    res.e2 = Eigen::MatrixXd::Zero(1, 1);
    Eigen::VectorXd xs(1), hk(1), xi(1);
    xs << 0.25;
    hk << 1.0;
    xi << 1.0;
    // row [6, -12] dot (1, 0.25) = 3, K(0.25) = 0.75, denom = sqrt(1) * 0.5.
    const Eigen::VectorXd nu =
        multiplier_process(res, xi, xs, hk, tri, 1, 0.5, 1, Side::plus);
    CHECK(nu(0) == doctest::Approx(9.0).epsilon(1e-12));
    xi << 2.0;
    CHECK(multiplier_process(res, xi, xs, hk, tri, 1, 0.5, 1, Side::plus)(0) ==
          doctest::Approx(18.0).epsilon(1e-12));
    // The unit sits on the plus side, so the minus process ignores it.
    CHECK(multiplier_process(res, xi, xs, hk, tri, 1, 0.5, 1, Side::minus)(0) == 0.0);
    // Mirrored unit: row [6, 12] dot (1, -0.25) = 3 again.
    xs << -0.25;
    xi << 1.0;
    CHECK(multiplier_process(res, xi, xs, hk, tri, 1, 0.5, 1, Side::minus)(0) ==
          doctest::Approx(9.0).epsilon(1e-12));
  }

  SUBCASE("linearity and dead columns") {
    const int n = 30;
    UnitSample sample = spread_sample(n, false);
    Eigen::VectorXd xs = sample.xs();
    xs(5) = 2.0;  // outside every window
    ResidualSet res;
    res.e1.resize(n, 2);
    for (int i = 0; i < n; ++i) res.e1.row(i) << (i + 1) / 10.0, (i % 4) / 4.0;
    res.e2 = Eigen::MatrixXd::Zero(n, 2);
    Eigen::VectorXd hk(2);
    hk << 0.6, 0.9;
    Eigen::VectorXd xa(n), xb(n);
    for (int i = 0; i < n; ++i) {
      xa(i) = ((i % 7) - 3) / 2.0;
      xb(i) = ((i % 5) - 2) / 3.0;
    }
    const Eigen::VectorXd va =
        multiplier_process(res, xa, xs, hk, tri, 2, 0.4, 1, Side::plus);
    const Eigen::VectorXd vb =
        multiplier_process(res, xb, xs, hk, tri, 2, 0.4, 1, Side::plus);
    const Eigen::VectorXd vc = multiplier_process(res, 2.0 * xa + 3.0 * xb, xs, hk,
                                                  tri, 2, 0.4, 1, Side::plus);
    CHECK((vc - 2.0 * va - 3.0 * vb).cwiseAbs().maxCoeff() < 1e-12);

    Eigen::VectorXd xa2 = xa;
    xa2(5) += 100.0;
    const Eigen::VectorXd va2 =
        multiplier_process(res, xa2, xs, hk, tri, 2, 0.4, 1, Side::plus);
    CHECK((va.array() == va2.array()).all());
  }

  SUBCASE("validation") {
    ResidualSet res;
    res.e1 = Eigen::MatrixXd::Zero(2, 2);
    res.e2 = Eigen::MatrixXd::Zero(2, 2);
    Eigen::VectorXd xs(2), hk(2), xi(2);
    xs << -0.5, 0.5;
    hk << 1.0, 1.0;
    xi << 1.0, 1.0;
    CHECK_THROWS_AS(multiplier_process(res, xi, xs, hk, tri, 2, 0.5, 3, Side::plus),
                    ValidationError);
    CHECK_THROWS_AS(multiplier_process(res, xi, xs, hk, tri, 2, 0.0, 1, Side::plus),
                    ValidationError);
    Eigen::VectorXd short_h(1);
    short_h << 1.0;
    CHECK_THROWS_AS(
        multiplier_process(res, xi, xs, short_h, tri, 2, 0.5, 1, Side::plus),
        ValidationError);
  }
}

TEST_CASE("bootstrap draws reproduce bit for bit and scale with the residuals") {
  const int n = 80;
  const QuantileGrid grid = make_grid(0.2, 0.8, 4);
  const int m = grid.size();
  UnitSample sample = spread_sample(n);
  const Eigen::VectorXd xs = sample.xs();
  Eigen::MatrixXd qf(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j)
      qf(i, j) = 2.0 * grid.points(j) + 0.5 * xs(i) + 0.3 * std::sin(3.0 * i);
  }
  KernelSpec tri;
  const BandwidthPlan plan = flat_plan(m, 0.75);
  const ResidualSet res =
      residuals(sample, qf, grid, plan, 2, -1, EstimatorKind::localpoly, tri);

  EffectCurve effect;
  effect.grid = grid;
  effect.tau = Eigen::VectorXd::LinSpaced(m, 0.3, 0.6);
  effect.variant = EffectVariant::sharp;

  BootstrapConfig cfg;
  cfg.draws = 60;
  cfg.level = 0.2;
  cfg.seed = 42;
  cfg.order = 2;
  cfg.method = EstimatorKind::localpoly;
  cfg.threads = 1;

  const BootstrapDraws d1 = bootstrap_draws(sample, effect, res, plan, cfg);
  CHECK(d1.g.rows() == 60);
  CHECK(d1.n == n);
  CHECK(d1.h_base == doctest::Approx(0.75).epsilon(1e-12));

  SUBCASE("same seed, any thread count: identical draws") {
    const BootstrapDraws d2 = bootstrap_draws(sample, effect, res, plan, cfg);
    CHECK(all_equal(d1.g, d2.g));
    BootstrapConfig four = cfg;
    four.threads = 4;
    const BootstrapDraws d4 = bootstrap_draws(sample, effect, res, plan, four);
    CHECK(all_equal(d1.g, d4.g));
    BootstrapConfig other = cfg;
    other.seed = 43;
    const BootstrapDraws d3 = bootstrap_draws(sample, effect, res, plan, other);
    CHECK((d1.g - d3.g).cwiseAbs().maxCoeff() > 0.0);
  }

  SUBCASE("zero residuals collapse the band onto the estimate") {
    ResidualSet zero = res;
    zero.e1.setZero();
    zero.e2.setZero();
    const BootstrapDraws dz = bootstrap_draws(sample, effect, zero, plan, cfg);
    CHECK(dz.g.cwiseAbs().maxCoeff() == 0.0);
    CHECK(critical_value(dz, 0.2) == 0.0);
    const InferenceReport rep = bootstrap_bands(sample, effect, zero, plan, cfg);
    CHECK((rep.band_low.array() == effect.tau.array()).all());
    CHECK((rep.band_high.array() == effect.tau.array()).all());
  }

  SUBCASE("doubling the residuals doubles the critical value") {
    ResidualSet twice = res;
    twice.e1 *= 2.0;
    const BootstrapDraws d2 = bootstrap_draws(sample, effect, twice, plan, cfg);
    const double c1 = critical_value(d1, 0.2);
    const double c2 = critical_value(d2, 0.2);
    CHECK(c2 == doctest::Approx(2.0 * c1).epsilon(1e-12));
    CHECK(critical_value(d1, 0.5) <= critical_value(d1, 0.05));
  }

  SUBCASE("frechet path pins the baseline to the shared bandwidth") {
    const ResidualSet fres =
        residuals(sample, qf, grid, plan, 2, -1, EstimatorKind::frechet, tri);
    BootstrapConfig fcfg = cfg;
    fcfg.method = EstimatorKind::frechet;
    const BootstrapDraws df = bootstrap_draws(sample, effect, fres, plan, fcfg);
    CHECK(df.h_base == plan.h_frechet);
  }
}

TEST_CASE("fuzzy draws reduce to sharp under a unit jump and no first-stage noise") {
  const int n = 80;
  const QuantileGrid grid = make_grid(0.2, 0.8, 4);
  const int m = grid.size();
  UnitSample sample = spread_sample(n);
  const Eigen::VectorXd xs = sample.xs();
  Eigen::MatrixXd qf(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j)
      qf(i, j) = grid.points(j) + 0.4 * xs(i) + 0.2 * std::cos(5.0 * i);
  }
  KernelSpec tri;
  const BandwidthPlan plan = flat_plan(m, 0.75);
  ResidualSet res =
      residuals(sample, qf, grid, plan, 2, -1, EstimatorKind::localpoly, tri);
  res.e2.setZero();

  EffectCurve sharp;
  sharp.grid = grid;
  sharp.tau = Eigen::VectorXd::LinSpaced(m, -0.2, 0.4);
  sharp.variant = EffectVariant::sharp;

  EffectCurve fuzzy = sharp;
  fuzzy.variant = EffectVariant::fuzzy;
  fuzzy.denominator = 1.0;

  BootstrapConfig cfg;
  cfg.draws = 40;
  cfg.seed = 7;
  cfg.order = 2;
  cfg.method = EstimatorKind::localpoly;
  cfg.threads = 1;

  const BootstrapDraws ds = bootstrap_draws(sample, sharp, res, plan, cfg);
  const BootstrapDraws df = bootstrap_draws(sample, fuzzy, res, plan, cfg);
  CHECK(all_equal(ds.g, df.g));

  // Halving the jump doubles the draw, still with no first-stage noise.
  EffectCurve fuzzy2 = fuzzy;
  fuzzy2.denominator = 2.0;
  const BootstrapDraws dh = bootstrap_draws(sample, fuzzy2, res, plan, cfg);
  CHECK((dh.g - 0.5 * ds.g).cwiseAbs().maxCoeff() < 1e-12);

  EffectCurve broken = fuzzy;
  broken.denominator.reset();
  CHECK_THROWS_AS(bootstrap_draws(sample, broken, res, plan, cfg), ValidationError);
  broken.denominator = 0.0;
  CHECK_THROWS_AS(bootstrap_draws(sample, broken, res, plan, cfg), ValidationError);
}

TEST_CASE("critical value and sup tests follow the order statistics") {
  const QuantileGrid grid = make_grid(0.25, 0.75, 3);
  BootstrapDraws d;
  d.n = 25;
  d.h_base = 1.0;  // scale sqrt(25 * 1) = 5
  d.add_one = true;
  const std::vector<double> sups = {4, 9, 1, 7, 10, 2, 6, 3, 8, 5};
  d.g.resize(10, 3);
  for (int b = 0; b < 10; ++b)
    d.g.row(b) << sups[b], -sups[b] / 2.0, sups[b] / 5.0;

  EffectCurve effect;
  effect.grid = grid;
  effect.tau.resize(3);
  effect.tau << 2.0, 0.0, -0.2;

  SUBCASE("critical value is the type-1 quantile of the sups") {
    CHECK(critical_value(d, 0.3) == 7.0);
    CHECK(critical_value(d, 0.05) == 10.0);
    CHECK(critical_value(d, 0.95) == 1.0);
    CHECK_THROWS_AS(critical_value(d, 0.0), ValidationError);
    CHECK_THROWS_AS(critical_value(d, 1.0), ValidationError);
  }

  SUBCASE("nullity p-values count dominating draws") {
    const double nan = std::nan("");
    // T = 5 * 2 = 10, one sup reaches it.
    CHECK(test_nullity(effect, d, nan, nan) == doctest::Approx(2.0 / 11.0).epsilon(1e-14));
    BootstrapDraws plain = d;
    plain.add_one = false;
    CHECK(test_nullity(effect, plain, nan, nan) == doctest::Approx(0.1).epsilon(1e-14));
    // Restricted to the last point: T = 5 * 0.2 = 1, sups there are s/5.
    CHECK(test_nullity(effect, d, 0.7, 0.8) == doctest::Approx(7.0 / 11.0).epsilon(1e-14));
    // Middle point only: the effect is zero there, so p is exactly one.
    CHECK(test_nullity(effect, d, 0.4, 0.6) == 1.0);
    EffectCurve null = effect;
    null.tau.setZero();
    CHECK(test_nullity(null, d, nan, nan) == 1.0);
    EffectCurve big = effect;
    big.tau << 3.0, 0.0, 0.0;  // T = 15 beats every draw
    CHECK(test_nullity(big, d, nan, nan) == doctest::Approx(1.0 / 11.0).epsilon(1e-14));
    CHECK_THROWS_AS(test_nullity(effect, d, 0.76, 0.9), ValidationError);
  }

  SUBCASE("homogeneity centers both the curve and the draws") {
    const double nan = std::nan("");
    EffectCurve flat = effect;
    flat.tau << 2.0, 2.0, 2.0;  // dyadic grid: trapezoid mean is exactly 2
    CHECK(test_homogeneity(flat, d, nan, nan) == 1.0);

    BootstrapDraws constrows = d;
    for (int b = 0; b < 10; ++b) constrows.g.row(b).setConstant(sups[b]);
    EffectCurve tent = effect;
    tent.tau << 0.0, 3.0, 0.0;  // mean 1.5, stat 5 * 1.5; centered draws vanish
    CHECK(test_homogeneity(tent, constrows, nan, nan) ==
          doctest::Approx(1.0 / 11.0).epsilon(1e-14));
    EffectCurve shifted = tent;
    shifted.tau.array() += 5.0;
    CHECK(test_homogeneity(shifted, constrows, nan, nan) ==
          doctest::Approx(1.0 / 11.0).epsilon(1e-14));
  }
}

TEST_CASE("bootstrap bands wrap the draws, the band, and both tests") {
  const int n = 150;
  const QuantileGrid grid = make_grid(0.2, 0.7, 6);
  const int m = grid.size();
  UnitSample sample = spread_sample(n);
  const Eigen::VectorXd xs = sample.xs();
  Eigen::MatrixXd qf(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j)
      qf(i, j) = 2.0 * grid.points(j) + 0.5 * xs(i) + 0.1 * std::sin(7.3 * i);
  }
  KernelSpec tri;
  const BandwidthPlan plan = flat_plan(m, 0.8);
  const ResidualSet res =
      residuals(sample, qf, grid, plan, 2, -1, EstimatorKind::frechet, tri);

  EffectCurve effect;
  effect.grid = grid;
  effect.tau = 0.5 + 0.05 * grid.points.array();
  effect.variant = EffectVariant::sharp;

  BootstrapConfig cfg;
  cfg.draws = 200;
  cfg.level = 0.1;
  cfg.seed = 9;
  cfg.order = 2;
  cfg.method = EstimatorKind::frechet;
  cfg.threads = 1;

  const InferenceReport rep = bootstrap_bands(sample, effect, res, plan, cfg);
  CHECK(rep.critical_value > 0.0);
  CHECK(rep.h_base == plan.h_frechet);
  CHECK(rep.draws == 200);
  CHECK(rep.level == 0.1);
  CHECK(rep.seed == 9);
  for (int j = 0; j < m; ++j) {
    CHECK(rep.band_low(j) <= effect.tau(j));
    CHECK(effect.tau(j) <= rep.band_high(j));
    const double up = rep.band_high(j) - effect.tau(j);
    const double down = effect.tau(j) - rep.band_low(j);
    CHECK(up == doctest::Approx(down).epsilon(1e-12));
    const double expected = rep.critical_value / std::sqrt(n * plan.h_frechet);
    CHECK(up == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK(rep.p_nullity > 0.0);
  CHECK(rep.p_nullity <= 1.0);
  CHECK(rep.p_homogeneity > 0.0);
  CHECK(rep.p_homogeneity <= 1.0);

  const InferenceReport rep2 = bootstrap_bands(sample, effect, res, plan, cfg);
  CHECK(rep2.critical_value == rep.critical_value);
  CHECK(rep2.p_nullity == rep.p_nullity);
  CHECK(rep2.p_homogeneity == rep.p_homogeneity);

  BootstrapConfig sub = cfg;
  sub.test_lo = 0.3;
  sub.test_hi = 0.5;
  const InferenceReport rsub = bootstrap_bands(sample, effect, res, plan, sub);
  CHECK(rsub.p_nullity > 0.0);
  CHECK(rsub.p_nullity <= 1.0);

  BootstrapConfig bad = cfg;
  bad.draws = 0;
  CHECK_THROWS_AS(bootstrap_bands(sample, effect, res, plan, bad), ValidationError);
  bad = cfg;
  bad.level = 1.0;
  CHECK_THROWS_AS(bootstrap_bands(sample, effect, res, plan, bad), ValidationError);
  EffectCurve mism = effect;
  mism.tau = Eigen::VectorXd::Zero(m - 1);
  CHECK_THROWS_AS(bootstrap_bands(sample, mism, res, plan, cfg), ValidationError);
}

TEST_SUITE_END();
