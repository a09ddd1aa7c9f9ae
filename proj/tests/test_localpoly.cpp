#include "doctest.h"

#include "oracles.hpp"
#include "r3d/localpoly.hpp"
#include "r3d/rng.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using r3d::KernelFamily;
using r3d::KernelSpec;
using r3d::Side;

namespace {

const KernelSpec kUniform{KernelFamily::uniform};
const KernelSpec kTriangular{KernelFamily::triangular};

VectorXd vec(std::initializer_list<double> xs) {
  VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

r3d::QuantileCurve flat_curve(const r3d::QuantileGrid& g, double value) {
  r3d::QuantileCurve c;
  c.grid = g;
  c.values = VectorXd::Constant(g.size(), value);
  return c;
}

}  // namespace

TEST_SUITE("localpoly") {

TEST_CASE("hand-checked weights") {
  {  // local constant averages the single in-window plus unit
    const auto ws = r3d::lp_weights(vec({0.5, -0.5}), 1.0, 0, Side::plus, kUniform);
    CHECK(ws.weights(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ws.weights(1) == 0.0);
  }
  {  // two-point linear interpolation: intercept = 1.5 y1 - 0.5 y2
    const auto ws = r3d::lp_weights(vec({0.25, 0.75}), 1.0, 1, Side::plus, kUniform);
    CHECK(ws.weights(0) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(ws.weights(1) == doctest::Approx(-0.5).epsilon(1e-12));
  }
}

TEST_CASE("closed form equals dense weighted least squares") {
  r3d::RngStream rng(r3d::stream_key({11, r3d::kTagTest}));
  for (int rep = 0; rep < 250; ++rep) {
    const auto d = oracle::random_design(rng, 3);
    const auto ws = r3d::lp_weights(d.xs, d.h, d.p, d.side, d.kernel);
    const VectorXd want = oracle::wls_weights(d.xs, d.h, d.p, d.side, d.kernel);
    CHECK((ws.weights - want).cwiseAbs().maxCoeff() < 1e-10);

    // reproducing property: sum s = 1, moment annihilation through order p
    CHECK(std::abs(ws.weights.sum() - 1.0) < 1e-8);
    for (int k = 1; k <= d.p; ++k) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < d.xs.size(); ++i)
        acc += ws.weights(i) * std::pow(d.xs(i) / d.h, k);
      CHECK(std::abs(acc) < 1e-8);
    }
  }
}

TEST_CASE("polynomial reproduction through conditional_mean") {
  r3d::RngStream rng(r3d::stream_key({12, r3d::kTagTest}));
  const auto grid = r3d::make_grid(0.1, 0.9, 5);
  for (int rep = 0; rep < 50; ++rep) {
    const auto d = oracle::random_design(rng, 3);
    VectorXd coef(d.p + 1);
    for (int j = 0; j <= d.p; ++j) coef(j) = rng.uniform(-2.0, 2.0);
    MatrixXd qf(d.xs.size(), grid.size());
    for (Eigen::Index i = 0; i < d.xs.size(); ++i) {
      double g = 0.0;  // g(x) = sum_j coef_j x^j, degree <= p
      for (int j = d.p; j >= 0; --j) g = g * d.xs(i) + coef(j);
      qf.row(i).setConstant(g);
    }
    const auto ws = r3d::lp_weights(d.xs, d.h, d.p, d.side, d.kernel);
    const auto m = r3d::conditional_mean(ws, qf, grid);
    for (int j = 0; j < grid.size(); ++j)
      CHECK(std::abs(m.values(j) - coef(0)) < 1e-8);  // g(0) = coef_0
  }
}

TEST_CASE("conditional_mean basics") {
  const auto grid = r3d::make_grid(0.25, 0.75, 3);
  std::vector<r3d::QuantileCurve> curves{flat_curve(grid, 0.0), flat_curve(grid, 2.0)};

  r3d::WeightSet ws;
  ws.side = Side::plus;
  ws.order = 0;
  ws.bandwidth = 1.0;
  ws.weights = vec({1.0, 0.0});
  ws.coefficient_map = ws.weights.transpose();
  CHECK(r3d::conditional_mean(ws, curves).values == curves[0].values);

  ws.weights = vec({0.5, 0.5});
  ws.coefficient_map = ws.weights.transpose();
  CHECK(r3d::conditional_mean(ws, curves).values == VectorXd::Constant(3, 1.0));

  ws.weights = vec({1.5, -0.5});
  ws.coefficient_map = ws.weights.transpose();
  curves[0] = flat_curve(grid, 1.0);
  curves[1] = flat_curve(grid, 1.0);
  CHECK(r3d::conditional_mean(ws, curves).values == VectorXd::Constant(3, 1.0));

  curves[1].grid = r3d::make_grid(0.2, 0.8, 3);
  CHECK_THROWS_AS(r3d::conditional_mean(ws, curves), r3d::ValidationError);
}

TEST_CASE("treatment share and effects") {
  r3d::WeightSet ws;
  ws.weights = vec({1.5, -0.5});
  ws.coefficient_map = ws.weights.transpose();
  CHECK(r3d::treatment_share(ws, vec({1, 1})) == doctest::Approx(1.0));
  CHECK(r3d::treatment_share(ws, vec({0, 0})) == 0.0);
  CHECK(r3d::treatment_share(ws, vec({1, 0})) == doctest::Approx(1.5));

  const auto grid = r3d::make_grid(0.25, 0.75, 2);
  r3d::QuantileCurve mp = flat_curve(grid, 1.0);
  r3d::QuantileCurve mm = flat_curve(grid, 1.0);
  CHECK(r3d::sharp_effect(mp, mm).tau == VectorXd::Zero(2));

  mp.values = vec({1, 2});
  mm.values = vec({0, 1});
  const auto eff = r3d::sharp_effect(mp, mm);
  CHECK(eff.tau == VectorXd::Ones(2));
  CHECK(eff.variant == r3d::EffectVariant::sharp);

  auto fuzzy = r3d::fuzzy_effect(eff, 1.0, 0.5);
  CHECK(fuzzy.tau == VectorXd::Constant(2, 2.0));
  CHECK(fuzzy.denominator.value() == doctest::Approx(0.5));
  // sharp design degenerates to the sharp estimator
  auto degenerate = r3d::fuzzy_effect(eff, 1.0, 0.0);
  CHECK(degenerate.tau == eff.tau);
  CHECK_THROWS_AS(r3d::fuzzy_effect(eff, 0.5, 0.5 - 1e-9), r3d::EstimationError);
}

TEST_CASE("poly_fit_eval") {
  const auto ws = r3d::lp_weights(vec({0.25, 0.75}), 1.0, 1, Side::plus, kUniform);
  CHECK(r3d::poly_fit_eval(ws, vec({3.25, 3.25}), 0.1) == doctest::Approx(3.25));
  const double y1 = 1.7, y2 = -0.4;
  CHECK(r3d::poly_fit_eval(ws, vec({y1, y2}), 0.0) ==
        doctest::Approx(1.5 * y1 - 0.5 * y2).epsilon(1e-12));
  // responses equal to x/h reproduce the linear function
  CHECK(r3d::poly_fit_eval(ws, vec({0.25, 0.75}), 0.4) == doctest::Approx(0.4));
  CHECK_THROWS_AS(r3d::poly_fit_eval(ws, vec({1.0, 2.0}), -0.2), r3d::ValidationError);
}

TEST_CASE("singular and degenerate designs") {
  // only one support point for a linear fit
  CHECK_THROWS_WITH_AS(r3d::lp_weights(vec({0.5, -0.5}), 1.0, 1, Side::plus, kUniform),
                       "insufficient data in bandwidth window", r3d::EstimationError);
  // degenerate window: all in-window x equal
  CHECK_THROWS_AS(r3d::lp_weights(vec({0.3, 0.3, 0.3, -0.4}), 1.0, 1, Side::plus,
                                  kTriangular),
                  r3d::EstimationError);
  // empty side
  CHECK_THROWS_AS(r3d::lp_weights(vec({0.3, 0.4}), 1.0, 0, Side::minus, kUniform),
                  r3d::EstimationError);
  // triangular kernel vanishes at the window edge, leaving p support points
  CHECK_THROWS_AS(r3d::lp_weights(vec({1.0, 0.5, -0.5}), 1.0, 1, Side::plus, kTriangular),
                  r3d::EstimationError);
  // x = 0 sits on the plus side
  const auto ws = r3d::lp_weights(vec({0.0, 0.5, -0.5}), 1.0, 1, Side::plus, kUniform);
  CHECK(ws.weights(2) == 0.0);
  CHECK(std::abs(ws.weights.sum() - 1.0) < 1e-12);
}

}  // TEST_SUITE
