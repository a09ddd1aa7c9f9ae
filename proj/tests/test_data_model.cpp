#include "doctest.h"

#include <sstream>

#include "r3d/csv.hpp"
#include "r3d/quantile.hpp"
#include "r3d/rng.hpp"
#include "r3d/types.hpp"

using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> xs) {
  VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

}  // namespace

TEST_SUITE("data_model") {

TEST_CASE("type-1 empirical quantiles") {
  const VectorXd draws = vec({1, 2, 3, 4});
  const VectorXd none;
  CHECK(r3d::empirical_quantiles(draws, none, vec({0.5}))(0) == 2.0);   // F(2)=0.5
  CHECK(r3d::empirical_quantiles(draws, none, vec({0.51}))(0) == 3.0);  // inf where F >= 0.51
  CHECK(r3d::empirical_quantiles(vec({1, 3}), vec({0.9, 0.1}), vec({0.5}))(0) == 1.0);

  // ties pool into one atom: F(1) = 2/3 for draws {1,1,2}
  const VectorXd tied = vec({2, 1, 1});
  CHECK(r3d::empirical_quantiles(tied, none, vec({0.5}))(0) == 1.0);
  CHECK(r3d::empirical_quantiles(tied, none, vec({0.7}))(0) == 2.0);
}

TEST_CASE("empirical_qf properties on random inputs") {
  r3d::RngStream rng(r3d::stream_key({42, r3d::kTagTest}));
  const auto grid = r3d::make_grid(0.05, 0.95, 19);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 1 + static_cast<int>(rng.uniform(0.0, 40.0));
    VectorXd draws(n), weights(n);
    for (int i = 0; i < n; ++i) {
      draws(i) = std::round(rng.normal(0.0, 3.0));  // force ties
      weights(i) = rng.uniform(0.1, 2.0);
    }
    const auto curve = r3d::empirical_qf(draws, weights, grid);
    REQUIRE(curve.monotone);
    for (int j = 1; j < grid.size(); ++j) CHECK(curve.values(j - 1) <= curve.values(j));
    for (int j = 0; j < grid.size(); ++j)
      CHECK((draws.array() == curve.values(j)).any());  // values come from the draw set

    // weight scale invariance: unit weights equal any constant weights
    const auto unit = r3d::empirical_qf(draws, VectorXd(), grid);
    const auto scaled = r3d::empirical_qf(draws, VectorXd::Constant(n, 7.5), grid);
    CHECK(unit.values == scaled.values);
  }
}

TEST_CASE("winsorize") {
  CHECK(r3d::winsorize(vec({1, 2, 3, 100}), 0.75) == vec({1, 2, 3, 3}));
  const VectorXd v = vec({4, -2, 7, 7, 0});
  CHECK(r3d::winsorize(v, 1.0) == v);                  // nothing above the max
  CHECK(r3d::winsorize(vec({5}), 0.5) == vec({5}));
  CHECK_THROWS_AS(r3d::winsorize(v, 0.0), r3d::ValidationError);
}

TEST_CASE("load_units centering and aggregation") {
  std::istringstream in(
      "unit_id,x,t,z,w\n"
      "a,0.4,1,1.5,\n"
      "a,0.4,1,2.5,\n"
      "b,0.7,0,0.25,\n"
      "a,0.4,1,3.5,\n");
  const auto sample = r3d::load_units(in, {.cutoff = 0.5, .require_t = false});
  REQUIRE(sample.size() == 2);
  CHECK(sample.units[0].id == "a");
  CHECK(sample.units[0].x == doctest::Approx(-0.1));
  CHECK(sample.units[1].x == doctest::Approx(0.2));
  CHECK(sample.units[0].draws == vec({1.5, 2.5, 3.5}));  // file order
  CHECK(sample.units[0].t.value() == 1);
}

TEST_CASE("load_units error paths") {
  {
    std::istringstream in("unit_id,x,z\nu,0.1,oops\n");
    CHECK_THROWS_WITH_AS(r3d::load_units(in, {}),
                         doctest::Contains("line 2"), r3d::IoError);
  }
  {
    std::istringstream in("unit_id,x,z\nu,0.1,1\nu,0.2,2\nv,-1,0\nw,-1,0\n");
    CHECK_THROWS_AS(r3d::load_units(in, {}), r3d::ValidationError);  // conflicting x
  }
  {  // fuzzy mode needs t
    std::istringstream in("unit_id,x,z\na,0.5,1\nb,0.6,2\nc,-0.5,3\nd,-0.6,4\n");
    CHECK_THROWS_AS(r3d::load_units(in, {.cutoff = 0.0, .require_t = true}),
                    r3d::ValidationError);
  }
}

TEST_CASE("serialization round-trips bit-exactly") {
  std::istringstream in(
      "unit_id,x,t,z,w\n"
      "a,0.4001,1,1.528173651823,0.25\n"
      "a,0.4001,1,-2.5e-3,1.75\n"
      "b,0.7,0,0.333333333333333331,\n"
      "c,-0.2,0,41.0,2\n"
      "d,-0.3,1,0.1,3\n");
  const auto first = r3d::load_units(in, {.cutoff = 0.25});
  std::ostringstream out;
  r3d::save_units(out, first);
  std::istringstream back(out.str());
  const auto second = r3d::load_units(back, {.cutoff = 0.0});
  REQUIRE(second.size() == first.size());
  for (int i = 0; i < first.size(); ++i) {
    CHECK(second.units[i].id == first.units[i].id);
    CHECK(second.units[i].x == first.units[i].x);  // bitwise
    CHECK(second.units[i].draws == first.units[i].draws);
    CHECK(second.units[i].weights == first.units[i].weights);
    CHECK(second.units[i].t == first.units[i].t);
  }
}

TEST_CASE("sample validation") {
  r3d::UnitSample s;
  for (double x : {-0.5, -0.25, 0.25, 0.5}) {
    r3d::UnitRecord u;
    u.id = "u" + std::to_string(s.units.size());
    u.x = x;
    u.draws = vec({1.0});
    s.units.push_back(u);
  }
  CHECK_NOTHROW(s.validate(false));
  CHECK_THROWS_AS(s.validate(true), r3d::ValidationError);  // missing t in fuzzy mode
  s.units[0].draws = VectorXd();
  CHECK_THROWS_AS(s.validate(false), r3d::ValidationError);  // zero draws
}

TEST_CASE("grid construction") {
  const auto g = r3d::default_grid();
  CHECK(g.size() == 95);
  CHECK(g.points(0) == doctest::Approx(1e-6));
  CHECK(g.points(94) == doctest::Approx(0.95 + 1e-6));
  CHECK_THROWS_AS(r3d::make_grid(0.0, 0.9, 5), r3d::ValidationError);
  CHECK_THROWS_AS(r3d::make_grid(0.1, 1.0, 5), r3d::ValidationError);
}

}  // TEST_SUITE
