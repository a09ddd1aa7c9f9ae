#include "r3d/types.hpp"

#include <cmath>
#include <unordered_set>

namespace r3d {

const char* estimator_name(EstimatorKind kind) {
  return kind == EstimatorKind::localpoly ? "localpoly" : "frechet";
}

EstimatorKind estimator_from_name(const std::string& name) {
  if (name == "localpoly") return EstimatorKind::localpoly;
  if (name == "frechet") return EstimatorKind::frechet;
  throw ValidationError("unknown method '" + name + "'");
}

void QuantileGrid::validate() const {
  if (points.size() < 2) throw ValidationError("quantile grid needs at least 2 points");
  if (!(a > 0.0 && b < 1.0 && a <= b))
    throw ValidationError("quantile grid bounds must satisfy 0 < a <= b < 1");
  if (!(a <= points(0) && points(points.size() - 1) <= b))
    throw ValidationError("quantile grid points must lie in [a, b]");
  for (Eigen::Index j = 1; j < points.size(); ++j) {
    if (!(points(j - 1) < points(j)))
      throw ValidationError("quantile grid points must be strictly increasing");
  }
}

QuantileGrid make_grid(double a, double b, int m) {
  QuantileGrid g;
  g.a = a;
  g.b = b;
  g.points = Eigen::VectorXd::LinSpaced(m, a, b);
  g.validate();
  return g;
}

QuantileGrid default_grid() { return make_grid(1e-6, 0.95 + 1e-6, 95); }

bool same_grid(const QuantileGrid& g1, const QuantileGrid& g2) {
  return g1.points.size() == g2.points.size() && g1.points == g2.points;
}

void require_same_grid(const QuantileGrid& g1, const QuantileGrid& g2) {
  if (!same_grid(g1, g2)) throw ValidationError("quantile grids do not match");
}

Eigen::VectorXd UnitSample::xs() const {
  Eigen::VectorXd out(size());
  for (int i = 0; i < size(); ++i) out(i) = units[i].x;
  return out;
}

Eigen::VectorXd UnitSample::treatments() const {
  Eigen::VectorXd out(size());
  for (int i = 0; i < size(); ++i) {
    if (!units[i].t.has_value())
      throw ValidationError("unit '" + units[i].id + "' is missing the treatment indicator");
    out(i) = *units[i].t;
  }
  return out;
}

void UnitSample::validate_units(bool fuzzy) const {
  std::unordered_set<std::string> seen;
  for (const auto& u : units) {
    if (!std::isfinite(u.x))
      throw ValidationError("unit '" + u.id + "' has a non-finite running value");
    if (u.draws.size() == 0)
      throw ValidationError("unit '" + u.id + "' has no draws");
    if (u.weights.size() != 0) {
      if (u.weights.size() != u.draws.size())
        throw ValidationError("unit '" + u.id + "' has mismatched draw and weight counts");
      if (u.weights.minCoeff() < 0.0 || !(u.weights.sum() > 0.0))
        throw ValidationError("unit '" + u.id + "' needs nonnegative weights with positive sum");
    }
    if (fuzzy && !u.t.has_value())
      throw ValidationError("fuzzy mode requires a treatment indicator for unit '" + u.id + "'");
    if (u.t.has_value() && *u.t != 0 && *u.t != 1)
      throw ValidationError("unit '" + u.id + "' has a non-binary treatment indicator");
    if (!seen.insert(u.id).second)
      throw ValidationError("duplicate unit id '" + u.id + "'");
  }
}

void UnitSample::validate(bool fuzzy) const {
  validate_units(fuzzy);
  int n_plus = 0, n_minus = 0;
  for (const auto& u : units) (on_side(u.x, Side::plus) ? n_plus : n_minus) += 1;
  if (n_plus < 2 || n_minus < 2)
    throw ValidationError("need at least 2 units on each side of the cutoff");
}

}  // namespace r3d
