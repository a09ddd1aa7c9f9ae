#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "r3d/errors.hpp"

namespace r3d {

enum class Side { plus, minus };

// Units sitting exactly at the cutoff belong to the plus side, T = 1{x >= 0}.
inline bool on_side(double x, Side s) {
  return s == Side::plus ? x >= 0.0 : x < 0.0;
}

inline const char* side_name(Side s) { return s == Side::plus ? "plus" : "minus"; }

// Which conditional-curve estimator the pipeline runs: raw per-quantile local
// polynomial fits, or the shared-bandwidth fit projected onto the quantile
// cone.
enum class EstimatorKind { localpoly, frechet };

const char* estimator_name(EstimatorKind kind);
EstimatorKind estimator_from_name(const std::string& name);  // throws ValidationError

// Quantile grid q_1 < ... < q_M inside [a, b], 0 < a <= q_1, q_M <= b < 1.
struct QuantileGrid {
  Eigen::VectorXd points;
  double a = 0.0;
  double b = 0.0;

  int size() const { return static_cast<int>(points.size()); }
  void validate() const;
};

// M equally spaced points from a to b inclusive.
QuantileGrid make_grid(double a, double b, int m);

// 95 points on [1e-6, 0.95 + 1e-6].
QuantileGrid default_grid();

bool same_grid(const QuantileGrid& g1, const QuantileGrid& g2);
void require_same_grid(const QuantileGrid& g1, const QuantileGrid& g2);

struct QuantileCurve {
  QuantileGrid grid;
  Eigen::VectorXd values;
  bool monotone = false;  // certified nondecreasing
};

struct UnitRecord {
  std::string id;
  double x = 0.0;            // running variable, cutoff-centered
  std::optional<int> t;      // treatment indicator, 0/1
  Eigen::VectorXd draws;     // within-unit outcome draws
  Eigen::VectorXd weights;   // per-draw sampling weights; empty means unweighted
};

struct UnitSample {
  std::vector<UnitRecord> units;
  double cutoff = 0.0;  // original threshold; x values are already centered

  int size() const { return static_cast<int>(units.size()); }
  Eigen::VectorXd xs() const;
  Eigen::VectorXd treatments() const;  // throws ValidationError on missing t
  // Per-unit checks: finite x, nonempty draws, sane weights, unique ids; fuzzy
  // additionally needs t everywhere.
  void validate_units(bool fuzzy) const;
  // validate_units plus the estimation precondition of 2+ units per side.
  void validate(bool fuzzy) const;
};

}  // namespace r3d
