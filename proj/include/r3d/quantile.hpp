#pragma once

#include <Eigen/Dense>

#include "r3d/types.hpp"

namespace r3d {

// Left-continuous type-1 empirical quantile: the smallest draw whose
// cumulative normalized weight reaches q. Tied draws pool into one atom.
// Empty weights mean equal weighting. probs must be nondecreasing.
Eigen::VectorXd empirical_quantiles(const Eigen::Ref<const Eigen::VectorXd>& draws,
                                    const Eigen::Ref<const Eigen::VectorXd>& weights,
                                    const Eigen::Ref<const Eigen::VectorXd>& probs);

QuantileCurve empirical_qf(const Eigen::Ref<const Eigen::VectorXd>& draws,
                           const Eigen::Ref<const Eigen::VectorXd>& weights,
                           const QuantileGrid& grid);

QuantileCurve empirical_qf(const UnitRecord& unit, const QuantileGrid& grid);

// Rows are units in sample order, columns grid points.
Eigen::MatrixXd unit_quantile_matrix(const UnitSample& sample, const QuantileGrid& grid);

// Caps draws strictly above the weighted upper-quantile at that quantile;
// order preserved.
Eigen::VectorXd winsorize(const Eigen::Ref<const Eigen::VectorXd>& draws,
                          const Eigen::Ref<const Eigen::VectorXd>& weights,
                          double upper);

Eigen::VectorXd winsorize(const Eigen::Ref<const Eigen::VectorXd>& draws, double upper);

}  // namespace r3d
