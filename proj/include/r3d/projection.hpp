#pragma once

#include <Eigen/Dense>

#include "r3d/types.hpp"

namespace r3d {

// Weighted L2 projection onto nondecreasing vectors (pool adjacent violators):
// the unique minimizer of sum_j w_j (v_j - u_j)^2 over u_1 <= ... <= u_M.
Eigen::VectorXd isotone_project(const Eigen::Ref<const Eigen::VectorXd>& values,
                                const Eigen::Ref<const Eigen::VectorXd>& weights);

Eigen::VectorXd isotone_project(const Eigen::Ref<const Eigen::VectorXd>& values);

// Projection of a curve onto the quantile-function cone; uniform grid weights
// unless grid_weights is given. Idempotent.
QuantileCurve project_qf(const QuantileCurve& curve);
QuantileCurve project_qf(const QuantileCurve& curve,
                         const Eigen::Ref<const Eigen::VectorXd>& grid_weights);

// Monotone rearrangement: values sorted ascending, multiset preserved.
QuantileCurve rearrange(const QuantileCurve& curve);

}  // namespace r3d
