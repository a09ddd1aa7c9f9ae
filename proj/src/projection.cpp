#include "r3d/projection.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace r3d {

Eigen::VectorXd isotone_project(const Eigen::Ref<const Eigen::VectorXd>& values,
                                const Eigen::Ref<const Eigen::VectorXd>& weights) {
  const Eigen::Index n = values.size();
  if (weights.size() != n) throw ValidationError("projection weights must match values");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(values(i))) throw ValidationError("projection input must be finite");
    if (!(weights(i) > 0.0)) throw ValidationError("projection weights must be positive");
  }

  // Pool adjacent violators with a stack of blocks; each block carries its
  // weighted mean, total weight, and length.
  std::vector<double> val(static_cast<std::size_t>(n));
  std::vector<double> wt(static_cast<std::size_t>(n));
  std::vector<Eigen::Index> len(static_cast<std::size_t>(n));
  std::size_t top = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    val[top] = values(i);
    wt[top] = weights(i);
    len[top] = 1;
    ++top;
    while (top >= 2 && val[top - 2] > val[top - 1]) {
      const double w = wt[top - 2] + wt[top - 1];
      val[top - 2] = (wt[top - 2] * val[top - 2] + wt[top - 1] * val[top - 1]) / w;
      wt[top - 2] = w;
      len[top - 2] += len[top - 1];
      --top;
    }
  }

  Eigen::VectorXd out(n);
  Eigen::Index pos = 0;
  for (std::size_t b = 0; b < top; ++b)
    for (Eigen::Index r = 0; r < len[b]; ++r) out(pos++) = val[b];
  return out;
}

Eigen::VectorXd isotone_project(const Eigen::Ref<const Eigen::VectorXd>& values) {
  return isotone_project(values, Eigen::VectorXd::Ones(values.size()));
}

QuantileCurve project_qf(const QuantileCurve& curve) {
  return project_qf(curve, Eigen::VectorXd::Ones(curve.values.size()));
}

QuantileCurve project_qf(const QuantileCurve& curve,
                         const Eigen::Ref<const Eigen::VectorXd>& grid_weights) {
  QuantileCurve out;
  out.grid = curve.grid;
  out.values = isotone_project(curve.values, grid_weights);
  out.monotone = true;
  return out;
}

QuantileCurve rearrange(const QuantileCurve& curve) {
  QuantileCurve out = curve;
  std::sort(out.values.begin(), out.values.end());
  out.monotone = true;
  return out;
}

}  // namespace r3d
