#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "r3d/types.hpp"

namespace r3d {

enum class KernelFamily { triangular, uniform, epanechnikov };

// Densities are supported on [-1, 1]; the bandwidth carries all scaling.
struct KernelSpec {
  KernelFamily family = KernelFamily::triangular;
};

const char* kernel_name(KernelFamily family);
KernelFamily kernel_from_name(const std::string& name);  // throws ValidationError

template <class Scalar>
Scalar kernel_eval(const KernelSpec& spec, Scalar u) {
  const Scalar au = u < Scalar(0) ? -u : u;
  if (au > Scalar(1)) return Scalar(0);
  switch (spec.family) {
    case KernelFamily::triangular:
      return Scalar(1) - au;
    case KernelFamily::uniform:
      return Scalar(0.5);
    case KernelFamily::epanechnikov:
      return Scalar(0.75) * (Scalar(1) - u * u);
  }
  return Scalar(0);
}

// One-sided moment matrices for order-p local polynomial fits:
//   gamma(j,k) = int u^{j+k} K(u) du
//   lambda(j)  = int u^{p+1+j} K(u) du
//   psi(j,k)   = int u^{j+k} K(u)^2 du
// over [0,1] for the plus side, [-1,0] for the minus side.
struct KernelMoments {
  int order = 0;
  Side side = Side::plus;
  Eigen::MatrixXd gamma;
  Eigen::VectorXd lambda;
  Eigen::MatrixXd psi;
};

// int_0^1 u^m K(u) du (squared = false) or int_0^1 u^m K(u)^2 du; the minus
// side equals the plus side times (-1)^m by symmetry.
double kernel_monomial_moment(const KernelSpec& spec, int m, Side side, bool squared);

// Memoized per (family, p, side); entries are immutable once created.
const KernelMoments& kernel_moments(const KernelSpec& spec, int p, Side side);

// e0' Gamma^{-1}, the intercept row of the continuous-limit weighted
// least-squares solve of order p on one side of the cutoff.
Eigen::VectorXd intercept_row(const KernelSpec& spec, int p, Side side);

}  // namespace r3d
