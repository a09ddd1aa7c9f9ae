#include "r3d/kernels.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <tuple>

#include <Eigen/Cholesky>

namespace r3d {

const char* kernel_name(KernelFamily family) {
  switch (family) {
    case KernelFamily::triangular: return "triangular";
    case KernelFamily::uniform: return "uniform";
    case KernelFamily::epanechnikov: return "epanechnikov";
  }
  return "?";
}

KernelFamily kernel_from_name(const std::string& name) {
  if (name == "triangular") return KernelFamily::triangular;
  if (name == "uniform") return KernelFamily::uniform;
  if (name == "epanechnikov") return KernelFamily::epanechnikov;
  throw ValidationError("unknown kernel '" + name + "'");
}

double kernel_monomial_moment(const KernelSpec& spec, int m, Side side, bool squared) {
  if (m < 0) throw ValidationError("moment order must be nonnegative");
  const double dm = static_cast<double>(m);
  double plus = 0.0;
  switch (spec.family) {
    case KernelFamily::triangular:
      plus = squared ? 2.0 / ((dm + 1.0) * (dm + 2.0) * (dm + 3.0))
                     : 1.0 / ((dm + 1.0) * (dm + 2.0));
      break;
    case KernelFamily::uniform:
      plus = squared ? 0.25 / (dm + 1.0) : 0.5 / (dm + 1.0);
      break;
    case KernelFamily::epanechnikov:
      plus = squared ? 4.5 / ((dm + 1.0) * (dm + 3.0) * (dm + 5.0))
                     : 1.5 / ((dm + 1.0) * (dm + 3.0));
      break;
  }
  // Symmetry: the [-1,0] integral flips sign with odd powers.
  if (side == Side::minus && (m % 2 == 1)) return -plus;
  return plus;
}

namespace {

KernelMoments build_moments(const KernelSpec& spec, int p, Side side) {
  KernelMoments mom;
  mom.order = p;
  mom.side = side;
  mom.gamma.resize(p + 1, p + 1);
  mom.psi.resize(p + 1, p + 1);
  mom.lambda.resize(p + 1);
  for (int j = 0; j <= p; ++j) {
    mom.lambda(j) = kernel_monomial_moment(spec, p + 1 + j, side, false);
    for (int k = 0; k <= p; ++k) {
      mom.gamma(j, k) = kernel_monomial_moment(spec, j + k, side, false);
      mom.psi(j, k) = kernel_monomial_moment(spec, j + k, side, true);
    }
  }
  // Gamma is a Gram matrix of linearly independent monomials, so positive
  // definite for every supported kernel; guard against regressions.
  Eigen::LLT<Eigen::MatrixXd> llt(mom.gamma);
  if (llt.info() != Eigen::Success)
    throw EstimationError("kernel moment matrix is not positive definite");
  return mom;
}

}  // namespace

const KernelMoments& kernel_moments(const KernelSpec& spec, int p, Side side) {
  if (p < 0) throw ValidationError("polynomial order must be nonnegative");
  using Key = std::tuple<int, int, int>;
  static std::mutex lock;
  static std::map<Key, std::unique_ptr<KernelMoments>> memo;
  const Key key{static_cast<int>(spec.family), p, static_cast<int>(side)};
  std::scoped_lock guard(lock);
  auto it = memo.find(key);
  if (it == memo.end())
    it = memo.emplace(key, std::make_unique<KernelMoments>(build_moments(spec, p, side))).first;
  return *it->second;
}

Eigen::VectorXd intercept_row(const KernelSpec& spec, int p, Side side) {
  const KernelMoments& mom = kernel_moments(spec, p, side);
  Eigen::VectorXd e0 = Eigen::VectorXd::Zero(p + 1);
  e0(0) = 1.0;
  return mom.gamma.llt().solve(e0);
}

}  // namespace r3d
