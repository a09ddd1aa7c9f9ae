#pragma once

// Data-driven bandwidth selection: density pilot at the cutoff, pilot
// bandwidths, first-stage local polynomial fits, and MSE/IMSE-optimal
// bandwidths with an optional coverage-oriented shrink factor.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "r3d/kernels.hpp"
#include "r3d/types.hpp"

namespace r3d {

// Preliminary guesses for the pilot-bandwidth constants. Empty vectors mean
// "one at every grid point", the documented default.
struct PilotGuesses {
  Eigen::VectorXd derivative_m;  // (s+1)-th derivative of the outcome mean
  Eigen::VectorXd variance_m;    // conditional variance of the outcome
  double derivative_t = 1.0;     // same pair for the treatment equation
  double variance_t = 1.0;
};

struct Pilots {
  Eigen::VectorXd h1;               // numerator pilot, one per grid point
  double h2 = 0.0;                  // treatment-equation pilot
  std::vector<std::string> notes;  // fallback diagnostics
};

// One side's first-stage summary on the quantile grid.
struct SideFit {
  Eigen::MatrixXd alpha;       // (s+1) x M coefficients in the u = x/h basis
  Eigen::VectorXd level;       // fitted conditional mean at the cutoff
  Eigen::VectorXd derivative;  // order-(s+1) derivative from the wider fit
  Eigen::VectorXd sigma11;     // kernel-weighted RMS deviation from level
  double level_t = 0.0;        // treatment equation analogues (fuzzy only)
  double derivative_t = 0.0;
  double sigma22 = 0.0;
};

struct FirstStageFit {
  QuantileGrid grid;
  KernelSpec kernel;
  int order = 1;  // s, the order the bandwidth is optimal for
  double f_x0 = 0.0;
  double h_derivative = 0.0;  // window used by the order-(s+1) refit
  Pilots pilots;
  SideFit plus;
  SideFit minus;
  bool has_treatment = false;
};

struct BandwidthPlan {
  Eigen::VectorXd h1;          // per-quantile numerator bandwidths
  double h2 = 0.0;             // scalar denominator bandwidth
  double h_frechet = 0.0;      // scalar bandwidth shared across quantiles
  Pilots pilots;
  double density_at_cutoff = 0.0;
  bool rot_applied = false;
  std::vector<std::string> notes;
};

// Kernel density estimate of the running variable at the cutoff with the
// rule-of-thumb bandwidth c_n = 1.06 * sd(x) * n^(-1/5).
double density_at_cutoff(const Eigen::Ref<const Eigen::VectorXd>& xs,
                         const KernelSpec& kernel);

// Pilot bandwidths for the first-stage fits from plug-in bias/variance
// constants evaluated one order up (the first stage fits order s+1 as well),
// so pilots shrink at n^(-1/(2s+5)). A vanishing bias constant (exact for
// symmetric kernels with odd s and unit guesses) falls back to
// sd(x) * n^(-1/(2s+5)) with a note.
Pilots pilot_bandwidths(const UnitSample& sample, int s, const QuantileGrid& grid,
                        const KernelSpec& kernel, double f_x0,
                        const PilotGuesses& guesses = {});

// Order-s fits at each grid point under the pilot bandwidths, the order-(s+1)
// refit for the bias derivative, and kernel-weighted residual spreads. The
// refit runs at its own derivative-targeted window (clamped to the observed
// support), since the top coefficient's variance blows up at h^(-(2s+3)) and
// the intercept pilot would leave it as pure noise.
FirstStageFit first_stage(const UnitSample& sample, const Pilots& pilots, int s,
                          const QuantileGrid& grid, const KernelSpec& kernel,
                          double f_x0);

// MSE-optimal bandwidth at one grid point; q must lie on the fit's grid.
double mse_bandwidth(const FirstStageFit& fit, double q, int s, Eigen::Index n,
                     std::vector<std::string>* notes = nullptr);

// IMSE-optimal scalar bandwidth, trapezoid integrals over the fit's grid.
double imse_bandwidth(const FirstStageFit& fit, const QuantileGrid& grid, int s,
                      Eigen::Index n, std::vector<std::string>* notes = nullptr);

// Treatment-equation bandwidth (scalar; the constants do not vary with q).
double treatment_bandwidth(const FirstStageFit& fit, int s, Eigen::Index n,
                           std::vector<std::string>* notes = nullptr);

// Coverage-oriented shrink h * n^(-s/((2s+3)(s+3))).
double rot_adjust(double h, int s, Eigen::Index n);

// Full pipeline: density, pilots, first stage, final bandwidths. The plan
// carries both the per-quantile vector and the scalar variant so either
// estimator can run from it.
BandwidthPlan select_bandwidths(const UnitSample& sample, const QuantileGrid& grid,
                                const KernelSpec& kernel, int s, bool fuzzy,
                                bool rot, const PilotGuesses& guesses = {});

}  // namespace r3d
