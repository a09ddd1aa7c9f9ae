#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "r3d/estimate.hpp"
#include "r3d/types.hpp"

namespace r3d {

// Two synthetic designs. dgp1 draws each unit's outcomes from a normal whose
// latent mean jumps by delta at the cutoff, so the true effect curve is the
// constant delta. dgp2 adds twice an exponential variate whose rate jumps by
// delta_lambda, which makes the true effect grow in magnitude across
// quantiles whenever delta_lambda is nonzero.
enum class Dgp { dgp1, dgp2 };

const char* dgp_name(Dgp dgp);
Dgp dgp_from_name(const std::string& name);  // accepts "dgp1"/"dgp2"/"1"/"2"

// Unit i: x ~ U(-1,1), mu ~ N(5 + 5x + d*delta, 1) with d = 1{x >= 0},
// sigma = |N(1 + x, 1)|, then n_i draws from N(mu, sigma^2). Sharp design,
// t = 1{x >= 0}. Streams are keyed by (seed, rep) so replicates can be
// generated independently and bit-reproducibly in any order.
UnitSample gen_dgp1(int n, int n_i, double delta, std::uint64_t seed,
                    std::uint64_t rep = 0);

// Unit i: x ~ U(-1,1), mu = U(-5,5) + 2x, lambda ~ U(0.5,1.5), then n_i draws
// of N(mu + d*delta, 1) + 2 * Exp(lambda + d*delta_lambda) with the
// exponential parameterized by rate. A nonpositive effective rate on the
// treated side raises ValidationError.
UnitSample gen_dgp2(int n, int n_i, double delta, double delta_lambda,
                    std::uint64_t seed, std::uint64_t rep = 0);

// Constant curve: the dgp1 location shift moves every quantile by delta.
QuantileCurve true_effect_dgp1(double delta, const QuantileGrid& grid);

// Quantile of N(0,1) + Exp(rate), inverted by bisection on the closed-form
// convolution CDF. Exposed for tests of the dgp2 oracle's numeric core.
double emg_quantile(double q, double rate);

// Oracle effect for dgp2 at the cutoff: the average treated unit quantile
// function minus the average untreated one over oracle_n parameter draws
// shared between the two sides. The unit location cancels exactly in the
// difference, so only the exponential rate pair contributes per-draw spread.
// se_out, when given, receives the per-quantile Monte Carlo standard error.
QuantileCurve true_effect_dgp2(double delta, double delta_lambda,
                               const QuantileGrid& grid, int oracle_n = 100000,
                               std::uint64_t seed = 1,
                               Eigen::VectorXd* se_out = nullptr);

// Effect sizes matching an average Cohen's d of 0.5 ("d05") or 1 ("d10").
double preset_delta(Dgp dgp, const std::string& name);

struct SimConfig {
  Dgp dgp = Dgp::dgp1;
  int n = 1000;
  int n_i = 0;  // draws per unit; 0 means match n
  double delta = 0.0;
  double delta_lambda = 0.0;  // dgp2 only
  int reps = 500;
  int draws = 500;  // bootstrap replicates per estimate
  double level = 0.05;
  EstimatorKind method = EstimatorKind::frechet;
  int order = 2;
  std::uint64_t seed = 1;
  int threads = 0;
  QuantileGrid grid;       // empty: the 9 deciles
  double bandwidth = 0.0;  // > 0 pins the numerator bandwidth per replicate
};

struct SimReport {
  QuantileGrid grid;
  Eigen::VectorXd true_tau;
  Eigen::VectorXd mean_tau;
  Eigen::VectorXd bias;      // mean_tau - true_tau
  Eigen::VectorXd rel_bias;  // |bias| / |true_tau|, IEEE inf/nan at zero truth
  Eigen::VectorXd variance;  // across completed replicates
  Eigen::VectorXd mean_se;   // Monte Carlo standard error of mean_tau
  double coverage = 0.0;     // band covered the whole true curve
  double coverage_se = 0.0;
  double nullity_acceptance = 0.0;  // share of replicates with p > level
  double nullity_se = 0.0;
  double homogeneity_acceptance = 0.0;
  double homogeneity_se = 0.0;
  int completed = 0;
  int failed = 0;
  std::vector<std::string> failures;  // distinct messages, capped
  double seconds = 0.0;
};

// Generate, estimate, and bootstrap config.reps replicates, then aggregate.
// Replicate failures are recorded in the report and excluded from averages;
// only a run where every replicate fails throws.
SimReport monte_carlo(const SimConfig& config);

}  // namespace r3d
