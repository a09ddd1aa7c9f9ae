#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>

#include "r3d/bandwidth.hpp"
#include "r3d/inference.hpp"
#include "r3d/kernels.hpp"
#include "r3d/localpoly.hpp"
#include "r3d/types.hpp"

namespace r3d {

// One knob set for the whole pipeline: unit quantile functions, bandwidth
// selection, one-sided curve estimation, and the multiplier bootstrap.
struct EstimateConfig {
  EstimatorKind method = EstimatorKind::frechet;
  bool fuzzy = false;
  int order = 2;         // estimation order p
  int pilot_order = -1;  // bandwidth-selection order s; -1 means p - 1
  int t_order = -1;      // residual fit truncation; -1 means p
  KernelSpec kernel;
  QuantileGrid grid;     // empty means the default 95-point grid
  bool rot = true;       // regularity adjustment of the plug-in bandwidths
  bool rearrange = false;  // localpoly path: sort each side curve
  double bandwidth = 0.0;   // > 0 pins the numerator bandwidths
  double bandwidth2 = 0.0;  // > 0 pins the denominator bandwidth
  PilotGuesses pilots;
  int draws = 5000;  // bootstrap replications; 0 skips inference entirely
  double level = 0.10;
  std::uint64_t seed = 1;
  int threads = 0;
  bool add_one = true;
  double test_lo = std::numeric_limits<double>::quiet_NaN();
  double test_hi = std::numeric_limits<double>::quiet_NaN();
};

struct StageTimings {
  double quantiles = 0.0;  // seconds per stage
  double bandwidths = 0.0;
  double estimation = 0.0;
  double bootstrap = 0.0;
  double total = 0.0;
};

struct EstimateResult {
  InferenceReport report;
  BandwidthPlan plan;
  QuantileCurve m_plus;   // side curves entering the effect, after any
  QuantileCurve m_minus;  // projection or rearrangement
  double share_plus = 1.0;
  double share_minus = 0.0;
  StageTimings timings;
};

// Full pipeline on one in-memory sample. Throws ValidationError on
// inconsistent inputs and EstimationError on singular designs, degenerate
// density, or a weak first stage.
EstimateResult estimate(const UnitSample& sample, const EstimateConfig& config);

}  // namespace r3d
