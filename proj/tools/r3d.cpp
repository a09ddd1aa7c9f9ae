// Command-line front end: estimation on user data, simulation studies,
// RD-plot data export, and speed benchmarks. Output files are deterministic
// for a fixed seed; wall-clock numbers go to stderr (and to the bench table,
// whose point is timing).
#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "r3d/bandwidth.hpp"
#include "r3d/csv.hpp"
#include "r3d/errors.hpp"
#include "r3d/estimate.hpp"
#include "r3d/inference.hpp"
#include "r3d/kernels.hpp"
#include "r3d/localpoly.hpp"
#include "r3d/quantile.hpp"
#include "r3d/simulate.hpp"
#include "r3d/types.hpp"

namespace {

using nlohmann::ordered_json;
using namespace r3d;

constexpr const char* kVersion = "0.1.0";

// Shortest round-trip decimal form, so reruns are byte-identical.
std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

ordered_json vec_json(const Eigen::VectorXd& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

KernelSpec parse_kernel(const std::string& name) {
  KernelSpec k;
  if (name == "triangular")
    k.family = KernelFamily::triangular;
  else if (name == "uniform")
    k.family = KernelFamily::uniform;
  else if (name == "epanechnikov")
    k.family = KernelFamily::epanechnikov;
  else
    throw ValidationError("unknown kernel '" + name + "'");
  return k;
}

EstimatorKind parse_method(const std::string& name) {
  if (name == "frechet") return EstimatorKind::frechet;
  if (name == "localpoly") return EstimatorKind::localpoly;
  throw ValidationError("unknown estimator '" + name + "'");
}

// "a,b" -> pair of reals
std::pair<double, double> parse_range(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos)
    throw ValidationError("range must be 'lo,hi': '" + text + "'");
  try {
    return {std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
  } catch (const std::exception&) {
    throw ValidationError("range must be numeric: '" + text + "'");
  }
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ValidationError("list entries must be numeric: '" + item + "'");
    }
  }
  if (out.empty()) throw ValidationError("empty list: '" + text + "'");
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

// Everything the four subcommands need; one struct keeps flag plumbing flat.
struct RunConfig {
  std::string command;
  std::string input;
  std::string out;
  std::string format = "json";

  double cutoff = 0.0;
  bool fuzzy = false;
  std::string kernel = "triangular";
  std::string method = "frechet";
  bool rearrange = false;
  int order = 2;
  int pilot_order = -1;
  double bandwidth = 0.0;
  double bandwidth2 = 0.0;
  std::string coverage_correction = "on";
  int bootstrap = 5000;
  double level = 0.10;
  std::uint64_t seed = 1;
  std::string test_range;
  double grid_min = 1e-6;
  double grid_max = 0.95 + 1e-6;
  int grid_points = 95;
  int threads = 0;

  // simulate
  int dgp = 1;
  int n = 1000;
  int ni = 0;
  double delta = 0.0;
  double delta_lambda = 0.0;
  int reps = 500;
  std::string preset;
  std::string estimator = "frechet";

  // rdplot
  double bin_width = 0.01;
  std::string quantiles = "0.1,0.25,0.5,0.75,0.9";

  // bench
  std::string sizes = "500,5000";
};

ordered_json meta_json(const RunConfig& cfg, ordered_json config_echo) {
  ordered_json meta;
  meta["tool"] = "r3d";
  meta["version"] = kVersion;
  meta["command"] = cfg.command;
  meta["seed"] = cfg.seed;
  meta["config"] = std::move(config_echo);
  return meta;
}

// ---------------------------------------------------------------- estimate

int run_estimate(const RunConfig& cfg) {
  LoadOptions lo;
  lo.cutoff = cfg.cutoff;
  lo.require_t = cfg.fuzzy;
  const UnitSample sample = load_units_file(cfg.input, lo);

  EstimateConfig ec;
  ec.method = parse_method(cfg.method);
  ec.fuzzy = cfg.fuzzy;
  ec.order = cfg.order;
  ec.pilot_order = cfg.pilot_order;
  ec.kernel = parse_kernel(cfg.kernel);
  ec.grid = make_grid(cfg.grid_min, cfg.grid_max, cfg.grid_points);
  if (cfg.coverage_correction != "on" && cfg.coverage_correction != "off")
    throw ValidationError("--coverage-correction takes 'on' or 'off'");
  ec.rot = cfg.coverage_correction == "on";
  ec.rearrange = cfg.rearrange;
  ec.bandwidth = cfg.bandwidth;
  ec.bandwidth2 = cfg.bandwidth2;
  ec.draws = cfg.bootstrap;
  ec.level = cfg.level;
  ec.seed = cfg.seed;
  ec.threads = cfg.threads;
  if (!cfg.test_range.empty()) {
    const auto [lo_q, hi_q] = parse_range(cfg.test_range);
    ec.test_lo = lo_q;
    ec.test_hi = hi_q;
  }

  const EstimateResult res = estimate(sample, ec);
  const InferenceReport& rep = res.report;

  ordered_json config_echo;
  config_echo["input"] = cfg.input;
  config_echo["cutoff"] = cfg.cutoff;
  config_echo["fuzzy"] = cfg.fuzzy;
  config_echo["method"] = cfg.method;
  config_echo["kernel"] = cfg.kernel;
  config_echo["order"] = cfg.order;
  config_echo["pilot_order"] = cfg.pilot_order;
  config_echo["rearrange"] = cfg.rearrange;
  config_echo["bandwidth"] = cfg.bandwidth;
  config_echo["bandwidth2"] = cfg.bandwidth2;
  config_echo["coverage_correction"] = cfg.coverage_correction;
  config_echo["bootstrap"] = cfg.bootstrap;
  config_echo["level"] = cfg.level;
  config_echo["test_range"] = cfg.test_range;
  config_echo["grid"] = {cfg.grid_min, cfg.grid_max, cfg.grid_points};

  if (cfg.format == "json") {
    ordered_json doc;
    doc["meta"] = meta_json(cfg, std::move(config_echo));
    doc["grid"] = vec_json(rep.effect.grid.points);
    doc["tau"] = vec_json(rep.effect.tau);
    doc["band_low"] = vec_json(rep.band_low);
    doc["band_high"] = vec_json(rep.band_high);
    doc["p_nullity"] = rep.p_nullity;
    doc["p_homogeneity"] = rep.p_homogeneity;
    ordered_json bw;
    bw["h1"] = vec_json(res.plan.h1);
    bw["h2"] = res.plan.h2;
    bw["h_frechet"] = res.plan.h_frechet;
    bw["pilot_h1"] = vec_json(res.plan.pilots.h1);
    bw["pilot_h2"] = res.plan.pilots.h2;
    bw["rot_applied"] = res.plan.rot_applied;
    doc["bandwidths"] = std::move(bw);
    ordered_json diag;
    diag["n_units"] = sample.size();
    diag["critical_value"] = rep.critical_value;
    diag["level"] = rep.level;
    diag["draws"] = rep.draws;
    diag["density_at_cutoff"] = res.plan.density_at_cutoff;
    diag["share_plus"] = res.share_plus;
    diag["share_minus"] = res.share_minus;
    diag["fuzzy_jump"] =
        rep.effect.denominator ? ordered_json(*rep.effect.denominator)
                               : ordered_json(nullptr);
    diag["m_plus"] = vec_json(res.m_plus.values);
    diag["m_minus"] = vec_json(res.m_minus.values);
    diag["notes"] = res.plan.notes;
    doc["diagnostics"] = std::move(diag);
    write_text(cfg.out, doc.dump(2) + "\n");
  } else {
    std::ostringstream csv;
    csv << "metric,value\n";
    csv << "p_nullity," << fmt(rep.p_nullity) << "\n";
    csv << "p_homogeneity," << fmt(rep.p_homogeneity) << "\n";
    csv << "critical_value," << fmt(rep.critical_value) << "\n";
    csv << "level," << fmt(rep.level) << "\n";
    csv << "draws," << rep.draws << "\n";
    csv << "n_units," << sample.size() << "\n";
    csv << "h_frechet," << fmt(res.plan.h_frechet) << "\n";
    csv << "h2," << fmt(res.plan.h2) << "\n";
    csv << "density_at_cutoff," << fmt(res.plan.density_at_cutoff) << "\n";
    csv << "share_plus," << fmt(res.share_plus) << "\n";
    csv << "share_minus," << fmt(res.share_minus) << "\n";
    csv << "rot_applied," << (res.plan.rot_applied ? 1 : 0) << "\n";
    csv << "\nq,tau,band_low,band_high,h1,m_plus,m_minus\n";
    for (int j = 0; j < rep.effect.grid.size(); ++j) {
      csv << fmt(rep.effect.grid.points(j)) << "," << fmt(rep.effect.tau(j))
          << "," << fmt(rep.band_low(j)) << "," << fmt(rep.band_high(j)) << ","
          << fmt(res.plan.h1(j)) << "," << fmt(res.m_plus.values(j)) << ","
          << fmt(res.m_minus.values(j)) << "\n";
    }
    write_text(cfg.out, csv.str());
  }

  std::cerr << "estimate: n=" << sample.size() << " draws=" << rep.draws
            << " p_nullity=" << fmt(rep.p_nullity)
            << " p_homogeneity=" << fmt(rep.p_homogeneity) << " ("
            << fmt(res.timings.total) << "s)\n";
  return 0;
}

// ---------------------------------------------------------------- simulate

int run_simulate(const RunConfig& cfg) {
  SimConfig sc;
  sc.dgp = cfg.dgp == 1 ? Dgp::dgp1 : Dgp::dgp2;
  if (cfg.dgp != 1 && cfg.dgp != 2) throw ValidationError("--dgp takes 1 or 2");
  sc.n = cfg.n;
  sc.n_i = cfg.ni;
  sc.delta = cfg.delta;
  sc.delta_lambda = cfg.delta_lambda;
  if (!cfg.preset.empty()) sc.delta = preset_delta(sc.dgp, cfg.preset);
  sc.reps = cfg.reps;
  sc.draws = cfg.bootstrap;
  sc.level = cfg.level;
  sc.method = parse_method(cfg.estimator);
  sc.order = cfg.order;
  sc.seed = cfg.seed;
  sc.threads = cfg.threads;
  sc.bandwidth = cfg.bandwidth;

  const SimReport rep = monte_carlo(sc);

  ordered_json config_echo;
  config_echo["dgp"] = cfg.dgp;
  config_echo["n"] = sc.n;
  config_echo["ni"] = sc.n_i;
  config_echo["delta"] = sc.delta;
  config_echo["delta_lambda"] = sc.delta_lambda;
  config_echo["preset"] = cfg.preset;
  config_echo["reps"] = sc.reps;
  config_echo["bootstrap"] = sc.draws;
  config_echo["level"] = sc.level;
  config_echo["estimator"] = cfg.estimator;
  config_echo["order"] = sc.order;
  config_echo["bandwidth"] = sc.bandwidth;

  // Wall-clock seconds stay out of the report file so reruns are
  // byte-identical; they go to stderr below.
  if (cfg.format == "json") {
    ordered_json doc;
    doc["meta"] = meta_json(cfg, std::move(config_echo));
    doc["grid"] = vec_json(rep.grid.points);
    doc["true_tau"] = vec_json(rep.true_tau);
    doc["mean_tau"] = vec_json(rep.mean_tau);
    doc["bias"] = vec_json(rep.bias);
    doc["rel_bias"] = vec_json(rep.rel_bias);
    doc["variance"] = vec_json(rep.variance);
    doc["mean_se"] = vec_json(rep.mean_se);
    doc["coverage"] = rep.coverage;
    doc["coverage_se"] = rep.coverage_se;
    doc["nullity_acceptance"] = rep.nullity_acceptance;
    doc["nullity_se"] = rep.nullity_se;
    doc["homogeneity_acceptance"] = rep.homogeneity_acceptance;
    doc["homogeneity_se"] = rep.homogeneity_se;
    doc["completed"] = rep.completed;
    doc["failed"] = rep.failed;
    doc["failures"] = rep.failures;
    write_text(cfg.out, doc.dump(2) + "\n");
  } else {
    std::ostringstream csv;
    csv << "metric,value\n";
    csv << "coverage," << fmt(rep.coverage) << "\n";
    csv << "coverage_se," << fmt(rep.coverage_se) << "\n";
    csv << "nullity_acceptance," << fmt(rep.nullity_acceptance) << "\n";
    csv << "nullity_se," << fmt(rep.nullity_se) << "\n";
    csv << "homogeneity_acceptance," << fmt(rep.homogeneity_acceptance) << "\n";
    csv << "homogeneity_se," << fmt(rep.homogeneity_se) << "\n";
    csv << "completed," << rep.completed << "\n";
    csv << "failed," << rep.failed << "\n";
    csv << "\nq,true_tau,mean_tau,bias,rel_bias,variance,mean_se\n";
    for (int j = 0; j < rep.grid.size(); ++j) {
      csv << fmt(rep.grid.points(j)) << "," << fmt(rep.true_tau(j)) << ","
          << fmt(rep.mean_tau(j)) << "," << fmt(rep.bias(j)) << ","
          << fmt(rep.rel_bias(j)) << "," << fmt(rep.variance(j)) << ","
          << fmt(rep.mean_se(j)) << "\n";
    }
    write_text(cfg.out, csv.str());
  }

  std::cerr << "simulate: dgp" << cfg.dgp << " n=" << sc.n
            << " reps=" << rep.completed << "+" << rep.failed
            << " coverage=" << fmt(rep.coverage) << " ("
            << fmt(rep.seconds) << "s)\n";
  return 0;
}

// ----------------------------------------------------------------- rdplot

int run_rdplot(const RunConfig& cfg) {
  if (!(cfg.bin_width > 0.0)) throw ValidationError("bin width must be positive");
  LoadOptions lo;
  lo.cutoff = cfg.cutoff;
  const UnitSample sample = load_units_file(cfg.input, lo);
  sample.validate_units(false);
  if (sample.units.empty()) throw ValidationError("empty sample");

  std::vector<double> qs = parse_list(cfg.quantiles);
  std::sort(qs.begin(), qs.end());
  qs.erase(std::unique(qs.begin(), qs.end()), qs.end());
  if (qs.size() < 2)
    throw ValidationError("need at least 2 distinct display quantiles");
  QuantileGrid grid;
  grid.points = Eigen::Map<const Eigen::VectorXd>(qs.data(),
                                                  static_cast<Eigen::Index>(qs.size()));
  grid.a = qs.front();
  grid.b = qs.back();
  grid.validate();
  const Eigen::MatrixXd qf = unit_quantile_matrix(sample, grid);
  const Eigen::VectorXd xs = sample.xs();

  // Equal-width bins with edges on multiples of w, so the cutoff is always a
  // bin edge and no bin mixes the two sides. Together they cover the observed
  // x-range; the topmost edge is inclusive.
  const double x_lo = xs.minCoeff();
  const double x_hi = xs.maxCoeff();
  const double w = cfg.bin_width;
  const long b_first = static_cast<long>(std::floor(x_lo / w));
  const long b_last = static_cast<long>(std::floor(x_hi / w));
  if (b_last - b_first + 1 > 10000000)
    throw ValidationError("bin width too small for the observed x-range");
  const int n_bins = static_cast<int>(b_last - b_first + 1);
  auto bin_of = [&](double x) {
    const long b = static_cast<long>(std::floor(x / w)) - b_first;
    return static_cast<int>(std::clamp<long>(b, 0, n_bins - 1));
  };
  auto bin_center = [&](int b) { return (b_first + b + 0.5) * w; };

  const int m = grid.size();
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(n_bins, m);
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(n_bins);
  for (Eigen::Index i = 0; i < xs.size(); ++i) {
    const int b = bin_of(xs(i));
    counts(b) += 1;
    sums.row(b) += qf.row(i);
  }

  // Per-side global degree-2 OLS of unit quantile values on (1, x, x^2),
  // emitted only when a side has enough units to determine the fit.
  struct FitRow {
    std::string side;
    double q, b0, b1, b2;
  };
  std::vector<FitRow> fits;
  for (Side side : {Side::plus, Side::minus}) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < xs.size(); ++i)
      if (on_side(xs(i), side)) idx.push_back(i);
    if (idx.size() < 3) continue;
    Eigen::MatrixXd design(idx.size(), 3);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const double x = xs(idx[r]);
      design(r, 0) = 1.0;
      design(r, 1) = x;
      design(r, 2) = x * x;
    }
    const auto qr = design.colPivHouseholderQr();
    for (int j = 0; j < m; ++j) {
      Eigen::VectorXd y(idx.size());
      for (std::size_t r = 0; r < idx.size(); ++r) y(r) = qf(idx[r], j);
      const Eigen::VectorXd beta = qr.solve(y);
      fits.push_back({side == Side::plus ? "plus" : "minus", grid.points(j),
                      beta(0), beta(1), beta(2)});
    }
  }

  if (cfg.format == "json") {
    ordered_json config_echo;
    config_echo["input"] = cfg.input;
    config_echo["cutoff"] = cfg.cutoff;
    config_echo["bin_width"] = w;
    config_echo["quantiles"] = qs;
    ordered_json doc;
    doc["meta"] = meta_json(cfg, std::move(config_echo));
    ordered_json bins = ordered_json::array();
    for (int b = 0; b < n_bins; ++b) {
      for (int j = 0; j < m; ++j) {
        ordered_json row;
        row["center"] = bin_center(b);
        row["q"] = grid.points(j);
        row["count"] = counts(b);
        row["mean"] = counts(b) > 0 ? ordered_json(sums(b, j) / counts(b))
                                    : ordered_json(nullptr);
        bins.push_back(std::move(row));
      }
    }
    doc["bins"] = std::move(bins);
    ordered_json jf = ordered_json::array();
    for (const auto& f : fits) {
      ordered_json row;
      row["side"] = f.side;
      row["q"] = f.q;
      row["b0"] = f.b0;
      row["b1"] = f.b1;
      row["b2"] = f.b2;
      jf.push_back(std::move(row));
    }
    doc["fits"] = std::move(jf);
    write_text(cfg.out, doc.dump(2) + "\n");
  } else {
    std::ostringstream csv;
    csv << "side,q,b0,b1,b2\n";
    for (const auto& f : fits)
      csv << f.side << "," << fmt(f.q) << "," << fmt(f.b0) << "," << fmt(f.b1)
          << "," << fmt(f.b2) << "\n";
    csv << "\nbin_center,q,count,mean\n";
    for (int b = 0; b < n_bins; ++b)
      for (int j = 0; j < m; ++j) {
        csv << fmt(bin_center(b)) << "," << fmt(grid.points(j)) << ","
            << counts(b) << ",";
        if (counts(b) > 0) csv << fmt(sums(b, j) / counts(b));
        csv << "\n";
      }
    write_text(cfg.out, csv.str());
  }

  std::cerr << "rdplot: n=" << sample.size() << " bins=" << n_bins
            << " quantiles=" << m << "\n";
  return 0;
}

// ------------------------------------------------------------------ bench

int run_bench(const RunConfig& cfg) {
  const std::vector<double> raw_sizes = parse_list(cfg.sizes);
  std::vector<int> sizes;
  for (double s : raw_sizes) {
    if (!(s >= 10)) throw ValidationError("bench sizes must be >= 10");
    sizes.push_back(static_cast<int>(s));
  }

  struct BenchRow {
    int n = 0;
    StageTimings t;
    double checksum = 0.0;
  };
  std::vector<BenchRow> rows;
  const int ni = cfg.ni > 0 ? cfg.ni : 100;  // fixed work per unit
  for (int n : sizes) {
    const UnitSample sample = gen_dgp1(n, ni, 2.0, cfg.seed);
    EstimateConfig ec;
    ec.method = parse_method(cfg.method);
    ec.order = cfg.order;
    ec.kernel = parse_kernel(cfg.kernel);
    ec.grid = make_grid(0.05, 0.95, 20);
    ec.draws = cfg.bootstrap;
    ec.level = cfg.level;
    ec.seed = cfg.seed;
    ec.threads = cfg.threads;
    const EstimateResult res = estimate(sample, ec);
    rows.push_back({n, res.timings, res.report.effect.tau.sum()});
  }

  const double ratio = rows.size() > 1 && rows.front().t.total > 0.0
                           ? rows.back().t.total / rows.front().t.total
                           : 1.0;
  const double size_factor =
      rows.size() > 1 ? static_cast<double>(rows.back().n) / rows.front().n : 1.0;

  if (cfg.format == "json") {
    ordered_json config_echo;
    config_echo["sizes"] = cfg.sizes;
    config_echo["ni"] = ni;
    config_echo["bootstrap"] = cfg.bootstrap;
    config_echo["method"] = cfg.method;
    config_echo["order"] = cfg.order;
    ordered_json doc;
    doc["meta"] = meta_json(cfg, std::move(config_echo));
    ordered_json jr = ordered_json::array();
    for (const auto& r : rows) {
      ordered_json row;
      row["n"] = r.n;
      row["quantiles"] = r.t.quantiles;
      row["bandwidths"] = r.t.bandwidths;
      row["estimation"] = r.t.estimation;
      row["bootstrap"] = r.t.bootstrap;
      row["total"] = r.t.total;
      row["tau_checksum"] = r.checksum;
      jr.push_back(std::move(row));
    }
    doc["rows"] = std::move(jr);
    doc["size_factor"] = size_factor;
    doc["runtime_ratio"] = ratio;
    write_text(cfg.out, doc.dump(2) + "\n");
  } else {
    std::ostringstream csv;
    csv << "n,quantiles,bandwidths,estimation,bootstrap,total,tau_checksum\n";
    for (const auto& r : rows)
      csv << r.n << "," << fmt(r.t.quantiles) << "," << fmt(r.t.bandwidths)
          << "," << fmt(r.t.estimation) << "," << fmt(r.t.bootstrap) << ","
          << fmt(r.t.total) << "," << fmt(r.checksum) << "\n";
    csv << "\nmetric,value\nsize_factor," << fmt(size_factor)
        << "\nruntime_ratio," << fmt(ratio) << "\n";
    write_text(cfg.out, csv.str());
  }

  std::cerr << "bench: " << rows.size() << " sizes, runtime ratio "
            << fmt(ratio) << " over size factor " << fmt(size_factor) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  CLI::App app{"distributional regression discontinuity toolkit"};
  app.require_subcommand(1);

  auto add_output = [&](CLI::App* sub) {
    sub->add_option("--out", cfg.out, "output path (default: stdout)");
    sub->add_option("--format", cfg.format, "output format")
        ->check(CLI::IsMember({"json", "csv"}));
  };
  auto add_compute = [&](CLI::App* sub) {
    sub->add_option("--threads", cfg.threads,
                    "worker threads (overrides R3D_THREADS; 0 = auto)");
    sub->add_option("--seed", cfg.seed, "RNG seed");
    sub->add_option("--order", cfg.order, "estimation order p");
    sub->add_option("--level", cfg.level, "test/band level");
    sub->add_option("--bootstrap", cfg.bootstrap, "bootstrap replications");
  };

  CLI::App* est = app.add_subcommand("estimate", "estimate effects on a dataset");
  add_output(est);
  add_compute(est);
  est->add_option("-i,--input", cfg.input, "CSV input (unit_id,x,t,z,w)")
      ->required();
  est->add_option("--cutoff", cfg.cutoff, "running-variable threshold");
  est->add_flag("--fuzzy", cfg.fuzzy, "fuzzy design (requires t column)");
  est->add_option("--method", cfg.method, "estimator")
      ->check(CLI::IsMember({"frechet", "localpoly"}));
  est->add_flag("--rearrange", cfg.rearrange,
                "monotone rearrangement (localpoly only)");
  est->add_option("--kernel", cfg.kernel, "kernel family")
      ->check(CLI::IsMember({"triangular", "uniform", "epanechnikov"}));
  est->add_option("--pilot-order", cfg.pilot_order,
                  "bandwidth-selection order s (-1 = p-1)");
  est->add_option("--bandwidth", cfg.bandwidth,
                  "manual numerator bandwidth (skips selection)");
  est->add_option("--bandwidth2", cfg.bandwidth2,
                  "manual denominator bandwidth (fuzzy)");
  est->add_option("--coverage-correction", cfg.coverage_correction,
                  "bandwidth shrink for band coverage")
      ->check(CLI::IsMember({"on", "off"}));
  est->add_option("--test-range", cfg.test_range, "sup-test interval 'lo,hi'");
  est->add_option("--grid-min", cfg.grid_min, "first quantile on the grid");
  est->add_option("--grid-max", cfg.grid_max, "last quantile on the grid");
  est->add_option("--grid-points", cfg.grid_points, "grid size M");

  CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo study on a synthetic design");
  add_output(sim);
  add_compute(sim);
  sim->add_option("--dgp", cfg.dgp, "design: 1 (location) or 2 (location-scale)");
  sim->add_option("--n", cfg.n, "units per replicate");
  sim->add_option("--ni", cfg.ni, "draws per unit (0 = n)");
  sim->add_option("--delta", cfg.delta, "location shift");
  sim->add_option("--delta-lambda", cfg.delta_lambda, "dgp2 rate shift");
  sim->add_option("--preset", cfg.preset, "effect-size preset (overrides --delta)")
      ->check(CLI::IsMember({"d05", "d10"}));
  sim->add_option("--reps", cfg.reps, "Monte Carlo replicates");
  sim->add_option("--estimator", cfg.estimator, "estimator")
      ->check(CLI::IsMember({"frechet", "localpoly"}));
  sim->add_option("--bandwidth", cfg.bandwidth,
                  "manual numerator bandwidth per replicate");

  CLI::App* plot = app.add_subcommand("rdplot", "binned RD-plot data export");
  add_output(plot);
  plot->add_option("-i,--input", cfg.input, "CSV input (unit_id,x,t,z,w)")
      ->required();
  plot->add_option("--cutoff", cfg.cutoff, "running-variable threshold");
  plot->add_option("--bin-width", cfg.bin_width, "bin width over x");
  plot->add_option("--quantiles", cfg.quantiles, "display quantiles 'q1,q2,...'");

  CLI::App* bench = app.add_subcommand("bench", "stage timings over a size ladder");
  add_output(bench);
  add_compute(bench);
  bench->add_option("--sizes", cfg.sizes, "comma-separated unit counts");
  bench->add_option("--ni", cfg.ni, "draws per unit (default 100)");
  bench->add_option("--method", cfg.method, "estimator")
      ->check(CLI::IsMember({"frechet", "localpoly"}));
  bench->add_option("--kernel", cfg.kernel, "kernel family")
      ->check(CLI::IsMember({"triangular", "uniform", "epanechnikov"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (est->parsed()) {
      cfg.command = "estimate";
      return run_estimate(cfg);
    }
    if (sim->parsed()) {
      cfg.command = "simulate";
      if (sim->count("--bootstrap") == 0) cfg.bootstrap = 500;
      return run_simulate(cfg);
    }
    if (plot->parsed()) {
      cfg.command = "rdplot";
      return run_rdplot(cfg);
    }
    cfg.command = "bench";
    if (bench->count("--bootstrap") == 0) cfg.bootstrap = 200;
    return run_bench(cfg);
  } catch (const ValidationError& e) {
    std::cerr << "error (validation): " << e.what() << "\n";
    return 2;
  } catch (const EstimationError& e) {
    std::cerr << "error (estimation): " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "error (io): " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
