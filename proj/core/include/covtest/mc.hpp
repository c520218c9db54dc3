#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "covtest/covmodels.hpp"
#include "covtest/rng.hpp"
#include "covtest/stats.hpp"

// Deterministic Monte Carlo engine.
//
// Replicate r of any experiment draws its whole dataset from RngStream(seed, r)
// and results are stored per replicate before an integer (or index-ordered)
// reduction, so output never depends on the worker count or on scheduling.

namespace covtest {

enum class Statistic { Tn, CLR };

std::string_view to_string(Statistic s) noexcept;
std::optional<Statistic> parse_statistic(std::string_view name) noexcept;

enum class ThresholdMode { Asymptotic, Calibrated };

std::string_view to_string(ThresholdMode mode) noexcept;

// Seed tag used to derive the calibration seed from a plan's master seed.
inline constexpr std::uint64_t kCalibrationSeedTag = 0xCA11B;

struct PowerEstimate {
  std::int64_t rejections = 0;
  std::int64_t replicates = 0;
  double estimate = 0.0;
  double standard_error = 0.0;
  double ci_low = 0.0;   // 95% normal interval, clipped to [0, 1]
  double ci_high = 0.0;

  static PowerEstimate from_counts(std::int64_t rejections, std::int64_t replicates);
};

struct SimulationPlan {
  Index n = 0;
  Index p = 0;
  double alpha = 0.05;
  std::int64_t replicates = 5000;
  std::uint64_t seed = 1;
  std::vector<Statistic> statistics{Statistic::Tn};
  ThresholdMode threshold_mode = ThresholdMode::Calibrated;
  std::int64_t calibration_replicates = 100000;
  std::vector<CovarianceModel> grid;
  int workers = 1;

  // Throws on anything that would fail later: bad alpha, R < 1, n < 2,
  // CLRT with p >= n (RequiresPLessThanN), grid models of the wrong dimension.
  void validate() const;
};

struct PowerCurvePoint {
  ModelKind kind = ModelKind::Identity;
  double parameter = 0.0;
  double frobenius = 0.0;
  std::vector<PowerEstimate> estimates;  // parallel to PowerCurve::statistics
};

struct PowerCurve {
  std::vector<Statistic> statistics;
  std::vector<double> thresholds;
  ThresholdMode threshold_mode = ThresholdMode::Calibrated;
  std::vector<PowerCurvePoint> points;  // strictly increasing frobenius
};

// Runs body(r) for r in [0, replicates) on `workers` threads (workers <= 1 runs
// inline). The first exception thrown by any replicate is rethrown.
void for_each_replicate(std::int64_t replicates, int workers,
                        const std::function<void(std::int64_t)>& body);

// Statistic values of one replicate dataset, parallel to `statistics`.
std::vector<double> evaluate_statistics(const DataMatrix& data,
                                        std::span<const Statistic> statistics);

// Values of each requested statistic over R replicates drawn from `factor`;
// result[s][r] is statistic s on replicate r.
std::vector<std::vector<double>> simulate_statistics(std::span<const Statistic> statistics,
                                                     const GaussianFactor& factor, Index n,
                                                     std::int64_t replicates,
                                                     std::uint64_t seed, int workers = 1);

// The ceil(R (1 - alpha))-th order statistic (1-based), no interpolation.
double empirical_upper_quantile(std::vector<double> values, double alpha);

using ReplicateStatistic = std::function<double(RngStream&)>;

// Generic calibration: fn is evaluated once per replicate stream.
double calibrate_null_threshold(const ReplicateStatistic& fn, double alpha,
                                std::int64_t replicates, std::uint64_t seed, int workers = 1);

// Null (Sigma = I) calibration of a built-in statistic; needs R >= 100.
double calibrate_null_threshold(Statistic statistic, Index n, Index p, double alpha,
                                std::int64_t replicates, std::uint64_t seed,
                                int workers = 1);

// Several statistics calibrated from the same null datasets.
std::vector<double> calibrate_null_thresholds(std::span<const Statistic> statistics, Index n,
                                              Index p, double alpha, std::int64_t replicates,
                                              std::uint64_t seed, int workers = 1);

// Thresholds for the plan's statistics: asymptotic values, or null calibration
// with seed derive_seed(plan.seed, kCalibrationSeedTag).
std::vector<double> resolve_thresholds(const SimulationPlan& plan);

// Rejection rates of the plan's statistics at `model`, one per statistic.
// Replicate r uses RngStream(plan.seed, r) for every statistic.
std::vector<PowerEstimate> estimate_power(const SimulationPlan& plan,
                                          const CovarianceModel& model,
                                          std::span<const double> thresholds);

PowerCurve power_curve(const SimulationPlan& plan);

// sup_x |F_hat(x) - Phi(x)| for at least 100 samples.
double empirical_kolmogorov_distance(std::span<const double> samples);

}  // namespace covtest
