#include "covtest/mc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#include "covtest/error.hpp"

namespace covtest {

namespace {

constexpr double kZ975 = 1.959963984540054;
constexpr std::int64_t kMinCalibrationReplicates = 100;
constexpr std::int64_t kMinKolmogorovSamples = 100;
// Replicates handed to a worker per atomic fetch.
constexpr std::int64_t kChunk = 16;

void require_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::ParameterOutOfRange,
                "alpha must lie in (0, 1), got " + std::to_string(alpha));
  }
}

void require_replicates(std::int64_t replicates, std::int64_t minimum) {
  if (replicates < minimum) {
    throw Error(minimum > 1 ? ErrorCode::TooFewSamples : ErrorCode::ParameterOutOfRange,
                "replicates must be at least " + std::to_string(minimum) + ", got " +
                    std::to_string(replicates));
  }
}

bool uses_clr(std::span<const Statistic> statistics) {
  return std::find(statistics.begin(), statistics.end(), Statistic::CLR) != statistics.end();
}

void require_shape(std::span<const Statistic> statistics, Index n, Index p) {
  if (n < 2) {
    throw Error(ErrorCode::NeedAtLeastTwoSamples, "n must be at least 2");
  }
  if (p < 1) {
    throw Error(ErrorCode::ParameterOutOfRange, "p must be at least 1");
  }
  if (statistics.empty()) {
    throw Error(ErrorCode::ParameterOutOfRange, "no statistic requested");
  }
  if (uses_clr(statistics)) {
    if (p >= n) {
      throw Error(ErrorCode::RequiresPLessThanN,
                  "CLRT needs p < n, got p=" + std::to_string(p) + ", n=" + std::to_string(n));
    }
    ClrtParameters::make(n, p);
  }
}

}  // namespace

std::string_view to_string(Statistic s) noexcept {
  switch (s) {
    case Statistic::Tn: return "tn";
    case Statistic::CLR: return "clrt";
  }
  return "unknown";
}

std::optional<Statistic> parse_statistic(std::string_view name) noexcept {
  if (name == "tn" || name == "psi") return Statistic::Tn;
  if (name == "clrt" || name == "clr") return Statistic::CLR;
  return std::nullopt;
}

std::string_view to_string(ThresholdMode mode) noexcept {
  return mode == ThresholdMode::Asymptotic ? "asymptotic" : "calibrated";
}

PowerEstimate PowerEstimate::from_counts(std::int64_t rejections, std::int64_t replicates) {
  if (replicates < 1 || rejections < 0 || rejections > replicates) {
    throw Error(ErrorCode::ParameterOutOfRange, "need 0 <= rejections <= replicates, replicates >= 1");
  }
  PowerEstimate e;
  e.rejections = rejections;
  e.replicates = replicates;
  e.estimate = static_cast<double>(rejections) / static_cast<double>(replicates);
  e.standard_error = std::sqrt(e.estimate * (1.0 - e.estimate) / static_cast<double>(replicates));
  e.ci_low = std::clamp(e.estimate - kZ975 * e.standard_error, 0.0, 1.0);
  e.ci_high = std::clamp(e.estimate + kZ975 * e.standard_error, 0.0, 1.0);
  return e;
}

void SimulationPlan::validate() const {
  require_alpha(alpha);
  require_replicates(replicates, 1);
  require_shape(statistics, n, p);
  if (threshold_mode == ThresholdMode::Calibrated) {
    require_replicates(calibration_replicates, kMinCalibrationReplicates);
  }
  for (const auto& model : grid) {
    if (model.dimension() != p) {
      throw Error(ErrorCode::DimensionMismatch,
                  "grid model has dimension " + std::to_string(model.dimension()) +
                      ", plan has p=" + std::to_string(p));
    }
  }
}

void for_each_replicate(std::int64_t replicates, int workers,
                        const std::function<void(std::int64_t)>& body) {
  if (replicates <= 0) return;
  const std::int64_t chunks = (replicates + kChunk - 1) / kChunk;
  const int threads = static_cast<int>(std::min<std::int64_t>(std::max(workers, 1), chunks));
  if (threads <= 1) {
    for (std::int64_t r = 0; r < replicates; ++r) body(r);
    return;
  }

  std::atomic<std::int64_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto run = [&] {
    while (!failed.load(std::memory_order_relaxed)) {
      const std::int64_t chunk = next.fetch_add(1, std::memory_order_relaxed);
      if (chunk >= chunks) return;
      const std::int64_t end = std::min(replicates, (chunk + 1) * kChunk);
      try {
        for (std::int64_t r = chunk * kChunk; r < end; ++r) body(r);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };

  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(threads - 1));
  for (int t = 1; t < threads; ++t) pool.emplace_back(run);
  run();
  pool.clear();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<double> evaluate_statistics(const DataMatrix& data,
                                        std::span<const Statistic> statistics) {
  std::vector<double> values;
  values.reserve(statistics.size());
  // The p x p Gram serves both statistics; T_n alone with n <= p is cheaper
  // through the n x n Gram.
  if (!uses_clr(statistics) && data.n() <= data.p()) {
    for (std::size_t i = 0; i < statistics.size(); ++i) values.push_back(statistic_T(data));
    return values;
  }
  const FeatureGram gram = FeatureGram::compute(data);
  for (Statistic s : statistics) {
    if (s == Statistic::Tn) {
      values.push_back(statistic_T(gram));
    } else {
      values.push_back(statistic_CLR_from_L(statistic_L(gram),
                                            ClrtParameters::make(data.n(), data.p())));
    }
  }
  return values;
}

std::vector<std::vector<double>> simulate_statistics(std::span<const Statistic> statistics,
                                                     const GaussianFactor& factor, Index n,
                                                     std::int64_t replicates,
                                                     std::uint64_t seed, int workers) {
  require_shape(statistics, n, factor.dimension());
  require_replicates(replicates, 1);
  std::vector<std::vector<double>> out(statistics.size(),
                                       std::vector<double>(static_cast<std::size_t>(replicates)));
  for_each_replicate(replicates, workers, [&](std::int64_t r) {
    RngStream stream(seed, static_cast<std::uint64_t>(r));
    const auto values = evaluate_statistics(sample(factor, n, stream), statistics);
    for (std::size_t s = 0; s < values.size(); ++s) {
      out[s][static_cast<std::size_t>(r)] = values[s];
    }
  });
  return out;
}

double empirical_upper_quantile(std::vector<double> values, double alpha) {
  require_alpha(alpha);
  if (values.empty()) {
    throw Error(ErrorCode::TooFewSamples, "no values to take a quantile of");
  }
  const auto m = static_cast<double>(values.size());
  // The guard keeps e.g. 1e5 * 0.95 from rounding up to 95001.
  auto rank = static_cast<std::int64_t>(std::ceil(m * (1.0 - alpha) - 1e-9));
  rank = std::clamp<std::int64_t>(rank, 1, static_cast<std::int64_t>(values.size()));
  const auto pos = values.begin() + (rank - 1);
  std::nth_element(values.begin(), pos, values.end());
  return *pos;
}

double calibrate_null_threshold(const ReplicateStatistic& fn, double alpha,
                                std::int64_t replicates, std::uint64_t seed, int workers) {
  require_alpha(alpha);
  require_replicates(replicates, kMinCalibrationReplicates);
  std::vector<double> values(static_cast<std::size_t>(replicates));
  for_each_replicate(replicates, workers, [&](std::int64_t r) {
    RngStream stream(seed, static_cast<std::uint64_t>(r));
    values[static_cast<std::size_t>(r)] = fn(stream);
  });
  return empirical_upper_quantile(std::move(values), alpha);
}

std::vector<double> calibrate_null_thresholds(std::span<const Statistic> statistics, Index n,
                                              Index p, double alpha, std::int64_t replicates,
                                              std::uint64_t seed, int workers) {
  require_alpha(alpha);
  require_replicates(replicates, kMinCalibrationReplicates);
  require_shape(statistics, n, p);
  auto draws = simulate_statistics(statistics, factorize(Matrix::Identity(p, p)), n, replicates,
                                   seed, workers);
  std::vector<double> thresholds;
  thresholds.reserve(draws.size());
  for (auto& values : draws) thresholds.push_back(empirical_upper_quantile(std::move(values), alpha));
  return thresholds;
}

double calibrate_null_threshold(Statistic statistic, Index n, Index p, double alpha,
                                std::int64_t replicates, std::uint64_t seed, int workers) {
  const Statistic one[] = {statistic};
  return calibrate_null_thresholds(one, n, p, alpha, replicates, seed, workers).front();
}

std::vector<double> resolve_thresholds(const SimulationPlan& plan) {
  plan.validate();
  if (plan.threshold_mode == ThresholdMode::Calibrated) {
    return calibrate_null_thresholds(plan.statistics, plan.n, plan.p, plan.alpha,
                                     plan.calibration_replicates,
                                     derive_seed(plan.seed, kCalibrationSeedTag), plan.workers);
  }
  std::vector<double> thresholds;
  for (Statistic s : plan.statistics) {
    thresholds.push_back(s == Statistic::Tn ? psi_asymptotic_threshold(plan.p, plan.n, plan.alpha)
                                            : normal_quantile(1.0 - plan.alpha));
  }
  return thresholds;
}

std::vector<PowerEstimate> estimate_power(const SimulationPlan& plan,
                                          const CovarianceModel& model,
                                          std::span<const double> thresholds) {
  plan.validate();
  if (model.dimension() != plan.p) {
    throw Error(ErrorCode::DimensionMismatch, "model dimension differs from plan p");
  }
  if (thresholds.size() != plan.statistics.size()) {
    throw Error(ErrorCode::DimensionMismatch, "need one threshold per statistic");
  }
  const std::size_t k = plan.statistics.size();
  const GaussianFactor factor = factorize(model.build());
  std::vector<std::uint8_t> rejected(static_cast<std::size_t>(plan.replicates) * k, 0);
  for_each_replicate(plan.replicates, plan.workers, [&](std::int64_t r) {
    RngStream stream(plan.seed, static_cast<std::uint64_t>(r));
    const auto values = evaluate_statistics(sample(factor, plan.n, stream), plan.statistics);
    for (std::size_t s = 0; s < k; ++s) {
      rejected[static_cast<std::size_t>(r) * k + s] = values[s] > thresholds[s] ? 1 : 0;
    }
  });
  std::vector<PowerEstimate> estimates;
  for (std::size_t s = 0; s < k; ++s) {
    std::int64_t count = 0;
    for (std::int64_t r = 0; r < plan.replicates; ++r) {
      count += rejected[static_cast<std::size_t>(r) * k + s];
    }
    estimates.push_back(PowerEstimate::from_counts(count, plan.replicates));
  }
  return estimates;
}

PowerCurve power_curve(const SimulationPlan& plan) {
  if (plan.grid.empty()) {
    throw Error(ErrorCode::EmptyGrid, "power curve needs at least one grid model");
  }
  plan.validate();

  std::vector<PowerCurvePoint> points;
  points.reserve(plan.grid.size());
  for (const auto& model : plan.grid) {
    PowerCurvePoint point;
    point.kind = model.kind();
    point.parameter = model.parameter();
    point.frobenius = frobenius_distance_to_identity(model.build());
    points.push_back(std::move(point));
  }
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (!(points[i].frobenius > points[i - 1].frobenius)) {
      throw Error(ErrorCode::ParameterOutOfRange,
                  "grid must be strictly increasing in ||Sigma - I||_F");
    }
  }

  PowerCurve curve;
  curve.statistics = plan.statistics;
  curve.threshold_mode = plan.threshold_mode;
  curve.thresholds = resolve_thresholds(plan);
  for (std::size_t i = 0; i < points.size(); ++i) {
    points[i].estimates = estimate_power(plan, plan.grid[i], curve.thresholds);
  }
  curve.points = std::move(points);
  return curve;
}

double empirical_kolmogorov_distance(std::span<const double> samples) {
  if (static_cast<std::int64_t>(samples.size()) < kMinKolmogorovSamples) {
    throw Error(ErrorCode::TooFewSamples,
                "need at least 100 samples, got " + std::to_string(samples.size()));
  }
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const auto m = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = normal_cdf(sorted[i]);
    d = std::max({d, static_cast<double>(i + 1) / m - f, f - static_cast<double>(i) / m});
  }
  return std::clamp(d, 0.0, 1.0);
}

}  // namespace covtest
