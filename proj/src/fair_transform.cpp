#include "cfqp/fair_transform.hpp"

#include "cfqp/error.hpp"
#include "cfqp/log.hpp"
#include "numeric_detail.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cfqp {

// ---------------------------------------------------------------------------
// Jitter

std::vector<double> jitter(std::span<const double> values, double sigma, Rng& rng)
{
  if (sigma < 0.0 || !std::isfinite(sigma))
    throw Error(ErrorKind::invalid_argument, "jitter sigma must be finite and >= 0");
  std::vector<double> out(values.begin(), values.end());
  if (sigma == 0.0)
    return out;
  std::uniform_real_distribution<double> noise(-sigma, sigma);
  for (double& v : out)
    v += noise(rng);
  return out;
}

std::vector<double> jitter(std::span<const double> values, const JitterConfig& config)
{
  Rng rng(config.seed);
  return jitter(values, config.sigma, rng);
}

double default_jitter_sigma(std::span<const double> responses)
{
  if (responses.empty())
    return 1e-6;
  std::vector<double> y(responses.begin(), responses.end());
  std::sort(y.begin(), y.end());
  EmpiricalCdf cdf(std::move(y));
  const double iqr = cdf.quantile(0.75) - cdf.quantile(0.25);
  return iqr > 0.0 ? 1e-6 * iqr : 1e-6;
}

// ---------------------------------------------------------------------------
// EmpiricalCdf

EmpiricalCdf::EmpiricalCdf(std::vector<double> values)
  : sorted_(std::move(values))
{
  if (sorted_.empty())
    throw Error(ErrorKind::invalid_argument, "empirical CDF needs a non-empty sample");
  for (double v : sorted_)
    if (!std::isfinite(v))
      throw Error(ErrorKind::invalid_argument, "empirical CDF sample must be finite");
  std::sort(sorted_.begin(), sorted_.end());
}

double EmpiricalCdf::operator()(double t) const noexcept
{
  const auto count = std::upper_bound(sorted_.begin(), sorted_.end(), t) - sorted_.begin();
  return static_cast<double>(count) / static_cast<double>(sorted_.size());
}

double EmpiricalCdf::quantile_unchecked(double t) const noexcept
{
  const double n = static_cast<double>(sorted_.size());
  const double rank = std::clamp(detail::ceil_rank(t * n), 1.0, n);
  return sorted_[static_cast<std::size_t>(rank) - 1];
}

double EmpiricalCdf::quantile(double t) const
{
  if (!(t > 0.0 && t <= 1.0))
    throw Error(ErrorKind::invalid_argument,
                "empirical quantile level must lie in (0, 1], got " + std::to_string(t));
  return quantile_unchecked(t);
}

// ---------------------------------------------------------------------------
// Smoothing

double SmoothingMethod::resolved_bandwidth(std::size_t sample_size) const
{
  if (kind == Kind::empirical)
    return 0.0;
  if (bandwidth) {
    const double h = *bandwidth;
    if (!(h > 0.0 && h < 0.5))
      throw Error(ErrorKind::invalid_argument,
                  "bandwidth/radius must lie in (0, 0.5), got " + std::to_string(h));
    return h;
  }
  const double n = static_cast<double>(std::max<std::size_t>(sample_size, 1));
  return std::min(std::pow(n, -0.25), 0.45);
}

std::string to_string(SmoothingMethod::Kind kind)
{
  switch (kind) {
    case SmoothingMethod::Kind::empirical: return "empirical";
    case SmoothingMethod::Kind::kernel: return "kernel";
    case SmoothingMethod::Kind::local_linear: return "local_linear";
  }
  return "unknown";
}

std::string to_string(KernelId kernel)
{
  return kernel == KernelId::triangular ? "triangular" : "gaussian";
}

SmoothingMethod::Kind parse_smoothing_kind(const std::string& name)
{
  if (name == "empirical")
    return SmoothingMethod::Kind::empirical;
  if (name == "kernel")
    return SmoothingMethod::Kind::kernel;
  if (name == "local_linear")
    return SmoothingMethod::Kind::local_linear;
  throw Error(ErrorKind::invalid_argument, "unknown smoothing method '" + name + "'");
}

KernelId parse_kernel(const std::string& name)
{
  if (name == "triangular")
    return KernelId::triangular;
  if (name == "gaussian")
    return KernelId::gaussian;
  throw Error(ErrorKind::invalid_argument, "unknown kernel '" + name + "'");
}

SmoothedQuantileFn::SmoothedQuantileFn(SmoothingMethod method,
                                       double bandwidth,
                                       std::vector<double> grid_values,
                                       EmpiricalCdf source)
  : method_(method)
  , bandwidth_(bandwidth)
  , values_(std::move(grid_values))
  , source_(std::move(source))
{
  if (values_.size() < 2)
    throw Error(ErrorKind::invalid_argument, "quantile grid needs at least 2 points");
}

double SmoothedQuantileFn::operator()(double t) const noexcept
{
  if (method_.kind == SmoothingMethod::Kind::empirical)
    return source_.quantile_unchecked(t);
  const double m = static_cast<double>(values_.size());
  const double x = t * m - 0.5;
  if (x <= 0.0)
    return values_.front();
  if (x >= m - 1.0)
    return values_.back();
  const auto j = static_cast<std::size_t>(x);
  const double frac = x - static_cast<double>(j);
  return values_[j] + frac * (values_[j + 1] - values_[j]);
}

double SmoothedQuantileFn::grid_mean() const noexcept
{
  return std::accumulate(values_.begin(), values_.end(), 0.0) /
         static_cast<double>(values_.size());
}

SmoothedQuantileFn smooth_quantile_fn(const EmpiricalCdf& cdf,
                                      const SmoothingMethod& method,
                                      std::size_t grid_size,
                                      Execution exec)
{
  if (grid_size < 16)
    throw Error(ErrorKind::invalid_argument, "quantile grid size must be >= 16");

  std::vector<double> t(grid_size);
  for (std::size_t j = 0; j < grid_size; ++j)
    t[j] = (static_cast<double>(j) + 0.5) / static_cast<double>(grid_size);

  const double h = method.resolved_bandwidth(cdf.size());
  std::vector<double> values(grid_size);
  const auto& sorted = cdf.sorted_values();
  switch (method.kind) {
    case SmoothingMethod::Kind::empirical:
      for (std::size_t j = 0; j < grid_size; ++j)
        values[j] = cdf.quantile(t[j]);
      break;
    case SmoothingMethod::Kind::kernel: {
      const auto table = kernels::quantile_table(sorted, kernels::inner_node_count(h));
      if (exec == Execution::parallel)
        kernels::kernel_smooth_parallel(table, t, h, method.kernel, values);
      else
        kernels::kernel_smooth_serial(table, t, h, method.kernel, values);
      break;
    }
    case SmoothingMethod::Kind::local_linear:
      if (exec == Execution::parallel)
        kernels::local_linear_parallel(sorted, t, h, values);
      else
        kernels::local_linear_serial(sorted, t, h, values);
      break;
  }

  // monotone rearrangement (running maximum)
  std::size_t repairs = 0;
  double worst = 0.0;
  for (std::size_t j = 1; j < grid_size; ++j)
    if (values[j] < values[j - 1]) {
      ++repairs;
      worst = std::max(worst, values[j - 1] - values[j]);
      values[j] = values[j - 1];
    }
  const double range = cdf.max() - cdf.min();
  if (repairs > 0 && worst > 1e-9 * (range > 0.0 ? range : 1.0))
    warn("smoothed quantile function repaired at " + std::to_string(repairs) +
         " grid points (largest drop " + std::to_string(worst) + ")");

  SmoothedQuantileFn fn(method, h, std::move(values), cdf);
  fn.monotonicity_repairs = repairs;
  return fn;
}

// ---------------------------------------------------------------------------
// FairTransformer

double location_statistic(std::span<const double> sorted, double t, double u) noexcept
{
  const auto [lo, hi] = std::equal_range(sorted.begin(), sorted.end(), t);
  const double below = static_cast<double>(lo - sorted.begin());
  const double ties = static_cast<double>(hi - lo);
  return (below + u * (1.0 + ties)) / (static_cast<double>(sorted.size()) + 1.0);
}

namespace {

// Ranks of 0 or 1 cannot be evaluated on a grid; keep them half a step inside.
inline double clamp_rank(double rank, double n) noexcept
{
  const double margin = 0.5 / n;
  return std::clamp(rank, margin, 1.0 - margin);
}

} // namespace

FairTransformer::FairTransformer(std::vector<Group> groups,
                                 std::vector<double> weights,
                                 JitterConfig jitter)
  : groups_(std::move(groups))
  , weights_(std::move(weights))
  , jitter_(jitter)
{
  if (groups_.empty())
    throw Error(ErrorKind::invalid_argument, "transformer needs at least one group");
  if (weights_.size() != groups_.size())
    throw Error(ErrorKind::dimension_mismatch, "one weight per group required");
  double sum = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0))
      throw Error(ErrorKind::invalid_argument, "group weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw Error(ErrorKind::invalid_argument, "group weights must sum to 1");
  for (std::size_t s = 0; s < groups_.size(); ++s)
    if (groups_[s].training_sorted.empty())
      throw Error(ErrorKind::empty_group,
                  "empty group " + std::to_string(s) + " in training predictions");
}

void FairTransformer::check_group(int s) const
{
  if (s < 0 || s >= group_count())
    throw Error(ErrorKind::invalid_argument, "unknown group label " + std::to_string(s));
}

const FairTransformer::Group& FairTransformer::group(int s) const
{
  check_group(s);
  return groups_[static_cast<std::size_t>(s)];
}

double FairTransformer::barycenter_quantile(double rank) const noexcept
{
  double value = 0.0;
  for (std::size_t s = 0; s < groups_.size(); ++s)
    value += weights_[s] * groups_[s].quantile_fn(rank);
  return value;
}

double FairTransformer::synchronize_calibration(double jittered, int s) const
{
  const auto& g = group(s);
  const double n = static_cast<double>(g.calibration_cdf.size());
  return barycenter_quantile(clamp_rank(g.calibration_cdf(jittered), n));
}

std::vector<double> FairTransformer::synchronize_calibration_group(int s) const
{
  const auto& g = group(s);
  std::vector<double> out;
  out.reserve(g.calibration.size());
  for (double v : g.calibration)
    out.push_back(synchronize_calibration(v, s));
  return out;
}

double FairTransformer::randomized_training_cdf(int s, double t, double u) const
{
  if (!(u >= 0.0 && u <= 1.0))
    throw Error(ErrorKind::invalid_argument, "tie-break draw must lie in [0, 1]");
  return location_statistic(group(s).training_sorted, t, u);
}

double FairTransformer::synchronize_test(double raw_prediction, int s, Rng& rng) const
{
  const auto& g = group(s);
  const double noise = 2.0 * uniform01(rng) - 1.0;
  const double jittered = raw_prediction + jitter_.sigma * noise;
  const double u = uniform01(rng);
  const double rank = location_statistic(g.training_sorted, jittered, u);
  return barycenter_quantile(
    clamp_rank(rank, static_cast<double>(g.training_sorted.size()) + 1.0));
}

nlohmann::json FairTransformer::to_json() const
{
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : groups_) {
    const auto& fn = g.quantile_fn;
    groups.push_back({
      { "calibration", g.calibration },
      { "training_sorted", g.training_sorted },
      { "method", to_string(fn.method().kind) },
      { "kernel", to_string(fn.method().kernel) },
      { "bandwidth", fn.bandwidth() },
      { "grid", fn.grid_values() },
    });
  }
  return {
    { "weights", weights_ },
    { "jitter", { { "sigma", jitter_.sigma }, { "seed", jitter_.seed } } },
    { "groups", groups },
  };
}

FairTransformer FairTransformer::from_json(const nlohmann::json& doc)
{
  try {
    std::vector<Group> groups;
    for (const auto& g : doc.at("groups")) {
      auto calibration = g.at("calibration").get<std::vector<double>>();
      EmpiricalCdf cdf(calibration);
      SmoothingMethod method;
      method.kind = parse_smoothing_kind(g.at("method").get<std::string>());
      method.kernel = parse_kernel(g.at("kernel").get<std::string>());
      const double h = g.at("bandwidth").get<double>();
      if (method.kind != SmoothingMethod::Kind::empirical)
        method.bandwidth = h;
      SmoothedQuantileFn fn(method, h, g.at("grid").get<std::vector<double>>(), cdf);
      auto training = g.at("training_sorted").get<std::vector<double>>();
      std::sort(training.begin(), training.end());
      groups.push_back(Group{ std::move(calibration), std::move(cdf), std::move(fn), std::move(training) });
    }
    JitterConfig jitter{ doc.at("jitter").at("sigma").get<double>(),
                         doc.at("jitter").at("seed").get<std::uint64_t>() };
    return FairTransformer(std::move(groups), doc.at("weights").get<std::vector<double>>(), jitter);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::invalid_argument,
                std::string("malformed transformer document: ") + e.what());
  }
}

FairTransformer fit_transformer(const std::vector<std::vector<double>>& calibration_by_group,
                                const std::vector<std::vector<double>>& training_by_group,
                                std::optional<std::vector<double>> weights,
                                const JitterConfig& jitter,
                                const SmoothingOptions& smoothing)
{
  const std::size_t k = calibration_by_group.size();
  if (k == 0)
    throw Error(ErrorKind::invalid_argument, "transformer needs at least one group");
  if (training_by_group.size() != k)
    throw Error(ErrorKind::dimension_mismatch,
                "calibration and training predictions disagree on the group count");
  for (std::size_t s = 0; s < k; ++s) {
    if (calibration_by_group[s].empty())
      throw Error(ErrorKind::empty_group,
                  "empty group " + std::to_string(s) + " in calibration predictions");
    if (training_by_group[s].empty())
      throw Error(ErrorKind::empty_group,
                  "empty group " + std::to_string(s) + " in training predictions");
  }

  if (!weights) {
    std::size_t total = 0;
    for (const auto& g : calibration_by_group)
      total += g.size();
    weights.emplace();
    for (const auto& g : calibration_by_group)
      weights->push_back(static_cast<double>(g.size()) / static_cast<double>(total));
  }

  const std::uint64_t cal_seed = derive_seed(jitter.seed, "calibration-jitter");
  const std::uint64_t train_seed = derive_seed(jitter.seed, "training-jitter");
  std::vector<FairTransformer::Group> groups;
  groups.reserve(k);
  for (std::size_t s = 0; s < k; ++s) {
    Rng cal_rng(derive_seed(cal_seed, s));
    Rng train_rng(derive_seed(train_seed, s));
    auto calibration = cfqp::jitter(calibration_by_group[s], jitter.sigma, cal_rng);
    auto training = cfqp::jitter(training_by_group[s], jitter.sigma, train_rng);
    std::sort(training.begin(), training.end());
    EmpiricalCdf cdf(calibration);
    auto fn = smooth_quantile_fn(cdf, smoothing.method, smoothing.grid_size, smoothing.exec);
    groups.push_back(FairTransformer::Group{ std::move(calibration), std::move(cdf), std::move(fn), std::move(training) });
  }
  return FairTransformer(std::move(groups), std::move(*weights), jitter);
}

std::vector<double> synchronize_test_batch(const FairTransformer& tf,
                                           std::span<const double> raw_predictions,
                                           std::span<const int> groups,
                                           std::uint64_t seed,
                                           Execution exec)
{
  if (raw_predictions.size() != groups.size())
    throw Error(ErrorKind::dimension_mismatch, "predictions and groups differ in length");
  for (int s : groups)
    if (s < 0 || s >= tf.group_count())
      throw Error(ErrorKind::invalid_argument, "unknown group label " + std::to_string(s));

  std::vector<double> out(raw_predictions.size());
  const auto n = static_cast<long>(raw_predictions.size());
  auto one = [&](long i) {
    const auto idx = static_cast<std::size_t>(i);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(idx)));
    out[idx] = tf.synchronize_test(raw_predictions[idx], groups[idx], rng);
  };
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i)
      one(i);
  } else {
    for (long i = 0; i < n; ++i)
      one(i);
  }
  return out;
}

} // namespace cfqp
