#pragma once

#include "cfqp/kernels.hpp"
#include "cfqp/rng.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace cfqp {

struct JitterConfig
{
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

//! Adds i.i.d. U[-sigma, sigma] noise. sigma = 0 returns the input unchanged.
std::vector<double> jitter(std::span<const double> values, const JitterConfig& config);
std::vector<double> jitter(std::span<const double> values, double sigma, Rng& rng);

//! Default tie-breaking noise: 1e-6 times the interquartile range of the
//! responses (1e-6 if the range is degenerate).
double default_jitter_sigma(std::span<const double> responses);

// ---------------------------------------------------------------------------

//! Right-continuous step CDF of a finite, non-empty sample.
class EmpiricalCdf
{
public:
  explicit EmpiricalCdf(std::vector<double> values);

  //! (# values <= t) / N
  double operator()(double t) const noexcept;
  //! The ceil(t*N)-th order statistic (clamped to [1, N]); t in (0, 1].
  double quantile(double t) const;
  //! Same, but accepts t = 0 as Q(0+) = min without validation.
  double quantile_unchecked(double t) const noexcept;

  std::size_t size() const noexcept { return sorted_.size(); }
  const std::vector<double>& sorted_values() const noexcept { return sorted_; }
  double min() const noexcept { return sorted_.front(); }
  double max() const noexcept { return sorted_.back(); }

private:
  std::vector<double> sorted_;
};

inline double empirical_cdf_eval(const EmpiricalCdf& cdf, double t) { return cdf(t); }
inline double empirical_quantile(const EmpiricalCdf& cdf, double t) { return cdf.quantile(t); }

// ---------------------------------------------------------------------------

struct SmoothingMethod
{
  enum class Kind
  {
    empirical,
    kernel,
    local_linear
  };

  Kind kind = Kind::kernel;
  KernelId kernel = KernelId::triangular;
  //! Kernel bandwidth or local-linear radius; empty selects min(N^-1/4, 0.45).
  std::optional<double> bandwidth;

  static SmoothingMethod empirical() { return { Kind::empirical, KernelId::triangular, {} }; }
  static SmoothingMethod kernel_smoother(std::optional<double> h = {},
                                         KernelId id = KernelId::triangular)
  {
    return { Kind::kernel, id, h };
  }
  static SmoothingMethod local_linear(std::optional<double> radius = {})
  {
    return { Kind::local_linear, KernelId::triangular, radius };
  }

  double resolved_bandwidth(std::size_t sample_size) const;
};

std::string to_string(SmoothingMethod::Kind kind);
std::string to_string(KernelId kernel);
SmoothingMethod::Kind parse_smoothing_kind(const std::string& name);
KernelId parse_kernel(const std::string& name);

//! A quantile function tabulated on t_j = (j + 1/2)/M, j < M, and linearly
//! interpolated in between. The empirical method evaluates the exact step
//! function instead of the table.
class SmoothedQuantileFn
{
public:
  SmoothedQuantileFn(SmoothingMethod method,
                     double bandwidth,
                     std::vector<double> grid_values,
                     EmpiricalCdf source);

  double operator()(double t) const noexcept;

  const SmoothingMethod& method() const noexcept { return method_; }
  double bandwidth() const noexcept { return bandwidth_; }
  std::size_t grid_size() const noexcept { return values_.size(); }
  double grid_point(std::size_t j) const noexcept
  {
    return (static_cast<double>(j) + 0.5) / static_cast<double>(values_.size());
  }
  const std::vector<double>& grid_values() const noexcept { return values_; }
  const EmpiricalCdf& source() const noexcept { return source_; }
  //! Grid points whose value fell below the previous one before rearrangement.
  std::size_t monotonicity_repairs = 0;

  //! Midpoint-rule average of the tabulated function over (0, 1).
  double grid_mean() const noexcept;

private:
  SmoothingMethod method_;
  double bandwidth_;
  std::vector<double> values_;
  EmpiricalCdf source_;
};

constexpr std::size_t default_grid_size = 1024;

SmoothedQuantileFn smooth_quantile_fn(const EmpiricalCdf& cdf,
                                      const SmoothingMethod& method,
                                      std::size_t grid_size = default_grid_size,
                                      Execution exec = Execution::parallel);

// ---------------------------------------------------------------------------

//! Location statistic of `t` against a sorted sample V_1..V_n:
//! (#{V_i < t} + u (1 + #{V_i = t})) / (n + 1).
double location_statistic(std::span<const double> sorted, double t, double u) noexcept;

struct SmoothingOptions
{
  SmoothingMethod method;
  std::size_t grid_size = default_grid_size;
  Execution exec = Execution::parallel;
};

//! Fitted functional synchronization for one quantile level.
class FairTransformer
{
public:
  struct Group
  {
    //! jittered calibration predictions, input order
    std::vector<double> calibration;
    EmpiricalCdf calibration_cdf;
    SmoothedQuantileFn quantile_fn;
    //! jittered training predictions, ascending
    std::vector<double> training_sorted;
  };

  FairTransformer(std::vector<Group> groups,
                  std::vector<double> weights,
                  JitterConfig jitter);

  int group_count() const noexcept { return static_cast<int>(groups_.size()); }
  const Group& group(int s) const;
  const std::vector<double>& weights() const noexcept { return weights_; }
  const JitterConfig& jitter_config() const noexcept { return jitter_; }

  //! sum_s' p_s' Q_s'(rank)
  double barycenter_quantile(double rank) const noexcept;

  //! Fair value of an already-jittered calibration prediction of group s,
  //! ranked against the group's own calibration CDF.
  double synchronize_calibration(double jittered, int s) const;
  //! Fair values of the stored calibration points of group s, input order.
  std::vector<double> synchronize_calibration_group(int s) const;

  //! Randomized training-set rank of t in group s (unclamped, in [0, 1]).
  double randomized_training_cdf(int s, double t, double u) const;

  //! Jitters the raw prediction, ranks it against the group's training
  //! sample and maps the rank through the barycenter quantile. Draws the
  //! jitter first, then the tie-break uniform.
  double synchronize_test(double raw_prediction, int s, Rng& rng) const;

  nlohmann::json to_json() const;
  static FairTransformer from_json(const nlohmann::json& doc);

private:
  void check_group(int s) const;

  std::vector<Group> groups_;
  std::vector<double> weights_;
  JitterConfig jitter_;
};

//! Builds the transformer from raw (un-jittered) per-group predictions.
//! Weights default to the calibration group proportions.
FairTransformer fit_transformer(const std::vector<std::vector<double>>& calibration_by_group,
                                const std::vector<std::vector<double>>& training_by_group,
                                std::optional<std::vector<double>> weights,
                                const JitterConfig& jitter,
                                const SmoothingOptions& smoothing);

//! synchronize_test over a batch; point i uses Rng(derive_seed(seed, i)),
//! so the result does not depend on the execution policy.
std::vector<double> synchronize_test_batch(const FairTransformer& tf,
                                           std::span<const double> raw_predictions,
                                           std::span<const int> groups,
                                           std::uint64_t seed,
                                           Execution exec = Execution::parallel);

} // namespace cfqp
