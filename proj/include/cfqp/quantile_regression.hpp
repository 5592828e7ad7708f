#pragma once

#include "cfqp/dataset.hpp"

#include "json.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace cfqp {

//! A quantile level strictly inside (0, 1).
class QuantileLevel
{
public:
  explicit QuantileLevel(double alpha);
  double alpha() const noexcept { return alpha_; }

  friend bool operator==(QuantileLevel a, QuantileLevel b) noexcept
  {
    return a.alpha_ == b.alpha_;
  }

private:
  double alpha_;
};

//! Check loss: alpha*|y-q| when y >= q, (1-alpha)*|y-q| otherwise.
double pinball_loss(double y, double q, QuantileLevel level) noexcept;
double mean_pinball_loss(std::span<const double> y,
                         std::span<const double> q,
                         QuantileLevel level);

//! Anything that maps (x, s) to a conditional quantile estimate.
class QuantilePredictor
{
public:
  virtual ~QuantilePredictor() = default;
  virtual QuantileLevel level() const = 0;
  virtual std::size_t feature_count() const = 0;
  virtual double predict(std::span<const double> x, int group) const = 0;
};

std::vector<double> predict_all(const QuantilePredictor& model,
                                const Dataset& data,
                                std::span<const Index> indices);
std::vector<double> predict_all(const QuantilePredictor& model,
                                const Dataset& data);

//! Per design-column centring and scaling. A zero scale marks a dropped
//! (zero-variance) column whose standardized value is always 0.
struct Standardization
{
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardization identity(std::size_t width);
  double apply(std::size_t column, double value) const noexcept
  {
    return scale[column] > 0.0 ? (value - mean[column]) / scale[column] : 0.0;
  }
};

struct FitOptions
{
  std::size_t max_iterations = 2000;
  //! Converged once the best objective improves by less than this over
  //! `window` iterations.
  double tolerance = 1e-8;
  std::size_t window = 50;
  //! Step at iteration t is step_scale * spread(y) / sqrt(t).
  double step_scale = 1.0;
  //! 0 = full batch; otherwise minibatches drawn with the fit seed.
  std::size_t batch_size = 0;
  bool standardize = true;
  //! Exact coordinate-wise minimization sweeps after the subgradient phase.
  std::size_t polish_sweeps = 100;
};

//! Linear model on x~ = (x, dummy(s)) where dummy(s) has K-1 indicator
//! columns (group 0 is the reference level).
class LinearQuantileModel final : public QuantilePredictor
{
public:
  LinearQuantileModel(QuantileLevel level,
                      std::size_t feature_count,
                      int group_count,
                      std::vector<double> weights,
                      double intercept,
                      Standardization standardization);

  QuantileLevel level() const override { return level_; }
  std::size_t feature_count() const override { return feature_count_; }
  int group_count() const noexcept { return group_count_; }
  std::size_t design_width() const noexcept { return weights_.size(); }

  double predict(std::span<const double> x, int group) const override;

  const std::vector<double>& weights() const noexcept { return weights_; }
  double intercept() const noexcept { return intercept_; }
  const Standardization& standardization() const noexcept
  {
    return standardization_;
  }

  // fit diagnostics
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = true;

  nlohmann::json to_json() const;
  static LinearQuantileModel from_json(const nlohmann::json& doc);

private:
  QuantileLevel level_;
  std::size_t feature_count_;
  int group_count_;
  std::vector<double> weights_;
  double intercept_;
  Standardization standardization_;
};

//! Averaged subgradient descent on the mean pinball loss, started from the
//! best constant model and finished by exact coordinate minimization. The
//! returned objective never exceeds that of the zero model.
LinearQuantileModel fit_linear_quantile(const Dataset& data,
                                        std::span<const Index> indices,
                                        QuantileLevel level,
                                        const FitOptions& opts = {},
                                        std::uint64_t seed = 0);

struct QuantilePair
{
  std::shared_ptr<const QuantilePredictor> lower;
  std::shared_ptr<const QuantilePredictor> upper;
};

//! Default levels (alpha/2, 1 - alpha/2).
std::pair<double, double> default_levels(double miscoverage);

QuantilePair fit_pair(const Dataset& data,
                      std::span<const Index> indices,
                      double miscoverage,
                      const FitOptions& opts = {},
                      std::uint64_t seed = 0,
                      std::optional<std::pair<double, double>> levels = {});

} // namespace cfqp
