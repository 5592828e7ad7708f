#pragma once

#include "cfqp/conformal.hpp"
#include "cfqp/fair_transform.hpp"
#include "cfqp/metrics.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cfqp {

//! Raw quantile predictions for one sample split, aligned row by row.
struct PredictionSet
{
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<int> group;
  std::vector<double> response;

  std::size_t size() const noexcept { return response.size(); }
  void validate(int group_count, const char* name) const;
};

PredictionSet make_prediction_set(const QuantilePair& pair,
                                  const Dataset& data,
                                  std::span<const Index> indices);

enum class Method
{
  cfqp,
  cqr,
  unfair
};

std::string to_string(Method m);
Method parse_method(const std::string& name);

struct PipelineOptions
{
  double alpha = 0.1;
  //! Separate tail levels; switches the conformal step to asymmetric mode.
  std::optional<std::pair<double, double>> tails;
  SmoothingOptions smoothing;
  //! Empty selects default_jitter_sigma of the training responses.
  std::optional<double> jitter_sigma;
  //! Barycenter weights; empty selects calibration group proportions.
  std::optional<std::vector<double>> weights;
  Execution exec = Execution::parallel;
};

struct MethodResult
{
  //! Test endpoints before conformal widening (fair for cfqp, raw otherwise).
  std::vector<double> lower_endpoints;
  std::vector<double> upper_endpoints;
  std::vector<PredictionInterval> intervals;
  ConformalCalibration calibration;
};

//! Runs one method on already computed predictions. For cfqp the
//! transformers are fitted on the training and calibration predictions; a
//! single group needs no synchronization, so only the jitter is applied.
MethodResult run_method(Method method,
                        const PredictionSet& train,
                        const PredictionSet& cal,
                        const PredictionSet& test,
                        int group_count,
                        const PipelineOptions& opts,
                        std::uint64_t seed);

EvaluationReport evaluate(const MethodResult& result, const PredictionSet& test, int group_count);

} // namespace cfqp
