#include "cfqp/pipeline.hpp"

#include "cfqp/error.hpp"

#include <algorithm>
#include <cmath>

namespace cfqp {

void PredictionSet::validate(int group_count, const char* name) const
{
  const std::size_t n = response.size();
  if (lower.size() != n || upper.size() != n || group.size() != n)
    throw Error(ErrorKind::dimension_mismatch,
                std::string(name) + " predictions: column lengths differ");
  if (n == 0)
    throw Error(ErrorKind::invalid_argument, std::string(name) + " predictions are empty");
  for (std::size_t i = 0; i < n; ++i) {
    if (group[i] < 0 || group[i] >= group_count)
      throw Error(ErrorKind::invalid_argument,
                  std::string(name) + " predictions: unknown group label " + std::to_string(group[i]));
    if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]) || !std::isfinite(response[i]))
      throw Error(ErrorKind::invalid_argument,
                  std::string(name) + " predictions: non-finite value at row " + std::to_string(i));
  }
}

PredictionSet make_prediction_set(const QuantilePair& pair,
                                  const Dataset& data,
                                  std::span<const Index> indices)
{
  if (!pair.lower || !pair.upper)
    throw Error(ErrorKind::invalid_argument, "quantile pair is incomplete");
  return { predict_all(*pair.lower, data, indices),
           predict_all(*pair.upper, data, indices),
           data.groups(indices),
           data.responses(indices) };
}

std::string to_string(Method m)
{
  switch (m) {
    case Method::cfqp: return "cfqp";
    case Method::cqr: return "cqr";
    case Method::unfair: return "unfair";
  }
  return "unknown";
}

Method parse_method(const std::string& name)
{
  if (name == "cfqp")
    return Method::cfqp;
  if (name == "cqr")
    return Method::cqr;
  if (name == "unfair")
    return Method::unfair;
  throw Error(ErrorKind::invalid_argument, "unknown method '" + name + "'");
}

namespace {

std::vector<std::vector<double>> by_group(const std::vector<double>& values,
                                          const std::vector<int>& groups,
                                          int group_count)
{
  std::vector<std::vector<double>> out(static_cast<std::size_t>(group_count));
  for (std::size_t i = 0; i < values.size(); ++i)
    out[static_cast<std::size_t>(groups[i])].push_back(values[i]);
  return out;
}

ConformalCalibration calibrate(std::span<const double> lower,
                               std::span<const double> upper,
                               std::span<const double> y,
                               const PipelineOptions& opts)
{
  if (opts.tails)
    return calibrate_asymmetric(lower, upper, y, opts.tails->first, opts.tails->second);
  return calibrate_symmetric(lower, upper, y, opts.alpha);
}

struct FairSide
{
  std::vector<double> calibration;
  std::vector<double> test;
};

FairSide synchronize_side(const std::vector<double>& train_values,
                          const std::vector<double>& cal_values,
                          const std::vector<double>& test_values,
                          const PredictionSet& train,
                          const PredictionSet& cal,
                          const PredictionSet& test,
                          int group_count,
                          const PipelineOptions& opts,
                          double sigma,
                          std::uint64_t seed)
{
  const auto tf = fit_transformer(by_group(cal_values, cal.group, group_count),
                                  by_group(train_values, train.group, group_count),
                                  opts.weights,
                                  JitterConfig{ sigma, derive_seed(seed, "jitter") },
                                  opts.smoothing);
  FairSide out;
  out.calibration.resize(cal.size());
  std::vector<std::size_t> cursor(static_cast<std::size_t>(group_count), 0);
  for (std::size_t i = 0; i < cal.size(); ++i) {
    const int s = cal.group[i];
    const auto& jittered = tf.group(s).calibration;
    const double v = jittered[cursor[static_cast<std::size_t>(s)]++];
    out.calibration[i] = group_count == 1 ? v : tf.synchronize_calibration(v, s);
  }

  const std::uint64_t test_seed = derive_seed(seed, "test");
  if (group_count == 1) {
    out.test.resize(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
      Rng rng(derive_seed(test_seed, static_cast<std::uint64_t>(i)));
      out.test[i] = test_values[i] + sigma * (2.0 * uniform01(rng) - 1.0);
    }
  } else {
    out.test = synchronize_test_batch(tf, test_values, test.group, test_seed, opts.exec);
  }
  return out;
}

} // namespace

MethodResult run_method(Method method,
                        const PredictionSet& train,
                        const PredictionSet& cal,
                        const PredictionSet& test,
                        int group_count,
                        const PipelineOptions& opts,
                        std::uint64_t seed)
{
  if (group_count < 1)
    throw Error(ErrorKind::invalid_argument, "group count must be >= 1");
  train.validate(group_count, "training");
  cal.validate(group_count, "calibration");
  test.validate(group_count, "test");

  MethodResult r;
  switch (method) {
    case Method::unfair:
      r.lower_endpoints = test.lower;
      r.upper_endpoints = test.upper;
      r.calibration.alpha = opts.alpha;
      r.calibration.margin = 0.0;
      r.intervals = apply_calibration(test.lower, test.upper, r.calibration);
      return r;
    case Method::cqr:
      r.lower_endpoints = test.lower;
      r.upper_endpoints = test.upper;
      r.calibration = calibrate(cal.lower, cal.upper, cal.response, opts);
      r.intervals = apply_calibration(test.lower, test.upper, r.calibration);
      return r;
    case Method::cfqp:
      break;
  }

  const double sigma = opts.jitter_sigma ? *opts.jitter_sigma : default_jitter_sigma(train.response);
  if (!(sigma >= 0.0))
    throw Error(ErrorKind::invalid_argument, "jitter sigma must be >= 0");
  auto lo = synchronize_side(train.lower, cal.lower, test.lower, train, cal, test, group_count,
                             opts, sigma, derive_seed(seed, "lower"));
  auto hi = synchronize_side(train.upper, cal.upper, test.upper, train, cal, test, group_count,
                             opts, sigma, derive_seed(seed, "upper"));
  r.calibration = calibrate(lo.calibration, hi.calibration, cal.response, opts);
  r.intervals = apply_calibration(lo.test, hi.test, r.calibration);
  r.lower_endpoints = std::move(lo.test);
  r.upper_endpoints = std::move(hi.test);
  return r;
}

EvaluationReport evaluate(const MethodResult& result, const PredictionSet& test, int group_count)
{
  return evaluate(test.response, test.group, group_count, result.lower_endpoints,
                  result.upper_endpoints, result.intervals);
}

} // namespace cfqp
