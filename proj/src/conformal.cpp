#include "cfqp/conformal.hpp"

#include "cfqp/error.hpp"
#include "numeric_detail.hpp"

#include <algorithm>
#include <cmath>

namespace cfqp {

namespace {

void check_lengths(std::size_t a, std::size_t b, std::size_t c)
{
  if (a != b || a != c)
    throw Error(ErrorKind::dimension_mismatch,
                "lower/upper/response lengths differ (" + std::to_string(a) + ", " +
                  std::to_string(b) + ", " + std::to_string(c) + ")");
  if (a == 0)
    throw Error(ErrorKind::invalid_argument, "calibration set is empty");
}

void check_alpha(double a, const char* name)
{
  if (!(a > 0.0 && a < 1.0))
    throw Error(ErrorKind::invalid_argument,
                std::string(name) + " must lie in (0, 1), got " + std::to_string(a));
}

} // namespace

ConformityScores conformity_scores(std::span<const double> lower,
                                   std::span<const double> upper,
                                   std::span<const double> responses)
{
  check_lengths(lower.size(), upper.size(), responses.size());
  ConformityScores out;
  out.sorted.resize(lower.size());
  for (std::size_t i = 0; i < lower.size(); ++i) {
    out.sorted[i] = std::max(lower[i] - responses[i], responses[i] - upper[i]);
    if (!std::isfinite(out.sorted[i]))
      throw Error(ErrorKind::invalid_argument, "non-finite conformity score at row " + std::to_string(i));
  }
  std::sort(out.sorted.begin(), out.sorted.end());
  return out;
}

std::size_t margin_rank(std::size_t n, double miscoverage)
{
  check_alpha(miscoverage, "alpha");
  if (n == 0)
    throw Error(ErrorKind::invalid_argument, "no conformity scores");
  const double dn = static_cast<double>(n);
  const double rank = detail::ceil_rank((1.0 - miscoverage) * (dn + 1.0));
  return static_cast<std::size_t>(std::clamp(rank, 1.0, dn));
}

double conformal_margin(const ConformityScores& scores, double miscoverage)
{
  const std::size_t k = margin_rank(scores.size(), miscoverage);
  return scores.sorted[k - 1];
}

double conformal_margin(std::span<const double> scores, double miscoverage)
{
  ConformityScores s{ std::vector<double>(scores.begin(), scores.end()) };
  std::sort(s.sorted.begin(), s.sorted.end());
  return conformal_margin(s, miscoverage);
}

ConformalCalibration calibrate_symmetric(std::span<const double> lower,
                                         std::span<const double> upper,
                                         std::span<const double> responses,
                                         double miscoverage)
{
  check_alpha(miscoverage, "alpha");
  ConformalCalibration cal;
  cal.mode = ConformalCalibration::Mode::symmetric;
  cal.alpha = miscoverage;
  cal.margin = conformal_margin(conformity_scores(lower, upper, responses), miscoverage);
  return cal;
}

ConformalCalibration calibrate_asymmetric(std::span<const double> lower,
                                          std::span<const double> upper,
                                          std::span<const double> responses,
                                          double alpha_lo,
                                          double alpha_hi)
{
  check_lengths(lower.size(), upper.size(), responses.size());
  check_alpha(alpha_lo, "alpha_lo");
  check_alpha(alpha_hi, "alpha_hi");
  std::vector<double> lo(lower.size()), hi(lower.size());
  for (std::size_t i = 0; i < lower.size(); ++i) {
    lo[i] = lower[i] - responses[i];
    hi[i] = responses[i] - upper[i];
  }
  ConformalCalibration cal;
  cal.mode = ConformalCalibration::Mode::asymmetric;
  cal.alpha_lo = alpha_lo;
  cal.alpha_hi = alpha_hi;
  cal.alpha = alpha_lo + alpha_hi;
  cal.margin_lo = conformal_margin(lo, alpha_lo);
  cal.margin_hi = conformal_margin(hi, alpha_hi);
  return cal;
}

PredictionInterval predict_interval(double lower, double upper, const ConformalCalibration& cal)
{
  if (cal.mode != ConformalCalibration::Mode::symmetric)
    throw Error(ErrorKind::mode_mismatch, "symmetric interval requested from an asymmetric calibration");
  return { lower - cal.margin, upper + cal.margin };
}

PredictionInterval predict_interval_asymmetric(double lower,
                                               double upper,
                                               const ConformalCalibration& cal)
{
  if (cal.mode != ConformalCalibration::Mode::asymmetric)
    throw Error(ErrorKind::mode_mismatch, "asymmetric interval requested from a symmetric calibration");
  return { lower - cal.margin_lo, upper + cal.margin_hi };
}

PredictionInterval apply_calibration(double lower, double upper, const ConformalCalibration& cal)
{
  return cal.mode == ConformalCalibration::Mode::symmetric
           ? predict_interval(lower, upper, cal)
           : predict_interval_asymmetric(lower, upper, cal);
}

std::vector<PredictionInterval> apply_calibration(std::span<const double> lower,
                                                  std::span<const double> upper,
                                                  const ConformalCalibration& cal)
{
  if (lower.size() != upper.size())
    throw Error(ErrorKind::dimension_mismatch, "lower/upper lengths differ");
  std::vector<PredictionInterval> out(lower.size());
  for (std::size_t i = 0; i < lower.size(); ++i)
    out[i] = apply_calibration(lower[i], upper[i], cal);
  return out;
}

std::vector<PredictionInterval> cqr_baseline(const QuantilePair& pair,
                                             const Dataset& data,
                                             const SplitIndices& splits,
                                             double miscoverage,
                                             std::span<const Index> test)
{
  if (!pair.lower || !pair.upper)
    throw Error(ErrorKind::invalid_argument, "quantile pair is incomplete");
  const auto lo_cal = predict_all(*pair.lower, data, splits.calibration);
  const auto hi_cal = predict_all(*pair.upper, data, splits.calibration);
  const auto y_cal = data.responses(splits.calibration);
  const auto cal = calibrate_symmetric(lo_cal, hi_cal, y_cal, miscoverage);
  return apply_calibration(predict_all(*pair.lower, data, test),
                           predict_all(*pair.upper, data, test),
                           cal);
}

} // namespace cfqp
