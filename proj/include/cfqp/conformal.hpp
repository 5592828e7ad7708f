#pragma once

#include "cfqp/dataset.hpp"
#include "cfqp/quantile_regression.hpp"

#include <span>
#include <vector>

namespace cfqp {

//! Calibration scores max(lower - y, y - upper), ascending.
struct ConformityScores
{
  std::vector<double> sorted;

  std::size_t size() const noexcept { return sorted.size(); }
};

ConformityScores conformity_scores(std::span<const double> lower,
                                   std::span<const double> upper,
                                   std::span<const double> responses);

//! One-based rank ceil((1-alpha)(n+1)) of the margin, clamped to n.
std::size_t margin_rank(std::size_t n, double miscoverage);

//! The margin_rank-th smallest score.
double conformal_margin(const ConformityScores& scores, double miscoverage);
//! Same for an unsorted sample.
double conformal_margin(std::span<const double> scores, double miscoverage);

struct ConformalCalibration
{
  enum class Mode
  {
    symmetric,
    asymmetric
  };

  Mode mode = Mode::symmetric;
  double alpha = 0.1;
  //! symmetric margin
  double margin = 0.0;
  //! asymmetric margins (alpha_lo + alpha_hi = alpha)
  double margin_lo = 0.0;
  double margin_hi = 0.0;
  double alpha_lo = 0.05;
  double alpha_hi = 0.05;
};

//! Bounds as computed; lower > upper is possible and left as is.
struct PredictionInterval
{
  double lower = 0.0;
  double upper = 0.0;

  bool crossed() const noexcept { return lower > upper; }
  double length() const noexcept { return crossed() ? 0.0 : upper - lower; }
  bool contains(double y) const noexcept { return lower <= y && y <= upper; }
};

ConformalCalibration calibrate_symmetric(std::span<const double> lower,
                                         std::span<const double> upper,
                                         std::span<const double> responses,
                                         double miscoverage);

ConformalCalibration calibrate_asymmetric(std::span<const double> lower,
                                          std::span<const double> upper,
                                          std::span<const double> responses,
                                          double alpha_lo,
                                          double alpha_hi);

//! [lower - margin, upper + margin]; throws mode_mismatch on an asymmetric
//! calibration.
PredictionInterval predict_interval(double lower, double upper, const ConformalCalibration& cal);

//! [lower - margin_lo, upper + margin_hi]; throws mode_mismatch on a
//! symmetric calibration.
PredictionInterval predict_interval_asymmetric(double lower,
                                               double upper,
                                               const ConformalCalibration& cal);

//! Applies either mode.
PredictionInterval apply_calibration(double lower, double upper, const ConformalCalibration& cal);

std::vector<PredictionInterval> apply_calibration(std::span<const double> lower,
                                                  std::span<const double> upper,
                                                  const ConformalCalibration& cal);

//! Split CQR on raw quantile predictions: score the calibration rows, then
//! widen the predictions at the test rows. Pooled over groups.
std::vector<PredictionInterval> cqr_baseline(const QuantilePair& pair,
                                             const Dataset& data,
                                             const SplitIndices& splits,
                                             double miscoverage,
                                             std::span<const Index> test);

} // namespace cfqp
