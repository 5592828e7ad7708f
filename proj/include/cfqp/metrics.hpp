#pragma once

#include "cfqp/conformal.hpp"

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace cfqp {

//! Fraction of closed intervals containing y. Crossed intervals never cover.
double coverage(std::span<const PredictionInterval> intervals, std::span<const double> responses);

//! Mean of max(upper - lower, 0).
double mean_length(std::span<const PredictionInterval> intervals);

std::size_t crossing_count(std::span<const PredictionInterval> intervals);

//! sup_t |F_a(t) - F_b(t)| by a merged sweep over both sorted samples.
double ks_two_sample(std::span<const double> a, std::span<const double> b);

//! Largest two-sample KS distance between any two groups' values.
double ks_unfairness(std::span<const double> values,
                     std::span<const int> groups,
                     int group_count);

double mae(std::span<const double> predictions, std::span<const double> responses);

//! One-sample KS distance between the sample and Uniform(0, 1).
double ks_uniform_statistic(std::span<const double> values);

//! Asymptotic P(D_n >= d) with the small-sample correction
//! lambda = (sqrt(n) + 0.12 + 0.11/sqrt(n)) d.
double kolmogorov_pvalue(double d, std::size_t n);

struct EvaluationReport
{
  double coverage = 0.0;
  double mean_length = 0.0;
  double ks_lo = 0.0;
  double ks_hi = 0.0;
  double mae_lo = 0.0;
  double mae_hi = 0.0;
  std::size_t crossing_count = 0;
  //! fraction with y >= lower, and with y <= upper
  double coverage_lo = 0.0;
  double coverage_hi = 0.0;
  std::vector<double> per_group_coverage;
  //! KS fields are 0 because there is no pair of groups to compare.
  bool single_group = false;

  nlohmann::json to_json() const;
};

//! `lower_endpoints`/`upper_endpoints` are the (fair) quantile predictions
//! before conformal widening; KS and MAE are computed on them.
EvaluationReport evaluate(std::span<const double> responses,
                          std::span<const int> groups,
                          int group_count,
                          std::span<const double> lower_endpoints,
                          std::span<const double> upper_endpoints,
                          std::span<const PredictionInterval> intervals);

//! seed,coverage,mean_length,ks_lo,ks_hi,mae_lo,mae_hi,crossing_count,coverage_lo,coverage_hi,
//! coverage_g0,...
std::string csv_header(int group_count);
std::string csv_row(std::uint64_t seed, const EvaluationReport& report);

} // namespace cfqp
