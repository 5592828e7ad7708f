#include "cfqp/metrics.hpp"

#include "cfqp/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace cfqp {

namespace {

void same_length(std::size_t a, std::size_t b, const char* what)
{
  if (a != b)
    throw Error(ErrorKind::dimension_mismatch,
                std::string(what) + ": lengths differ (" + std::to_string(a) + " vs " +
                  std::to_string(b) + ")");
}

std::string fmt(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

} // namespace

double coverage(std::span<const PredictionInterval> intervals, std::span<const double> responses)
{
  same_length(intervals.size(), responses.size(), "coverage");
  if (intervals.empty())
    throw Error(ErrorKind::invalid_argument, "coverage of an empty test set");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < intervals.size(); ++i)
    hit += intervals[i].contains(responses[i]) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(intervals.size());
}

double mean_length(std::span<const PredictionInterval> intervals)
{
  if (intervals.empty())
    return 0.0;
  double sum = 0.0;
  for (const auto& iv : intervals)
    sum += iv.length();
  return sum / static_cast<double>(intervals.size());
}

std::size_t crossing_count(std::span<const PredictionInterval> intervals)
{
  return static_cast<std::size_t>(
    std::count_if(intervals.begin(), intervals.end(), [](const auto& iv) { return iv.crossed(); }));
}

double ks_two_sample(std::span<const double> a, std::span<const double> b)
{
  if (a.empty() || b.empty())
    throw Error(ErrorKind::empty_group, "KS distance needs two non-empty samples");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double t = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == t)
      ++i;
    while (j < y.size() && y[j] == t)
      ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
  }
  return d;
}

double ks_unfairness(std::span<const double> values, std::span<const int> groups, int group_count)
{
  same_length(values.size(), groups.size(), "ks_unfairness");
  if (group_count < 1)
    throw Error(ErrorKind::invalid_argument, "group count must be >= 1");
  std::vector<std::vector<double>> by_group(static_cast<std::size_t>(group_count));
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (groups[i] < 0 || groups[i] >= group_count)
      throw Error(ErrorKind::invalid_argument, "unknown group label " + std::to_string(groups[i]));
    by_group[static_cast<std::size_t>(groups[i])].push_back(values[i]);
  }
  for (int s = 0; s < group_count; ++s)
    if (by_group[static_cast<std::size_t>(s)].empty())
      throw Error(ErrorKind::empty_group, "empty group " + std::to_string(s));
  double d = 0.0;
  for (std::size_t s = 0; s < by_group.size(); ++s)
    for (std::size_t r = s + 1; r < by_group.size(); ++r)
      d = std::max(d, ks_two_sample(by_group[s], by_group[r]));
  return d;
}

double mae(std::span<const double> predictions, std::span<const double> responses)
{
  same_length(predictions.size(), responses.size(), "mae");
  if (predictions.empty())
    throw Error(ErrorKind::invalid_argument, "mae of an empty sample");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    sum += std::abs(predictions[i] - responses[i]);
  return sum / static_cast<double>(predictions.size());
}

double ks_uniform_statistic(std::span<const double> values)
{
  if (values.empty())
    throw Error(ErrorKind::invalid_argument, "KS statistic of an empty sample");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double u = std::clamp(v[i], 0.0, 1.0);
    d = std::max({ d, static_cast<double>(i + 1) / n - u, u - static_cast<double>(i) / n });
  }
  return d;
}

double kolmogorov_pvalue(double d, std::size_t n)
{
  if (n == 0)
    throw Error(ErrorKind::invalid_argument, "sample size must be positive");
  const double rn = std::sqrt(static_cast<double>(n));
  const double lambda = (rn + 0.12 + 0.11 / rn) * d;
  if (lambda < 0.2)
    return 1.0;
  // Q(lambda) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2)
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16 * std::abs(sum))
      break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

nlohmann::json EvaluationReport::to_json() const
{
  return {
    { "coverage", coverage },
    { "mean_length", mean_length },
    { "ks_lo", ks_lo },
    { "ks_hi", ks_hi },
    { "mae_lo", mae_lo },
    { "mae_hi", mae_hi },
    { "crossing_count", crossing_count },
    { "coverage_lo", coverage_lo },
    { "coverage_hi", coverage_hi },
    { "per_group_coverage", per_group_coverage },
    { "single_group", single_group },
  };
}

EvaluationReport evaluate(std::span<const double> responses,
                          std::span<const int> groups,
                          int group_count,
                          std::span<const double> lower_endpoints,
                          std::span<const double> upper_endpoints,
                          std::span<const PredictionInterval> intervals)
{
  const std::size_t n = responses.size();
  same_length(n, groups.size(), "evaluate (groups)");
  same_length(n, lower_endpoints.size(), "evaluate (lower endpoints)");
  same_length(n, upper_endpoints.size(), "evaluate (upper endpoints)");
  same_length(n, intervals.size(), "evaluate (intervals)");

  EvaluationReport r;
  r.coverage = coverage(intervals, responses);
  r.mean_length = mean_length(intervals);
  r.crossing_count = crossing_count(intervals);
  if (n > 0) {
    std::size_t above_lo = 0, below_hi = 0;
    for (std::size_t i = 0; i < n; ++i) {
      above_lo += responses[i] >= intervals[i].lower ? 1 : 0;
      below_hi += responses[i] <= intervals[i].upper ? 1 : 0;
    }
    r.coverage_lo = static_cast<double>(above_lo) / static_cast<double>(n);
    r.coverage_hi = static_cast<double>(below_hi) / static_cast<double>(n);
  }
  r.mae_lo = mae(lower_endpoints, responses);
  r.mae_hi = mae(upper_endpoints, responses);
  if (group_count <= 1) {
    r.single_group = true;
  } else {
    r.ks_lo = ks_unfairness(lower_endpoints, groups, group_count);
    r.ks_hi = ks_unfairness(upper_endpoints, groups, group_count);
  }

  std::vector<std::size_t> hit(static_cast<std::size_t>(std::max(group_count, 1)), 0);
  std::vector<std::size_t> count(hit.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const int s = group_count <= 1 ? 0 : groups[i];
    if (s < 0 || s >= static_cast<int>(hit.size()))
      throw Error(ErrorKind::invalid_argument, "unknown group label " + std::to_string(s));
    ++count[static_cast<std::size_t>(s)];
    hit[static_cast<std::size_t>(s)] += intervals[i].contains(responses[i]) ? 1 : 0;
  }
  for (std::size_t s = 0; s < hit.size(); ++s)
    r.per_group_coverage.push_back(
      count[s] ? static_cast<double>(hit[s]) / static_cast<double>(count[s]) : std::nan(""));
  return r;
}

std::string csv_header(int group_count)
{
  std::string h = "seed,coverage,mean_length,ks_lo,ks_hi,mae_lo,mae_hi,crossing_count,coverage_lo,coverage_hi";
  for (int s = 0; s < std::max(group_count, 1); ++s)
    h += ",coverage_g" + std::to_string(s);
  return h;
}

std::string csv_row(std::uint64_t seed, const EvaluationReport& r)
{
  std::string row = std::to_string(seed);
  for (double v : { r.coverage, r.mean_length, r.ks_lo, r.ks_hi, r.mae_lo, r.mae_hi })
    row += "," + fmt(v);
  row += "," + std::to_string(r.crossing_count);
  row += "," + fmt(r.coverage_lo) + "," + fmt(r.coverage_hi);
  for (double v : r.per_group_coverage)
    row += "," + fmt(v);
  return row;
}

} // namespace cfqp
