#include "cfqp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cfqp::kernels {

double kernel_weight(KernelId kernel, double u) noexcept
{
  switch (kernel) {
    case KernelId::triangular: {
      const double a = std::abs(u);
      return a < 1.0 ? 1.0 - a : 0.0;
    }
    case KernelId::gaussian:
      return std::exp(-0.5 * u * u) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
  }
  return 0.0;
}

double kernel_support(KernelId kernel) noexcept
{
  return kernel == KernelId::triangular ? 1.0 : 5.0;
}

std::vector<double> quantile_table(std::span<const double> sorted, std::size_t nodes)
{
  const std::size_t n = sorted.size();
  std::vector<double> table(nodes);
  for (std::size_t k = 0; k < nodes; ++k) {
    // ceil(v*N)-th order statistic, v = k/(nodes-1); exact integer arithmetic
    const std::size_t num = k * n;
    const std::size_t den = nodes - 1;
    std::size_t rank = (num + den - 1) / den;
    rank = std::clamp<std::size_t>(rank, 1, n);
    table[k] = sorted[rank - 1];
  }
  return table;
}

std::size_t inner_node_count(double bandwidth) noexcept
{
  const double needed = std::ceil(8.0 / bandwidth) + 1.0;
  if (!(needed < 5e7))
    return 50'000'000;
  return std::max<std::size_t>(4096, static_cast<std::size_t>(needed));
}

namespace {

// Node value with point reflection: E(-v) = 2 E(0) - E(v), E(2 - v) = 2 E(1) - E(v).
inline double extended(std::span<const double> table, long k) noexcept
{
  const long last = static_cast<long>(table.size()) - 1;
  if (k < 0)
    return 2.0 * table[0] - table[static_cast<std::size_t>(std::min(-k, last))];
  if (k > last)
    return 2.0 * table[static_cast<std::size_t>(last)] -
           table[static_cast<std::size_t>(std::max(2 * last - k, 0L))];
  return table[static_cast<std::size_t>(k)];
}

inline double kernel_smooth_point(std::span<const double> table,
                                  double t,
                                  double bandwidth,
                                  KernelId kernel) noexcept
{
  const double step = 1.0 / static_cast<double>(table.size() - 1);
  const double reach = std::min(kernel_support(kernel) * bandwidth, 1.0);
  const long first = static_cast<long>(std::ceil((t - reach) / step));
  const long last = static_cast<long>(std::floor((t + reach) / step));
  double num = 0.0;
  double den = 0.0;
  for (long k = first; k <= last; ++k) {
    const double v = static_cast<double>(k) * step;
    const double w = kernel_weight(kernel, (t - v) / bandwidth);
    if (w == 0.0)
      continue;
    num += w * extended(table, k);
    den += w;
  }
  const double lo = table.front();
  const double hi = table.back();
  if (!(den > 0.0)) {
    const auto k = static_cast<long>(std::lround(t / step));
    return extended(table, k);
  }
  // The target quantile function is confined to [Q(0), Q(1)].
  return std::clamp(num / den, lo, hi);
}

inline double local_linear_point(std::span<const double> sorted,
                                 double t,
                                 double radius) noexcept
{
  const std::size_t n = sorted.size();
  const double dn = static_cast<double>(n);
  if (n == 1)
    return sorted[0];
  // positions (i + 1/2)/N for zero-based i within (t - r, t + r)
  long first = static_cast<long>(std::ceil((t - radius) * dn - 0.5));
  long last = static_cast<long>(std::floor((t + radius) * dn - 0.5));
  first = std::max(first, 0L);
  last = std::min(last, static_cast<long>(n) - 1);
  double r = radius;
  if (last - first < 1) {
    // Too few points inside the radius: widen to the two nearest positions.
    long centre = std::clamp(static_cast<long>(std::floor(t * dn - 0.5)), 0L, static_cast<long>(n) - 2);
    first = centre;
    last = centre + 1;
    const double pa = (static_cast<double>(first) + 0.5) / dn;
    const double pb = (static_cast<double>(last) + 0.5) / dn;
    r = std::max(std::abs(t - pa), std::abs(t - pb)) * (1.0 + 1e-9) + 1e-15;
  }

  double s0 = 0.0, s1 = 0.0, s2 = 0.0, m0 = 0.0, m1 = 0.0;
  for (long i = first; i <= last; ++i) {
    const double d = (static_cast<double>(i) + 0.5) / dn - t;
    const double w = std::max(0.0, 1.0 - std::abs(d) / r);
    if (w == 0.0)
      continue;
    const double y = sorted[static_cast<std::size_t>(i)];
    s0 += w;
    s1 += w * d;
    s2 += w * d * d;
    m0 += w * y;
    m1 += w * d * y;
  }
  double value;
  const double det = s0 * s2 - s1 * s1;
  if (s0 <= 0.0)
    value = sorted[std::clamp<std::size_t>(static_cast<std::size_t>(t * dn), 0, n - 1)];
  else if (det <= 1e-14 * s0 * s2)
    value = m0 / s0;
  else
    value = (s2 * m0 - s1 * m1) / det;
  return std::clamp(value, sorted.front(), sorted.back());
}

} // namespace

void kernel_smooth_serial(std::span<const double> table,
                          std::span<const double> t,
                          double bandwidth,
                          KernelId kernel,
                          std::span<double> out)
{
  for (std::size_t j = 0; j < t.size(); ++j)
    out[j] = kernel_smooth_point(table, t[j], bandwidth, kernel);
}

void kernel_smooth_parallel(std::span<const double> table,
                            std::span<const double> t,
                            double bandwidth,
                            KernelId kernel,
                            std::span<double> out)
{
  const auto m = static_cast<long>(t.size());
#pragma omp parallel for schedule(static)
  for (long j = 0; j < m; ++j)
    out[static_cast<std::size_t>(j)] =
      kernel_smooth_point(table, t[static_cast<std::size_t>(j)], bandwidth, kernel);
}

void local_linear_serial(std::span<const double> sorted,
                         std::span<const double> t,
                         double radius,
                         std::span<double> out)
{
  for (std::size_t j = 0; j < t.size(); ++j)
    out[j] = local_linear_point(sorted, t[j], radius);
}

void local_linear_parallel(std::span<const double> sorted,
                           std::span<const double> t,
                           double radius,
                           std::span<double> out)
{
  const auto m = static_cast<long>(t.size());
#pragma omp parallel for schedule(static)
  for (long j = 0; j < m; ++j)
    out[static_cast<std::size_t>(j)] =
      local_linear_point(sorted, t[static_cast<std::size_t>(j)], radius);
}

} // namespace cfqp::kernels
