#pragma once

#include <cmath>
#include <cstddef>
#include <limits>

namespace cfqp::detail {

// ceil(x) that ignores rounding error of a few ulps, so that (j/N)*N and
// (1-alpha)(n+1) land on the intended integer.
inline double ceil_rank(double x) noexcept
{
  return std::ceil(x - 64.0 * std::numeric_limits<double>::epsilon() * std::abs(x));
}

} // namespace cfqp::detail
