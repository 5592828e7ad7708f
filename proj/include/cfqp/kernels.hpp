#pragma once

// Data-parallel inner loops. Every routine has a `_serial` reference and an
// OpenMP `_parallel` variant; both compute each output element with the same
// arithmetic, so their results are bit-identical.

#include <cstddef>
#include <span>
#include <vector>

namespace cfqp {

enum class Execution
{
  serial,
  parallel
};

enum class KernelId
{
  triangular,
  gaussian
};

namespace kernels {

//! K(u) for unit bandwidth: triangular (1-|u|)+ or standard normal density.
double kernel_weight(KernelId kernel, double u) noexcept;
//! Support half-width in bandwidth units (the Gaussian is truncated).
double kernel_support(KernelId kernel) noexcept;

//! F^-1 of the sorted sample at v_k = k/(nodes-1), k = 0..nodes-1, with
//! F^-1(0) taken as the sample minimum.
std::vector<double> quantile_table(std::span<const double> sorted, std::size_t nodes);

//! Inner node count for bandwidth h: at least 4096, refined so that the
//! kernel support always spans >= 8 nodes.
std::size_t inner_node_count(double bandwidth) noexcept;

//! Kernel-smoothed quantile function at each t. Trapezoid quadrature over
//! the node table; the function is extended past [0, 1] by point
//! reflection about its endpoint values.
void kernel_smooth_serial(std::span<const double> table,
                          std::span<const double> t,
                          double bandwidth,
                          KernelId kernel,
                          std::span<double> out);
void kernel_smooth_parallel(std::span<const double> table,
                            std::span<const double> t,
                            double bandwidth,
                            KernelId kernel,
                            std::span<double> out);

//! Local linear fit of the points ((i - 1/2)/N, x_(i)) around each t with
//! triangular weights of the given radius.
void local_linear_serial(std::span<const double> sorted,
                         std::span<const double> t,
                         double radius,
                         std::span<double> out);
void local_linear_parallel(std::span<const double> sorted,
                           std::span<const double> t,
                           double radius,
                           std::span<double> out);

} // namespace kernels
} // namespace cfqp
