#pragma once

#include <functional>
#include <span>
#include <vector>

#include "petkin/types.hpp"

namespace petkin {
struct ProjectionGeometry;
}

// Plain serial reference implementations. They trade speed for obviousness
// and are kept as independent cross-checks for the optimized kernels (tests)
// and as baselines for the benchmark tool.
namespace petkin::ref {

/// Direct O(n^2) trapezoidal convolution of kernel(t) against g on the grid.
std::vector<double> convolve_trapezoid(std::span<const double> t, std::span<const double> g,
                                       const std::function<double(double)>& kernel);

/// Adaptive Simpson quadrature of f over [a, b] to the given absolute
/// tolerance (with a depth cap to guarantee termination).
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol, int max_depth = 40);

/// Single-threaded Radon transform and its transpose, written as one
/// straightforward loop nest each. Must match forward_project/back_project
/// to rounding error.
void forward_project_serial(std::span<const double> image, const ProjectionGeometry& g,
                            std::span<double> sino_out);
void back_project_serial(std::span<const double> sino, const ProjectionGeometry& g,
                         std::span<double> image_out);

} // namespace petkin::ref
