#pragma once

#include <span>
#include <vector>

#include "petkin/image.hpp"

namespace petkin {

/// Mean squared difference over equal-length value arrays.
double mse(std::span<const double> a, std::span<const double> b);

/// 10*log10(peak^2 / mse); +infinity when the arrays are identical.
double psnr(std::span<const double> a, std::span<const double> b, double peak);

/// Mean local structural similarity with an 11x11 Gaussian window
/// (sigma 1.5) and stability constants (0.01*peak)^2, (0.03*peak)^2.
/// Windows are truncated at the image boundary and renormalized.
double ssim(const Image& a, const Image& b, double peak);

struct MetricReport {
    double mse = 0.0;
    double psnr = 0.0;  // dB, may be +infinity
    double ssim = 0.0;
    double peak = 0.0;  // reference level the psnr/ssim used
};

/// All three metrics of pred against target; peak is the target's maximum
/// (1 when the target is non-positive everywhere).
MetricReport image_metrics(const Image& target, const Image& pred);

struct RoiStats {
    double bias = 0.0;               // (1/N) sum |x_i - xhat_i| / x_i
    double variance = 0.0;           // (1/N) sum ((x_i - mean(xhat)) / x_i)^2
    double variance_centered = 0.0;  // alternative: (1/N) sum ((xhat_i - mean(xhat)) / x_i)^2
    long long n = 0;                 // admissible voxels (in mask, truth > 0)
    long long n_excluded = 0;        // masked voxels dropped because truth <= 0
};

/// Bias/variance over the voxels where mask != 0 and truth > 0.
RoiStats roi_bias_variance(std::span<const double> truth, std::span<const double> pred,
                           std::span<const int> mask);

enum class ProfileAxis { Row, Column };

/// Values of one row (y = index) or column (x = index), in order.
std::vector<double> line_profile(const Image& img, ProfileAxis axis, int index);

} // namespace petkin
