#pragma once

#include <span>
#include <vector>

#include "petkin/image.hpp"
#include "petkin/rng.hpp"

namespace petkin {

/// Parallel-beam geometry for square images: one angle per image column
/// over [0, pi), detector bins at 1-pixel spacing covering the diagonal.
struct ProjectionGeometry {
    int image_size = 0;
    int n_angles = 0;
    int n_bins = 0;
    double sample_step = 0.5;  // pixels, along the ray
    std::vector<double> cos_t, sin_t;

    static ProjectionGeometry for_image(int size);
    size_t sino_size() const { return static_cast<size_t>(n_angles) * n_bins; }
};

/// Sinogram stack: [frame][angle][bin]; expected (or realized) counts.
struct Sinogram {
    int n_angles = 0, n_bins = 0, n_frames = 1;
    std::vector<double> v;

    Sinogram() = default;
    Sinogram(const ProjectionGeometry& g, int frames = 1)
        : n_angles(g.n_angles), n_bins(g.n_bins), n_frames(frames),
          v(g.sino_size() * static_cast<size_t>(frames), 0.0) {}

    size_t frame_size() const { return static_cast<size_t>(n_angles) * n_bins; }
    std::span<double> frame(int k) { return {v.data() + frame_size() * k, frame_size()}; }
    std::span<const double> frame(int k) const { return {v.data() + frame_size() * k, frame_size()}; }
};

/// Discrete Radon transform: ray integrals with bilinear sampling at
/// sample_step spacing. Linear in the image; zero outside the support.
void forward_project(std::span<const double> image, const ProjectionGeometry& g,
                     std::span<double> sino_out);

/// Exact transpose of forward_project (same sample positions and weights).
void back_project(std::span<const double> sino, const ProjectionGeometry& g,
                  std::span<double> image_out);

/// Restriction to an interleaved angle subset: angles a with a % n == s.
std::vector<int> subset_angles(const ProjectionGeometry& g, int subsets, int s);

void forward_project_subset(std::span<const double> image, const ProjectionGeometry& g,
                            std::span<const int> angles, std::span<double> sino_rows_out);
void back_project_subset(std::span<const double> sino_rows, const ProjectionGeometry& g,
                         std::span<const int> angles, std::span<double> image_out);

/// Scales expected counts so the frame totals base_counts / noise_level,
/// draws one Poisson count per bin, and scales back. A zero frame stays
/// zero. Deterministic for a given rng state.
void add_poisson(std::span<double> sino_frame, double noise_level, double base_counts, Rng& rng);

struct OsemOptions {
    int iterations = 6;
    int subsets = 5;
};

/// Multiplicative OSEM with interleaved angle subsets processed in index
/// order; 0/0 ratios are treated as 0 and zero-sensitivity voxels stay 0.
void osem_reconstruct(std::span<const double> sino_frame, const ProjectionGeometry& g,
                      const OsemOptions& opt, std::span<double> image_out);

/// Poisson log-likelihood sum(y log E - E) of data y under expectation
/// E = forward_project(image); bins with E = 0 contribute 0 when y = 0
/// and -inf otherwise.
double poisson_log_likelihood(std::span<const double> y, std::span<const double> expected);

} // namespace petkin
