#include "petkin/projection.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace petkin {

ProjectionGeometry ProjectionGeometry::for_image(int size) {
    if (size < 2) throw std::invalid_argument("projection: image size must be >= 2");
    ProjectionGeometry g;
    g.image_size = size;
    g.n_angles = size;
    g.n_bins = static_cast<int>(std::ceil(std::numbers::sqrt2 * size));
    g.cos_t.resize(g.n_angles);
    g.sin_t.resize(g.n_angles);
    for (int a = 0; a < g.n_angles; ++a) {
        const double th = std::numbers::pi * a / g.n_angles;
        g.cos_t[a] = std::cos(th);
        g.sin_t[a] = std::sin(th);
    }
    return g;
}

namespace {

// Ray through detector offset s at angle th: p(l) = c + s*(cos,sin) + l*(-sin,cos).
// Samples run over l in [-L, L] with L = n_bins/2, which covers the diagonal.
inline int ray_samples(const ProjectionGeometry& g) {
    const double L = 0.5 * g.n_bins;
    return static_cast<int>(std::floor(2.0 * L / g.sample_step)) + 1;
}

void fp_angle(const double* img, const ProjectionGeometry& g, int a, double* row) {
    const int n = g.image_size;
    const double c = 0.5 * (n - 1);
    const double cb = 0.5 * (g.n_bins - 1);
    const double ct = g.cos_t[a], st = g.sin_t[a];
    const double L = 0.5 * g.n_bins;
    const int m = ray_samples(g);
    for (int b = 0; b < g.n_bins; ++b) {
        const double s = b - cb;
        double acc = 0.0;
        for (int k = 0; k < m; ++k) {
            const double l = -L + k * g.sample_step;
            const double x = c + s * ct - l * st;
            const double y = c + s * st + l * ct;
            const int ix = static_cast<int>(std::floor(x));
            const int iy = static_cast<int>(std::floor(y));
            if (ix < -1 || iy < -1 || ix >= n || iy >= n) continue;
            const double fx = x - ix, fy = y - iy;
            if (ix >= 0 && iy >= 0) acc += (1.0 - fx) * (1.0 - fy) * img[iy * n + ix];
            if (ix + 1 < n && iy >= 0) acc += fx * (1.0 - fy) * img[iy * n + ix + 1];
            if (ix >= 0 && iy + 1 < n) acc += (1.0 - fx) * fy * img[(iy + 1) * n + ix];
            if (ix + 1 < n && iy + 1 < n) acc += fx * fy * img[(iy + 1) * n + ix + 1];
        }
        row[b] = acc * g.sample_step;
    }
}

// Scatter form of fp_angle: identical sample positions and weights.
void bp_angle(const double* row, const ProjectionGeometry& g, int a, double* img) {
    const int n = g.image_size;
    const double c = 0.5 * (n - 1);
    const double cb = 0.5 * (g.n_bins - 1);
    const double ct = g.cos_t[a], st = g.sin_t[a];
    const double L = 0.5 * g.n_bins;
    const int m = ray_samples(g);
    for (int b = 0; b < g.n_bins; ++b) {
        const double w = row[b] * g.sample_step;
        if (w == 0.0) continue;
        const double s = b - cb;
        for (int k = 0; k < m; ++k) {
            const double l = -L + k * g.sample_step;
            const double x = c + s * ct - l * st;
            const double y = c + s * st + l * ct;
            const int ix = static_cast<int>(std::floor(x));
            const int iy = static_cast<int>(std::floor(y));
            if (ix < -1 || iy < -1 || ix >= n || iy >= n) continue;
            const double fx = x - ix, fy = y - iy;
            if (ix >= 0 && iy >= 0) img[iy * n + ix] += (1.0 - fx) * (1.0 - fy) * w;
            if (ix + 1 < n && iy >= 0) img[iy * n + ix + 1] += fx * (1.0 - fy) * w;
            if (ix >= 0 && iy + 1 < n) img[(iy + 1) * n + ix] += (1.0 - fx) * fy * w;
            if (ix + 1 < n && iy + 1 < n) img[(iy + 1) * n + ix + 1] += fx * fy * w;
        }
    }
}

} // namespace

void forward_project(std::span<const double> image, const ProjectionGeometry& g,
                     std::span<double> sino_out) {
    const size_t npix = static_cast<size_t>(g.image_size) * g.image_size;
    if (image.size() != npix) throw std::invalid_argument("forward_project: image size mismatch");
    if (sino_out.size() != g.sino_size()) throw std::invalid_argument("forward_project: sinogram size mismatch");
#pragma omp parallel for schedule(static)
    for (int a = 0; a < g.n_angles; ++a)
        fp_angle(image.data(), g, a, sino_out.data() + static_cast<size_t>(a) * g.n_bins);
}

std::vector<int> subset_angles(const ProjectionGeometry& g, int subsets, int s) {
    if (subsets < 1 || subsets > g.n_angles) throw std::invalid_argument("projection: bad subset count");
    std::vector<int> out;
    for (int a = s; a < g.n_angles; a += subsets) out.push_back(a);
    return out;
}

void forward_project_subset(std::span<const double> image, const ProjectionGeometry& g,
                            std::span<const int> angles, std::span<double> sino_rows_out) {
    const int na = static_cast<int>(angles.size());
#pragma omp parallel for schedule(static)
    for (int i = 0; i < na; ++i)
        fp_angle(image.data(), g, angles[i], sino_rows_out.data() + static_cast<size_t>(i) * g.n_bins);
}

void back_project_subset(std::span<const double> sino_rows, const ProjectionGeometry& g,
                         std::span<const int> angles, std::span<double> image_out) {
    const size_t npix = static_cast<size_t>(g.image_size) * g.image_size;
    const int na = static_cast<int>(angles.size());
    // Scatter each angle into its own buffer, then reduce per pixel in
    // ascending angle order so the sum is independent of thread count.
    std::vector<double> buf(static_cast<size_t>(na) * npix, 0.0);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < na; ++i)
        bp_angle(sino_rows.data() + static_cast<size_t>(i) * g.n_bins, g, angles[i],
                 buf.data() + static_cast<size_t>(i) * npix);
    const int np = static_cast<int>(npix);
#pragma omp parallel for schedule(static)
    for (int p = 0; p < np; ++p) {
        double acc = 0.0;
        for (int i = 0; i < na; ++i) acc += buf[static_cast<size_t>(i) * npix + p];
        image_out[p] = acc;
    }
}

void back_project(std::span<const double> sino, const ProjectionGeometry& g,
                  std::span<double> image_out) {
    if (sino.size() != g.sino_size()) throw std::invalid_argument("back_project: sinogram size mismatch");
    if (image_out.size() != static_cast<size_t>(g.image_size) * g.image_size)
        throw std::invalid_argument("back_project: image size mismatch");
    std::vector<int> all(g.n_angles);
    for (int a = 0; a < g.n_angles; ++a) all[a] = a;
    back_project_subset(sino, g, all, image_out);
}

void add_poisson(std::span<double> sino_frame, double noise_level, double base_counts, Rng& rng) {
    if (noise_level <= 0.0) throw std::invalid_argument("add_poisson: noise_level must be > 0");
    if (base_counts <= 0.0) throw std::invalid_argument("add_poisson: base_counts must be > 0");
    double total = 0.0;
    for (double v : sino_frame) {
        if (v < 0.0) throw std::invalid_argument("add_poisson: negative sinogram value");
        total += v;
    }
    if (total <= 0.0) return;  // zero frame carries no counts
    const double scale = (base_counts / noise_level) / total;
    for (double& v : sino_frame) {
        const double mean = v * scale;
        v = (mean > 0.0) ? rng.poisson(mean) / scale : 0.0;
    }
}

void osem_reconstruct(std::span<const double> sino_frame, const ProjectionGeometry& g,
                      const OsemOptions& opt, std::span<double> image_out) {
    if (opt.iterations < 1) throw std::invalid_argument("osem: iterations must be >= 1");
    const size_t npix = static_cast<size_t>(g.image_size) * g.image_size;
    if (image_out.size() != npix) throw std::invalid_argument("osem: image size mismatch");
    if (sino_frame.size() != g.sino_size()) throw std::invalid_argument("osem: sinogram size mismatch");

    const int ns = opt.subsets;
    std::vector<std::vector<int>> angles(ns);
    std::vector<std::vector<double>> sens(ns);
    std::vector<std::vector<double>> ysub(ns);
    for (int s = 0; s < ns; ++s) {
        angles[s] = subset_angles(g, ns, s);
        const size_t rows = angles[s].size() * static_cast<size_t>(g.n_bins);
        ysub[s].resize(rows);
        for (size_t i = 0; i < angles[s].size(); ++i)
            for (int b = 0; b < g.n_bins; ++b)
                ysub[s][i * g.n_bins + b] = sino_frame[static_cast<size_t>(angles[s][i]) * g.n_bins + b];
        std::vector<double> ones(rows, 1.0);
        sens[s].resize(npix);
        back_project_subset(ones, g, angles[s], sens[s]);
    }

    std::fill(image_out.begin(), image_out.end(), 1.0);
    std::vector<double> fp, ratio(0), bp(npix);
    const int np = static_cast<int>(npix);
    for (int it = 0; it < opt.iterations; ++it) {
        for (int s = 0; s < ns; ++s) {
            const size_t rows = angles[s].size() * static_cast<size_t>(g.n_bins);
            fp.assign(rows, 0.0);
            forward_project_subset(image_out, g, angles[s], fp);
            ratio.resize(rows);
            for (size_t j = 0; j < rows; ++j)
                ratio[j] = (fp[j] > 0.0) ? ysub[s][j] / fp[j] : 0.0;
            back_project_subset(ratio, g, angles[s], bp);
#pragma omp parallel for schedule(static)
            for (int p = 0; p < np; ++p)
                image_out[p] = (sens[s][p] > 0.0) ? image_out[p] * bp[p] / sens[s][p] : 0.0;
        }
    }
}

double poisson_log_likelihood(std::span<const double> y, std::span<const double> expected) {
    if (y.size() != expected.size()) throw std::invalid_argument("poisson_log_likelihood: size mismatch");
    double ll = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
        const double e = expected[i];
        if (e > 0.0) ll += y[i] * std::log(e) - e;
        else if (y[i] > 0.0) return -std::numeric_limits<double>::infinity();
    }
    return ll;
}

} // namespace petkin
