#include "petkin/reference.hpp"

#include <cmath>
#include <stdexcept>

#include "petkin/projection.hpp"

namespace petkin::ref {

std::vector<double> convolve_trapezoid(std::span<const double> t, std::span<const double> g,
                                       const std::function<double(double)>& kernel) {
    if (t.size() != g.size() || t.size() < 2)
        throw std::invalid_argument("convolve_trapezoid: bad grid");
    const size_t n = t.size();
    std::vector<double> out(n, 0.0);
    for (size_t i = 1; i < n; ++i) {
        // Trapezoid over s in [0, t_i] of kernel(t_i - s) g(s).
        double acc = 0.0;
        for (size_t j = 1; j <= i; ++j) {
            const double f0 = kernel(t[i] - t[j - 1]) * g[j - 1];
            const double f1 = kernel(t[i] - t[j]) * g[j];
            acc += 0.5 * (t[j] - t[j - 1]) * (f0 + f1);
        }
        out[i] = acc;
    }
    return out;
}

namespace {
double simpson(double a, double fa, double fm, double b, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive(const std::function<double(double)>& f, double a, double fa, double m,
                double fm, double b, double fb, double whole, double tol, int depth) {
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = simpson(a, fa, flm, m, fm);
    const double right = simpson(m, fm, frm, b, fb);
    if (depth <= 0 || std::fabs(left + right - whole) <= 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adaptive(f, a, fa, lm, flm, m, fm, left, 0.5 * tol, depth - 1) +
           adaptive(f, m, fm, rm, frm, b, fb, right, 0.5 * tol, depth - 1);
}
} // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol, int max_depth) {
    if (!(b > a)) return 0.0;
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    const double whole = simpson(a, fa, fm, b, fb);
    return adaptive(f, a, fa, m, fm, b, fb, whole, tol, max_depth);
}

namespace {
// Bilinear lookup with zero outside [0, n-1]^2; x is the column index.
double sample(std::span<const double> img, int n, double x, double y) {
    const int ix = static_cast<int>(std::floor(x));
    const int iy = static_cast<int>(std::floor(y));
    if (ix < -1 || iy < -1 || ix >= n || iy >= n) return 0.0;
    const double fx = x - ix, fy = y - iy;
    double v = 0.0;
    if (ix >= 0 && iy >= 0) v += (1.0 - fx) * (1.0 - fy) * img[iy * n + ix];
    if (ix + 1 < n && iy >= 0) v += fx * (1.0 - fy) * img[iy * n + ix + 1];
    if (ix >= 0 && iy + 1 < n) v += (1.0 - fx) * fy * img[(iy + 1) * n + ix];
    if (ix + 1 < n && iy + 1 < n) v += fx * fy * img[(iy + 1) * n + ix + 1];
    return v;
}
} // namespace

void forward_project_serial(std::span<const double> image, const ProjectionGeometry& g,
                            std::span<double> sino_out) {
    const int n = g.image_size;
    const double c = 0.5 * (n - 1);
    const double cb = 0.5 * (g.n_bins - 1);
    const double L = 0.5 * g.n_bins;
    const int m = static_cast<int>(std::floor(2.0 * L / g.sample_step)) + 1;
    for (int a = 0; a < g.n_angles; ++a) {
        const double ct = g.cos_t[a], st = g.sin_t[a];
        for (int b = 0; b < g.n_bins; ++b) {
            const double s = b - cb;
            double acc = 0.0;
            for (int k = 0; k < m; ++k) {
                const double l = -L + k * g.sample_step;
                acc += sample(image, n, c + s * ct - l * st, c + s * st + l * ct);
            }
            sino_out[static_cast<size_t>(a) * g.n_bins + b] = acc * g.sample_step;
        }
    }
}

void back_project_serial(std::span<const double> sino, const ProjectionGeometry& g,
                         std::span<double> image_out) {
    const int n = g.image_size;
    const double c = 0.5 * (n - 1);
    const double cb = 0.5 * (g.n_bins - 1);
    const double L = 0.5 * g.n_bins;
    const int m = static_cast<int>(std::floor(2.0 * L / g.sample_step)) + 1;
    std::fill(image_out.begin(), image_out.end(), 0.0);
    for (int a = 0; a < g.n_angles; ++a) {
        const double ct = g.cos_t[a], st = g.sin_t[a];
        for (int b = 0; b < g.n_bins; ++b) {
            const double w = sino[static_cast<size_t>(a) * g.n_bins + b] * g.sample_step;
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
                if (ix >= 0 && iy >= 0) image_out[iy * n + ix] += (1.0 - fx) * (1.0 - fy) * w;
                if (ix + 1 < n && iy >= 0) image_out[iy * n + ix + 1] += fx * (1.0 - fy) * w;
                if (ix >= 0 && iy + 1 < n) image_out[(iy + 1) * n + ix] += (1.0 - fx) * fy * w;
                if (ix + 1 < n && iy + 1 < n) image_out[(iy + 1) * n + ix + 1] += fx * fy * w;
            }
        }
    }
}

} // namespace petkin::ref
