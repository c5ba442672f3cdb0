#include "petkin/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>

#include "petkin/errors.hpp"

namespace petkin {

double mse(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DataError("mse: size mismatch");
    if (a.empty()) throw DataError("mse: empty input");
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

double psnr(std::span<const double> a, std::span<const double> b, double peak) {
    if (peak <= 0.0) throw ConfigError("psnr: peak must be positive");
    const double e = mse(a, b);
    if (e == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / e);
}

double ssim(const Image& a, const Image& b, double peak) {
    if (a.width != b.width || a.height != b.height) throw DataError("ssim: shape mismatch");
    if (a.v.empty()) throw DataError("ssim: empty input");
    if (peak <= 0.0) throw ConfigError("ssim: peak must be positive");

    constexpr int R = 5;  // 11x11 window
    static const auto window = [] {
        std::array<double, 11 * 11> w{};
        for (int dy = -R; dy <= R; ++dy)
            for (int dx = -R; dx <= R; ++dx)
                w[static_cast<size_t>(dy + R) * 11 + (dx + R)] =
                    std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
        return w;
    }();

    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    const int W = a.width, H = a.height;
    double acc = 0.0;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            double ws = 0, sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            for (int dy = -R; dy <= R; ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= H) continue;
                for (int dx = -R; dx <= R; ++dx) {
                    const int xx = x + dx;
                    if (xx < 0 || xx >= W) continue;
                    const double wk = window[static_cast<size_t>(dy + R) * 11 + (dx + R)];
                    const double va = a.v[static_cast<size_t>(yy) * W + xx];
                    const double vb = b.v[static_cast<size_t>(yy) * W + xx];
                    ws += wk;
                    sa += wk * va;
                    sb += wk * vb;
                    saa += wk * va * va;
                    sbb += wk * vb * vb;
                    sab += wk * va * vb;
                }
            }
            const double ma = sa / ws, mb = sb / ws;
            const double var_a = saa / ws - ma * ma;
            const double var_b = sbb / ws - mb * mb;
            const double cov = sab / ws - ma * mb;
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                   ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        }
    }
    return acc / (static_cast<double>(W) * H);
}

MetricReport image_metrics(const Image& target, const Image& pred) {
    if (target.width != pred.width || target.height != pred.height)
        throw DataError("image_metrics: shape mismatch");
    MetricReport r;
    const double m = target.max_value();
    r.peak = m > 0.0 ? m : 1.0;
    r.mse = mse(target.v, pred.v);
    r.psnr = psnr(target.v, pred.v, r.peak);
    r.ssim = ssim(target, pred, r.peak);
    return r;
}

RoiStats roi_bias_variance(std::span<const double> truth, std::span<const double> pred,
                           std::span<const int> mask) {
    if (truth.size() != pred.size() || truth.size() != mask.size())
        throw DataError("roi stats: size mismatch");
    RoiStats s;
    double pred_sum = 0.0;
    for (size_t i = 0; i < truth.size(); ++i) {
        if (!mask[i]) continue;
        if (!(truth[i] > 0.0)) {
            ++s.n_excluded;
            continue;
        }
        ++s.n;
        pred_sum += pred[i];
    }
    if (s.n == 0) throw DataError("roi stats: no admissible voxels (mask empty or truth <= 0)");
    const double pred_mean = pred_sum / static_cast<double>(s.n);

    double bias = 0.0, var = 0.0, varc = 0.0;
    for (size_t i = 0; i < truth.size(); ++i) {
        if (!mask[i] || !(truth[i] > 0.0)) continue;
        bias += std::fabs(truth[i] - pred[i]) / truth[i];
        const double d = (truth[i] - pred_mean) / truth[i];
        var += d * d;
        const double dc = (pred[i] - pred_mean) / truth[i];
        varc += dc * dc;
    }
    s.bias = bias / static_cast<double>(s.n);
    s.variance = var / static_cast<double>(s.n);
    s.variance_centered = varc / static_cast<double>(s.n);
    return s;
}

std::vector<double> line_profile(const Image& img, ProfileAxis axis, int index) {
    if (axis == ProfileAxis::Row) {
        if (index < 0 || index >= img.height) throw ConfigError("line_profile: row out of bounds");
        std::vector<double> out(static_cast<size_t>(img.width));
        for (int x = 0; x < img.width; ++x)
            out[static_cast<size_t>(x)] = img.v[static_cast<size_t>(index) * img.width + x];
        return out;
    }
    if (index < 0 || index >= img.width) throw ConfigError("line_profile: column out of bounds");
    std::vector<double> out(static_cast<size_t>(img.height));
    for (int y = 0; y < img.height; ++y)
        out[static_cast<size_t>(y)] = img.v[static_cast<size_t>(y) * img.width + index];
    return out;
}

} // namespace petkin
