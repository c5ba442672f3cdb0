#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "petkin/errors.hpp"
#include "petkin/image.hpp"
#include "petkin/metrics.hpp"
#include "petkin/rng.hpp"

using namespace petkin;

namespace {

Image const_image(int w, int h, double v) {
    Image img(w, h);
    for (auto& x : img.v) x = v;
    return img;
}

Image random_image(int w, int h, uint64_t seed, double lo = 0.0, double hi = 1.0) {
    Image img(w, h);
    Rng rng(seed);
    for (auto& x : img.v) x = rng.uniform(lo, hi);
    return img;
}

// Independent SSIM transliteration: same boundary policy (window truncated
// at the edges and renormalized), accumulated with scalar loops.
double reference_ssim(const Image& a, const Image& b, double peak) {
    const int R = 5;
    double w[11][11];
    for (int dy = -R; dy <= R; ++dy)
        for (int dx = -R; dx <= R; ++dx)
            w[dy + R][dx + R] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    double acc = 0.0;
    for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) {
            double ws = 0, sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            for (int dy = -R; dy <= R; ++dy) {
                for (int dx = -R; dx <= R; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= a.height || xx < 0 || xx >= a.width) continue;
                    const double wk = w[dy + R][dx + R];
                    const double va = a.v[static_cast<size_t>(yy) * a.width + xx];
                    const double vb = b.v[static_cast<size_t>(yy) * b.width + xx];
                    ws += wk;
                    sa += wk * va;
                    sb += wk * vb;
                    saa += wk * va * va;
                    sbb += wk * vb * vb;
                    sab += wk * va * vb;
                }
            }
            const double ma = sa / ws, mb = sb / ws;
            const double va = saa / ws - ma * ma, vb = sbb / ws - mb * mb;
            const double cov = sab / ws - ma * mb;
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                   ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    return acc / (static_cast<double>(a.width) * a.height);
}

} // namespace

TEST_CASE("mean squared error and peak signal-to-noise ratio") {
    const Image a = const_image(8, 8, 0.0);
    const Image b = const_image(8, 8, 0.5);
    CHECK(mse(a.v, b.v) == 0.25);
    CHECK(std::fabs(psnr(a.v, b.v, 1.0) - 6.0206) <= 1e-3);

    CHECK(mse(a.v, a.v) == 0.0);
    CHECK(std::isinf(psnr(a.v, a.v, 1.0)));
    CHECK(psnr(a.v, a.v, 1.0) > 0.0);

    // strictly decreasing in mse at fixed peak
    const Image base = random_image(8, 8, 3);
    double prev = std::numeric_limits<double>::infinity();
    for (double d : {0.01, 0.02, 0.05, 0.1, 0.3}) {
        Image off = base;
        for (auto& v : off.v) v += d;
        const double p = psnr(base.v, off.v, 1.0);
        CHECK(p < prev);
        prev = p;
    }

    std::vector<double> short_vec(63, 0.0);
    CHECK_THROWS_AS(mse(a.v, short_vec), DataError);
    CHECK_THROWS_AS(psnr(a.v, a.v, 0.0), ConfigError);
}

TEST_CASE("structural similarity") {
    const Image a = random_image(16, 16, 7);
    CHECK(ssim(a, a, 1.0) == 1.0);

    // closed form for constant pairs: variances vanish, only luminance remains
    const Image c0 = const_image(12, 9, 0.0);
    const Image c5 = const_image(12, 9, 0.5);
    const double c1 = 1e-4;
    CHECK(ssim(c0, c5, 1.0) == doctest::Approx(c1 / (0.25 + c1)).epsilon(1e-12));
    CHECK(ssim(c5, c5, 1.0) == 1.0);

    // symmetry and the hard [-1, 1] bounds on independent pairs
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        const Image x = random_image(16, 16, seed * 2);
        const Image y = random_image(16, 16, seed * 2 + 1);
        const double sxy = ssim(x, y, 1.0);
        CHECK(std::fabs(sxy - ssim(y, x, 1.0)) <= 1e-12);
        CHECK(sxy <= 1.0);
        CHECK(sxy >= -1.0);
        CHECK(sxy < 1.0 - 1e-9);  // equals 1 only for identical images
    }

    // positive on structurally related pairs (prediction-vs-target regime);
    // independent noise can push window covariances negative, so (0,1] is
    // only claimed where the images share structure
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        const Image x = random_image(16, 16, seed * 3);
        Image y = x;
        Rng rng(seed * 3 + 1);
        for (auto& v : y.v) v = std::max(0.0, v + 0.05 * rng.gaussian());
        const double sxy = ssim(x, y, 1.0);
        CHECK(sxy > 0.0);
        CHECK(sxy <= 1.0);
    }

    // against an independent transliteration
    const Image p = random_image(16, 16, 91);
    Image q = p;
    {
        Rng rng(92);
        for (auto& v : q.v) v = std::max(0.0, v + 0.1 * rng.gaussian());
    }
    CHECK(ssim(p, q, 1.0) == doctest::Approx(reference_ssim(p, q, 1.0)).epsilon(1e-12));
    CHECK(ssim(p, q, 2.0) == doctest::Approx(reference_ssim(p, q, 2.0)).epsilon(1e-12));

    Image wrong(15, 16);
    CHECK_THROWS_AS(ssim(a, wrong, 1.0), DataError);
}

TEST_CASE("whole-image report picks the peak from the target") {
    const Image target = random_image(10, 10, 55, 0.0, 3.0);
    Image pred = target;
    for (auto& v : pred.v) v *= 0.9;
    const MetricReport r = image_metrics(target, pred);
    CHECK(r.peak == target.max_value());
    CHECK(r.mse == mse(target.v, pred.v));
    CHECK(r.psnr == psnr(target.v, pred.v, r.peak));
    CHECK(r.ssim == ssim(target, pred, r.peak));
    CHECK(r.mse >= 0.0);
    CHECK(r.ssim <= 1.0);

    // all-zero target: fall back to unit peak instead of dividing by zero
    const Image z = const_image(6, 6, 0.0);
    const MetricReport rz = image_metrics(z, z);
    CHECK(rz.peak == 1.0);
    CHECK(std::isinf(rz.psnr));
    CHECK(rz.ssim == 1.0);
}

TEST_CASE("region bias and variance follow the printed formulas") {
    Image truth(2, 1), pred(2, 1);
    std::vector<int> mask{1, 1};

    truth.v = {1.0, 2.0};
    pred.v = {2.0, 2.0};
    RoiStats s = roi_bias_variance(truth.v, pred.v, mask);
    CHECK(s.bias == 0.5);
    CHECK(s.n == 2);
    CHECK(s.n_excluded == 0);

    pred.v = {2.0, 4.0};  // prediction mean 3
    s = roi_bias_variance(truth.v, pred.v, mask);
    CHECK(s.variance == 2.125);
    CHECK(s.variance_centered == 0.625);

    // identical constants give exact zeros
    truth.v = {1.5, 1.5};
    pred.v = {1.5, 1.5};
    s = roi_bias_variance(truth.v, pred.v, mask);
    CHECK(s.bias == 0.0);
    CHECK(s.variance == 0.0);

    // scale invariance of the bias
    const Image t = random_image(6, 6, 11, 0.1, 2.0);
    const Image p = random_image(6, 6, 12, 0.1, 2.0);
    std::vector<int> all(t.v.size(), 1);
    const double b0 = roi_bias_variance(t.v, p.v, all).bias;
    Image ts = t, ps = p;
    for (auto& v : ts.v) v *= 3.7;
    for (auto& v : ps.v) v *= 3.7;
    CHECK(roi_bias_variance(ts.v, ps.v, all).bias == doctest::Approx(b0).epsilon(1e-12));
}

TEST_CASE("region stats exclude non-positive truth voxels") {
    std::vector<double> truth{-1.0, 0.0, 1.0, 2.0};
    std::vector<double> pred{5.0, 5.0, 2.0, 2.0};
    std::vector<int> mask{1, 1, 1, 1};
    const RoiStats s = roi_bias_variance(truth, pred, mask);
    CHECK(s.n == 2);
    CHECK(s.n_excluded == 2);
    CHECK(s.bias == 0.5);  // same admissible pair as above

    // mask selects; voxels outside it are not "excluded", just absent
    std::vector<int> partial{0, 0, 1, 1};
    const RoiStats sp = roi_bias_variance(truth, pred, partial);
    CHECK(sp.n == 2);
    CHECK(sp.n_excluded == 0);

    std::vector<int> bad{1, 1, 0, 0};
    CHECK_THROWS_AS(roi_bias_variance(truth, pred, bad), DataError);
    std::vector<int> tiny{1};
    CHECK_THROWS_AS(roi_bias_variance(truth, pred, tiny), DataError);
}

TEST_CASE("line profiles index a row or column") {
    Image img(4, 3);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 4; ++x) img.v[static_cast<size_t>(y) * 4 + x] = 10.0 * y + x;

    const auto row1 = line_profile(img, ProfileAxis::Row, 1);
    REQUIRE(row1.size() == 4);
    for (int x = 0; x < 4; ++x) CHECK(row1[x] == 10.0 + x);

    const auto col2 = line_profile(img, ProfileAxis::Column, 2);
    REQUIRE(col2.size() == 3);
    for (int y = 0; y < 3; ++y) CHECK(col2[y] == 10.0 * y + 2.0);

    const Image c = const_image(5, 5, 3.25);
    for (double v : line_profile(c, ProfileAxis::Row, 4)) CHECK(v == 3.25);

    Image hot(5, 5);
    hot.v[2 * 5 + 3] = 7.0;
    const auto p = line_profile(hot, ProfileAxis::Row, 2);
    int nonzero = 0;
    for (double v : p) nonzero += v != 0.0;
    CHECK(nonzero == 1);
    CHECK(p[3] == 7.0);

    CHECK_THROWS_AS(line_profile(img, ProfileAxis::Row, 3), ConfigError);
    CHECK_THROWS_AS(line_profile(img, ProfileAxis::Column, -1), ConfigError);
}
