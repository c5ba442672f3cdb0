#include "petkin/phantom.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "petkin/errors.hpp"
#include "petkin/kinetics.hpp"
#include "petkin/rng.hpp"

namespace petkin {

namespace {

// Ellipse in units relative to the image size; rot in radians.
struct Ellipse {
    double cx, cy, rx, ry, rot;

    bool contains(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        const double c = std::cos(rot), s = std::sin(rot);
        const double u = (dx * c + dy * s) / rx;
        const double v = (-dx * s + dy * c) / ry;
        return u * u + v * v <= 1.0;
    }
};

struct Template {
    Ellipse body;
    std::vector<Ellipse> rois;  // painted in order; later entries overwrite
};

Template phantom_template(const std::string& kind) {
    if (kind == "brain-like") {
        return Template{
            {0.50, 0.50, 0.40, 0.46, 0.0},
            {
                {0.50, 0.50, 0.34, 0.40, 0.0},   // brain tissue envelope
                {0.38, 0.40, 0.11, 0.16, -0.25}, // left cortical region
                {0.62, 0.40, 0.11, 0.16, 0.25},  // right cortical region
                {0.50, 0.57, 0.10, 0.08, 0.0},   // central deep structure
                {0.50, 0.76, 0.13, 0.07, 0.0},   // lower structure
                {0.50, 0.28, 0.08, 0.06, 0.0},
                {0.35, 0.66, 0.06, 0.06, 0.0},
                {0.65, 0.66, 0.06, 0.06, 0.0},
            }};
    }
    if (kind == "thorax-like") {
        return Template{
            {0.50, 0.50, 0.46, 0.36, 0.0},
            {
                {0.50, 0.50, 0.42, 0.32, 0.0},  // soft tissue envelope
                {0.33, 0.45, 0.14, 0.19, 0.15}, // left lung field
                {0.67, 0.45, 0.14, 0.19, -0.15},// right lung field
                {0.53, 0.60, 0.10, 0.09, 0.3},  // cardiac region
                {0.50, 0.80, 0.05, 0.05, 0.0},  // spine
            }};
    }
    throw ConfigError("make_phantom: unknown kind '" + kind + "'");
}

// Smooth periodic displacement field; amplitude in pixels.
struct Warp {
    double ax, ay, fx1, fy1, fx2, fy2, px1, py1, px2, py2;

    static Warp draw(Rng& rng, double amplitude) {
        Warp w;
        w.ax = amplitude * rng.uniform(0.5, 1.0);
        w.ay = amplitude * rng.uniform(0.5, 1.0);
        w.fx1 = rng.uniform(1.0, 2.0);
        w.fy1 = rng.uniform(1.0, 2.0);
        w.fx2 = rng.uniform(1.0, 2.0);
        w.fy2 = rng.uniform(1.0, 2.0);
        w.px1 = rng.uniform(0.0, 2.0 * std::numbers::pi);
        w.py1 = rng.uniform(0.0, 2.0 * std::numbers::pi);
        w.px2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
        w.py2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
        return w;
    }

    void displace(double nx, double ny, double& ux, double& uy) const {
        const double tau = 2.0 * std::numbers::pi;
        ux = ax * std::sin(tau * fx1 * ny + px1) * std::cos(tau * fx2 * nx + px2);
        uy = ay * std::sin(tau * fy1 * nx + py1) * std::cos(tau * fy2 * ny + py2);
    }
};

LabelMap attempt_phantom(const std::string& kind, int size, int n_rois, uint64_t seed,
                         double warp_amplitude) {
    Template tpl = phantom_template(kind);
    if (n_rois < 1) throw ConfigError("make_phantom: n_rois must be >= 1");
    if (n_rois > static_cast<int>(tpl.rois.size()))
        throw ConfigError("make_phantom: " + kind + " supports at most " +
                          std::to_string(tpl.rois.size()) + " ROIs, got " + std::to_string(n_rois));

    Rng rng(seed);
    // Jitter each ellipse a little so samples differ; scale to pixels.
    auto to_pixels = [&](const Ellipse& e, bool jitter) {
        Ellipse p = e;
        if (jitter) {
            p.cx += rng.uniform(-0.02, 0.02);
            p.cy += rng.uniform(-0.02, 0.02);
            p.rx *= rng.uniform(0.93, 1.07);
            p.ry *= rng.uniform(0.93, 1.07);
            p.rot += rng.uniform(-0.1, 0.1);
        }
        p.cx *= size;
        p.cy *= size;
        p.rx = std::max(p.rx * size, 0.9);
        p.ry = std::max(p.ry * size, 0.9);
        return p;
    };
    Ellipse body = to_pixels(tpl.body, false);
    std::vector<Ellipse> rois;
    for (int r = 0; r < n_rois; ++r) rois.push_back(to_pixels(tpl.rois[r], true));
    const Warp warp = Warp::draw(rng, warp_amplitude);

    LabelMap map(size, size);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double ux, uy;
            warp.displace(static_cast<double>(x) / size, static_cast<double>(y) / size, ux, uy);
            const double sx = x + ux, sy = y + uy;
            if (!body.contains(sx, sy)) continue;
            int label = 0;
            for (int r = 0; r < n_rois; ++r)
                if (rois[r].contains(sx, sy)) label = r + 1;
            map.at(x, y) = label;
        }
    }
    return map;
}

} // namespace

int default_roi_count(const std::string& kind) {
    if (kind == "brain-like") return 5;
    if (kind == "thorax-like") return 3;
    throw ConfigError("unknown phantom kind '" + kind + "'");
}

LabelMap make_phantom(const std::string& kind, int size, int n_rois, uint64_t seed,
                      double warp_amplitude) {
    if (size < 16) throw ConfigError("make_phantom: size must be >= 16");
    for (int attempt = 0; attempt < 32; ++attempt) {
        LabelMap map = attempt_phantom(kind, size, n_rois, splitmix64(seed + attempt), warp_amplitude);
        const auto counts = map.label_counts();
        bool ok = static_cast<int>(counts.size()) == n_rois + 1;
        for (int r = 1; ok && r <= n_rois; ++r) ok = counts[r] > 0;
        if (ok) return map;
    }
    throw DataError("make_phantom: could not realize " + std::to_string(n_rois) +
                    " non-empty ROIs at size " + std::to_string(size));
}

std::vector<KineticParams> randomize_params(const std::vector<KineticParams>& means, double cv,
                                            uint64_t seed) {
    if (cv < 0.0) throw ConfigError("randomize_params: cv must be >= 0");
    Rng rng(seed);
    auto draw_nonneg = [&](double mean) {
        if (mean <= 0.0 || cv == 0.0) return mean;
        double v = rng.gaussian(mean, cv * mean);
        while (v < 0.0) v = rng.gaussian(mean, cv * mean);
        return v;
    };
    std::vector<KineticParams> out;
    out.reserve(means.size());
    for (const auto& m : means) {
        KineticParams p;
        p.K1 = draw_nonneg(m.K1);
        p.k2 = draw_nonneg(m.k2);
        p.k3 = draw_nonneg(m.k3);
        p.k4 = draw_nonneg(m.k4);
        p.vb = std::min(draw_nonneg(m.vb), 1.0);
        out.push_back(p);
    }
    return out;
}

DynamicImage synthesize_dynamic(const LabelMap& map, const std::vector<KineticParams>& params,
                                const InputFunction& cp, const Tracer& tracer,
                                const FrameSchedule& schedule, double dt_min) {
    const int n_rois = map.max_label();
    if (static_cast<int>(params.size()) < n_rois)
        throw DataError("synthesize_dynamic: " + std::to_string(n_rois) +
                        " labels but only " + std::to_string(params.size()) + " parameter sets");

    const auto grid = uniform_grid(schedule.end_time(), dt_min);
    TimeActivityCurve cb{grid, cp.sample_blood(grid)};

    // One scalar pipeline run per ROI; voxels just copy their ROI's vector.
    std::vector<std::vector<double>> roi_frames(n_rois);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < n_rois; ++r) {
        const TimeActivityCurve ct = ct_analytic(params[r], cp, grid);
        roi_frames[r] = frame_activity(ct, cb, params[r], tracer, schedule);
    }

    DynamicImage img(map.width, map.height, schedule);
    const size_t npix = img.frame_size();
    for (int k = 0; k < img.n_frames(); ++k) {
        auto fr = img.frame(k);
        for (size_t i = 0; i < npix; ++i) {
            const int lab = map.v[i];
            if (lab > 0) fr[i] = roi_frames[lab - 1][k];
        }
    }
    return img;
}

ParamImages fill_param_images(const LabelMap& map, const std::vector<KineticParams>& params) {
    const int n_rois = map.max_label();
    if (static_cast<int>(params.size()) < n_rois)
        throw DataError("fill_param_images: missing parameters for some labels");
    ParamImages out(map.width, map.height);
    for (size_t i = 0; i < map.v.size(); ++i)
        if (map.v[i] > 0) out.set(i, params[map.v[i] - 1]);
    return out;
}

} // namespace petkin
