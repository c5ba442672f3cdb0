#include "petkin/estimation.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "petkin/errors.hpp"

namespace petkin {

namespace {

constexpr int kMaxFree = 5;

double get_param(const KineticParams& p, int i) {
    switch (i) {
    case 0: return p.K1;
    case 1: return p.k2;
    case 2: return p.k3;
    case 3: return p.k4;
    default: return p.vb;
    }
}

void set_param(KineticParams& p, int i, double v) {
    switch (i) {
    case 0: p.K1 = v; break;
    case 1: p.k2 = v; break;
    case 2: p.k3 = v; break;
    case 3: p.k4 = v; break;
    default: p.vb = v; break;
    }
}

// Cholesky solve of (A + mu*D) x = b for small symmetric systems.
bool solve_spd(int n, const double* a, const double* d, double mu, const double* b, double* x) {
    double l[kMaxFree * kMaxFree] = {0};
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double sum = a[i * n + j] + (i == j ? mu * d[i] : 0.0);
            for (int k = 0; k < j; ++k) sum -= l[i * n + k] * l[j * n + k];
            if (i == j) {
                if (sum <= 0.0) return false;
                l[i * n + i] = std::sqrt(sum);
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    double y[kMaxFree];
    for (int i = 0; i < n; ++i) {
        double sum = b[i];
        for (int k = 0; k < i; ++k) sum -= l[i * n + k] * y[k];
        y[i] = sum / l[i * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
        double sum = y[i];
        for (int k = i + 1; k < n; ++k) sum -= l[k * n + i] * x[k];
        x[i] = sum / l[i * n + i];
    }
    return true;
}

struct VoxelFitter {
    const FrameIntegrator& fi;
    std::span<const double> xk;
    FrameIntegrator::Workspace& ws;
    std::vector<double>& frames;

    double cost(const KineticParams& p) {
        fi.frames_for(p, frames, ws);
        double c = 0.0;
        for (size_t k = 0; k < frames.size(); ++k) {
            const double r = frames[k] - xk[k];
            c += r * r;
        }
        return c;
    }

    void residual(const KineticParams& p, std::vector<double>& r) {
        fi.frames_for(p, frames, ws);
        for (size_t k = 0; k < frames.size(); ++k) r[k] = frames[k] - xk[k];
    }
};

} // namespace

FitConfig FitConfig::from_settings(const FitSettings& s, const std::vector<KineticParams>& roi_means) {
    if (roi_means.empty()) throw ConfigError("fit bounds need at least one ROI mean");
    KineticParams hi;
    for (const auto& m : roi_means) {
        hi.K1 = std::max(hi.K1, m.K1);
        hi.k2 = std::max(hi.k2, m.k2);
        hi.k3 = std::max(hi.k3, m.k3);
        hi.k4 = std::max(hi.k4, m.k4);
    }
    FitConfig c;
    c.hi = {s.bounds_scale * hi.K1, s.bounds_scale * hi.k2, s.bounds_scale * hi.k3,
            s.bounds_scale * hi.k4, s.vb};
    c.lo = {0.0, 0.0, 0.0, 0.0, s.vb};
    c.init = {0.5 * c.hi.K1, 0.5 * c.hi.k2, 0.5 * c.hi.k3, 0.5 * c.hi.k4, s.vb};
    c.max_iterations = s.max_iterations;
    c.tolerance = s.tolerance;
    return c;
}

void FitConfig::validate() const {
    for (int i = 0; i < 5; ++i) {
        const double lo_i = get_param(lo, i), hi_i = get_param(hi, i), in_i = get_param(init, i);
        if (!(lo_i <= in_i && in_i <= hi_i))
            throw ConfigError("fit config: init must lie within [lo, hi]");
        if (lo_i < 0.0) throw ConfigError("fit config: bounds must be non-negative");
    }
    if (hi.vb > 1.0) throw ConfigError("fit config: vb bound exceeds 1");
    if (!(tolerance > 0.0)) throw ConfigError("fit config: tolerance must be > 0");
    if (max_iterations < 1) throw ConfigError("fit config: max_iterations must be >= 1");
    if (!(fd_step_rel > 0.0)) throw ConfigError("fit config: fd_step_rel must be > 0");
}

FitResult fit_voxel(std::span<const double> xk, const FrameIntegrator& fi, const FitConfig& cfg) {
    cfg.validate();
    if (static_cast<int>(xk.size()) != fi.n_frames())
        throw DataError("fit_voxel: frame count mismatch");
    for (double v : xk)
        if (!std::isfinite(v)) throw DataError("fit_voxel: non-finite frame value");

    // free parameters: those with a nonempty range
    int free_idx[kMaxFree];
    int m = 0;
    for (int i = 0; i < 5; ++i)
        if (get_param(cfg.hi, i) > get_param(cfg.lo, i)) free_idx[m++] = i;

    auto ws = fi.make_workspace();
    std::vector<double> frames(fi.n_frames());
    VoxelFitter f{fi, xk, ws, frames};

    KineticParams p = cfg.init;
    const int nk = fi.n_frames();
    std::vector<double> r(nk), rp(nk), rm(nk);
    std::vector<double> jac(static_cast<size_t>(nk) * std::max(m, 1));

    double data_scale = 0.0;
    for (double v : xk) data_scale += v * v;
    data_scale = std::max(data_scale, 1e-300);

    double c = f.cost(p);
    FitResult out;
    out.iterations = 0;
    if (m == 0) {  // everything pinned
        out.params = p;
        out.residual_norm = std::sqrt(c);
        out.converged = true;
        return out;
    }

    double mu = -1.0;  // initialized from the first JtJ diagonal
    bool converged = false;
    int it = 0;
    for (; it < cfg.max_iterations && !converged; ++it) {
        f.residual(p, r);

        // Central differences inside the box; one-sided at a bound. The
        // scale ties the step to the parameter range so h stays sane at 0.
        for (int j = 0; j < m; ++j) {
            const int pi = free_idx[j];
            const double lo = get_param(cfg.lo, pi), hi = get_param(cfg.hi, pi);
            const double v = get_param(p, pi);
            const double scale = std::max(std::fabs(v), 1e-2 * (hi - lo));
            double h = cfg.fd_step_rel * scale;
            const double up = std::min(v + h, hi), dn = std::max(v - h, lo);
            KineticParams pp = p, pm = p;
            set_param(pp, pi, up);
            set_param(pm, pi, dn);
            f.residual(pp, rp);
            f.residual(pm, rm);
            const double denom = up - dn;
            for (int k = 0; k < nk; ++k) jac[static_cast<size_t>(k) * m + j] = (rp[k] - rm[k]) / denom;
        }

        double jtj[kMaxFree * kMaxFree] = {0}, jtr[kMaxFree] = {0};
        for (int k = 0; k < nk; ++k)
            for (int a = 0; a < m; ++a) {
                const double ja = jac[static_cast<size_t>(k) * m + a];
                jtr[a] += ja * r[k];
                for (int b = 0; b <= a; ++b) jtj[a * m + b] += ja * jac[static_cast<size_t>(k) * m + b];
            }
        for (int a = 0; a < m; ++a)
            for (int b = a + 1; b < m; ++b) jtj[a * m + b] = jtj[b * m + a];

        double diag[kMaxFree], dmax = 0.0;
        for (int a = 0; a < m; ++a) dmax = std::max(dmax, jtj[a * m + a]);
        for (int a = 0; a < m; ++a) diag[a] = std::max(jtj[a * m + a], 1e-12 * std::max(dmax, 1.0));
        if (mu < 0.0) mu = 1e-3;  // scaled by diag inside the solve

        double gnorm = 0.0;
        for (int a = 0; a < m; ++a) gnorm = std::max(gnorm, std::fabs(jtr[a]));
        if (gnorm <= 1e-14 * std::max(1.0, c)) { converged = true; break; }

        bool accepted = false;
        for (int trial = 0; trial < 40 && !accepted; ++trial) {
            double neg_g[kMaxFree], delta[kMaxFree];
            for (int a = 0; a < m; ++a) neg_g[a] = -jtr[a];
            if (!solve_spd(m, jtj, diag, mu, neg_g, delta)) {
                mu *= 3.0;
                continue;
            }
            KineticParams cand = p;
            for (int a = 0; a < m; ++a) {
                const int pi = free_idx[a];
                const double v = std::clamp(get_param(p, pi) + delta[a], get_param(cfg.lo, pi),
                                            get_param(cfg.hi, pi));
                set_param(cand, pi, v);
            }
            const double cc = f.cost(cand);
            if (cc < c) {  // accepted steps never increase the cost
                const double rel = (c - cc) / std::max(c, 1e-300);
                p = cand;
                c = cc;
                mu = std::max(mu * 0.3, 1e-12);
                accepted = true;
                // done when progress stalls or the fit is perfect at
                // double precision relative to the data energy
                if (rel < cfg.tolerance || cc <= 1e-20 * data_scale) converged = true;
            } else {
                mu *= 3.0;
                if (mu > 1e12) break;
            }
        }
        if (!accepted) { converged = c <= 1e-18 * data_scale; break; }
    }

    out.params = p;
    out.residual_norm = std::sqrt(c);
    out.converged = converged;
    out.iterations = it;
    return out;
}

ImageFitResult fit_image(const DynamicImage& dyn, const FrameIntegrator& fi, const FitConfig& cfg,
                         std::span<const uint8_t> mask) {
    cfg.validate();
    if (!mask.empty() && mask.size() != dyn.frame_size())
        throw DataError("fit_image: mask size mismatch");
    if (dyn.n_frames() != fi.n_frames()) throw DataError("fit_image: frame count mismatch");

    const int npix = static_cast<int>(dyn.frame_size());
    ImageFitResult out;
    out.params = ParamImages(dyn.width, dyn.height);
    out.residual = Image(dyn.width, dyn.height);
    out.converged.assign(dyn.frame_size(), 0);

    int n_bad = 0;
#pragma omp parallel for schedule(dynamic, 16) reduction(+ : n_bad)
    for (int i = 0; i < npix; ++i) {
        if (!mask.empty() && !mask[i]) continue;
        std::vector<double> xk(dyn.n_frames());
        for (int k = 0; k < dyn.n_frames(); ++k) xk[k] = dyn.frame(k)[i];
        const FitResult r = fit_voxel(xk, fi, cfg);
        out.params.set(i, r.params);
        out.residual.v[i] = r.residual_norm;
        out.converged[i] = r.converged ? 1 : 0;
        if (!r.converged) ++n_bad;
    }
    out.n_unconverged = n_bad;
    return out;
}

} // namespace petkin
