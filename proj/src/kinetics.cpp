#include "petkin/kinetics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace petkin {

KineticsDiagnostics& kinetics_diagnostics() {
    static KineticsDiagnostics d;
    return d;
}

double feng_input(const FengCoefficients& c, double t) {
    if (!(t >= 0.0)) return 0.0;
    // Grouped so the three terms cancel exactly at t = 0.
    const double e1 = std::exp(-c.l1 * t);
    const double v = c.a1 * t * e1 + c.a2 * (std::exp(-c.l2 * t) - e1) +
                     c.a3 * (std::exp(-c.l3 * t) - e1);
    if (v < 0.0) {
        kinetics_diagnostics().input_clamped.fetch_add(1, std::memory_order_relaxed);
        return 0.0;
    }
    return v;
}

BetaRoots beta_roots(const KineticParams& p) {
    validate_params(p);
    const double b = p.k2 + p.k3 + p.k4;
    const double c = p.k2 * p.k4;
    double disc = b * b - 4.0 * c;
    if (disc < 0.0) {
        // Cannot happen for non-negative rates; tolerate rounding only.
        if (disc < -1e-12 * b * b)
            throw std::domain_error("compartment eigenvalues are complex");
        disc = 0.0;
    }
    const double sq = std::sqrt(disc);
    BetaRoots r;
    r.beta2 = 0.5 * (b + sq);
    r.beta1 = r.beta2 > 0.0 ? c / r.beta2 : 0.0;  // product form avoids cancellation
    return r;
}

namespace {

// Trapezoidal-quadrature convolution of e^{-beta t} (and on request
// t e^{-beta t}) against g on the grid, via the exact recursion
//   y_n = e^{-beta h_n} (y_{n-1} + h_n/2 g_{n-1}) + h_n/2 g_n .
// Writes c_exp * conv_exp + c_texp * conv_texp into out.
void exp_conv_combo(std::span<const double> t, std::span<const double> g,
                    double beta1, double c1, double beta2, double c2,
                    double beta_t, double c_texp, std::span<double> out) {
    const size_t n = t.size();
    const bool uniform = [&] {
        if (n < 3) return true;
        const double h0 = t[1] - t[0];
        for (size_t i = 2; i < n; ++i)
            if (std::fabs((t[i] - t[i - 1]) - h0) > 1e-12 * std::max(1.0, h0)) return false;
        return true;
    }();

    double y1 = 0.0, y2 = 0.0;   // exp streams for beta1 / beta2
    double z = 0.0, u = 0.0;     // exp stream and t-weighted stream for beta_t
    out[0] = 0.0;
    double d1 = 0.0, d2 = 0.0, dt_ = 0.0;
    if (uniform && n >= 2) {
        const double h = t[1] - t[0];
        d1 = std::exp(-beta1 * h);
        d2 = std::exp(-beta2 * h);
        dt_ = std::exp(-beta_t * h);
    }
    for (size_t i = 1; i < n; ++i) {
        const double h = t[i] - t[i - 1];
        const double e1 = uniform ? d1 : std::exp(-beta1 * h);
        const double e2 = uniform ? d2 : std::exp(-beta2 * h);
        const double half = 0.5 * h;
        double v = 0.0;
        if (c1 != 0.0) {
            y1 = e1 * (y1 + half * g[i - 1]) + half * g[i];
            v += c1 * y1;
        }
        if (c2 != 0.0) {
            y2 = e2 * (y2 + half * g[i - 1]) + half * g[i];
            v += c2 * y2;
        }
        if (c_texp != 0.0) {
            const double et = uniform ? dt_ : std::exp(-beta_t * h);
            z = et * (z + half * g[i - 1]) + half * g[i];
            u = et * (u + half * t[i - 1] * g[i - 1]) + half * t[i] * g[i];
            v += c_texp * (t[i] * z - u);
        }
        out[i] = v;
    }
}

void check_grid(std::span<const double> grid) {
    if (grid.size() < 2) throw std::invalid_argument("grid needs >= 2 points");
    if (std::fabs(grid[0]) > 1e-12) throw std::invalid_argument("grid must start at t = 0");
    for (size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1]))
            throw std::invalid_argument("grid must be strictly increasing");
}

} // namespace

void ct_analytic_into(const KineticParams& p, std::span<const double> times,
                      std::span<const double> plasma, std::span<double> out) {
    validate_params(p);
    check_grid(times);
    if (plasma.size() != times.size() || out.size() != times.size())
        throw std::invalid_argument("plasma/out size must match grid");
    if (p.K1 == 0.0) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }
    const BetaRoots r = beta_roots(p);
    const double k34 = p.k3 + p.k4;
    const double spread = r.beta2 - r.beta1;
    if (spread > 1e-8 * (r.beta1 + r.beta2)) {
        const double scale = p.K1 / spread;
        exp_conv_combo(times, plasma, r.beta1, scale * (k34 - r.beta1),
                       r.beta2, scale * (r.beta2 - k34), 0.0, 0.0, out);
    } else {
        // Confluent limit: kernel K1 [(k3+k4-beta) t + 1] e^{-beta t}
        const double beta = 0.5 * (r.beta1 + r.beta2);
        exp_conv_combo(times, plasma, beta, p.K1, 0.0, 0.0, beta, p.K1 * (k34 - beta), out);
    }
}

TimeActivityCurve ct_analytic(const KineticParams& p, const InputFunction& cp,
                              const std::vector<double>& grid) {
    check_grid(grid);
    if (cp.support_end() < grid.back() - 1e-9)
        throw std::invalid_argument("grid extends past input function support");
    TimeActivityCurve out;
    out.times = grid;
    out.values.resize(grid.size());
    const std::vector<double> plasma = cp.sample_plasma(grid);
    ct_analytic_into(p, grid, plasma, out.values);
    return out;
}

CompartmentCurves compartment_ode_solve(const KineticParams& p, const InputFunction& cp,
                                        const std::vector<double>& grid) {
    validate_params(p);
    check_grid(grid);
    if (cp.support_end() < grid.back() - 1e-9)
        throw std::invalid_argument("grid extends past input function support");
    const double max_step = 1.0 / 60.0 + 1e-9;  // one second, in minutes
    for (size_t i = 1; i < grid.size(); ++i)
        if (grid[i] - grid[i - 1] > max_step)
            throw std::invalid_argument("ODE grid step exceeds 1 s; refine the grid");

    CompartmentCurves out;
    out.c1.times = out.c2.times = out.ct.times = grid;
    out.c1.values.assign(grid.size(), 0.0);
    out.c2.values.assign(grid.size(), 0.0);
    out.ct.values.assign(grid.size(), 0.0);

    const double a11 = -(p.k2 + p.k3), a12 = p.k4;
    const double a21 = p.k3, a22 = -p.k4;
    double c1 = 0.0, c2 = 0.0;
    for (size_t i = 1; i < grid.size(); ++i) {
        const double t0 = grid[i - 1];
        const double h = grid[i] - t0;
        const double g0 = cp.plasma(t0);
        const double gm = cp.plasma(t0 + 0.5 * h);
        const double g1 = cp.plasma(t0 + h);

        const auto f1 = [&](double x1, double x2, double g) { return p.K1 * g + a11 * x1 + a12 * x2; };
        const auto f2 = [&](double x1, double x2) { return a21 * x1 + a22 * x2; };

        const double k1a = f1(c1, c2, g0);
        const double k1b = f2(c1, c2);
        const double k2a = f1(c1 + 0.5 * h * k1a, c2 + 0.5 * h * k1b, gm);
        const double k2b = f2(c1 + 0.5 * h * k1a, c2 + 0.5 * h * k1b);
        const double k3a = f1(c1 + 0.5 * h * k2a, c2 + 0.5 * h * k2b, gm);
        const double k3b = f2(c1 + 0.5 * h * k2a, c2 + 0.5 * h * k2b);
        const double k4a = f1(c1 + h * k3a, c2 + h * k3b, g1);
        const double k4b = f2(c1 + h * k3a, c2 + h * k3b);

        c1 += h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
        c2 += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
        out.c1.values[i] = c1;
        out.c2.values[i] = c2;
        out.ct.values[i] = c1 + c2;
    }
    return out;
}

std::vector<double> frame_activity(const TimeActivityCurve& ct, const TimeActivityCurve& cb,
                                   const KineticParams& p, const Tracer& tracer,
                                   const FrameSchedule& schedule) {
    ct.validate();
    cb.validate();
    validate_params(p);
    schedule.validate();
    if (!(tracer.decay_constant >= 0.0) || !std::isfinite(tracer.decay_constant))
        throw std::invalid_argument("decay constant must be finite and >= 0");
    const double support = std::min(ct.times.back(), cb.times.back());
    if (schedule.end_time() > support + 1e-9)
        throw std::invalid_argument("schedule extends past curve support");

    const double lambda = tracer.decay_constant;
    const auto integrand = [&](double tau) {
        return ((1.0 - p.vb) * ct.interp(tau) + p.vb * cb.interp(tau)) * std::exp(-lambda * tau);
    };

    std::vector<double> xk(schedule.frames.size(), 0.0);
    std::vector<double> pts;
    for (size_t k = 0; k < schedule.frames.size(); ++k) {
        const auto [a, b] = schedule.frames[k];
        pts.clear();
        pts.push_back(a);
        const auto push_range = [&](const std::vector<double>& ts) {
            auto lo = std::upper_bound(ts.begin(), ts.end(), a);
            auto hi = std::lower_bound(ts.begin(), ts.end(), b);
            pts.insert(pts.end(), lo, hi);
        };
        push_range(ct.times);
        push_range(cb.times);
        pts.push_back(b);
        std::sort(pts.begin(), pts.end());
        double acc = 0.0;
        double prev_t = pts[0];
        double prev_f = integrand(prev_t);
        for (size_t i = 1; i < pts.size(); ++i) {
            const double t = pts[i];
            if (t - prev_t < 1e-12) continue;  // duplicate node
            const double f = integrand(t);
            acc += 0.5 * (t - prev_t) * (prev_f + f);
            prev_t = t;
            prev_f = f;
        }
        xk[k] = acc;
    }
    return xk;
}

FrameIntegrator::FrameIntegrator(const InputFunction& cp, const Tracer& tracer,
                                 const FrameSchedule& schedule, double dt_min)
    : schedule_(schedule), tracer_(tracer), dt_(dt_min) {
    schedule_.validate();
    if (!(dt_min > 0)) throw std::invalid_argument("dt must be > 0");
    if (!(tracer.decay_constant >= 0.0) || !std::isfinite(tracer.decay_constant))
        throw std::invalid_argument("decay constant must be finite and >= 0");
    grid_ = uniform_grid(schedule_.end_time(), dt_min);
    if (cp.support_end() < grid_.back() - 1e-9)
        throw std::invalid_argument("schedule extends past input function support");
    plasma_ = cp.sample_plasma(grid_);
    decay_.resize(grid_.size());
    for (size_t i = 0; i < grid_.size(); ++i)
        decay_[i] = std::exp(-tracer.decay_constant * grid_[i]);

    frame_lo_.resize(schedule_.frames.size());
    frame_hi_.resize(schedule_.frames.size());
    for (size_t k = 0; k < schedule_.frames.size(); ++k) {
        const auto [a, b] = schedule_.frames[k];
        const long long lo = std::llround(a / dt_min);
        const long long hi = std::llround(b / dt_min);
        if (lo < 0 || hi >= static_cast<long long>(grid_.size()) || hi <= lo ||
            std::fabs(grid_[static_cast<size_t>(lo)] - a) > 1e-9 ||
            std::fabs(grid_[static_cast<size_t>(hi)] - b) > 1e-9)
            throw std::invalid_argument("frame boundaries must land on the integration grid");
        frame_lo_[k] = static_cast<int>(lo);
        frame_hi_[k] = static_cast<int>(hi);
    }

    const std::vector<double> blood = cp.sample_blood(grid_);
    blood_frames_.assign(schedule_.frames.size(), 0.0);
    for (size_t k = 0; k < schedule_.frames.size(); ++k) {
        double acc = 0.0;
        for (int i = frame_lo_[k]; i < frame_hi_[k]; ++i) {
            acc += 0.5 * (grid_[i + 1] - grid_[i]) *
                   (blood[i] * decay_[i] + blood[i + 1] * decay_[i + 1]);
        }
        blood_frames_[k] = acc;
    }
}

void FrameIntegrator::frames_for(const KineticParams& p, std::span<double> frames_out,
                                 Workspace& ws) const {
    if (frames_out.size() != frame_lo_.size())
        throw std::invalid_argument("frames_out size mismatch");
    if (ws.ct.size() != grid_.size()) ws.ct.assign(grid_.size(), 0.0);
    ct_analytic_into(p, grid_, plasma_, ws.ct);
    const double tissue_w = 1.0 - p.vb;
    for (size_t k = 0; k < frame_lo_.size(); ++k) {
        double acc = 0.0;
        const int lo = frame_lo_[k], hi = frame_hi_[k];
        double prev = ws.ct[lo] * decay_[lo];
        for (int i = lo; i < hi; ++i) {
            const double cur = ws.ct[i + 1] * decay_[i + 1];
            acc += prev + cur;
            prev = cur;
        }
        frames_out[k] = tissue_w * 0.5 * dt_ * acc + p.vb * blood_frames_[k];
    }
}

} // namespace petkin
