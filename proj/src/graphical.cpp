#include "petkin/graphical.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "petkin/errors.hpp"

namespace petkin {

LinearFitResult linear_fit(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw FitError("linear fit: size mismatch");
    const size_t n = x.size();
    if (n < 2) throw FitError("linear fit: needs at least 2 points");
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        sxx += dx * dx;
        sxy += dx * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw FitError("linear fit: abscissa values all coincide");
    LinearFitResult r;
    r.slope = sxy / sxx;
    r.intercept = my - r.slope * mx;
    return r;
}

FitWindow FitWindow::last_n(const FrameSchedule& s, int n) {
    if (n < 2 || n > s.n_frames())
        throw std::invalid_argument("fit window must cover 2..n_frames frames");
    FitWindow w;
    for (int i = s.n_frames() - n; i < s.n_frames(); ++i) w.frames.push_back(i);
    return w;
}

void FitWindow::validate(const FrameSchedule& s) const {
    if (frames.size() < 2) throw std::invalid_argument("fit window needs >= 2 frames");
    for (size_t i = 0; i < frames.size(); ++i) {
        if (frames[i] < 0 || frames[i] >= s.n_frames())
            throw std::invalid_argument("fit window frame index out of range");
        if (i > 0 && frames[i] <= frames[i - 1])
            throw std::invalid_argument("fit window indices must increase");
    }
}

TimeActivityCurve cumulative_integral(const TimeActivityCurve& c) {
    c.validate();
    TimeActivityCurve out;
    out.times = c.times;
    out.values.resize(c.values.size());
    out.values[0] = 0.0;
    double acc = 0.0;
    for (size_t i = 1; i < c.times.size(); ++i) {
        acc += 0.5 * (c.times[i] - c.times[i - 1]) * (c.values[i - 1] + c.values[i]);
        out.values[i] = acc;
    }
    return out;
}

namespace {

void check_window_support(const std::vector<double>& mids, const TimeActivityCurve& c) {
    if (mids.back() > c.times.back() + 1e-9 || mids.front() < c.times.front() - 1e-9)
        throw std::invalid_argument("fit window midpoint outside curve support");
}

} // namespace

GraphicalPoints logan_points(const TimeActivityCurve& ct, const TimeActivityCurve& cp,
                             const FitWindow& w, const FrameSchedule& sched) {
    ct.validate();
    cp.validate();
    sched.validate();
    w.validate(sched);
    const auto all_mids = sched.midpoints();
    std::vector<double> mids;
    for (int f : w.frames) mids.push_back(all_mids[static_cast<size_t>(f)]);
    check_window_support(mids, ct);
    check_window_support(mids, cp);

    const TimeActivityCurve cum_ct = cumulative_integral(ct);
    const TimeActivityCurve cum_cp = cumulative_integral(cp);
    const double eps_ct = 1e-9 * ct.peak();

    // Both axes share the tissue denominator; that is what makes the fitted
    // slope estimate the total distribution volume.
    GraphicalPoints pts;
    for (double tm : mids) {
        const double ctv = ct.interp(tm);
        if (!(ctv > eps_ct)) {
            ++pts.n_dropped;
            continue;
        }
        pts.x.push_back(cum_cp.interp(tm) / ctv);
        pts.y.push_back(cum_ct.interp(tm) / ctv);
    }
    if (pts.x.size() < 2) throw FitError("logan plot: fewer than 2 usable points");
    return pts;
}

GraphicalPoints patlak_points(const TimeActivityCurve& tissue, const TimeActivityCurve& cp,
                              const FitWindow& w, const FrameSchedule& sched) {
    tissue.validate();
    cp.validate();
    sched.validate();
    w.validate(sched);
    const auto all_mids = sched.midpoints();
    std::vector<double> mids;
    for (int f : w.frames) mids.push_back(all_mids[static_cast<size_t>(f)]);
    check_window_support(mids, tissue);
    check_window_support(mids, cp);

    const TimeActivityCurve cum_cp = cumulative_integral(cp);
    const double eps_cp = 1e-9 * cp.peak();

    GraphicalPoints pts;
    for (double tm : mids) {
        const double cpv = cp.interp(tm);
        if (!(cpv > eps_cp)) {
            ++pts.n_dropped;
            continue;
        }
        pts.x.push_back(cum_cp.interp(tm) / cpv);
        pts.y.push_back(tissue.interp(tm) / cpv);
    }
    if (pts.x.size() < 2) throw FitError("patlak plot: fewer than 2 usable points");
    return pts;
}

GraphicalPoints patlak_points(std::span<const double> xk, const Tracer& tracer,
                              const TimeActivityCurve& cp, const FitWindow& w,
                              const FrameSchedule& sched) {
    sched.validate();
    if (xk.size() != static_cast<size_t>(sched.n_frames()))
        throw std::invalid_argument("frame activity count does not match schedule");
    // Convert frame activities to midpoint tissue values, then reuse the
    // curve-based path. Prepending t=0 keeps the curve grid valid.
    TimeActivityCurve tissue;
    tissue.times.push_back(0.0);
    tissue.values.push_back(0.0);
    const auto mids = sched.midpoints();
    const auto durs = sched.durations();
    for (int k = 0; k < sched.n_frames(); ++k) {
        tissue.times.push_back(mids[static_cast<size_t>(k)]);
        tissue.values.push_back(xk[static_cast<size_t>(k)] *
                                std::exp(tracer.decay_constant * mids[static_cast<size_t>(k)]) /
                                durs[static_cast<size_t>(k)]);
    }
    return patlak_points(tissue, cp, w, sched);
}

GraphicalContext::GraphicalContext(const InputFunction& cp, const Tracer& tracer,
                                   const FrameSchedule& schedule, int window_frames,
                                   double dt_min)
    : fi_(cp, tracer, schedule, dt_min), window_(FitWindow::last_n(schedule, window_frames)) {
    mids_all_ = schedule.midpoints();
    const auto durs = schedule.durations();
    corr_all_.resize(mids_all_.size());
    for (size_t k = 0; k < mids_all_.size(); ++k)
        corr_all_[k] = std::exp(tracer.decay_constant * mids_all_[k]) / durs[k];

    const auto& grid = fi_.grid();
    const auto& plasma = fi_.plasma();
    const double dt = grid[1] - grid[0];
    double cp_peak = 0.0;
    for (double v : plasma) cp_peak = std::max(cp_peak, std::fabs(v));
    eps_cp_ = 1e-9 * cp_peak;

    std::vector<double> cum_cp(grid.size(), 0.0);
    for (size_t i = 1; i < grid.size(); ++i)
        cum_cp[i] = cum_cp[i - 1] + 0.5 * (grid[i] - grid[i - 1]) * (plasma[i - 1] + plasma[i]);

    for (int f : window_.frames) {
        const double tm = mids_all_[static_cast<size_t>(f)];
        int i = static_cast<int>(std::floor(tm / dt));
        i = std::clamp(i, 0, static_cast<int>(grid.size()) - 2);
        const double theta = tm - grid[static_cast<size_t>(i)];
        const double cpv = plasma[static_cast<size_t>(i)] +
                           (plasma[static_cast<size_t>(i) + 1] - plasma[static_cast<size_t>(i)]) *
                               (theta / (grid[static_cast<size_t>(i) + 1] - grid[static_cast<size_t>(i)]));
        const double cum = cum_cp[static_cast<size_t>(i)] +
                           0.5 * theta * (plasma[static_cast<size_t>(i)] + cpv);
        mid_idx_.push_back(i);
        mid_t_.push_back(tm);
        cp_mid_.push_back(cpv);
        cumcp_mid_.push_back(cum);
        const bool ok = cpv > eps_cp_;
        cp_ok_.push_back(ok);
        x_.push_back(ok ? cum / cpv : 0.0);
    }
}

GraphicalContext::Workspace GraphicalContext::make_workspace() const {
    Workspace ws;
    ws.fi = fi_.make_workspace();
    ws.cum.assign(fi_.grid().size(), 0.0);
    ws.frames.assign(static_cast<size_t>(fi_.n_frames()), 0.0);
    return ws;
}

bool GraphicalContext::logan_fit_dense(std::span<const double> ct_dense, LinearFitResult& out,
                                       int* dropped) const {
    const auto& grid = fi_.grid();
    if (ct_dense.size() != grid.size())
        throw std::invalid_argument("tissue curve must be sampled on the context grid");
    double peak = 0.0;
    for (double v : ct_dense) peak = std::max(peak, std::fabs(v));
    const double eps_ct = 1e-9 * peak;

    // Cumulative integral restricted to what the window needs: evaluate
    // cum(t) lazily while walking the grid once.
    std::vector<double> xs, ys;
    xs.reserve(mid_t_.size());
    ys.reserve(mid_t_.size());
    int drop = 0;
    double cum = 0.0;
    size_t j = 0;
    for (size_t i = 1; i < grid.size() && j < mid_t_.size(); ++i) {
        const double seg = 0.5 * (grid[i] - grid[i - 1]) * (ct_dense[i - 1] + ct_dense[i]);
        while (j < mid_t_.size() && static_cast<size_t>(mid_idx_[j]) == i - 1) {
            const double theta = mid_t_[j] - grid[i - 1];
            const double ctv = ct_dense[i - 1] +
                               (ct_dense[i] - ct_dense[i - 1]) * (theta / (grid[i] - grid[i - 1]));
            const double cum_mid = cum + 0.5 * theta * (ct_dense[i - 1] + ctv);
            if (ctv > eps_ct) {
                xs.push_back(cumcp_mid_[j] / ctv);
                ys.push_back(cum_mid / ctv);
            } else {
                ++drop;
            }
            ++j;
        }
        cum += seg;
    }
    if (dropped) *dropped = drop;
    if (xs.size() < 2) {
        out = {};
        return false;
    }
    out = linear_fit(xs, ys);
    return true;
}

bool GraphicalContext::logan_fit_frames(std::span<const double> xk, LinearFitResult& out,
                                        int* dropped) const {
    if (xk.size() != mids_all_.size())
        throw std::invalid_argument("frame activity count does not match schedule");
    // Coarse tissue curve at frame midpoints (decay-corrected mean values).
    std::vector<double> tt(mids_all_.size() + 1, 0.0), tv(mids_all_.size() + 1, 0.0);
    double peak = 0.0;
    for (size_t k = 0; k < mids_all_.size(); ++k) {
        tt[k + 1] = mids_all_[k];
        tv[k + 1] = xk[k] * corr_all_[k];
        peak = std::max(peak, std::fabs(tv[k + 1]));
    }
    const double eps_ct = 1e-9 * peak;
    std::vector<double> cum(tt.size(), 0.0);
    for (size_t i = 1; i < tt.size(); ++i)
        cum[i] = cum[i - 1] + 0.5 * (tt[i] - tt[i - 1]) * (tv[i - 1] + tv[i]);

    std::vector<double> xs, ys;
    int drop = 0;
    for (size_t j = 0; j < window_.frames.size(); ++j) {
        const size_t f = static_cast<size_t>(window_.frames[j]) + 1;
        if (tv[f] > eps_ct) {
            xs.push_back(cumcp_mid_[j] / tv[f]);
            ys.push_back(cum[f] / tv[f]);
        } else {
            ++drop;
        }
    }
    if (dropped) *dropped = drop;
    if (xs.size() < 2) {
        out = {};
        return false;
    }
    out = linear_fit(xs, ys);
    return true;
}

bool GraphicalContext::patlak_fit_frames(std::span<const double> xk, LinearFitResult& out,
                                         int* dropped) const {
    if (xk.size() != mids_all_.size())
        throw std::invalid_argument("frame activity count does not match schedule");
    std::vector<double> xs, ys;
    int drop = 0;
    for (size_t j = 0; j < window_.frames.size(); ++j) {
        const size_t f = static_cast<size_t>(window_.frames[j]);
        if (cp_ok_[j]) {
            xs.push_back(x_[j]);
            ys.push_back(xk[f] * corr_all_[f] / cp_mid_[j]);
        } else {
            ++drop;
        }
    }
    if (dropped) *dropped = drop;
    if (xs.size() < 2) {
        out = {};
        return false;
    }
    out = linear_fit(xs, ys);
    return true;
}

namespace {

template <typename PerVoxel>
ParametricImages run_voxelwise(int width, int height, const GraphicalContext& ctx,
                               PerVoxel&& fn) {
    ParametricImages out;
    out.slope = Image(width, height);
    out.intercept = Image(width, height);
    out.ok.assign(static_cast<size_t>(width) * height, 0);
    const int n = width * height;
#pragma omp parallel
    {
        GraphicalContext::Workspace ws = ctx.make_workspace();
#pragma omp for schedule(static)
        for (int i = 0; i < n; ++i) {
            LinearFitResult fit;
            const bool ok = fn(static_cast<size_t>(i), ws, fit);
            out.slope.v[static_cast<size_t>(i)] = ok ? fit.slope : 0.0;
            out.intercept.v[static_cast<size_t>(i)] = ok ? fit.intercept : 0.0;
            out.ok[static_cast<size_t>(i)] = ok ? 1 : 0;
        }
    }
    for (uint8_t ok : out.ok)
        if (!ok) ++out.n_failed;
    return out;
}

KineticParams clamped(const KineticParams& p) {
    KineticParams q;
    q.K1 = std::max(0.0, p.K1);
    q.k2 = std::max(0.0, p.k2);
    q.k3 = std::max(0.0, p.k3);
    q.k4 = std::max(0.0, p.k4);
    q.vb = std::clamp(p.vb, 0.0, 1.0);
    return q;
}

} // namespace

ParametricImages parametric_images(const ParamImages& params, const GraphicalContext& ctx,
                                   GraphicalMode mode) {
    const auto& fi = ctx.integrator();
    return run_voxelwise(params.width, params.height, ctx,
                         [&](size_t i, GraphicalContext::Workspace& ws, LinearFitResult& fit) {
                             const KineticParams p = clamped(params.at(i));
                             if (mode == GraphicalMode::patlak) {
                                 fi.frames_for(p, ws.frames, ws.fi);
                                 return ctx.patlak_fit_frames(ws.frames, fit);
                             }
                             ct_analytic_into(p, fi.grid(), fi.plasma(), ws.fi.ct);
                             return ctx.logan_fit_dense(ws.fi.ct, fit);
                         });
}

ParametricImages parametric_images(const DynamicImage& data, const GraphicalContext& ctx,
                                   GraphicalMode mode) {
    if (data.n_frames() != ctx.integrator().n_frames())
        throw std::invalid_argument("dynamic image frame count does not match context");
    const size_t fs = data.frame_size();
    return run_voxelwise(data.width, data.height, ctx,
                         [&](size_t i, GraphicalContext::Workspace& ws, LinearFitResult& fit) {
                             for (int k = 0; k < data.n_frames(); ++k)
                                 ws.frames[static_cast<size_t>(k)] = data.v[fs * k + i];
                             if (mode == GraphicalMode::patlak)
                                 return ctx.patlak_fit_frames(ws.frames, fit);
                             return ctx.logan_fit_frames(ws.frames, fit);
                         });
}

} // namespace petkin
