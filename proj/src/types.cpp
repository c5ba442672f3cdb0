#include "petkin/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "petkin/kinetics.hpp"

namespace petkin {

void validate_params(const KineticParams& p) {
    const double vals[5] = {p.K1, p.k2, p.k3, p.k4, p.vb};
    for (double v : vals)
        if (!std::isfinite(v)) throw std::invalid_argument("kinetic params must be finite");
    if (p.K1 < 0 || p.k2 < 0 || p.k3 < 0 || p.k4 < 0)
        throw std::invalid_argument("rate constants must be non-negative");
    if (p.vb < 0 || p.vb > 1)
        throw std::invalid_argument("blood volume fraction must be in [0, 1]");
}

FrameSchedule FrameSchedule::from_pattern(const std::vector<std::pair<int, double>>& pattern) {
    FrameSchedule s;
    double t = 0.0;
    for (const auto& [count, dur] : pattern) {
        if (count <= 0 || !(dur > 0))
            throw std::invalid_argument("schedule pattern entries need count > 0 and duration > 0");
        for (int i = 0; i < count; ++i) {
            s.frames.emplace_back(t, t + dur);
            t += dur;
        }
    }
    s.validate();
    return s;
}

std::vector<double> FrameSchedule::midpoints() const {
    std::vector<double> m(frames.size());
    for (size_t i = 0; i < frames.size(); ++i)
        m[i] = 0.5 * (frames[i].first + frames[i].second);
    return m;
}

std::vector<double> FrameSchedule::durations() const {
    std::vector<double> d(frames.size());
    for (size_t i = 0; i < frames.size(); ++i)
        d[i] = frames[i].second - frames[i].first;
    return d;
}

void FrameSchedule::validate() const {
    if (frames.empty()) throw std::invalid_argument("schedule has no frames");
    if (std::fabs(frames.front().first) > 1e-12)
        throw std::invalid_argument("first frame must start at t = 0");
    for (size_t i = 0; i < frames.size(); ++i) {
        const auto& [a, b] = frames[i];
        if (!std::isfinite(a) || !std::isfinite(b) || !(b > a))
            throw std::invalid_argument("frames must have positive duration");
        if (i > 0 && std::fabs(a - frames[i - 1].second) > 1e-9)
            throw std::invalid_argument("frames must be contiguous");
    }
}

void TimeActivityCurve::validate() const {
    if (times.size() != values.size() || times.size() < 2)
        throw std::invalid_argument("curve needs >= 2 samples with matching sizes");
    for (size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1]))
            throw std::invalid_argument("curve time grid must be strictly increasing");
    for (double v : values)
        if (!std::isfinite(v)) throw std::invalid_argument("curve values must be finite");
}

double TimeActivityCurve::interp(double t) const {
    if (t <= times.front()) return values.front();
    if (t >= times.back()) return values.back();
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const size_t i = static_cast<size_t>(it - times.begin());
    const double t0 = times[i - 1], t1 = times[i];
    const double f = (t - t0) / (t1 - t0);
    return values[i - 1] + f * (values[i] - values[i - 1]);
}

double TimeActivityCurve::peak() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::fabs(v));
    return m;
}

InputFunction InputFunction::feng(const FengCoefficients& c) {
    const double vals[6] = {c.a1, c.a2, c.a3, c.l1, c.l2, c.l3};
    for (double v : vals)
        if (!std::isfinite(v)) throw std::invalid_argument("input function coefficients must be finite");
    if (c.l1 < 0 || c.l2 < 0 || c.l3 < 0)
        throw std::invalid_argument("input function decay exponents must be >= 0");
    InputFunction f;
    f.analytic_ = true;
    f.coef_ = c;
    return f;
}

InputFunction InputFunction::sampled(TimeActivityCurve curve) {
    curve.validate();
    if (curve.times.front() > 1e-12)
        throw std::invalid_argument("sampled input function must start at t = 0");
    InputFunction f;
    f.analytic_ = false;
    f.curve_ = std::move(curve);
    return f;
}

void InputFunction::set_whole_blood(TimeActivityCurve cb) {
    cb.validate();
    has_blood_ = true;
    blood_ = std::move(cb);
}

double InputFunction::plasma(double t) const {
    if (analytic_) return feng_input(coef_, t);
    return curve_.interp(t);
}

double InputFunction::whole_blood(double t) const {
    if (has_blood_) return blood_.interp(t);
    return plasma(t);
}

std::vector<double> InputFunction::sample_plasma(const std::vector<double>& grid) const {
    std::vector<double> out(grid.size());
    for (size_t i = 0; i < grid.size(); ++i) out[i] = plasma(grid[i]);
    return out;
}

std::vector<double> InputFunction::sample_blood(const std::vector<double>& grid) const {
    std::vector<double> out(grid.size());
    for (size_t i = 0; i < grid.size(); ++i) out[i] = whole_blood(grid[i]);
    return out;
}

double InputFunction::support_end() const {
    if (analytic_ && !has_blood_) return std::numeric_limits<double>::infinity();
    double end = analytic_ ? std::numeric_limits<double>::infinity() : curve_.times.back();
    if (has_blood_) end = std::min(end, blood_.times.back());
    return end;
}

std::vector<double> uniform_grid(double t_end, double dt) {
    if (!(dt > 0) || !(t_end > 0)) throw std::invalid_argument("grid needs t_end > 0 and dt > 0");
    const double steps = t_end / dt;
    const long long n = std::llround(steps);
    if (std::fabs(steps - static_cast<double>(n)) > 1e-9)
        throw std::invalid_argument("t_end must be an integer multiple of dt");
    std::vector<double> g(static_cast<size_t>(n) + 1);
    for (long long i = 0; i <= n; ++i) g[static_cast<size_t>(i)] = static_cast<double>(i) * dt;
    g.back() = t_end;
    return g;
}

} // namespace petkin
