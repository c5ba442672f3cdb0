#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "petkin/config.hpp"
#include "petkin/errors.hpp"
#include "petkin/graphical.hpp"
#include "petkin/kinetics.hpp"
#include "petkin/rng.hpp"

using namespace petkin;

namespace {

const double kDt = 1.0 / 60.0;

ExperimentConfig desk_config() {
    return load_config(PETKIN_SOURCE_DIR "/configs/desk.json");
}

// Slope/intercept via the raw normal equations, as an independent check on
// the centered-accumulation implementation.
LinearFitResult normal_equations(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    LinearFitResult r;
    r.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    r.intercept = (sy - r.slope * sx) / n;
    return r;
}

} // namespace

TEST_CASE("linear fit: exact lines and degenerate input") {
    {
        const std::vector<double> x{0, 1, 2}, y{3, 5, 7};
        const LinearFitResult r = linear_fit(x, y);
        CHECK(r.slope == doctest::Approx(2.0).epsilon(1e-14));
        CHECK(r.intercept == doctest::Approx(3.0).epsilon(1e-14));
    }
    {
        const std::vector<double> x{0, 1}, y{0, 0};
        const LinearFitResult r = linear_fit(x, y);
        CHECK(r.slope == 0.0);
        CHECK(r.intercept == 0.0);
    }
    const std::vector<double> one{1.0}, same{2.0, 2.0}, ys{1.0, 3.0};
    CHECK_THROWS_AS(linear_fit(one, one), FitError);
    CHECK_THROWS_AS(linear_fit(same, ys), FitError);
}

TEST_CASE("linear fit matches the normal equations and has orthogonal residuals") {
    Rng rng(5);
    std::vector<double> x(100), y(100);
    for (size_t i = 0; i < x.size(); ++i) {
        x[i] = rng.uniform(-3.0, 7.0);
        y[i] = 1.7 * x[i] - 0.4 + rng.gaussian(0.0, 0.5);
    }
    const LinearFitResult a = linear_fit(x, y);
    const LinearFitResult b = normal_equations(x, y);
    CHECK(a.slope == doctest::Approx(b.slope).epsilon(1e-10));
    CHECK(a.intercept == doctest::Approx(b.intercept).epsilon(1e-10));

    double sr = 0.0, srx = 0.0, sy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (a.slope * x[i] + a.intercept);
        sr += r;
        srx += r * x[i];
        sy += std::fabs(y[i]);
    }
    CHECK(std::fabs(sr) / sy <= 1e-9);
    CHECK(std::fabs(srx) / (sy * 7.0) <= 1e-9);
}

TEST_CASE("cumulative integral: ramps, zeros, closed-form exponential") {
    TimeActivityCurve c;
    c.times = uniform_grid(10.0, kDt);
    c.values.assign(c.times.size(), 3.0);
    const TimeActivityCurve ramp = cumulative_integral(c);
    CHECK(ramp.values.front() == 0.0);
    for (size_t i = 0; i < c.times.size(); i += 100)
        CHECK(ramp.values[i] == doctest::Approx(3.0 * c.times[i]).epsilon(1e-12));

    c.values.assign(c.times.size(), 0.0);
    for (double v : cumulative_integral(c).values) CHECK(v == 0.0);

    for (size_t i = 0; i < c.times.size(); ++i) c.values[i] = std::exp(-c.times[i]);
    const TimeActivityCurve ce = cumulative_integral(c);
    for (size_t i = 0; i < c.times.size(); i += 61) {
        const double want = 1.0 - std::exp(-c.times[i]);
        CHECK(std::fabs(ce.values[i] - want) <= 1e-4);
    }
}

TEST_CASE("fit window selects trailing frames and validates") {
    const FrameSchedule s = FrameSchedule::from_pattern({{4, 0.5}, {4, 2.0}, {10, 5.0}});
    const FitWindow w = FitWindow::last_n(s, 10);
    REQUIRE(w.frames.size() == 10);
    CHECK(w.frames.front() == 8);
    CHECK(w.frames.back() == 17);
    CHECK_NOTHROW(w.validate(s));
    CHECK_THROWS_AS(FitWindow::last_n(s, 1), std::invalid_argument);
    CHECK_THROWS_AS(FitWindow::last_n(s, 19), std::invalid_argument);
    FitWindow bad = w;
    bad.frames[3] = bad.frames[2];
    CHECK_THROWS_AS(bad.validate(s), std::invalid_argument);
}

TEST_CASE("identical tissue and plasma curves put every plot point on y = x") {
    const ExperimentConfig cfg = desk_config();
    const InputFunction cp = cfg.make_input_function(PETKIN_SOURCE_DIR "/configs");
    const auto grid = uniform_grid(60.0, kDt);
    TimeActivityCurve c;
    c.times = grid;
    c.values = cp.sample_plasma(grid);
    const FitWindow w = FitWindow::last_n(cfg.schedule, 10);

    const GraphicalPoints lp = logan_points(c, c, w, cfg.schedule);
    REQUIRE(lp.x.size() == 10);
    for (size_t i = 0; i < lp.x.size(); ++i)
        CHECK(lp.y[i] == doctest::Approx(lp.x[i]).epsilon(1e-14));

    const GraphicalPoints pp = patlak_points(c, c, w, cfg.schedule);
    for (double yv : pp.y) CHECK(yv == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("scaling the tissue curve leaves the plot ordinate unchanged and scales the slope") {
    const ExperimentConfig cfg = desk_config();
    const InputFunction cp = cfg.make_input_function(PETKIN_SOURCE_DIR "/configs");
    const auto grid = uniform_grid(60.0, kDt);
    const KineticParams p{0.3, 0.4, 0.05, 0.09, 0.0};
    const TimeActivityCurve ct = ct_analytic(p, cp, grid);
    TimeActivityCurve cpc, ct3;
    cpc.times = ct3.times = grid;
    cpc.values = cp.sample_plasma(grid);
    ct3.values.resize(grid.size());
    const double alpha = 3.0;
    for (size_t i = 0; i < grid.size(); ++i) ct3.values[i] = alpha * ct.values[i];
    const FitWindow w = FitWindow::last_n(cfg.schedule, 10);

    const GraphicalPoints a = logan_points(ct, cpc, w, cfg.schedule);
    const GraphicalPoints b = logan_points(ct3, cpc, w, cfg.schedule);
    REQUIRE(a.x.size() == b.x.size());
    for (size_t i = 0; i < a.x.size(); ++i) {
        CHECK(b.y[i] == doctest::Approx(a.y[i]).epsilon(1e-12));          // ordinate scale-free
        CHECK(b.x[i] * alpha == doctest::Approx(a.x[i]).epsilon(1e-12));  // abscissa carries 1/alpha
    }
    const LinearFitResult fa = linear_fit(a.x, a.y);
    const LinearFitResult fb = linear_fit(b.x, b.y);
    CHECK(fb.slope == doctest::Approx(alpha * fa.slope).epsilon(1e-10));
}

TEST_CASE("patlak fit is homogeneous in the tissue curve") {
    const ExperimentConfig cfg = desk_config();
    const InputFunction cp = cfg.make_input_function(PETKIN_SOURCE_DIR "/configs");
    const auto grid = uniform_grid(60.0, kDt);
    const KineticParams p{0.1, 0.12, 0.06, 0.0, 0.0};
    const TimeActivityCurve ct = ct_analytic(p, cp, grid);
    TimeActivityCurve cpc = ct, ct2 = ct;
    cpc.values = cp.sample_plasma(grid);
    for (double& v : ct2.values) v *= 2.5;
    const FitWindow w = FitWindow::last_n(cfg.schedule, 10);

    const auto a = patlak_points(ct, cpc, w, cfg.schedule);
    const auto b = patlak_points(ct2, cpc, w, cfg.schedule);
    const LinearFitResult fa = linear_fit(a.x, a.y);
    const LinearFitResult fb = linear_fit(b.x, b.y);
    CHECK(fb.slope == doctest::Approx(2.5 * fa.slope).epsilon(1e-12));
    CHECK(fb.intercept == doctest::Approx(2.5 * fa.intercept).epsilon(1e-12));
}

TEST_CASE("constructed patlak line is recovered exactly") {
    const ExperimentConfig cfg = desk_config();
    const InputFunction cp = cfg.make_input_function(PETKIN_SOURCE_DIR "/configs");
    const auto grid = uniform_grid(60.0, kDt);
    TimeActivityCurve cpc;
    cpc.times = grid;
    cpc.values = cp.sample_plasma(grid);
    const double ki = 0.0421;
    TimeActivityCurve tissue = cumulative_integral(cpc);
    for (double& v : tissue.values) v *= ki;
    const FitWindow w = FitWindow::last_n(cfg.schedule, 10);
    const auto pts = patlak_points(tissue, cpc, w, cfg.schedule);
    const LinearFitResult f = linear_fit(pts.x, pts.y);
    CHECK(f.slope == doctest::Approx(ki).epsilon(1e-9));
    CHECK(std::fabs(f.intercept) <= 1e-9 * ki * pts.x.back());
}

TEST_CASE("patlak slope recovers the net influx rate for irreversible kinetics") {
    const ExperimentConfig cfg = desk_config();
    const InputFunction cp = cfg.make_input_function(PETKIN_SOURCE_DIR "/configs");
    const auto grid = uniform_grid(60.0, kDt);
    TimeActivityCurve cpc;
    cpc.times = grid;
    cpc.values = cp.sample_plasma(grid);
    const FitWindow w = FitWindow::last_n(cfg.schedule, 10);

    SUBCASE("reference parameter point") {
        const KineticParams p{0.1, 0.12, 0.06, 0.0, 0.0};
        const double ki = p.K1 * p.k3 / (p.k2 + p.k3);
        CHECK(ki == doctest::Approx(1.0 / 30.0).epsilon(1e-12));
        const TimeActivityCurve ct = ct_analytic(p, cp, grid);
        const auto pts = patlak_points(ct, cpc, w, cfg.schedule);
        const LinearFitResult f = linear_fit(pts.x, pts.y);
        CHECK(std::fabs(f.slope - ki) <= 0.01 * ki);
    }

    SUBCASE("random irreversible draws, window past 30 minutes") {
        const FitWindow w30 = FitWindow::last_n(cfg.schedule, 6);  // midpoints 32.5..57.5
        Rng rng(31);
        for (int i = 0; i < 50; ++i) {
            KineticParams p;
            p.K1 = rng.uniform(0.05, 0.2);
            p.k2 = rng.uniform(0.08, 0.2);
            p.k3 = rng.uniform(0.07, 0.12);
            const double ki = p.K1 * p.k3 / (p.k2 + p.k3);
            const TimeActivityCurve ct = ct_analytic(p, cp, grid);
            const auto pts = patlak_points(ct, cpc, w30, cfg.schedule);
            const LinearFitResult f = linear_fit(pts.x, pts.y);
            CHECK(std::fabs(f.slope - ki) <= 0.01 * ki);
        }
    }
}

TEST_CASE("logan plot climbs toward the distribution volume for slowly reversible kinetics") {
    const ExperimentConfig cfg = desk_config();
    const InputFunction cp = cfg.make_input_function(PETKIN_SOURCE_DIR "/configs");
    const auto grid = uniform_grid(60.0, kDt);
    TimeActivityCurve cpc;
    cpc.times = grid;
    cpc.values = cp.sample_plasma(grid);
    const KineticParams p{0.1, 0.12, 0.06, 0.006, 0.0};
    const double dv = p.K1 / p.k2 * (1.0 + p.k3 / p.k4);
    const TimeActivityCurve ct = ct_analytic(p, cp, grid);
    const FitWindow w = FitWindow::last_n(cfg.schedule, 10);
    const auto pts = logan_points(ct, cpc, w, cfg.schedule);
    REQUIRE(pts.x.size() == 10);
    double prev = 0.0;
    for (size_t i = 1; i < pts.x.size(); ++i) {
        const double secant = (pts.y[i] - pts.y[i - 1]) / (pts.x[i] - pts.x[i - 1]);
        CHECK(secant > prev);  // monotone approach from below
        CHECK(secant < dv);
        prev = secant;
    }
    CHECK(dv - prev < 0.9 * dv);  // the gap has visibly closed
}

TEST_CASE("logan slope matches the distribution volume once kinetics equilibrate") {
    const ExperimentConfig cfg = load_config(PETKIN_SOURCE_DIR "/configs/task2.json");
    const InputFunction cp = cfg.make_input_function(PETKIN_SOURCE_DIR "/configs");
    GraphicalContext ctx(cp, cfg.tracer, cfg.schedule, cfg.fit_window_frames, cfg.dt_min());
    const auto& fi = ctx.integrator();
    std::vector<double> ct(fi.n_grid());
    Rng rng(77);
    for (int i = 0; i < 50; ++i) {
        KineticParams p;
        p.K1 = rng.uniform(0.15, 0.45);
        p.k2 = rng.uniform(0.3, 0.6);
        p.k3 = rng.uniform(0.02, 0.08);
        p.k4 = rng.uniform(0.08, 0.15);
        const double dv = p.K1 / p.k2 * (1.0 + p.k3 / p.k4);
        ct_analytic_into(p, fi.grid(), fi.plasma(), ct);
        LinearFitResult fit;
        REQUIRE(ctx.logan_fit_dense(ct, fit));
        CHECK(std::fabs(fit.slope - dv) <= 0.05 * dv);
    }
}

TEST_CASE("graphical context fits agree with the standalone point constructions") {
    const ExperimentConfig cfg = desk_config();
    const InputFunction cp = cfg.make_input_function(PETKIN_SOURCE_DIR "/configs");
    GraphicalContext ctx(cp, cfg.tracer, cfg.schedule, cfg.fit_window_frames, cfg.dt_min());
    const auto& fi = ctx.integrator();
    const FitWindow w = FitWindow::last_n(cfg.schedule, cfg.fit_window_frames);

    const KineticParams p{0.11, 0.14, 0.055, 0.0, 0.03};
    auto ws = ctx.make_workspace();

    TimeActivityCurve cpc, ct;
    cpc.times = ct.times = fi.grid();
    cpc.values = fi.plasma();
    ct.values.resize(fi.n_grid());
    ct_analytic_into(p, fi.grid(), fi.plasma(), ct.values);

    SUBCASE("dense logan path") {
        LinearFitResult fast;
        REQUIRE(ctx.logan_fit_dense(ct.values, fast));
        const auto pts = logan_points(ct, cpc, w, cfg.schedule);
        const LinearFitResult slow = linear_fit(pts.x, pts.y);
        CHECK(fast.slope == doctest::Approx(slow.slope).epsilon(1e-9));
        CHECK(fast.intercept == doctest::Approx(slow.intercept).epsilon(1e-9));
    }

    SUBCASE("frame-activity patlak path") {
        std::vector<double> xk(fi.n_frames());
        fi.frames_for(p, xk, ws.fi);
        LinearFitResult fast;
        REQUIRE(ctx.patlak_fit_frames(xk, fast));
        const auto pts = patlak_points(xk, cfg.tracer, cpc, w, cfg.schedule);
        const LinearFitResult slow = linear_fit(pts.x, pts.y);
        CHECK(fast.slope == doctest::Approx(slow.slope).epsilon(1e-9));
        CHECK(fast.intercept == doctest::Approx(slow.intercept).epsilon(1e-9));
    }

    SUBCASE("frame-activity patlak recovers the influx rate with decay correction") {
        KineticParams q{0.1, 0.12, 0.06, 0.0, 0.0};
        std::vector<double> xk(fi.n_frames());
        fi.frames_for(q, xk, ws.fi);
        LinearFitResult fit;
        REQUIRE(ctx.patlak_fit_frames(xk, fit));
        const double ki = q.K1 * q.k3 / (q.k2 + q.k3);
        CHECK(std::fabs(fit.slope - ki) <= 0.01 * ki);
    }
}

TEST_CASE("logan fit from frame activities tracks the dense-curve fit") {
    const ExperimentConfig cfg = load_config(PETKIN_SOURCE_DIR "/configs/task2.json");
    const InputFunction cp = cfg.make_input_function(PETKIN_SOURCE_DIR "/configs");
    GraphicalContext ctx(cp, cfg.tracer, cfg.schedule, cfg.fit_window_frames, cfg.dt_min());
    const auto& fi = ctx.integrator();
    auto ws = ctx.make_workspace();
    const KineticParams p{0.3, 0.4, 0.05, 0.1, 0.0};

    std::vector<double> ct(fi.n_grid()), xk(fi.n_frames());
    ct_analytic_into(p, fi.grid(), fi.plasma(), ct);
    fi.frames_for(p, xk, ws.fi);

    LinearFitResult dense, coarse;
    REQUIRE(ctx.logan_fit_dense(ct, dense));
    REQUIRE(ctx.logan_fit_frames(xk, coarse));
    CHECK(coarse.slope == doctest::Approx(dense.slope).epsilon(0.03));
}

TEST_CASE("degenerate plots drop guarded points and report failure") {
    const ExperimentConfig cfg = desk_config();
    const FitWindow w = FitWindow::last_n(cfg.schedule, 10);
    const auto grid = uniform_grid(60.0, kDt);
    const InputFunction cp = cfg.make_input_function(PETKIN_SOURCE_DIR "/configs");
    TimeActivityCurve cpc, dead;
    cpc.times = dead.times = grid;
    cpc.values = cp.sample_plasma(grid);
    // Tissue dies to zero before the fit window opens (first window mid 12.5).
    dead.values.resize(grid.size());
    for (size_t i = 0; i < grid.size(); ++i) dead.values[i] = grid[i] < 10.0 ? 1.0 : 0.0;
    CHECK_THROWS_AS(logan_points(dead, cpc, w, cfg.schedule), FitError);

    GraphicalContext ctx(cp, cfg.tracer, cfg.schedule, cfg.fit_window_frames, cfg.dt_min());
    std::vector<double> zeros(ctx.integrator().n_grid(), 0.0);
    LinearFitResult fit;
    int dropped = 0;
    CHECK_FALSE(ctx.logan_fit_dense(zeros, fit, &dropped));
    CHECK(dropped == 10);
    CHECK(fit.slope == 0.0);
}

TEST_CASE("parametric maps: uniform input gives a constant map equal to the scalar fit") {
    const ExperimentConfig cfg = desk_config();
    const InputFunction cp = cfg.make_input_function(PETKIN_SOURCE_DIR "/configs");
    GraphicalContext ctx(cp, cfg.tracer, cfg.schedule, cfg.fit_window_frames, cfg.dt_min());
    const KineticParams p{0.09, 0.12, 0.058, 0.0, 0.0};

    ParamImages pm(6, 5);
    for (size_t i = 0; i < pm.size(); ++i) pm.set(i, p);
    const ParametricImages out = parametric_images(pm, ctx, GraphicalMode::patlak);
    CHECK(out.n_failed == 0);

    auto ws = ctx.make_workspace();
    std::vector<double> xk(ctx.integrator().n_frames());
    ctx.integrator().frames_for(p, xk, ws.fi);
    LinearFitResult scalar;
    REQUIRE(ctx.patlak_fit_frames(xk, scalar));
    for (size_t i = 0; i < out.slope.size(); ++i) {
        CHECK(out.slope.v[i] == scalar.slope);
        CHECK(out.intercept.v[i] == scalar.intercept);
        CHECK(out.ok[i] == 1);
    }
}

TEST_CASE("parametric maps: per-region influx rates within one percent") {
    const ExperimentConfig cfg = desk_config();
    const InputFunction cp = cfg.make_input_function(PETKIN_SOURCE_DIR "/configs");
    GraphicalContext ctx(cp, cfg.tracer, cfg.schedule, cfg.fit_window_frames, cfg.dt_min());

    const KineticParams pa{0.1, 0.12, 0.06, 0.0, 0.0};
    const KineticParams pb{0.14, 0.15, 0.08, 0.0, 0.0};
    ParamImages pm(8, 4);
    for (size_t i = 0; i < pm.size(); ++i) pm.set(i, i % 2 == 0 ? pa : pb);
    const ParametricImages out = parametric_images(pm, ctx, GraphicalMode::patlak);
    CHECK(out.n_failed == 0);
    const double ka = pa.K1 * pa.k3 / (pa.k2 + pa.k3);
    const double kb = pb.K1 * pb.k3 / (pb.k2 + pb.k3);
    for (size_t i = 0; i < pm.size(); ++i) {
        const double want = i % 2 == 0 ? ka : kb;
        CHECK(std::fabs(out.slope.v[i] - want) <= 0.01 * want);
    }
}

TEST_CASE("parametric maps: single voxel equals the scalar path bit for bit") {
    const ExperimentConfig cfg = load_config(PETKIN_SOURCE_DIR "/configs/task2.json");
    const InputFunction cp = cfg.make_input_function(PETKIN_SOURCE_DIR "/configs");
    GraphicalContext ctx(cp, cfg.tracer, cfg.schedule, cfg.fit_window_frames, cfg.dt_min());
    const KineticParams p{0.28, 0.42, 0.06, 0.085, 0.03};

    ParamImages pm(1, 1);
    pm.set(0, p);
    const ParametricImages out = parametric_images(pm, ctx, GraphicalMode::logan);

    auto ws = ctx.make_workspace();
    ct_analytic_into(p, ctx.integrator().grid(), ctx.integrator().plasma(), ws.fi.ct);
    LinearFitResult scalar;
    REQUIRE(ctx.logan_fit_dense(ws.fi.ct, scalar));
    CHECK(out.slope.v[0] == scalar.slope);
    CHECK(out.intercept.v[0] == scalar.intercept);
}

TEST_CASE("parametric maps: dead voxels are masked, not fatal") {
    const ExperimentConfig cfg = desk_config();
    const InputFunction cp = cfg.make_input_function(PETKIN_SOURCE_DIR "/configs");
    GraphicalContext ctx(cp, cfg.tracer, cfg.schedule, cfg.fit_window_frames, cfg.dt_min());

    ParamImages pm(3, 1);
    pm.set(0, {0.3, 0.4, 0.05, 0.09, 0.0});
    pm.set(1, {0.0, 0.0, 0.0, 0.0, 0.0});  // no uptake: every logan point is guarded away
    pm.set(2, {0.25, 0.35, 0.04, 0.1, 0.0});
    const ParametricImages out = parametric_images(pm, ctx, GraphicalMode::logan);
    CHECK(out.n_failed == 1);
    CHECK(out.ok[0] == 1);
    CHECK(out.ok[1] == 0);
    CHECK(out.ok[2] == 1);
    CHECK(out.slope.v[1] == 0.0);
    CHECK(out.intercept.v[1] == 0.0);
}

TEST_CASE("parametric maps from measured frames match the parameter-map patlak path") {
    const ExperimentConfig cfg = desk_config();
    const InputFunction cp = cfg.make_input_function(PETKIN_SOURCE_DIR "/configs");
    GraphicalContext ctx(cp, cfg.tracer, cfg.schedule, cfg.fit_window_frames, cfg.dt_min());
    const auto& fi = ctx.integrator();

    ParamImages pm(4, 3);
    Rng rng(9);
    for (size_t i = 0; i < pm.size(); ++i) {
        KineticParams p;
        p.K1 = rng.uniform(0.05, 0.15);
        p.k2 = rng.uniform(0.1, 0.16);
        p.k3 = rng.uniform(0.04, 0.08);
        p.vb = rng.uniform(0.0, 0.06);
        pm.set(i, p);
    }

    DynamicImage data(4, 3, cfg.schedule);
    auto ws = ctx.make_workspace();
    std::vector<double> xk(fi.n_frames());
    for (size_t i = 0; i < pm.size(); ++i) {
        fi.frames_for(pm.at(i), xk, ws.fi);
        for (int k = 0; k < fi.n_frames(); ++k) data.frame(k)[i] = xk[static_cast<size_t>(k)];
    }

    const ParametricImages from_params = parametric_images(pm, ctx, GraphicalMode::patlak);
    const ParametricImages from_frames = parametric_images(data, ctx, GraphicalMode::patlak);
    REQUIRE(from_params.n_failed == 0);
    REQUIRE(from_frames.n_failed == 0);
    for (size_t i = 0; i < pm.size(); ++i) {
        CHECK(from_frames.slope.v[i] == doctest::Approx(from_params.slope.v[i]).epsilon(1e-12));
        CHECK(from_frames.intercept.v[i] ==
              doctest::Approx(from_params.intercept.v[i]).epsilon(1e-12));
    }
}
