// Benchmark of the OpenMP kernels against their serial reference
// implementations: Radon forward/back projection and the frame-activity
// hot path vs direct O(n^2) convolution.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "petkin/config.hpp"
#include "petkin/kinetics.hpp"
#include "petkin/projection.hpp"
#include "petkin/reference.hpp"
#include "petkin/rng.hpp"
#include "petkin/threading.hpp"

using namespace petkin;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

void report(const char* name, double serial_ms, double parallel_ms, double diff) {
    std::printf("%-22s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx   max|diff| %.3g\n",
                name, serial_ms, parallel_ms, serial_ms / parallel_ms, diff);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"serial-reference vs OpenMP kernel benchmark"};
    int size = 128, reps = 5, threads = 0;
    app.add_option("--size", size, "image side length")->check(CLI::Range(16, 1024));
    app.add_option("--reps", reps, "repetitions (best-of)")->check(CLI::Range(1, 100));
    app.add_option("--threads", threads, "worker threads (0 = automatic)");
    CLI11_PARSE(app, argc, argv);
    if (threads > 0) set_threads(threads);
    std::printf("image %dx%d, %d thread(s), best of %d\n\n", size, size, thread_count(), reps);

    const ProjectionGeometry geom = ProjectionGeometry::for_image(size);
    Rng rng(1);
    std::vector<double> image(static_cast<size_t>(size) * size);
    for (auto& v : image) v = rng.uniform();
    std::vector<double> sino(static_cast<size_t>(geom.n_angles) * geom.n_bins);
    std::vector<double> sino_ref(sino.size()), img_out(image.size()), img_ref(image.size());

    const double fp_ser = time_ms([&] { ref::forward_project_serial(image, geom, sino_ref); }, reps);
    const double fp_par = time_ms([&] { forward_project(image, geom, sino); }, reps);
    report("forward projection", fp_ser, fp_par, max_abs_diff(sino, sino_ref));

    const double bp_ser = time_ms([&] { ref::back_project_serial(sino, geom, img_ref); }, reps);
    const double bp_par = time_ms([&] { back_project(sino, geom, img_out); }, reps);
    report("back projection", bp_ser, bp_par, max_abs_diff(img_out, img_ref));

    // frame-activity path: recursion-based integrator vs direct convolution
    const FrameSchedule schedule = FrameSchedule::from_pattern({{4, 0.5}, {4, 2.0}, {10, 5.0}});
    const FengCoefficients feng{851.1225, 21.8798, 20.8113, 4.133859, 0.01043449, 0.1190996};
    const InputFunction cp = InputFunction::feng(feng);
    const Tracer tracer{"fdg", 0.0063128, false};
    const FrameIntegrator fi(cp, tracer, schedule, 1.0 / 60.0);
    const KineticParams p{0.1, 0.12, 0.06, 0.006, 0.03};
    auto ws = fi.make_workspace();
    std::vector<double> frames(static_cast<size_t>(fi.n_frames()));
    const int evals = 10;

    const double tac_par = time_ms(
        [&] {
            for (int i = 0; i < evals; ++i) fi.frames_for(p, frames, ws);
        },
        reps);
    // the reference rebuilds C_T by O(n^2) convolution each evaluation
    const auto& t = fi.grid();
    const auto& cp_grid = fi.plasma();
    std::vector<double> ct_ref;
    const double tac_ser = time_ms(
        [&] {
            for (int i = 0; i < evals; ++i) {
                const double a = p.k2 + p.k3 + p.k4;
                const double d = std::sqrt(a * a - 4.0 * p.k2 * p.k4);
                const double l1 = (a + d) / 2.0, l2 = (a - d) / 2.0;
                const double c1 = l1 > l2 ? (p.K1 * (l1 - p.k3 - p.k4)) / (l1 - l2) : 0.0;
                const double c2 = l1 > l2 ? (p.K1 * (p.k3 + p.k4 - l2)) / (l1 - l2) : p.K1;
                ct_ref = ref::convolve_trapezoid(t, cp_grid, [&](double tau) {
                    return c1 * std::exp(-l1 * tau) + c2 * std::exp(-l2 * tau);
                });
            }
        },
        reps);
    double tac_diff = max_abs_diff(ws.ct, ct_ref);
    report("frame activity (x10)", tac_ser, tac_par, tac_diff);
    return 0;
}
