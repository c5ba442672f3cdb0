#pragma once

#include <atomic>
#include <cstdint>
#include <span>

#include "petkin/types.hpp"

namespace petkin {

struct KineticsDiagnostics {
    std::atomic<uint64_t> input_clamped{0};  // negative analytic C_p values clamped to 0
};
KineticsDiagnostics& kinetics_diagnostics();

/// Analytic bolus input:
///   C_p(t) = (A1*t - A2 - A3) e^{-l1 t} + A2 e^{-l2 t} + A3 e^{-l3 t}
/// evaluated so that C_p(0) is exactly 0; negative excursions (possible for
/// unusual coefficient sets) are clamped to 0 and counted.
double feng_input(const FengCoefficients& c, double t);

struct BetaRoots {
    double beta1 = 0.0;  // slow root (beta1 <= beta2)
    double beta2 = 0.0;
};

/// Roots of s^2 - (k2+k3+k4) s + k2 k4 = 0. For non-negative rates the
/// discriminant is always >= 0; complex roots raise std::domain_error.
BetaRoots beta_roots(const KineticParams& p);

/// Tissue concentration of the two-tissue model by convolving the
/// bi-exponential impulse response against C_p on the grid (trapezoidal
/// quadrature, O(n) exponential recursion). Degenerate beta1 == beta2 is
/// handled by the confluent limit kernel K1 [(k3+k4-beta) t + 1] e^{-beta t}.
TimeActivityCurve ct_analytic(const KineticParams& p, const InputFunction& cp,
                              const std::vector<double>& grid);

/// Same computation on pre-sampled plasma values; out must match grid size.
void ct_analytic_into(const KineticParams& p, std::span<const double> times,
                      std::span<const double> plasma, std::span<double> out);

struct CompartmentCurves {
    TimeActivityCurve c1, c2, ct;  // free, bound, total tissue
};

/// Reference ODE integration (classic fixed-step RK4) of
///   dC1/dt = K1 C_p - (k2+k3) C1 + k4 C2
///   dC2/dt = k3 C1 - k4 C2
/// Grid steps larger than 1 s (plus slack) are rejected: the one-step
/// scheme is only trusted at the default rate scales for fine steps.
CompartmentCurves compartment_ode_solve(const KineticParams& p, const InputFunction& cp,
                                        const std::vector<double>& grid);

/// Frame activity
///   x_k = integral over [t_s, t_e) of ((1-vb) C_T + vb C_B) e^{-lambda tau}
/// by trapezoidal quadrature on the union of both curves' samples plus the
/// frame boundaries. Units are activity * time, as integrated.
std::vector<double> frame_activity(const TimeActivityCurve& ct, const TimeActivityCurve& cb,
                                   const KineticParams& p, const Tracer& tracer,
                                   const FrameSchedule& schedule);

/// Precomputed pipeline for repeated params -> frame-activity evaluation on
/// a fixed uniform grid (the hot path for fitting and training). Frame
/// boundaries must land on grid points.
class FrameIntegrator {
public:
    FrameIntegrator(const InputFunction& cp, const Tracer& tracer,
                    const FrameSchedule& schedule, double dt_min);

    int n_frames() const { return static_cast<int>(frame_lo_.size()); }
    int n_grid() const { return static_cast<int>(grid_.size()); }
    const std::vector<double>& grid() const { return grid_; }
    const std::vector<double>& plasma() const { return plasma_; }
    const FrameSchedule& schedule() const { return schedule_; }
    const Tracer& tracer() const { return tracer_; }

    struct Workspace {
        std::vector<double> ct;
    };
    Workspace make_workspace() const { return Workspace{std::vector<double>(grid_.size(), 0.0)}; }

    /// frames_out[k] = x_k for params p; ws.ct is left holding C_T on the grid.
    void frames_for(const KineticParams& p, std::span<double> frames_out, Workspace& ws) const;

    /// Frame activities of the blood-only signal (the vb * C_B term with vb=1).
    const std::vector<double>& blood_frames() const { return blood_frames_; }

private:
    FrameSchedule schedule_;
    Tracer tracer_;
    std::vector<double> grid_;
    std::vector<double> plasma_;
    std::vector<double> decay_;             // e^{-lambda t_i}
    std::vector<int> frame_lo_, frame_hi_;  // inclusive grid index range per frame
    std::vector<double> blood_frames_;
    double dt_ = 0.0;

    friend class GraphicalContext;
};

} // namespace petkin
