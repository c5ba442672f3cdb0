#pragma once

#include <span>

#include "petkin/image.hpp"
#include "petkin/kinetics.hpp"
#include "petkin/types.hpp"

namespace petkin {

struct LinearFitResult {
    double slope = 0.0;
    double intercept = 0.0;
};

/// Ordinary least squares y = slope * x + intercept. Throws FitError for
/// fewer than 2 points or when all x coincide.
LinearFitResult linear_fit(std::span<const double> x, std::span<const double> y);

/// Frame indices used for the linear portion of a graphical plot.
struct FitWindow {
    std::vector<int> frames;

    static FitWindow last_n(const FrameSchedule& s, int n = 10);
    void validate(const FrameSchedule& s) const;
};

/// Running trapezoidal integral of a curve; output shares the time grid
/// and starts at exactly 0.
TimeActivityCurve cumulative_integral(const TimeActivityCurve& c);

struct GraphicalPoints {
    std::vector<double> x, y;
    int n_dropped = 0;  // points lost to the small-denominator guard
};

/// Logan plot coordinates at the window frames' midpoints:
///   x = int_0^t C_p / C_T(t),  y = int_0^t C_T / C_T(t),
/// so the late-time slope estimates the total distribution volume
/// (K1/k2)(1 + k3/k4). Points whose tissue denominator falls below 1e-9
/// of the curve peak are dropped; fewer than 2 survivors raises FitError.
GraphicalPoints logan_points(const TimeActivityCurve& ct, const TimeActivityCurve& cp,
                             const FitWindow& w, const FrameSchedule& sched);

/// Patlak plot coordinates from a tissue concentration curve:
///   x = int_0^t C_p / C_p(t),  y = C_tissue(t) / C_p(t).
GraphicalPoints patlak_points(const TimeActivityCurve& tissue, const TimeActivityCurve& cp,
                              const FitWindow& w, const FrameSchedule& sched);

/// Patlak plot coordinates from frame activities: the tissue value at a
/// frame midpoint is the decay-corrected frame activity divided by the
/// frame duration.
GraphicalPoints patlak_points(std::span<const double> xk, const Tracer& tracer,
                              const TimeActivityCurve& cp, const FitWindow& w,
                              const FrameSchedule& sched);

enum class GraphicalMode { logan, patlak };

/// Shared per-study state for voxelwise graphical analysis: dense plasma
/// curve, plot x-coordinates, decay corrections, and denominator guards.
class GraphicalContext {
public:
    GraphicalContext(const InputFunction& cp, const Tracer& tracer,
                     const FrameSchedule& schedule, int window_frames, double dt_min);

    const FrameIntegrator& integrator() const { return fi_; }
    const FitWindow& window() const { return window_; }

    struct Workspace {
        FrameIntegrator::Workspace fi;
        std::vector<double> cum;
        std::vector<double> frames;
    };
    Workspace make_workspace() const;

    /// Logan fit of a tissue curve sampled on the integrator grid.
    bool logan_fit_dense(std::span<const double> ct_dense, LinearFitResult& out,
                         int* dropped = nullptr) const;

    /// Logan fit from frame activities (coarse tissue curve at midpoints).
    bool logan_fit_frames(std::span<const double> xk, LinearFitResult& out,
                          int* dropped = nullptr) const;

    /// Patlak fit from frame activities over the full schedule.
    bool patlak_fit_frames(std::span<const double> xk, LinearFitResult& out,
                           int* dropped = nullptr) const;

private:
    FrameIntegrator fi_;
    FitWindow window_;
    std::vector<double> mids_all_;     // all frame midpoints
    std::vector<double> corr_all_;     // decay correction / duration, all frames
    std::vector<double> x_;            // Patlak abscissa int Cp / Cp at window mids
    std::vector<double> cumcp_mid_;    // int_0^t Cp at window mids (Logan numerator)
    std::vector<double> cp_mid_;       // C_p at window mids
    std::vector<bool> cp_ok_;          // C_p denominator guard at window mids
    std::vector<int> mid_idx_;         // grid interval index of each window mid
    std::vector<double> mid_t_;        // window mid times
    double eps_cp_ = 0.0;
};

struct ParametricImages {
    Image slope, intercept;
    std::vector<uint8_t> ok;  // per-voxel fit success
    int n_failed = 0;
};

/// Voxelwise graphical analysis of a kinetic parameter map: synthesizes
/// each voxel's model curve and fits the configured plot over the window.
/// Failed voxels (degenerate denominators) get zeros and ok = 0.
ParametricImages parametric_images(const ParamImages& params, const GraphicalContext& ctx,
                                   GraphicalMode mode);

/// Voxelwise graphical analysis of measured frame data.
ParametricImages parametric_images(const DynamicImage& data, const GraphicalContext& ctx,
                                   GraphicalMode mode);

} // namespace petkin
