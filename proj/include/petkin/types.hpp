#pragma once

#include <string>
#include <utility>
#include <vector>

namespace petkin {

/// Radiotracer description. decay_constant is ln(2)/half-life in 1/min;
/// reversible=false means the tracer is analyzed with the Patlak plot
/// (and simulated with k4 = 0), reversible=true with the Logan plot.
struct Tracer {
    std::string name;
    double decay_constant = 0.0;
    bool reversible = false;
};

/// Two-tissue compartment model rates (1/min) plus blood volume fraction.
struct KineticParams {
    double K1 = 0.0;
    double k2 = 0.0;
    double k3 = 0.0;
    double k4 = 0.0;
    double vb = 0.0;
};

void validate_params(const KineticParams& p);  // throws std::invalid_argument

/// Contiguous acquisition frames [(t_start, t_end)] in minutes, first
/// frame starting at 0.
struct FrameSchedule {
    std::vector<std::pair<double, double>> frames;

    // pattern: list of (count, duration_min) runs, e.g. {{4,0.5},{4,2},{10,5}}
    static FrameSchedule from_pattern(const std::vector<std::pair<int, double>>& pattern);

    int n_frames() const { return static_cast<int>(frames.size()); }
    double end_time() const { return frames.empty() ? 0.0 : frames.back().second; }
    std::vector<double> midpoints() const;
    std::vector<double> durations() const;
    void validate() const;  // throws std::invalid_argument
};

/// Sampled curve on a strictly increasing time grid (minutes).
struct TimeActivityCurve {
    std::vector<double> times;
    std::vector<double> values;

    double interp(double t) const;  // linear; clamped to end values outside
    double peak() const;
    void validate() const;
};

struct FengCoefficients {
    double a1 = 0.0, a2 = 0.0, a3 = 0.0;  // amplitudes
    double l1 = 0.0, l2 = 0.0, l3 = 0.0;  // decay exponents, 1/min
};

/// Plasma input C_p(t), either the analytic three-exponential bolus form
/// or a sampled curve; optionally carries a distinct whole-blood curve
/// C_B(t) (defaults to C_p).
class InputFunction {
public:
    static InputFunction feng(const FengCoefficients& c);
    static InputFunction sampled(TimeActivityCurve curve);

    double plasma(double t) const;
    double whole_blood(double t) const;

    void set_whole_blood(TimeActivityCurve cb);
    bool analytic() const { return analytic_; }
    const FengCoefficients& coefficients() const { return coef_; }

    std::vector<double> sample_plasma(const std::vector<double>& grid) const;
    std::vector<double> sample_blood(const std::vector<double>& grid) const;

    /// Latest time at which the curve is defined (+inf for analytic form).
    double support_end() const;

private:
    bool analytic_ = true;
    FengCoefficients coef_;
    TimeActivityCurve curve_;
    bool has_blood_ = false;
    TimeActivityCurve blood_;
};

/// Uniform grid 0, dt, 2*dt, ..., covering [0, t_end]; the last point is
/// t_end itself (t_end must be an integer multiple of dt within 1e-9).
std::vector<double> uniform_grid(double t_end, double dt);

} // namespace petkin
