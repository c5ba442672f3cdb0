#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "petkin/config.hpp"
#include "petkin/dataset.hpp"
#include "petkin/graphical.hpp"
#include "petkin/image.hpp"
#include "petkin/inn.hpp"
#include "petkin/kinetics.hpp"

namespace petkin {

struct LossReport {
    double l1 = 0.0, l2 = 0.0, l3 = 0.0, l4 = 0.0, total = 0.0;
    long long n_clamped = 0;  // negative predicted rates clamped for the physics pass
};

/// total = l1 + lambda1*l2 + lambda2*l3 + lambda3*l4 (disabled components
/// are reported as 0, so the identity holds for every logged step).
double loss_total(double l1, double l2, double l3, double l4, const TrainSettings& t);

/// What the kinetic model makes of one voxel's parameter vector: frame
/// activities over the full schedule plus the graphical slope/intercept.
struct PhysicsPoint {
    std::vector<double> frames;
    double slope = 0.0, intercept = 0.0;
    bool ok = false;  // graphical fit success
};

/// Central-difference sensitivities of the physics map w.r.t. (K1,k2,k3,k4);
/// the step is one-sided where the lower bound 0 would be crossed.
struct PhysicsSensitivity {
    PhysicsPoint base;
    std::array<std::vector<double>, 4> dframes;
    std::array<double, 4> dslope{}, dintercept{};
};

/// The multi-term objective for one experiment: couples the reversible
/// network to the frame-activity and graphical-analysis maps.
///   L1: forward pass, designated channels vs parameter targets plus the
///       auxiliary channels pulled to zero
///   L2: inverse pass of [targets; 0] vs the normalized early frames
///   L3: dynamic image rebuilt from predicted parameters vs the noise-free
///       target over the full schedule (in normalized intensity units)
///   L4: slope/intercept images of the predicted parameters vs targets
/// L3/L4 gradients reach the parameters through per-voxel finite-difference
/// sensitivities, then flow through the network's reverse mode.
class TrainingObjective {
public:
    TrainingObjective(const ExperimentConfig& cfg, const InputFunction& cp);

    InnSpec network_spec() const;
    int input_frames() const { return train_.input_frames; }
    GraphicalMode mode() const { return mode_; }
    const GraphicalContext& context() const { return ctx_; }

    PhysicsPoint physics_point(const KineticParams& p) const;
    PhysicsSensitivity physics_sensitivity(const KineticParams& p, double fd_rel) const;

    /// First input_frames frames as channels, divided by their global max
    /// (scale receives the divisor; 1 when the frames are non-positive).
    Tensor3 make_input(const DynamicImage& frames, double& scale) const;

    /// Losses and parameter gradients (accumulated into param_grads).
    LossReport compute_losses(const InnNetwork& net, const Sample& s,
                              std::span<double> param_grads) const;
    /// Loss values only (validation / probes).
    LossReport evaluate_losses(const InnNetwork& net, const Sample& s) const;

    struct Prediction {
        ParamImages params;    // clamped network outputs; vb = configured fit value
        DynamicImage dynamic;  // rebuilt over the full schedule
        long long n_clamped = 0;
        double input_scale = 1.0;
    };
    /// Early frames -> parameter images -> full dynamic sequence.
    Prediction predict(const InnNetwork& net, const DynamicImage& early) const;

private:
    LossReport losses_impl(const InnNetwork& net, const Sample& s,
                           std::span<double>* param_grads) const;

    TrainSettings train_;
    FrameSchedule schedule_;
    double fit_vb_ = 0.0;
    GraphicalContext ctx_;
    GraphicalMode mode_;
};

/// Adaptive-moment update state (decay 0.9/0.999, eps 1e-8).
struct AdamState {
    std::vector<double> m, v;
    long long t = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& st,
               double lr);

/// Step size for a 1-based epoch: halved every halve_every_epochs.
double step_size_for_epoch(const TrainSettings& t, int epoch);

struct TrainResult {
    int first_epoch = 1, last_epoch = 0;
    double initial_total = 0.0;  // mean total over the first epoch run
    double final_total = 0.0;    // mean total over the last epoch
    int best_epoch = 0;
    double best_validation = 0.0;
    long long n_clamped = 0;
    std::string final_checkpoint, best_checkpoint, loss_csv;
};

/// Sequential single-sample training over the first dataset.n_train samples;
/// the remainder of the dataset is the validation split. Writes
/// out_dir/loss.csv (one row per step: epoch, step, L1..L4, total,
/// step_size), out_dir/final.ckpt and out_dir/best.ckpt. A resume
/// checkpoint continues the epoch numbering and appends to the log.
TrainResult train(const ExperimentConfig& cfg, const std::string& config_dir,
                  const std::string& dataset_dir, const std::string& out_dir,
                  const std::string& resume_checkpoint = "");

} // namespace petkin
