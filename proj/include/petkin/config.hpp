#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "petkin/types.hpp"

namespace petkin {

struct PhantomSettings {
    std::string kind = "brain-like";  // "brain-like" | "thorax-like"
    int n_rois = 5;
    double warp_amplitude = 1.0;  // pixels, smooth deformation of the label map
};

struct NoiseSettings {
    double level = 0.2;                    // higher = noisier (scales counts down)
    double base_counts_per_frame = 1.0e6;  // total counts at level 1
};

struct ReconSettings {
    int iterations = 6;
    int subsets = 5;
};

struct DatasetSettings {
    int n_train = 180;
    int n_test = 20;
};

struct FitSettings {
    double bounds_scale = 5.0;  // upper bounds = scale * max configured ROI mean
    int max_iterations = 100;
    double tolerance = 1e-12;
    double vb = 0.0;  // fixed blood volume fraction used when fitting
};

struct TrainSettings {
    int epochs = 300;
    int batch_size = 1;
    double learning_rate = 1e-4;
    int halve_every_epochs = 50;
    int blocks = 6;
    int subnet_hidden = 32;
    int subnet_layers = 4;
    double clamp_sigma = 2.0;
    int input_frames = 12;
    double lambda1 = 1.2, lambda2 = 1.0, lambda3 = 1.0;
    double aux_weight = 1.0;
    bool use_l2 = true, use_l3 = true, use_l4 = true;
    double fd_step_rel = 1e-4;
    uint64_t init_seed = 1;
};

struct ExperimentConfig {
    int schema = 1;
    std::string name;
    uint64_t seed = 1;
    int image_size = 128;
    double grid_dt_s = 1.0;
    PhantomSettings phantom;
    Tracer tracer;
    bool if_analytic = true;
    FengCoefficients feng;
    std::string input_function_file;  // set when the input function is sampled
    std::string whole_blood_file;     // optional separate whole-blood curve
    FrameSchedule schedule;
    std::vector<KineticParams> rois;  // per-ROI mean parameters
    double param_cv = 0.2;
    NoiseSettings noise;
    ReconSettings recon;
    DatasetSettings dataset;
    int fit_window_frames = 10;
    TrainSettings train;
    FitSettings fit;

    double dt_min() const { return grid_dt_s / 60.0; }
    /// Builds the input function; sampled-curve files are resolved
    /// relative to base_dir.
    InputFunction make_input_function(const std::string& base_dir) const;
};

/// Parses and validates; unknown keys anywhere are rejected so typos in
/// experiment files cannot be silently ignored. Throws ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& c);

} // namespace petkin
