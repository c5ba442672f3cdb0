#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "petkin/config.hpp"
#include "petkin/image.hpp"

namespace petkin {

/// One generated sample loaded back from disk.
struct Sample {
    DynamicImage noisy;      // OSEM reconstructions, frame-wise
    DynamicImage noisefree;  // ground-truth activity integrals
    ParamImages params;      // K1..k4 targets (vb lives in meta)
    Image slope, intercept;  // graphical-analysis targets
    LabelMap labels;
    nlohmann::json meta;
};

std::string sample_dir_name(int index);

/// Generates n_samples into out_dir/sample_%04d/. Per sample:
/// randomized ROI params -> noise-free dynamic image -> frame-wise
/// projection -> Poisson noise -> OSEM -> array files + meta.json.
/// Deterministic: identical (config, seed) give identical bytes.
void build_dataset(const ExperimentConfig& cfg, const std::string& config_dir,
                   const std::string& out_dir, int n_samples, uint64_t seed);

Sample load_sample(const std::string& dir);

/// Number of sample_%04d directories present (contiguous from 0).
int count_samples(const std::string& dataset_dir);

} // namespace petkin
