#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "petkin/config.hpp"
#include "petkin/image.hpp"
#include "petkin/kinetics.hpp"

namespace petkin {

/// Box-constrained nonlinear least-squares setup. Parameters with
/// lo == hi are pinned (not optimized); vb is pinned by default.
struct FitConfig {
    KineticParams init;
    KineticParams lo, hi;
    int max_iterations = 100;
    double tolerance = 1e-12;  // relative cost decrease
    double fd_step_rel = 1e-5; // central-difference step as fraction of scale

    /// Bounds [0, bounds_scale * max ROI mean] per rate, init at the
    /// midpoint, vb pinned at settings.vb.
    static FitConfig from_settings(const FitSettings& s, const std::vector<KineticParams>& roi_means);

    void validate() const;  // lo <= init <= hi, lo >= 0, tolerance > 0
};

struct FitResult {
    KineticParams params;
    double residual_norm = 0.0;
    bool converged = false;
    int iterations = 0;
};

/// Levenberg-Marquardt fit of the frame-activity model to one voxel's
/// frame values. Deterministic; never throws for non-convergence.
FitResult fit_voxel(std::span<const double> xk, const FrameIntegrator& fi, const FitConfig& cfg);

struct ImageFitResult {
    ParamImages params;
    Image residual;                  // residual norm per voxel
    std::vector<uint8_t> converged;  // 1 = converged
    int n_unconverged = 0;
};

/// Voxelwise fit over the mask (empty mask = every voxel); unmasked
/// voxels stay zero. Parallel over voxels; each fit is independent.
ImageFitResult fit_image(const DynamicImage& dyn, const FrameIntegrator& fi, const FitConfig& cfg,
                         std::span<const uint8_t> mask = {});

} // namespace petkin
