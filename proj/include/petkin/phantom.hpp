#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "petkin/image.hpp"
#include "petkin/types.hpp"

namespace petkin {

/// Procedural 2-D phantom: nested/adjacent ellipses inside an elliptical
/// body mask, with seed-driven jitter of the ellipse placement and a
/// smooth seed-driven warp of the whole map. "brain-like" supports up to
/// 8 ROIs (default 5), "thorax-like" up to 5 (default 3). Labels are
/// contiguous 1..n_rois, each with at least one voxel (else DataError
/// after internal retries).
LabelMap make_phantom(const std::string& kind, int size, int n_rois, uint64_t seed,
                      double warp_amplitude = 1.0);

int default_roi_count(const std::string& kind);

/// Per-sample parameter draw: each rate from Normal(mean, cv*mean)
/// truncated at 0 by resampling; vb drawn the same way then clamped to
/// [0, 1]. A zero mean stays exactly zero.
std::vector<KineticParams> randomize_params(const std::vector<KineticParams>& means, double cv,
                                            uint64_t seed);

/// Noise-free dynamic image: every voxel of ROI r carries that ROI's
/// frame-activity vector (computed once per ROI), background is zero.
DynamicImage synthesize_dynamic(const LabelMap& map, const std::vector<KineticParams>& params,
                                const InputFunction& cp, const Tracer& tracer,
                                const FrameSchedule& schedule, double dt_min);

/// ROI values painted into per-voxel parameter planes (background zero).
ParamImages fill_param_images(const LabelMap& map, const std::vector<KineticParams>& params);

} // namespace petkin
