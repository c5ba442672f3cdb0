#pragma once

#include <cassert>
#include <span>
#include <vector>

#include "petkin/types.hpp"

namespace petkin {

struct Image {
    int width = 0, height = 0;
    std::vector<double> v;

    Image() = default;
    Image(int w, int h) : width(w), height(h), v(static_cast<size_t>(w) * h, 0.0) {}

    size_t size() const { return v.size(); }
    double& at(int x, int y) { return v[static_cast<size_t>(y) * width + x]; }
    double at(int x, int y) const { return v[static_cast<size_t>(y) * width + x]; }
    double max_value() const;
};

/// Frame-major stack of 2-D images with its acquisition schedule.
struct DynamicImage {
    int width = 0, height = 0;
    FrameSchedule schedule;
    std::vector<double> v;  // [frame][y][x]

    DynamicImage() = default;
    DynamicImage(int w, int h, FrameSchedule s)
        : width(w), height(h), schedule(std::move(s)),
          v(static_cast<size_t>(w) * h * schedule.frames.size(), 0.0) {}

    int n_frames() const { return schedule.n_frames(); }
    size_t frame_size() const { return static_cast<size_t>(width) * height; }
    std::span<double> frame(int k) { return {v.data() + frame_size() * k, frame_size()}; }
    std::span<const double> frame(int k) const { return {v.data() + frame_size() * k, frame_size()}; }
    double max_value() const;
};

/// Integer region labels; 0 is background, ROIs are 1..n contiguous.
struct LabelMap {
    int width = 0, height = 0;
    std::vector<int> v;

    LabelMap() = default;
    LabelMap(int w, int h) : width(w), height(h), v(static_cast<size_t>(w) * h, 0) {}

    int at(int x, int y) const { return v[static_cast<size_t>(y) * width + x]; }
    int& at(int x, int y) { return v[static_cast<size_t>(y) * width + x]; }
    int max_label() const;
    std::vector<int> label_counts() const;  // index 0 = background
};

/// Voxelwise kinetic parameters as five planes.
struct ParamImages {
    int width = 0, height = 0;
    std::vector<double> K1, k2, k3, k4, vb;

    ParamImages() = default;
    ParamImages(int w, int h)
        : width(w), height(h), K1(static_cast<size_t>(w) * h, 0.0), k2(K1), k3(K1), k4(K1), vb(K1) {}

    size_t size() const { return K1.size(); }
    KineticParams at(size_t i) const { return {K1[i], k2[i], k3[i], k4[i], vb[i]}; }
    void set(size_t i, const KineticParams& p) {
        K1[i] = p.K1; k2[i] = p.k2; k3[i] = p.k3; k4[i] = p.k4; vb[i] = p.vb;
    }
};

} // namespace petkin
