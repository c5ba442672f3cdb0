#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "petkin/rng.hpp"

namespace petkin {

/// Channel-major feature map [c][y][x].
struct Tensor3 {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor3() = default;
    Tensor3(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, 0.0) {}

    size_t plane() const { return static_cast<size_t>(h) * w; }
    size_t size() const { return v.size(); }
    double* ch(int i) { return v.data() + plane() * i; }
    const double* ch(int i) const { return v.data() + plane() * i; }
    void zero() { std::fill(v.begin(), v.end(), 0.0); }
};

/// 3x3 convolution, stride 1, zero padding 1 (shape preserving).
class Conv3x3 {
public:
    Conv3x3() = default;
    Conv3x3(int in_ch, int out_ch);

    int in_channels() const { return in_; }
    int out_channels() const { return out_; }
    size_t param_count() const { return weight.size() + bias.size(); }

    void init_random(Rng& rng);  // scaled-gaussian weights, zero bias
    void init_zero();

    void forward(const Tensor3& x, Tensor3& y) const;
    /// gx is overwritten; weight/bias gradients are accumulated.
    void backward(const Tensor3& x, const Tensor3& gy, Tensor3& gx,
                  std::span<double> gweight, std::span<double> gbias) const;

    std::vector<double> weight;  // [out][in][3][3]
    std::vector<double> bias;    // [out]

private:
    int in_ = 0, out_ = 0;
};

/// Small conv stack: hidden layers with leaky-rectifier (slope 0.01),
/// final layer linear. Zero-initializing the final layer makes the whole
/// subnet output zero, which is what gives couplings an identity start.
class Subnet {
public:
    Subnet() = default;
    Subnet(int in_ch, int out_ch, int hidden, int n_layers);

    void init(Rng& rng);  // random hidden layers, zero final layer
    size_t param_count() const;

    struct Cache {
        std::vector<Tensor3> inputs;  // input to each layer
        std::vector<Tensor3> pre;     // pre-activation output of each layer
    };

    void forward(const Tensor3& x, Tensor3& y, Cache* cache = nullptr) const;
    /// gx is accumulated (+=); param grads are accumulated into grads,
    /// laid out per layer as [weight..., bias...].
    void backward(const Cache& cache, const Tensor3& gy, Tensor3& gx,
                  std::span<double> grads) const;

    std::vector<Conv3x3> layers;
    double leak = 0.01;
};

/// Affine coupling with an extra additive update of the first half:
///   n1 = m1 + r(m2)
///   n2 = m2 * exp(clamp(s(n1))) + t(n1),  clamp(z) = sigma*tanh(z/sigma)
/// Inverse:
///   m2 = (n2 - t(n1)) * exp(-clamp(s(n1)));  m1 = n1 - r(m2)
class CouplingLayer {
public:
    CouplingLayer() = default;
    CouplingLayer(int channels, int split, int hidden, int n_layers, double sigma);

    void init(Rng& rng);
    size_t param_count() const;  // r then s then t

    struct Cache {
        Tensor3 m1, m2, n1, z, factor;  // factor = exp(clamp(z))
        Subnet::Cache rc, sc, tc;
    };

    void forward(const Tensor3& m, Tensor3& n, Cache* cache = nullptr) const;
    void inverse(const Tensor3& n, Tensor3& m, Cache* cache = nullptr) const;

    /// Reverse mode through the forward graph: gn -> gm.
    void backward_forward(const Cache& cache, const Tensor3& gn, Tensor3& gm,
                          std::span<double> grads) const;
    /// Reverse mode through the inverse graph: gm -> gn.
    void backward_inverse(const Cache& cache, const Tensor3& gm, Tensor3& gn,
                          std::span<double> grads) const;

    int channels() const { return D_; }
    int split() const { return d_; }
    double sigma() const { return sigma_; }

    Subnet r, s, t;

private:
    int D_ = 0, d_ = 0;
    double sigma_ = 2.0;
};

/// Per-pixel channel-space matmul y = W x with the exact inverse stored.
class MixingLayer {
public:
    MixingLayer() = default;
    /// Rejects |det W| < 1e-8 and inverses worse than 1e-10 in max norm.
    MixingLayer(std::vector<double> w, int channels);
    static MixingLayer orthogonal(int channels, Rng& rng);  // Householder QR

    int channels() const { return C_; }
    const std::vector<double>& matrix() const { return w_; }
    const std::vector<double>& inverse_matrix() const { return winv_; }

    void forward(const Tensor3& x, Tensor3& y) const;
    void inverse(const Tensor3& y, Tensor3& x) const;

    /// gx overwritten, gw accumulated (layout row-major C x C).
    void backward_forward(const Tensor3& x, const Tensor3& gy, Tensor3& gx,
                          std::span<double> gw) const;
    /// Through x = W^-1 y: gy overwritten, gw accumulated.
    void backward_inverse(const Tensor3& y, const Tensor3& gx, Tensor3& gy,
                          std::span<double> gw) const;

private:
    int C_ = 0;
    std::vector<double> w_, winv_;
};

struct InnSpec {
    int channels = 12;
    int blocks = 6;
    int hidden = 32;
    int subnet_layers = 4;
    double sigma = 2.0;
    int designated = 4;  // output channels 0..designated-1 carry (K1,k2,k3,k4)

    int split() const { return channels / 2; }
    void validate() const;
};

/// Stack of blocks, each mixing-then-coupling. Forward and inverse are
/// exact up to rounding; backward runs reverse mode through whichever
/// graph filled the cache.
class InnNetwork {
public:
    InnNetwork() = default;
    InnNetwork(const InnSpec& spec, uint64_t init_seed);

    const InnSpec& spec() const { return spec_; }
    size_t param_count() const;
    uint64_t param_version() const { return version_; }

    /// Flat layout per block: mixing W, then coupling subnets r, s, t.
    void get_params(std::span<double> out) const;
    void set_params(std::span<const double> in);  // revalidates mixing inverses

    struct Cache {
        bool from_forward = true;
        uint64_t version = ~0ull;
        std::vector<Tensor3> block_in;  // input to each block's mixing (forward)
                                        // or to each block's coupling inverse (inverse)
        std::vector<Tensor3> mixed;     // forward only: mixing output per block
        std::vector<CouplingLayer::Cache> coupling;
    };

    void forward(const Tensor3& x, Tensor3& y, Cache* cache = nullptr) const;
    void inverse(const Tensor3& y, Tensor3& x, Cache* cache = nullptr) const;

    /// g_out is the upstream gradient on the pass's output; g_in receives
    /// the gradient on its input. Param grads accumulate into param_grads.
    /// A cache from a different parameter version is rejected.
    void backward(const Cache& cache, const Tensor3& g_out, Tensor3& g_in,
                  std::span<double> param_grads) const;

    void save_checkpoint(const std::string& path, const nlohmann::json& extra_meta = {}) const;
    static InnNetwork load_checkpoint(const std::string& path);
    static nlohmann::json checkpoint_meta(const std::string& path);

    std::vector<MixingLayer> mixings;
    std::vector<CouplingLayer> couplings;

private:
    InnSpec spec_;
    uint64_t version_ = 0;
};

} // namespace petkin
