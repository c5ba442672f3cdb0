#include "petkin/inn.hpp"

#include <cmath>
#include <cstring>

#include "petkin/arrayfile.hpp"
#include "petkin/errors.hpp"

namespace petkin {

// ---------------------------------------------------------------- Conv3x3

Conv3x3::Conv3x3(int in_ch, int out_ch)
    : weight(static_cast<size_t>(out_ch) * in_ch * 9, 0.0), bias(out_ch, 0.0),
      in_(in_ch), out_(out_ch) {}

void Conv3x3::init_random(Rng& rng) {
    const double scale = std::sqrt(2.0 / (9.0 * in_));
    for (auto& w : weight) w = scale * rng.gaussian();
    std::fill(bias.begin(), bias.end(), 0.0);
}

void Conv3x3::init_zero() {
    std::fill(weight.begin(), weight.end(), 0.0);
    std::fill(bias.begin(), bias.end(), 0.0);
}

void Conv3x3::forward(const Tensor3& x, Tensor3& y) const {
    if (x.c != in_) throw DataError("conv: input channel mismatch");
    if (y.c != out_ || y.h != x.h || y.w != x.w) y = Tensor3(out_, x.h, x.w);
    const int H = x.h, W = x.w;
#pragma omp parallel for schedule(static)
    for (int o = 0; o < out_; ++o) {
        double* yo = y.ch(o);
        for (int p = 0; p < H * W; ++p) yo[p] = bias[o];
        for (int i = 0; i < in_; ++i) {
            const double* xi = x.ch(i);
            const double* w = &weight[(static_cast<size_t>(o) * in_ + i) * 9];
            for (int yy = 0; yy < H; ++yy) {
                for (int xx = 0; xx < W; ++xx) {
                    double acc = 0.0;
                    for (int ky = 0; ky < 3; ++ky) {
                        const int sy = yy + ky - 1;
                        if (sy < 0 || sy >= H) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int sx = xx + kx - 1;
                            if (sx < 0 || sx >= W) continue;
                            acc += w[ky * 3 + kx] * xi[sy * W + sx];
                        }
                    }
                    yo[yy * W + xx] += acc;
                }
            }
        }
    }
}

void Conv3x3::backward(const Tensor3& x, const Tensor3& gy, Tensor3& gx,
                       std::span<double> gweight, std::span<double> gbias) const {
    const int H = x.h, W = x.w;
    if (gx.c != in_ || gx.h != H || gx.w != W) gx = Tensor3(in_, H, W);
    gx.zero();
    if (gweight.size() != weight.size() || gbias.size() != bias.size())
        throw DataError("conv backward: gradient buffer size mismatch");

    // input gradient: full correlation with the flipped kernel
#pragma omp parallel for schedule(static)
    for (int i = 0; i < in_; ++i) {
        double* gxi = gx.ch(i);
        for (int o = 0; o < out_; ++o) {
            const double* gyo = gy.ch(o);
            const double* w = &weight[(static_cast<size_t>(o) * in_ + i) * 9];
            for (int yy = 0; yy < H; ++yy) {
                for (int xx = 0; xx < W; ++xx) {
                    double acc = 0.0;
                    for (int ky = 0; ky < 3; ++ky) {
                        const int sy = yy - (ky - 1);
                        if (sy < 0 || sy >= H) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int sx = xx - (kx - 1);
                            if (sx < 0 || sx >= W) continue;
                            acc += w[ky * 3 + kx] * gyo[sy * W + sx];
                        }
                    }
                    gxi[yy * W + xx] += acc;
                }
            }
        }
    }

    // parameter gradients
#pragma omp parallel for schedule(static)
    for (int o = 0; o < out_; ++o) {
        const double* gyo = gy.ch(o);
        double bacc = 0.0;
        for (int p = 0; p < H * W; ++p) bacc += gyo[p];
        gbias[o] += bacc;
        for (int i = 0; i < in_; ++i) {
            const double* xi = x.ch(i);
            double* gw = &gweight[(static_cast<size_t>(o) * in_ + i) * 9];
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    double acc = 0.0;
                    for (int yy = 0; yy < H; ++yy) {
                        const int sy = yy + ky - 1;
                        if (sy < 0 || sy >= H) continue;
                        for (int xx = 0; xx < W; ++xx) {
                            const int sx = xx + kx - 1;
                            if (sx < 0 || sx >= W) continue;
                            acc += gyo[yy * W + xx] * xi[sy * W + sx];
                        }
                    }
                    gw[ky * 3 + kx] += acc;
                }
            }
        }
    }
}

// ----------------------------------------------------------------- Subnet

Subnet::Subnet(int in_ch, int out_ch, int hidden, int n_layers) {
    if (n_layers < 1) throw ConfigError("subnet needs at least one layer");
    layers.reserve(n_layers);
    for (int k = 0; k < n_layers; ++k) {
        const int ci = (k == 0) ? in_ch : hidden;
        const int co = (k == n_layers - 1) ? out_ch : hidden;
        layers.emplace_back(ci, co);
    }
}

void Subnet::init(Rng& rng) {
    for (size_t k = 0; k + 1 < layers.size(); ++k) layers[k].init_random(rng);
    layers.back().init_zero();
}

size_t Subnet::param_count() const {
    size_t n = 0;
    for (const auto& l : layers) n += l.param_count();
    return n;
}

void Subnet::forward(const Tensor3& x, Tensor3& y, Cache* cache) const {
    const int K = static_cast<int>(layers.size());
    if (cache) {
        cache->inputs.assign(K, {});
        cache->pre.assign(K, {});
    }
    Tensor3 cur = x, next;
    for (int k = 0; k < K; ++k) {
        if (cache) cache->inputs[k] = cur;
        layers[k].forward(cur, next);
        if (cache) cache->pre[k] = next;
        if (k + 1 < K)
            for (auto& v : next.v) v = v > 0.0 ? v : leak * v;
        cur = std::move(next);
        next = Tensor3();
    }
    y = std::move(cur);
}

void Subnet::backward(const Cache& cache, const Tensor3& gy, Tensor3& gx,
                      std::span<double> grads) const {
    const int K = static_cast<int>(layers.size());
    if (static_cast<int>(cache.inputs.size()) != K) throw DataError("subnet backward: empty cache");
    if (grads.size() != param_count()) throw DataError("subnet backward: grads size mismatch");

    // slice the flat grads into per-layer [weight, bias] views
    std::vector<size_t> off(K + 1, 0);
    for (int k = 0; k < K; ++k) off[k + 1] = off[k] + layers[k].param_count();

    Tensor3 g = gy, gprev;
    for (int k = K - 1; k >= 0; --k) {
        if (k + 1 < K) {  // undo the leaky rectifier of this layer's output
            const Tensor3& z = cache.pre[k];
            for (size_t i = 0; i < g.v.size(); ++i)
                if (z.v[i] <= 0.0) g.v[i] *= leak;
        }
        auto gw = grads.subspan(off[k], layers[k].weight.size());
        auto gb = grads.subspan(off[k] + layers[k].weight.size(), layers[k].bias.size());
        layers[k].backward(cache.inputs[k], g, gprev, gw, gb);
        g = std::move(gprev);
        gprev = Tensor3();
    }
    if (gx.c != g.c || gx.h != g.h || gx.w != g.w) gx = Tensor3(g.c, g.h, g.w);
    for (size_t i = 0; i < g.v.size(); ++i) gx.v[i] += g.v[i];
}

// ----------------------------------------------------------- CouplingLayer

CouplingLayer::CouplingLayer(int channels, int split, int hidden, int n_layers, double sigma)
    : r(channels - split, split, hidden, n_layers),
      s(split, channels - split, hidden, n_layers),
      t(split, channels - split, hidden, n_layers),
      D_(channels), d_(split), sigma_(sigma) {
    if (split < 1 || split >= channels) throw ConfigError("coupling split out of range");
    if (!(sigma > 0.0)) throw ConfigError("coupling sigma must be > 0");
}

void CouplingLayer::init(Rng& rng) {
    r.init(rng);
    s.init(rng);
    t.init(rng);
}

size_t CouplingLayer::param_count() const {
    return r.param_count() + s.param_count() + t.param_count();
}

namespace {
Tensor3 take_channels(const Tensor3& x, int from, int count) {
    Tensor3 out(count, x.h, x.w);
    std::memcpy(out.v.data(), x.ch(from), sizeof(double) * out.size());
    return out;
}

void put_channels(Tensor3& dst, int from, const Tensor3& src) {
    std::memcpy(dst.ch(from), src.v.data(), sizeof(double) * src.size());
}
} // namespace

void CouplingLayer::forward(const Tensor3& m, Tensor3& n, Cache* cache) const {
    if (m.c != D_) throw DataError("coupling forward: channel mismatch");
    Cache local;
    Cache& c = cache ? *cache : local;
    c.m1 = take_channels(m, 0, d_);
    c.m2 = take_channels(m, d_, D_ - d_);

    Tensor3 radd;
    r.forward(c.m2, radd, cache ? &c.rc : nullptr);
    c.n1 = c.m1;
    for (size_t i = 0; i < c.n1.v.size(); ++i) c.n1.v[i] += radd.v[i];

    s.forward(c.n1, c.z, cache ? &c.sc : nullptr);
    c.factor = c.z;
    for (auto& v : c.factor.v) v = std::exp(sigma_ * std::tanh(v / sigma_));

    Tensor3 tadd;
    t.forward(c.n1, tadd, cache ? &c.tc : nullptr);

    if (n.c != D_ || n.h != m.h || n.w != m.w) n = Tensor3(D_, m.h, m.w);
    put_channels(n, 0, c.n1);
    Tensor3 n2 = c.m2;
    for (size_t i = 0; i < n2.v.size(); ++i) n2.v[i] = n2.v[i] * c.factor.v[i] + tadd.v[i];
    put_channels(n, d_, n2);
}

void CouplingLayer::inverse(const Tensor3& n, Tensor3& m, Cache* cache) const {
    if (n.c != D_) throw DataError("coupling inverse: channel mismatch");
    Cache local;
    Cache& c = cache ? *cache : local;
    c.n1 = take_channels(n, 0, d_);
    Tensor3 n2 = take_channels(n, d_, D_ - d_);

    s.forward(c.n1, c.z, cache ? &c.sc : nullptr);
    c.factor = c.z;
    for (auto& v : c.factor.v) v = std::exp(sigma_ * std::tanh(v / sigma_));

    Tensor3 tadd;
    t.forward(c.n1, tadd, cache ? &c.tc : nullptr);

    c.m2 = n2;
    for (size_t i = 0; i < c.m2.v.size(); ++i) c.m2.v[i] = (n2.v[i] - tadd.v[i]) / c.factor.v[i];

    Tensor3 radd;
    r.forward(c.m2, radd, cache ? &c.rc : nullptr);
    c.m1 = c.n1;
    for (size_t i = 0; i < c.m1.v.size(); ++i) c.m1.v[i] -= radd.v[i];

    if (m.c != D_ || m.h != n.h || m.w != n.w) m = Tensor3(D_, n.h, n.w);
    put_channels(m, 0, c.m1);
    put_channels(m, d_, c.m2);
}

void CouplingLayer::backward_forward(const Cache& cache, const Tensor3& gn, Tensor3& gm,
                                     std::span<double> grads) const {
    const size_t nr = r.param_count(), ns = s.param_count(), nt = t.param_count();
    if (grads.size() != nr + ns + nt) throw DataError("coupling backward: grads size mismatch");
    auto gr = grads.subspan(0, nr);
    auto gs = grads.subspan(nr, ns);
    auto gt = grads.subspan(nr + ns, nt);

    const Tensor3 gn1 = take_channels(gn, 0, d_);
    const Tensor3 gn2 = take_channels(gn, d_, D_ - d_);

    // n2 = m2*factor + t(n1), factor = exp(sigma*tanh(z/sigma)), z = s(n1)
    Tensor3 g_n1(d_, gn.h, gn.w);
    t.backward(cache.tc, gn2, g_n1, gt);

    Tensor3 gz = gn2;
    for (size_t i = 0; i < gz.v.size(); ++i) {
        const double th = std::tanh(cache.z.v[i] / sigma_);
        gz.v[i] = gn2.v[i] * cache.m2.v[i] * cache.factor.v[i] * (1.0 - th * th);
    }
    s.backward(cache.sc, gz, g_n1, gs);

    for (size_t i = 0; i < g_n1.v.size(); ++i) g_n1.v[i] += gn1.v[i];

    Tensor3 g_m2 = gn2;
    for (size_t i = 0; i < g_m2.v.size(); ++i) g_m2.v[i] *= cache.factor.v[i];
    r.backward(cache.rc, g_n1, g_m2, gr);  // n1 = m1 + r(m2)

    if (gm.c != D_ || gm.h != gn.h || gm.w != gn.w) gm = Tensor3(D_, gn.h, gn.w);
    put_channels(gm, 0, g_n1);  // dm1 = dn1 total
    put_channels(gm, d_, g_m2);
}

void CouplingLayer::backward_inverse(const Cache& cache, const Tensor3& gm, Tensor3& gn,
                                     std::span<double> grads) const {
    const size_t nr = r.param_count(), ns = s.param_count(), nt = t.param_count();
    if (grads.size() != nr + ns + nt) throw DataError("coupling backward: grads size mismatch");
    auto gr = grads.subspan(0, nr);
    auto gs = grads.subspan(nr, ns);
    auto gt = grads.subspan(nr + ns, nt);

    const Tensor3 gm1 = take_channels(gm, 0, d_);
    const Tensor3 gm2 = take_channels(gm, d_, D_ - d_);

    // m1 = n1 - r(m2): the r path adds to the effective gradient on m2
    Tensor3 g_n1 = gm1;
    Tensor3 neg_gm1 = gm1;
    for (auto& v : neg_gm1.v) v = -v;
    Tensor3 g_m2 = gm2;
    r.backward(cache.rc, neg_gm1, g_m2, gr);

    // m2 = (n2 - t(n1)) / factor
    Tensor3 g_n2 = g_m2;
    for (size_t i = 0; i < g_n2.v.size(); ++i) g_n2.v[i] /= cache.factor.v[i];

    Tensor3 g_t = g_n2;
    for (auto& v : g_t.v) v = -v;
    t.backward(cache.tc, g_t, g_n1, gt);

    Tensor3 gz = g_m2;
    for (size_t i = 0; i < gz.v.size(); ++i) {
        const double th = std::tanh(cache.z.v[i] / sigma_);
        gz.v[i] = -g_m2.v[i] * cache.m2.v[i] * (1.0 - th * th);
    }
    s.backward(cache.sc, gz, g_n1, gs);

    if (gn.c != D_ || gn.h != gm.h || gn.w != gm.w) gn = Tensor3(D_, gm.h, gm.w);
    put_channels(gn, 0, g_n1);
    put_channels(gn, d_, g_n2);
}

// ------------------------------------------------------------ MixingLayer

namespace {
// Gauss-Jordan with partial pivoting; returns det, inverse in inv.
double invert_matrix(std::vector<double> a, int n, std::vector<double>& inv) {
    inv.assign(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) inv[static_cast<size_t>(i) * n + i] = 1.0;
    double det = 1.0;
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int rr = col + 1; rr < n; ++rr)
            if (std::fabs(a[static_cast<size_t>(rr) * n + col]) >
                std::fabs(a[static_cast<size_t>(piv) * n + col]))
                piv = rr;
        if (piv != col) {
            for (int j = 0; j < n; ++j) {
                std::swap(a[static_cast<size_t>(piv) * n + j], a[static_cast<size_t>(col) * n + j]);
                std::swap(inv[static_cast<size_t>(piv) * n + j], inv[static_cast<size_t>(col) * n + j]);
            }
            det = -det;
        }
        const double p = a[static_cast<size_t>(col) * n + col];
        det *= p;
        if (p == 0.0) return 0.0;
        const double ip = 1.0 / p;
        for (int j = 0; j < n; ++j) {
            a[static_cast<size_t>(col) * n + j] *= ip;
            inv[static_cast<size_t>(col) * n + j] *= ip;
        }
        for (int rr = 0; rr < n; ++rr) {
            if (rr == col) continue;
            const double f = a[static_cast<size_t>(rr) * n + col];
            if (f == 0.0) continue;
            for (int j = 0; j < n; ++j) {
                a[static_cast<size_t>(rr) * n + j] -= f * a[static_cast<size_t>(col) * n + j];
                inv[static_cast<size_t>(rr) * n + j] -= f * inv[static_cast<size_t>(col) * n + j];
            }
        }
    }
    return det;
}
} // namespace

MixingLayer::MixingLayer(std::vector<double> w, int channels) : C_(channels), w_(std::move(w)) {
    if (w_.size() != static_cast<size_t>(C_) * C_) throw ConfigError("mixing: matrix size mismatch");
    const double det = invert_matrix(w_, C_, winv_);
    if (std::fabs(det) < 1e-8) throw ConfigError("mixing: near-singular matrix rejected");
    // verify W * W^-1 = I to the stored-inverse guarantee
    double worst = 0.0;
    for (int i = 0; i < C_; ++i)
        for (int j = 0; j < C_; ++j) {
            double acc = 0.0;
            for (int k = 0; k < C_; ++k)
                acc += w_[static_cast<size_t>(i) * C_ + k] * winv_[static_cast<size_t>(k) * C_ + j];
            worst = std::max(worst, std::fabs(acc - (i == j ? 1.0 : 0.0)));
        }
    if (worst > 1e-10) throw ConfigError("mixing: inverse validation failed");
}

MixingLayer MixingLayer::orthogonal(int channels, Rng& rng) {
    // QR of a gaussian matrix via Householder reflections; Q is orthogonal
    const int n = channels;
    std::vector<double> a(static_cast<size_t>(n) * n);
    for (auto& v : a) v = rng.gaussian();
    std::vector<double> q(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) q[static_cast<size_t>(i) * n + i] = 1.0;

    for (int col = 0; col < n - 1; ++col) {
        double norm = 0.0;
        for (int i = col; i < n; ++i) norm += a[static_cast<size_t>(i) * n + col] * a[static_cast<size_t>(i) * n + col];
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        std::vector<double> v(n, 0.0);
        const double a0 = a[static_cast<size_t>(col) * n + col];
        const double alpha = a0 >= 0.0 ? -norm : norm;
        v[col] = a0 - alpha;
        for (int i = col + 1; i < n; ++i) v[i] = a[static_cast<size_t>(i) * n + col];
        double vn = 0.0;
        for (int i = col; i < n; ++i) vn += v[i] * v[i];
        if (vn == 0.0) continue;
        // A <- (I - 2vv^T/v^Tv) A ;  Q <- Q (I - 2vv^T/v^Tv)
        for (int j = 0; j < n; ++j) {
            double dot = 0.0;
            for (int i = col; i < n; ++i) dot += v[i] * a[static_cast<size_t>(i) * n + j];
            const double f = 2.0 * dot / vn;
            for (int i = col; i < n; ++i) a[static_cast<size_t>(i) * n + j] -= f * v[i];
        }
        for (int i = 0; i < n; ++i) {
            double dot = 0.0;
            for (int j = col; j < n; ++j) dot += q[static_cast<size_t>(i) * n + j] * v[j];
            const double f = 2.0 * dot / vn;
            for (int j = col; j < n; ++j) q[static_cast<size_t>(i) * n + j] -= f * v[j];
        }
    }
    return MixingLayer(std::move(q), n);
}

void MixingLayer::forward(const Tensor3& x, Tensor3& y) const {
    if (x.c != C_) throw DataError("mixing forward: channel mismatch");
    if (y.c != C_ || y.h != x.h || y.w != x.w) y = Tensor3(C_, x.h, x.w);
    const size_t np = x.plane();
#pragma omp parallel for schedule(static)
    for (int o = 0; o < C_; ++o) {
        double* yo = y.ch(o);
        std::fill(yo, yo + np, 0.0);
        for (int i = 0; i < C_; ++i) {
            const double wij = w_[static_cast<size_t>(o) * C_ + i];
            if (wij == 0.0) continue;
            const double* xi = x.ch(i);
            for (size_t p = 0; p < np; ++p) yo[p] += wij * xi[p];
        }
    }
}

void MixingLayer::inverse(const Tensor3& y, Tensor3& x) const {
    if (y.c != C_) throw DataError("mixing inverse: channel mismatch");
    if (x.c != C_ || x.h != y.h || x.w != y.w) x = Tensor3(C_, y.h, y.w);
    const size_t np = y.plane();
#pragma omp parallel for schedule(static)
    for (int o = 0; o < C_; ++o) {
        double* xo = x.ch(o);
        std::fill(xo, xo + np, 0.0);
        for (int i = 0; i < C_; ++i) {
            const double wij = winv_[static_cast<size_t>(o) * C_ + i];
            if (wij == 0.0) continue;
            const double* yi = y.ch(i);
            for (size_t p = 0; p < np; ++p) xo[p] += wij * yi[p];
        }
    }
}

void MixingLayer::backward_forward(const Tensor3& x, const Tensor3& gy, Tensor3& gx,
                                   std::span<double> gw) const {
    if (gw.size() != w_.size()) throw DataError("mixing backward: gw size mismatch");
    if (gx.c != C_ || gx.h != x.h || gx.w != x.w) gx = Tensor3(C_, x.h, x.w);
    const size_t np = x.plane();
    // gx = W^T gy
#pragma omp parallel for schedule(static)
    for (int i = 0; i < C_; ++i) {
        double* gxi = gx.ch(i);
        std::fill(gxi, gxi + np, 0.0);
        for (int o = 0; o < C_; ++o) {
            const double wij = w_[static_cast<size_t>(o) * C_ + i];
            if (wij == 0.0) continue;
            const double* gyo = gy.ch(o);
            for (size_t p = 0; p < np; ++p) gxi[p] += wij * gyo[p];
        }
    }
    // gW[o][i] = sum_p gy[o][p] x[i][p]
    for (int o = 0; o < C_; ++o)
        for (int i = 0; i < C_; ++i) {
            const double* gyo = gy.ch(o);
            const double* xi = x.ch(i);
            double acc = 0.0;
            for (size_t p = 0; p < np; ++p) acc += gyo[p] * xi[p];
            gw[static_cast<size_t>(o) * C_ + i] += acc;
        }
}

void MixingLayer::backward_inverse(const Tensor3& y, const Tensor3& gx, Tensor3& gy,
                                   std::span<double> gw) const {
    if (gw.size() != w_.size()) throw DataError("mixing backward: gw size mismatch");
    if (gy.c != C_ || gy.h != y.h || gy.w != y.w) gy = Tensor3(C_, y.h, y.w);
    const size_t np = y.plane();
    // x = A y with A = W^-1:  gy = A^T gx
#pragma omp parallel for schedule(static)
    for (int i = 0; i < C_; ++i) {
        double* gyi = gy.ch(i);
        std::fill(gyi, gyi + np, 0.0);
        for (int o = 0; o < C_; ++o) {
            const double aij = winv_[static_cast<size_t>(o) * C_ + i];
            if (aij == 0.0) continue;
            const double* gxo = gx.ch(o);
            for (size_t p = 0; p < np; ++p) gyi[p] += aij * gxo[p];
        }
    }
    // dL/dA[o][i] = sum_p gx[o][p] y[i][p];  dL/dW = -A^T (dL/dA) A^T
    std::vector<double> ga(static_cast<size_t>(C_) * C_, 0.0);
    for (int o = 0; o < C_; ++o)
        for (int i = 0; i < C_; ++i) {
            const double* gxo = gx.ch(o);
            const double* yi = y.ch(i);
            double acc = 0.0;
            for (size_t p = 0; p < np; ++p) acc += gxo[p] * yi[p];
            ga[static_cast<size_t>(o) * C_ + i] = acc;
        }
    for (int a = 0; a < C_; ++a)
        for (int b = 0; b < C_; ++b) {
            double acc = 0.0;
            for (int o = 0; o < C_; ++o)
                for (int i = 0; i < C_; ++i)
                    acc += winv_[static_cast<size_t>(o) * C_ + a] * ga[static_cast<size_t>(o) * C_ + i] *
                           winv_[static_cast<size_t>(b) * C_ + i];
            gw[static_cast<size_t>(a) * C_ + b] -= acc;
        }
}

// ------------------------------------------------------------- InnNetwork

void InnSpec::validate() const {
    if (channels < 2) throw ConfigError("network needs at least 2 channels");
    if (blocks < 0) throw ConfigError("negative block count");
    if (hidden < 1 || subnet_layers < 1) throw ConfigError("bad subnet size");
    if (!(sigma > 0.0)) throw ConfigError("sigma must be > 0");
    if (designated < 1 || designated > channels) throw ConfigError("bad designated channel count");
}

InnNetwork::InnNetwork(const InnSpec& spec, uint64_t init_seed) : spec_(spec) {
    spec_.validate();
    Rng rng = Rng::derive(init_seed, 0x1aa);
    for (int b = 0; b < spec_.blocks; ++b) {
        mixings.push_back(MixingLayer::orthogonal(spec_.channels, rng));
        couplings.emplace_back(spec_.channels, spec_.split(), spec_.hidden, spec_.subnet_layers,
                               spec_.sigma);
        couplings.back().init(rng);
    }
}

size_t InnNetwork::param_count() const {
    size_t n = 0;
    for (const auto& m : mixings) n += static_cast<size_t>(m.channels()) * m.channels();
    for (const auto& c : couplings) n += c.param_count();
    return n;
}

namespace {
void copy_subnet_params(const Subnet& s, std::span<double> out, size_t& off) {
    for (const auto& l : s.layers) {
        std::copy(l.weight.begin(), l.weight.end(), out.begin() + off);
        off += l.weight.size();
        std::copy(l.bias.begin(), l.bias.end(), out.begin() + off);
        off += l.bias.size();
    }
}

void load_subnet_params(Subnet& s, std::span<const double> in, size_t& off) {
    for (auto& l : s.layers) {
        std::copy(in.begin() + off, in.begin() + off + l.weight.size(), l.weight.begin());
        off += l.weight.size();
        std::copy(in.begin() + off, in.begin() + off + l.bias.size(), l.bias.begin());
        off += l.bias.size();
    }
}
} // namespace

void InnNetwork::get_params(std::span<double> out) const {
    if (out.size() != param_count()) throw DataError("get_params: size mismatch");
    size_t off = 0;
    for (int b = 0; b < spec_.blocks; ++b) {
        const auto& w = mixings[b].matrix();
        std::copy(w.begin(), w.end(), out.begin() + off);
        off += w.size();
        copy_subnet_params(couplings[b].r, out, off);
        copy_subnet_params(couplings[b].s, out, off);
        copy_subnet_params(couplings[b].t, out, off);
    }
}

void InnNetwork::set_params(std::span<const double> in) {
    if (in.size() != param_count()) throw DataError("set_params: size mismatch");
    size_t off = 0;
    const size_t wsz = static_cast<size_t>(spec_.channels) * spec_.channels;
    for (int b = 0; b < spec_.blocks; ++b) {
        std::vector<double> w(in.begin() + off, in.begin() + off + wsz);
        off += wsz;
        mixings[b] = MixingLayer(std::move(w), spec_.channels);
        load_subnet_params(couplings[b].r, in, off);
        load_subnet_params(couplings[b].s, in, off);
        load_subnet_params(couplings[b].t, in, off);
    }
    ++version_;
}

void InnNetwork::forward(const Tensor3& x, Tensor3& y, Cache* cache) const {
    if (x.c != spec_.channels) throw DataError("network forward: channel mismatch");
    if (cache) {
        cache->from_forward = true;
        cache->version = version_;
        cache->block_in.assign(spec_.blocks, {});
        cache->mixed.assign(spec_.blocks, {});
        cache->coupling.assign(spec_.blocks, {});
    }
    Tensor3 cur = x, tmp;
    for (int b = 0; b < spec_.blocks; ++b) {
        if (cache) cache->block_in[b] = cur;
        mixings[b].forward(cur, tmp);
        if (cache) cache->mixed[b] = tmp;
        couplings[b].forward(tmp, cur, cache ? &cache->coupling[b] : nullptr);
    }
    y = std::move(cur);
}

void InnNetwork::inverse(const Tensor3& y, Tensor3& x, Cache* cache) const {
    if (y.c != spec_.channels) throw DataError("network inverse: channel mismatch");
    if (cache) {
        cache->from_forward = false;
        cache->version = version_;
        cache->block_in.assign(spec_.blocks, {});
        cache->mixed.assign(spec_.blocks, {});
        cache->coupling.assign(spec_.blocks, {});
    }
    Tensor3 cur = y, tmp;
    for (int b = spec_.blocks - 1; b >= 0; --b) {
        couplings[b].inverse(cur, tmp, cache ? &cache->coupling[b] : nullptr);
        if (cache) cache->block_in[b] = tmp;  // input to this block's mixing inverse
        mixings[b].inverse(tmp, cur);
    }
    x = std::move(cur);
}

void InnNetwork::backward(const Cache& cache, const Tensor3& g_out, Tensor3& g_in,
                          std::span<double> param_grads) const {
    if (cache.version != version_)
        throw DataError("network backward: cache is stale (parameters changed)");
    if (param_grads.size() != param_count()) throw DataError("backward: grads size mismatch");
    if (static_cast<int>(cache.coupling.size()) != spec_.blocks)
        throw DataError("network backward: cache not filled");

    const size_t wsz = static_cast<size_t>(spec_.channels) * spec_.channels;
    std::vector<size_t> block_off(spec_.blocks + 1, 0);
    for (int b = 0; b < spec_.blocks; ++b)
        block_off[b + 1] = block_off[b] + wsz + couplings[b].param_count();

    Tensor3 g = g_out, g2;
    if (cache.from_forward) {
        for (int b = spec_.blocks - 1; b >= 0; --b) {
            auto gw = param_grads.subspan(block_off[b], wsz);
            auto gc = param_grads.subspan(block_off[b] + wsz, couplings[b].param_count());
            couplings[b].backward_forward(cache.coupling[b], g, g2, gc);
            mixings[b].backward_forward(cache.block_in[b], g2, g, gw);
        }
    } else {
        for (int b = 0; b < spec_.blocks; ++b) {
            auto gw = param_grads.subspan(block_off[b], wsz);
            auto gc = param_grads.subspan(block_off[b] + wsz, couplings[b].param_count());
            mixings[b].backward_inverse(cache.block_in[b], g, g2, gw);
            couplings[b].backward_inverse(cache.coupling[b], g2, g, gc);
        }
    }
    g_in = std::move(g);
}

void InnNetwork::save_checkpoint(const std::string& path, const nlohmann::json& extra_meta) const {
    std::vector<double> params(param_count());
    get_params(params);
    nlohmann::json meta{
        {"format", "petkin-inn-1"},
        {"channels", spec_.channels},
        {"blocks", spec_.blocks},
        {"hidden", spec_.hidden},
        {"subnet_layers", spec_.subnet_layers},
        {"sigma", spec_.sigma},
        {"designated", spec_.designated},
    };
    for (auto it = extra_meta.begin(); it != extra_meta.end(); ++it) meta[it.key()] = it.value();
    write_array(path, {static_cast<int64_t>(params.size())}, params, meta);
}

nlohmann::json InnNetwork::checkpoint_meta(const std::string& path) {
    return read_array(path).meta;
}

InnNetwork InnNetwork::load_checkpoint(const std::string& path) {
    const ArrayFile a = read_array(path);
    if (!a.meta.contains("format") || a.meta.at("format") != "petkin-inn-1")
        throw DataError("not a network checkpoint: " + path);
    InnSpec spec;
    spec.channels = a.meta.at("channels").get<int>();
    spec.blocks = a.meta.at("blocks").get<int>();
    spec.hidden = a.meta.at("hidden").get<int>();
    spec.subnet_layers = a.meta.at("subnet_layers").get<int>();
    spec.sigma = a.meta.at("sigma").get<double>();
    spec.designated = a.meta.at("designated").get<int>();
    InnNetwork net(spec, 0);
    const auto vals = to_doubles(a);
    net.set_params(vals);
    return net;
}

} // namespace petkin
