#include "petkin/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include "petkin/errors.hpp"
#include "petkin/io_util.hpp"

namespace petkin {

namespace fs = std::filesystem;

double loss_total(double l1, double l2, double l3, double l4, const TrainSettings& t) {
    return l1 + t.lambda1 * l2 + t.lambda2 * l3 + t.lambda3 * l4;
}

namespace {
double rate_of(const KineticParams& p, int j) {
    switch (j) {
        case 0: return p.K1;
        case 1: return p.k2;
        case 2: return p.k3;
        default: return p.k4;
    }
}

void set_rate(KineticParams& p, int j, double v) {
    switch (j) {
        case 0: p.K1 = v; break;
        case 1: p.k2 = v; break;
        case 2: p.k3 = v; break;
        default: p.k4 = v; break;
    }
}
} // namespace

TrainingObjective::TrainingObjective(const ExperimentConfig& cfg, const InputFunction& cp)
    : train_(cfg.train), schedule_(cfg.schedule), fit_vb_(cfg.fit.vb),
      ctx_(cp, cfg.tracer, cfg.schedule, cfg.fit_window_frames, cfg.dt_min()),
      mode_(cfg.tracer.reversible ? GraphicalMode::logan : GraphicalMode::patlak) {
    network_spec().validate();
    if (train_.input_frames > schedule_.n_frames())
        throw ConfigError("input_frames exceeds the frame schedule");
    if (train_.lambda1 < 0.0 || train_.lambda2 < 0.0 || train_.lambda3 < 0.0 ||
        train_.aux_weight < 0.0)
        throw ConfigError("loss weights must be nonnegative");
    if (!(train_.fd_step_rel > 0.0)) throw ConfigError("fd_step_rel must be > 0");
}

InnSpec TrainingObjective::network_spec() const {
    InnSpec spec;
    spec.channels = train_.input_frames;
    spec.blocks = train_.blocks;
    spec.hidden = train_.subnet_hidden;
    spec.subnet_layers = train_.subnet_layers;
    spec.sigma = train_.clamp_sigma;
    spec.designated = 4;
    return spec;
}

namespace {
// One physics evaluation with caller-owned scratch.
void physics_into(const GraphicalContext& ctx, GraphicalMode mode, const KineticParams& p,
                  FrameIntegrator::Workspace& ws, std::span<double> frames, double& slope,
                  double& intercept, bool& ok) {
    ctx.integrator().frames_for(p, frames, ws);
    LinearFitResult lr;
    const bool fit_ok = mode == GraphicalMode::logan ? ctx.logan_fit_dense(ws.ct, lr)
                                                     : ctx.patlak_fit_frames(frames, lr);
    slope = fit_ok ? lr.slope : 0.0;
    intercept = fit_ok ? lr.intercept : 0.0;
    ok = fit_ok;
}

// Sensitivity of frames/slope/intercept w.r.t. the four rate constants,
// written into caller-owned rows. Rates at 0 get zero columns (the clamp
// subgradient); elsewhere the step is one-sided if 0 would be crossed.
void sensitivity_into(const GraphicalContext& ctx, GraphicalMode mode, const KineticParams& p,
                      double fd_rel, FrameIntegrator::Workspace& ws,
                      std::span<double> base_frames, double& base_slope, double& base_intercept,
                      bool& base_ok, std::span<double> dframes /*4*F*/,
                      std::span<double> dslope /*4*/, std::span<double> dintercept /*4*/) {
    const int F = static_cast<int>(base_frames.size());
    physics_into(ctx, mode, p, ws, base_frames, base_slope, base_intercept, base_ok);
    std::fill(dframes.begin(), dframes.end(), 0.0);
    std::fill(dslope.begin(), dslope.end(), 0.0);
    std::fill(dintercept.begin(), dintercept.end(), 0.0);

    std::vector<double> fu(F), fd(F);
    for (int j = 0; j < 4; ++j) {
        const double v = rate_of(p, j);
        if (v <= 0.0) continue;
        const double h = fd_rel * std::max(v, 1e-3);
        const double up = v + h;
        const double dn = std::max(v - h, 0.0);
        KineticParams pu = p, pd = p;
        set_rate(pu, j, up);
        set_rate(pd, j, dn);
        double su, iu, sd, id;
        bool oku, okd;
        physics_into(ctx, mode, pu, ws, fu, su, iu, oku);
        physics_into(ctx, mode, pd, ws, fd, sd, id, okd);
        const double denom = up - dn;
        for (int k = 0; k < F; ++k) dframes[static_cast<size_t>(j) * F + k] = (fu[k] - fd[k]) / denom;
        if (oku && okd && base_ok) {
            dslope[j] = (su - sd) / denom;
            dintercept[j] = (iu - id) / denom;
        }
    }
}
} // namespace

PhysicsPoint TrainingObjective::physics_point(const KineticParams& p) const {
    PhysicsPoint out;
    out.frames.resize(ctx_.integrator().n_frames());
    auto ws = ctx_.integrator().make_workspace();
    physics_into(ctx_, mode_, p, ws, out.frames, out.slope, out.intercept, out.ok);
    return out;
}

PhysicsSensitivity TrainingObjective::physics_sensitivity(const KineticParams& p,
                                                          double fd_rel) const {
    const int F = ctx_.integrator().n_frames();
    PhysicsSensitivity out;
    out.base.frames.resize(F);
    for (auto& d : out.dframes) d.resize(F);
    auto ws = ctx_.integrator().make_workspace();
    std::vector<double> df(static_cast<size_t>(4) * F);
    sensitivity_into(ctx_, mode_, p, fd_rel, ws, out.base.frames, out.base.slope,
                     out.base.intercept, out.base.ok, df, out.dslope, out.dintercept);
    for (int j = 0; j < 4; ++j)
        std::copy(df.begin() + static_cast<size_t>(j) * F, df.begin() + static_cast<size_t>(j + 1) * F,
                  out.dframes[j].begin());
    return out;
}

Tensor3 TrainingObjective::make_input(const DynamicImage& frames, double& scale) const {
    const int C = train_.input_frames;
    if (frames.n_frames() < C) throw DataError("fewer frames than the configured network input");
    double peak = 0.0;
    for (int k = 0; k < C; ++k)
        for (const double v : frames.frame(k)) peak = std::max(peak, v);
    scale = peak > 0.0 ? peak : 1.0;
    Tensor3 x(C, frames.height, frames.width);
    for (int k = 0; k < C; ++k) {
        const auto f = frames.frame(k);
        double* xk = x.ch(k);
        for (size_t i = 0; i < f.size(); ++i) xk[i] = f[i] / scale;
    }
    return x;
}

LossReport TrainingObjective::compute_losses(const InnNetwork& net, const Sample& s,
                                             std::span<double> param_grads) const {
    std::span<double> g = param_grads;
    return losses_impl(net, s, &g);
}

LossReport TrainingObjective::evaluate_losses(const InnNetwork& net, const Sample& s) const {
    return losses_impl(net, s, nullptr);
}

LossReport TrainingObjective::losses_impl(const InnNetwork& net, const Sample& s,
                                          std::span<double>* grads) const {
    const int C = train_.input_frames;
    const int W = s.noisy.width, H = s.noisy.height;
    const size_t npix = static_cast<size_t>(W) * H;
    const int F = ctx_.integrator().n_frames();
    if (s.params.width != W || s.params.height != H)
        throw DataError("sample parameter images do not match the frame size");
    if (grads && grads->size() != net.param_count())
        throw DataError("parameter gradient buffer size mismatch");

    double scale = 1.0;
    const Tensor3 x = make_input(s.noisy, scale);

    InnNetwork::Cache fcache;
    Tensor3 y;
    net.forward(x, y, grads ? &fcache : nullptr);

    const double* tgt[4] = {s.params.K1.data(), s.params.k2.data(), s.params.k3.data(),
                            s.params.k4.data()};

    LossReport rep;

    // L1: designated channels against parameter targets, auxiliaries to 0
    const double n_des = 4.0 * static_cast<double>(npix);
    const double n_aux = static_cast<double>(C - 4) * static_cast<double>(npix);
    double acc_des = 0.0, acc_aux = 0.0;
    for (int p = 0; p < 4; ++p) {
        const double* yp = y.ch(p);
        for (size_t i = 0; i < npix; ++i) {
            const double d = yp[i] - tgt[p][i];
            acc_des += d * d;
        }
    }
    for (int c = 4; c < C; ++c) {
        const double* yc = y.ch(c);
        for (size_t i = 0; i < npix; ++i) acc_aux += yc[i] * yc[i];
    }
    rep.l1 = acc_des / n_des + (C > 4 ? train_.aux_weight * acc_aux / n_aux : 0.0);

    // physics pass at the clamped predictions
    const bool need_physics = train_.use_l3 || train_.use_l4;
    std::vector<double> pframes, pslope, pinter, jframes, jslope, jinter;
    std::vector<long long> nclamp(need_physics ? npix : 0, 0);
    if (need_physics) {
        if (s.noisefree.n_frames() != F || s.noisefree.width != W || s.noisefree.height != H)
            throw DataError("sample dynamic target does not match the schedule");
        if (s.slope.v.size() != npix || s.intercept.v.size() != npix)
            throw DataError("sample graphical targets do not match the frame size");
        pframes.assign(npix * F, 0.0);
        pslope.assign(npix, 0.0);
        pinter.assign(npix, 0.0);
        if (grads) {
            jframes.assign(npix * 4 * F, 0.0);
            jslope.assign(npix * 4, 0.0);
            jinter.assign(npix * 4, 0.0);
        }
#pragma omp parallel
        {
            auto ws = ctx_.integrator().make_workspace();
#pragma omp for schedule(dynamic, 16)
            for (long long ii = 0; ii < static_cast<long long>(npix); ++ii) {
                const size_t i = static_cast<size_t>(ii);
                KineticParams kp;
                bool finite = true;
                for (int j = 0; j < 4; ++j) {
                    const double raw = y.ch(j)[i];
                    if (!std::isfinite(raw)) finite = false;
                    if (raw < 0.0) ++nclamp[i];
                    set_rate(kp, j, std::max(raw, 0.0));
                }
                kp.vb = s.params.vb[i];
                // non-finite predictions still poison the total through L1;
                // skip the physics evaluation rather than feed it NaNs
                if (!finite) continue;
                bool ok = false;
                if (grads) {
                    sensitivity_into(ctx_, mode_, kp, train_.fd_step_rel, ws,
                                     {pframes.data() + i * F, static_cast<size_t>(F)}, pslope[i],
                                     pinter[i], ok,
                                     {jframes.data() + i * 4 * F, static_cast<size_t>(4) * F},
                                     {jslope.data() + i * 4, 4}, {jinter.data() + i * 4, 4});
                } else {
                    physics_into(ctx_, mode_, kp, ws,
                                 {pframes.data() + i * F, static_cast<size_t>(F)}, pslope[i],
                                 pinter[i], ok);
                }
            }
        }
        for (const auto c : nclamp) rep.n_clamped += c;
    }

    // L3: rebuilt dynamic image vs the noise-free target, in the same
    // normalized intensity units as the network input
    if (train_.use_l3) {
        double acc = 0.0;
        for (int k = 0; k < F; ++k) {
            const auto nf = s.noisefree.frame(k);
            for (size_t i = 0; i < npix; ++i) {
                const double d = (pframes[i * F + k] - nf[i]) / scale;
                acc += d * d;
            }
        }
        rep.l3 = acc / (static_cast<double>(npix) * F);
    }

    // L4: graphical slope/intercept of the predictions vs targets
    if (train_.use_l4) {
        double acc = 0.0;
        for (size_t i = 0; i < npix; ++i) {
            const double ds = pslope[i] - s.slope.v[i];
            const double di = pinter[i] - s.intercept.v[i];
            acc += ds * ds + di * di;
        }
        rep.l4 = acc / (2.0 * static_cast<double>(npix));
    }

    if (grads) {
        Tensor3 gy(C, H, W);
        const double c_des = 2.0 / n_des;
        for (int p = 0; p < 4; ++p) {
            const double* yp = y.ch(p);
            double* gp = gy.ch(p);
            for (size_t i = 0; i < npix; ++i) gp[i] = c_des * (yp[i] - tgt[p][i]);
        }
        if (C > 4) {
            const double c_aux = 2.0 * train_.aux_weight / n_aux;
            for (int c = 4; c < C; ++c) {
                const double* yc = y.ch(c);
                double* gc = gy.ch(c);
                for (size_t i = 0; i < npix; ++i) gc[i] = c_aux * yc[i];
            }
        }
        if (train_.use_l3) {
            const double c3 =
                train_.lambda2 * 2.0 / (static_cast<double>(npix) * F * scale * scale);
            for (size_t i = 0; i < npix; ++i)
                for (int p = 0; p < 4; ++p) {
                    if (!(y.ch(p)[i] > 0.0)) continue;  // clamp subgradient
                    const double* jf = jframes.data() + (i * 4 + p) * F;
                    double acc = 0.0;
                    for (int k = 0; k < F; ++k)
                        acc += (pframes[i * F + k] - s.noisefree.frame(k)[i]) * jf[k];
                    gy.ch(p)[i] += c3 * acc;
                }
        }
        if (train_.use_l4) {
            const double c4 = train_.lambda3 / static_cast<double>(npix);  // 2 / (2 npix)
            for (size_t i = 0; i < npix; ++i) {
                const double rs = pslope[i] - s.slope.v[i];
                const double ri = pinter[i] - s.intercept.v[i];
                for (int p = 0; p < 4; ++p) {
                    if (!(y.ch(p)[i] > 0.0)) continue;
                    gy.ch(p)[i] += c4 * (rs * jslope[i * 4 + p] + ri * jinter[i * 4 + p]);
                }
            }
        }
        Tensor3 gin;
        net.backward(fcache, gy, gin, *grads);
    }

    // L2: inverse pass of the targets (auxiliaries zero) vs the input frames
    if (train_.use_l2) {
        Tensor3 z(C, H, W);
        for (int p = 0; p < 4; ++p) std::copy(tgt[p], tgt[p] + npix, z.ch(p));
        InnNetwork::Cache icache;
        Tensor3 xh;
        net.inverse(z, xh, grads ? &icache : nullptr);
        double acc = 0.0;
        for (size_t i = 0; i < x.size(); ++i) {
            const double d = xh.v[i] - x.v[i];
            acc += d * d;
        }
        rep.l2 = acc / static_cast<double>(x.size());
        if (grads) {
            Tensor3 gz(C, H, W);
            const double c2 = train_.lambda1 * 2.0 / static_cast<double>(x.size());
            for (size_t i = 0; i < x.size(); ++i) gz.v[i] = c2 * (xh.v[i] - x.v[i]);
            Tensor3 gin;
            net.backward(icache, gz, gin, *grads);
        }
    }

    rep.total = loss_total(rep.l1, rep.l2, rep.l3, rep.l4, train_);
    return rep;
}

TrainingObjective::Prediction TrainingObjective::predict(const InnNetwork& net,
                                                         const DynamicImage& early) const {
    if (net.spec().channels != train_.input_frames)
        throw DataError("checkpoint channel count does not match the configured input frames");
    Prediction out;
    const Tensor3 x = make_input(early, out.input_scale);
    Tensor3 y;
    net.forward(x, y);

    const int W = early.width, H = early.height;
    const size_t npix = static_cast<size_t>(W) * H;
    out.params = ParamImages(W, H);
    for (size_t i = 0; i < npix; ++i) {
        KineticParams kp;
        for (int j = 0; j < 4; ++j) {
            const double raw = y.ch(j)[i];
            if (!std::isfinite(raw)) throw DataError("network produced a non-finite parameter");
            if (raw < 0.0) ++out.n_clamped;
            set_rate(kp, j, std::max(raw, 0.0));
        }
        kp.vb = fit_vb_;
        out.params.set(i, kp);
    }

    out.dynamic = DynamicImage(W, H, schedule_);
    const int F = out.dynamic.n_frames();
#pragma omp parallel
    {
        auto ws = ctx_.integrator().make_workspace();
        std::vector<double> frames(F, 0.0);
#pragma omp for schedule(dynamic, 16)
        for (long long ii = 0; ii < static_cast<long long>(npix); ++ii) {
            const size_t i = static_cast<size_t>(ii);
            ctx_.integrator().frames_for(out.params.at(i), frames, ws);
            for (int k = 0; k < F; ++k) out.dynamic.frame(k)[i] = frames[k];
        }
    }
    return out;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& st,
               double lr) {
    if (params.size() != grads.size()) throw DataError("adam: size mismatch");
    if (st.m.size() != params.size()) {
        st.m.assign(params.size(), 0.0);
        st.v.assign(params.size(), 0.0);
        st.t = 0;
    }
    ++st.t;
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
    for (size_t i = 0; i < params.size(); ++i) {
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grads[i];
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grads[i] * grads[i];
        params[i] -= lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + st.eps);
    }
}

double step_size_for_epoch(const TrainSettings& t, int epoch) {
    const int halve = std::max(1, t.halve_every_epochs);
    return t.learning_rate * std::pow(0.5, (epoch - 1) / halve);
}

TrainResult train(const ExperimentConfig& cfg, const std::string& config_dir,
                  const std::string& dataset_dir, const std::string& out_dir,
                  const std::string& resume_checkpoint) {
    fs::create_directories(out_dir);
    const InputFunction cp = cfg.make_input_function(config_dir);
    const TrainingObjective obj(cfg, cp);

    const int total = count_samples(dataset_dir);
    if (total <= 0) throw DataError("no samples found in " + dataset_dir);
    const int n_train = std::min(std::max(cfg.dataset.n_train, 0), total);
    if (n_train == 0) throw DataError("training split is empty");

    std::vector<Sample> samples;
    samples.reserve(total);
    for (int i = 0; i < total; ++i)
        samples.push_back(load_sample((fs::path(dataset_dir) / sample_dir_name(i)).string()));

    InnNetwork net;
    int start_epoch = 1;
    if (resume_checkpoint.empty()) {
        net = InnNetwork(obj.network_spec(), cfg.train.init_seed);
    } else {
        net = InnNetwork::load_checkpoint(resume_checkpoint);
        const InnSpec want = obj.network_spec();
        const InnSpec& got = net.spec();
        if (got.channels != want.channels || got.blocks != want.blocks ||
            got.hidden != want.hidden || got.subnet_layers != want.subnet_layers ||
            got.designated != want.designated)
            throw DataError("resume checkpoint does not match the configured network");
        const auto meta = InnNetwork::checkpoint_meta(resume_checkpoint);
        if (meta.contains("epoch")) start_epoch = meta.at("epoch").get<int>() + 1;
    }

    TrainResult res;
    res.first_epoch = start_epoch;
    res.loss_csv = (fs::path(out_dir) / "loss.csv").string();
    res.final_checkpoint = (fs::path(out_dir) / "final.ckpt").string();
    CsvWriter csv(res.loss_csv, {"epoch", "step", "L1", "L2", "L3", "L4", "total", "step_size"},
                  !resume_checkpoint.empty());

    std::vector<double> theta(net.param_count());
    net.get_params(theta);
    std::vector<double> grads(net.param_count(), 0.0);
    AdamState adam;
    res.best_validation = std::numeric_limits<double>::infinity();

    const int last_epoch = start_epoch + cfg.train.epochs - 1;
    for (int epoch = start_epoch; epoch <= last_epoch; ++epoch) {
        const double lr = step_size_for_epoch(cfg.train, epoch);
        double epoch_sum = 0.0;
        for (int i = 0; i < n_train; ++i) {
            std::fill(grads.begin(), grads.end(), 0.0);
            const LossReport rep = obj.compute_losses(net, samples[i], grads);
            if (!std::isfinite(rep.total))
                throw TrainAbort("non-finite loss at sample " + std::to_string(i), i);
            res.n_clamped += rep.n_clamped;
            adam_step(theta, grads, adam, lr);
            net.set_params(theta);
            csv.row({std::to_string(epoch), std::to_string(i + 1), format_number(rep.l1),
                     format_number(rep.l2), format_number(rep.l3), format_number(rep.l4),
                     format_number(rep.total), format_number(lr)});
            epoch_sum += rep.total;
        }
        csv.flush();
        const double epoch_mean = epoch_sum / n_train;
        if (epoch == start_epoch) res.initial_total = epoch_mean;
        res.final_total = epoch_mean;
        res.last_epoch = epoch;

        if (n_train < total) {
            double vsum = 0.0;
            for (int i = n_train; i < total; ++i) vsum += obj.evaluate_losses(net, samples[i]).total;
            const double vmean = vsum / (total - n_train);
            if (vmean < res.best_validation) {
                res.best_validation = vmean;
                res.best_epoch = epoch;
                res.best_checkpoint = (fs::path(out_dir) / "best.ckpt").string();
                net.save_checkpoint(res.best_checkpoint,
                                    {{"epoch", epoch}, {"kind", "best"}, {"validation_loss", vmean}});
            }
        }
    }

    net.save_checkpoint(res.final_checkpoint, {{"epoch", res.last_epoch}, {"kind", "final"}});
    return res;
}

} // namespace petkin
