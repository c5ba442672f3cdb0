// petkin: simulate | fit | train | predict | evaluate
// Exit codes: 0 success, 1 usage/configuration error, 2 runtime data error.
#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "petkin/arrayfile.hpp"
#include "petkin/config.hpp"
#include "petkin/dataset.hpp"
#include "petkin/errors.hpp"
#include "petkin/estimation.hpp"
#include "petkin/graphical.hpp"
#include "petkin/image.hpp"
#include "petkin/inn.hpp"
#include "petkin/io_util.hpp"
#include "petkin/kinetics.hpp"
#include "petkin/metrics.hpp"
#include "petkin/threading.hpp"
#include "petkin/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace petkin;

namespace {

std::string parent_dir(const std::string& path) {
    const auto p = fs::path(path).parent_path();
    return p.empty() ? std::string(".") : p.string();
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << "\n";
}

/// PSNR serialized with an explicit "inf" sentinel (JSON has no infinity).
json psnr_json(double v) { return std::isinf(v) ? json("inf") : json(v); }
std::string psnr_str(double v) { return std::isinf(v) ? "inf" : format_number(v); }

Image load_image2d(const std::string& path) {
    const ArrayFile a = read_array(path);
    if (a.dims.size() != 2) throw DataError(path + ": expected a 2-d array");
    Image img(static_cast<int>(a.dims[1]), static_cast<int>(a.dims[0]));
    const auto vals = to_doubles(a);
    img.v.assign(vals.begin(), vals.end());
    return img;
}

/// 3-d [frames, height, width] stack; the schedule is truncated when the
/// file carries only the first frames of the experiment (early-frame input).
DynamicImage load_dynamic(const std::string& path, const FrameSchedule& full) {
    const ArrayFile a = read_array(path);
    if (a.dims.size() != 3) throw DataError(path + ": expected a 3-d [frames, h, w] array");
    const int f = static_cast<int>(a.dims[0]);
    if (f < 1 || f > full.n_frames())
        throw DataError(path + ": frame count does not fit the configured schedule");
    FrameSchedule sched = full;
    sched.frames.resize(static_cast<size_t>(f));
    DynamicImage dyn(static_cast<int>(a.dims[2]), static_cast<int>(a.dims[1]), sched);
    const auto vals = to_doubles(a);
    dyn.v.assign(vals.begin(), vals.end());
    return dyn;
}

void save_image2d(const std::string& path, int width, int height, std::span<const double> v) {
    write_array(path, {height, width}, v);
}

void save_dynamic(const std::string& path, const DynamicImage& dyn) {
    write_array(path, {dyn.n_frames(), dyn.height, dyn.width}, dyn.v);
}

ExperimentConfig load_cfg(const std::string& config_path, const CLI::App* sub, uint64_t seed) {
    if (config_path.empty()) throw ConfigError("--config is required for this command");
    ExperimentConfig cfg = load_config(config_path);
    if (sub->count("--seed")) cfg.seed = seed;
    return cfg;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const ExperimentConfig& cfg, const std::string& config_dir,
                 const std::string& out, int n_samples) {
    const int n = n_samples >= 0 ? n_samples : cfg.dataset.n_train + cfg.dataset.n_test;
    build_dataset(cfg, config_dir, out, n, cfg.seed);
    const json meta{{"name", cfg.name},
                    {"seed", cfg.seed},
                    {"n_samples", n},
                    {"image_size", cfg.image_size},
                    {"n_frames", cfg.schedule.n_frames()},
                    {"config", config_to_json(cfg)}};
    write_json_file(out + "/meta.json", meta);
    std::cout << "wrote " << n << " sample(s) to " << out << "\n";
    return 0;
}

// --------------------------------------------------------------------- fit

int cmd_fit(const ExperimentConfig& cfg, const std::string& config_dir, const std::string& out,
            const std::string& input, const std::string& method) {
    const InputFunction cp = cfg.make_input_function(config_dir);
    const DynamicImage dyn = load_dynamic(input, cfg.schedule);
    fs::create_directories(out);
    json report{{"method", method},
                {"input", input},
                {"width", dyn.width},
                {"height", dyn.height},
                {"frames", dyn.n_frames()}};

    if (method == "nlls") {
        const FrameIntegrator fi(cp, cfg.tracer, dyn.schedule, cfg.dt_min());
        const FitConfig fc = FitConfig::from_settings(cfg.fit, cfg.rois);
        // voxels with no signal carry no kinetic information: skip them
        std::vector<uint8_t> mask(dyn.frame_size(), 0);
        size_t n_active = 0;
        for (size_t i = 0; i < mask.size(); ++i) {
            for (int k = 0; k < dyn.n_frames(); ++k)
                if (dyn.frame(k)[i] != 0.0) {
                    mask[i] = 1;
                    ++n_active;
                    break;
                }
        }
        const ImageFitResult r = fit_image(dyn, fi, fc, mask);
        save_image2d(out + "/param_k1.arr", dyn.width, dyn.height, r.params.K1);
        save_image2d(out + "/param_k2.arr", dyn.width, dyn.height, r.params.k2);
        save_image2d(out + "/param_k3.arr", dyn.width, dyn.height, r.params.k3);
        save_image2d(out + "/param_k4.arr", dyn.width, dyn.height, r.params.k4);
        save_image2d(out + "/residual.arr", dyn.width, dyn.height, r.residual.v);
        std::vector<double> conv(r.converged.begin(), r.converged.end());
        save_image2d(out + "/converged.arr", dyn.width, dyn.height, conv);
        report["n_active"] = n_active;
        report["n_unconverged"] = r.n_unconverged;
    } else {
        const GraphicalMode mode = method == "logan" ? GraphicalMode::logan : GraphicalMode::patlak;
        if (mode == GraphicalMode::logan && !cfg.tracer.reversible)
            std::cerr << "warning: Logan analysis of irreversible-tracer data (" << cfg.tracer.name
                      << "); the slope is not a distribution volume, proceeding anyway\n";
        if (mode == GraphicalMode::patlak && cfg.tracer.reversible)
            std::cerr << "warning: Patlak analysis of reversible-tracer data (" << cfg.tracer.name
                      << "); late frames violate the irreversible-uptake assumption\n";
        const GraphicalContext ctx(cp, cfg.tracer, dyn.schedule, cfg.fit_window_frames,
                                   cfg.dt_min());
        const ParametricImages r = parametric_images(dyn, ctx, mode);
        save_image2d(out + "/slope.arr", dyn.width, dyn.height, r.slope.v);
        save_image2d(out + "/intercept.arr", dyn.width, dyn.height, r.intercept.v);
        std::vector<double> ok(r.ok.begin(), r.ok.end());
        save_image2d(out + "/ok.arr", dyn.width, dyn.height, ok);
        report["n_failed"] = r.n_failed;
    }
    write_json_file(out + "/report.json", report);
    std::cout << "fit (" << method << ") written to " << out << "\n";
    return 0;
}

// ------------------------------------------------------------------- train

int cmd_train(const ExperimentConfig& cfg, const std::string& config_dir, const std::string& out,
              const std::string& dataset_dir, const std::string& resume) {
    const TrainResult r = train(cfg, config_dir, dataset_dir, out, resume);
    std::cout << "trained epochs " << r.first_epoch << ".." << r.last_epoch
              << "  mean total " << format_number(r.initial_total) << " -> "
              << format_number(r.final_total) << "\n";
    if (r.best_epoch > 0)
        std::cout << "best validation " << format_number(r.best_validation) << " at epoch "
                  << r.best_epoch << " (" << r.best_checkpoint << ")\n";
    std::cout << "final checkpoint: " << r.final_checkpoint << "\nloss log: " << r.loss_csv
              << "\n";
    return 0;
}

// ----------------------------------------------------------------- predict

int cmd_predict(const ExperimentConfig& cfg, const std::string& config_dir,
                const std::string& out, const std::string& checkpoint, const std::string& input) {
    const InputFunction cp = cfg.make_input_function(config_dir);
    const TrainingObjective obj(cfg, cp);
    const InnNetwork net = InnNetwork::load_checkpoint(checkpoint);
    const DynamicImage early = load_dynamic(input, cfg.schedule);
    const auto pred = obj.predict(net, early);

    fs::create_directories(out);
    save_image2d(out + "/param_k1.arr", early.width, early.height, pred.params.K1);
    save_image2d(out + "/param_k2.arr", early.width, early.height, pred.params.k2);
    save_image2d(out + "/param_k3.arr", early.width, early.height, pred.params.k3);
    save_image2d(out + "/param_k4.arr", early.width, early.height, pred.params.k4);
    save_dynamic(out + "/dynamic.arr", pred.dynamic);
    write_json_file(out + "/report.json",
                    json{{"checkpoint", checkpoint},
                         {"input", input},
                         {"input_scale", pred.input_scale},
                         {"n_clamped", pred.n_clamped},
                         {"frames", pred.dynamic.n_frames()},
                         {"fit_vb", cfg.fit.vb}});
    std::cout << "prediction written to " << out << " (" << pred.dynamic.n_frames()
              << " frames, " << pred.n_clamped << " clamped outputs)\n";
    return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvalSeries {
    int width = 0, height = 0, frames = 1;
    std::vector<double> v;  // frame-major

    std::span<const double> frame(int k) const {
        const size_t fs = static_cast<size_t>(width) * height;
        return {v.data() + fs * k, fs};
    }
    Image frame_image(int k) const {
        Image img(width, height);
        const auto f = frame(k);
        img.v.assign(f.begin(), f.end());
        return img;
    }
};

EvalSeries load_series(const std::string& path) {
    const ArrayFile a = read_array(path);
    EvalSeries s;
    if (a.dims.size() == 2) {
        s.width = static_cast<int>(a.dims[1]);
        s.height = static_cast<int>(a.dims[0]);
    } else if (a.dims.size() == 3) {
        s.frames = static_cast<int>(a.dims[0]);
        s.width = static_cast<int>(a.dims[2]);
        s.height = static_cast<int>(a.dims[1]);
    } else {
        throw DataError(path + ": expected a 2-d or 3-d array");
    }
    s.v = to_doubles(a);
    return s;
}

int cmd_evaluate(const std::string& out, const std::string& pred_path,
                 const std::string& target_path, const std::string& roi_path,
                 std::vector<int> preview, int profile_row, int profile_col,
                 bool centered_variance) {
    const EvalSeries pred = load_series(pred_path);
    const EvalSeries target = load_series(target_path);
    if (pred.width != target.width || pred.height != target.height ||
        pred.frames != target.frames)
        throw DataError("prediction and target shapes differ");
    fs::create_directories(out);

    const double tmax = *std::max_element(target.v.begin(), target.v.end());
    const double peak = tmax > 0.0 ? tmax : 1.0;

    // per-frame metrics (ssim at the shared target peak for comparability)
    json frames_json = json::array();
    CsvWriter csv(out + "/metrics.csv", {"frame", "mse", "psnr", "ssim"});
    double ssim_sum = 0.0;
    for (int k = 0; k < target.frames; ++k) {
        const double m = mse(target.frame(k), pred.frame(k));
        const double p = psnr(target.frame(k), pred.frame(k), peak);
        const double s = ssim(target.frame_image(k), pred.frame_image(k), peak);
        ssim_sum += s;
        frames_json.push_back({{"frame", k}, {"mse", m}, {"psnr", psnr_json(p)}, {"ssim", s}});
        csv.row({std::to_string(k), format_number(m), psnr_str(p), format_number(s)});
    }
    const double agg_mse = mse(target.v, pred.v);
    const double agg_psnr = psnr(target.v, pred.v, peak);
    const double agg_ssim = ssim_sum / target.frames;
    json report{{"pred", pred_path},
                {"target", target_path},
                {"peak", peak},
                {"aggregate",
                 {{"mse", agg_mse}, {"psnr", psnr_json(agg_psnr)}, {"ssim", agg_ssim}}},
                {"frames", frames_json}};

    // per-ROI bias/variance of every frame, label by label
    if (!roi_path.empty()) {
        const Image roi = load_image2d(roi_path);
        if (roi.width != target.width || roi.height != target.height)
            throw DataError("ROI mask shape differs from the images");
        std::set<int> labels;
        std::vector<int> lab(roi.v.size());
        for (size_t i = 0; i < roi.v.size(); ++i) {
            lab[i] = static_cast<int>(std::llround(roi.v[i]));
            if (lab[i] > 0) labels.insert(lab[i]);
        }
        json roi_json = json::array();
        std::unique_ptr<CsvWriter> roicsv;
        for (int k = 0; k < target.frames; ++k) {
            for (const int L : labels) {
                std::vector<int> mask(lab.size());
                for (size_t i = 0; i < lab.size(); ++i) mask[i] = lab[i] == L;
                RoiStats st;
                try {
                    st = roi_bias_variance(target.frame(k), pred.frame(k), mask);
                } catch (const DataError&) {
                    std::cerr << "warning: ROI " << L << " frame " << k
                              << " has no admissible voxels; omitted\n";
                    continue;
                }
                const double primary = centered_variance ? st.variance_centered : st.variance;
                roi_json.push_back({{"frame", k},
                                    {"label", L},
                                    {"n", st.n},
                                    {"n_excluded", st.n_excluded},
                                    {"bias", st.bias},
                                    {"variance", primary},
                                    {"variance_printed", st.variance},
                                    {"variance_centered", st.variance_centered}});
                if (!roicsv)
                    roicsv = std::make_unique<CsvWriter>(
                        out + "/roi.csv",
                        std::vector<std::string>{"frame", "label", "n", "n_excluded", "bias",
                                                 "variance", "variance_printed",
                                                 "variance_centered"});
                roicsv->row({std::to_string(k), std::to_string(L), std::to_string(st.n),
                             std::to_string(st.n_excluded), format_number(st.bias),
                             format_number(primary), format_number(st.variance),
                             format_number(st.variance_centered)});
            }
        }
        if (roi_json.empty())
            std::cerr << "warning: ROI mask has no admissible voxels; ROI stats omitted\n";
        else
            report["roi"] = roi_json;
    }

    // PGM previews of selected frames plus absolute-error maps
    if (preview.empty()) {
        preview = {0, target.frames / 2, target.frames - 1};
    }
    std::set<int> pset;
    for (const int k : preview) {
        if (k < 0 || k >= target.frames)
            throw ConfigError("--preview-frame " + std::to_string(k) + " out of range");
        pset.insert(k);
    }
    for (const int k : pset) {
        const auto tag = std::to_string(k);
        write_pgm(out + "/target_f" + tag + ".pgm", target.frame(k), target.width, target.height);
        write_pgm(out + "/pred_f" + tag + ".pgm", pred.frame(k), pred.width, pred.height);
        std::vector<double> err(target.frame(k).size());
        for (size_t i = 0; i < err.size(); ++i)
            err[i] = std::fabs(pred.frame(k)[i] - target.frame(k)[i]);
        write_pgm(out + "/error_f" + tag + ".pgm", err, target.width, target.height);
    }

    // line profiles through the previewed frames
    if (profile_row >= 0 || profile_col >= 0) {
        CsvWriter pcsv(out + "/profiles.csv",
                       {"frame", "axis", "index", "position", "target", "pred"});
        for (const int k : pset) {
            const Image ti = target.frame_image(k), pi = pred.frame_image(k);
            if (profile_row >= 0) {
                const auto t = line_profile(ti, ProfileAxis::Row, profile_row);
                const auto p = line_profile(pi, ProfileAxis::Row, profile_row);
                for (size_t i = 0; i < t.size(); ++i)
                    pcsv.row({std::to_string(k), "row", std::to_string(profile_row),
                              std::to_string(i), format_number(t[i]), format_number(p[i])});
            }
            if (profile_col >= 0) {
                const auto t = line_profile(ti, ProfileAxis::Column, profile_col);
                const auto p = line_profile(pi, ProfileAxis::Column, profile_col);
                for (size_t i = 0; i < t.size(); ++i)
                    pcsv.row({std::to_string(k), "column", std::to_string(profile_col),
                              std::to_string(i), format_number(t[i]), format_number(p[i])});
            }
        }
    }

    write_json_file(out + "/metrics.json", report);
    std::cout << "evaluate: mse " << format_number(agg_mse) << "  psnr " << psnr_str(agg_psnr)
              << " dB  ssim " << format_number(agg_ssim) << "\nreport: " << out
              << "/metrics.json\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dynamic PET kinetic modeling: simulation, fitting, training, prediction"};
    app.require_subcommand(1);

    std::string config_path, out_dir, input_path, dataset_dir, resume, checkpoint;
    std::string method = "nlls", pred_path, target_path, roi_path;
    int threads = 0, n_samples = -1, profile_row = -1, profile_col = -1;
    std::vector<int> preview;
    uint64_t seed = 0;
    bool centered_variance = false;

    auto add_common = [&](CLI::App* c, bool need_config) {
        auto* o = c->add_option("--config", config_path, "experiment configuration (JSON)");
        if (need_config) o->required();
        c->add_option("--threads", threads,
                      "worker threads (overrides PETKIN_THREADS; 0 = automatic)");
        c->add_option("--seed", seed, "override the configured master seed");
    };

    CLI::App* sim = app.add_subcommand("simulate", "generate a simulated dataset");
    add_common(sim, true);
    sim->add_option("--out", out_dir, "dataset directory")->capture_default_str();
    sim->add_option("--n-samples", n_samples, "sample count (default: n_train + n_test)");

    CLI::App* fit = app.add_subcommand("fit", "voxelwise kinetic or graphical fit");
    add_common(fit, true);
    fit->add_option("--out", out_dir, "output directory");
    fit->add_option("--input", input_path, "dynamic image ([frames, h, w] array file)")
        ->required();
    fit->add_option("--method", method, "nlls | logan | patlak")
        ->check(CLI::IsMember({"nlls", "logan", "patlak"}));

    CLI::App* trn = app.add_subcommand("train", "train the invertible network");
    add_common(trn, true);
    trn->add_option("--out", out_dir, "run directory (checkpoints, loss log)");
    trn->add_option("--dataset", dataset_dir, "dataset directory from `simulate`")->required();
    trn->add_option("--resume", resume, "checkpoint to continue from");

    CLI::App* prd = app.add_subcommand("predict", "parameter images from early frames");
    add_common(prd, true);
    prd->add_option("--out", out_dir, "output directory");
    prd->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    prd->add_option("--input", input_path, "early-frame stack ([frames, h, w] array file)")
        ->required();

    CLI::App* evl = app.add_subcommand("evaluate", "image metrics, ROI stats, previews");
    add_common(evl, false);
    evl->add_option("--out", out_dir, "report directory");
    evl->add_option("--pred", pred_path, "predicted image array")->required();
    evl->add_option("--target", target_path, "ground-truth image array")->required();
    evl->add_option("--roi", roi_path, "integer label map (2-d array file)");
    evl->add_option("--preview-frame", preview, "frame index to render (repeatable)");
    evl->add_option("--profile-row", profile_row, "emit a horizontal line profile");
    evl->add_option("--profile-col", profile_col, "emit a vertical line profile");
    evl->add_flag("--centered-variance", centered_variance,
                  "report the prediction-centered variance as the primary value");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    const CLI::App* sub = app.get_subcommands().front();
    try {
        if (sub->count("--threads")) set_threads(threads);
        const std::string config_dir = config_path.empty() ? "." : parent_dir(config_path);
        if (sub == sim) {
            const ExperimentConfig cfg = load_cfg(config_path, sub, seed);
            if (out_dir.empty()) out_dir = "dataset";
            return cmd_simulate(cfg, config_dir, out_dir, n_samples);
        }
        if (sub == fit) {
            const ExperimentConfig cfg = load_cfg(config_path, sub, seed);
            if (out_dir.empty()) out_dir = "fit_out";
            return cmd_fit(cfg, config_dir, out_dir, input_path, method);
        }
        if (sub == trn) {
            const ExperimentConfig cfg = load_cfg(config_path, sub, seed);
            if (out_dir.empty()) out_dir = "train_out";
            return cmd_train(cfg, config_dir, out_dir, dataset_dir, resume);
        }
        if (sub == prd) {
            const ExperimentConfig cfg = load_cfg(config_path, sub, seed);
            if (out_dir.empty()) out_dir = "predict_out";
            return cmd_predict(cfg, config_dir, out_dir, checkpoint, input_path);
        }
        if (out_dir.empty()) out_dir = "eval_out";
        return cmd_evaluate(out_dir, pred_path, target_path, roi_path, preview, profile_row,
                            profile_col, centered_variance);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const TrainAbort& e) {
        std::cerr << "training aborted: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
