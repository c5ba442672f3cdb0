#include "petkin/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "petkin/arrayfile.hpp"
#include "petkin/errors.hpp"
#include "petkin/graphical.hpp"
#include "petkin/phantom.hpp"
#include "petkin/projection.hpp"
#include "petkin/rng.hpp"

namespace fs = std::filesystem;

namespace petkin {

std::string sample_dir_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%04d", index);
    return buf;
}

namespace {

// Disjoint per-sample seed chain; every consumer below derives from it
// so results do not depend on generation order or thread scheduling.
uint64_t sample_seed(uint64_t master, uint64_t index) {
    return splitmix64(splitmix64(master) ^ splitmix64(index + 0x5161ull));
}

void write_meta(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << '\n';
}

void generate_sample(const ExperimentConfig& cfg, const InputFunction& cp,
                     const ProjectionGeometry& geom, const GraphicalContext& ctx,
                     const std::string& dir, int index, uint64_t master) {
    const uint64_t s = sample_seed(master, static_cast<uint64_t>(index));

    const LabelMap labels = make_phantom(cfg.phantom.kind, cfg.image_size, cfg.phantom.n_rois,
                                         splitmix64(s + 1), cfg.phantom.warp_amplitude);
    const auto roi_params = randomize_params(cfg.rois, cfg.param_cv, splitmix64(s + 2));

    const DynamicImage clean =
        synthesize_dynamic(labels, roi_params, cp, cfg.tracer, cfg.schedule, cfg.dt_min());

    DynamicImage noisy(clean.width, clean.height, clean.schedule);
    std::vector<double> sino(geom.sino_size());
    for (int k = 0; k < clean.n_frames(); ++k) {
        forward_project(clean.frame(k), geom, sino);
        Rng frame_rng = Rng::derive(s, 3, static_cast<uint64_t>(k));
        add_poisson(sino, cfg.noise.level, cfg.noise.base_counts_per_frame, frame_rng);
        osem_reconstruct(sino, geom, {cfg.recon.iterations, cfg.recon.subsets}, noisy.frame(k));
    }

    const ParamImages pimg = fill_param_images(labels, roi_params);
    const GraphicalMode mode = cfg.tracer.reversible ? GraphicalMode::logan : GraphicalMode::patlak;
    const ParametricImages targets = parametric_images(pimg, ctx, mode);

    fs::create_directories(dir);
    const std::vector<int64_t> dyn_dims{clean.n_frames(), clean.height, clean.width};
    const std::vector<int64_t> img_dims{clean.height, clean.width};
    write_array(dir + "/noisy.arr", dyn_dims, noisy.v);
    write_array(dir + "/noisefree.arr", dyn_dims, clean.v);
    write_array(dir + "/param_k1.arr", img_dims, pimg.K1);
    write_array(dir + "/param_k2.arr", img_dims, pimg.k2);
    write_array(dir + "/param_k3.arr", img_dims, pimg.k3);
    write_array(dir + "/param_k4.arr", img_dims, pimg.k4);
    write_array(dir + "/slope.arr", img_dims, targets.slope.v);
    write_array(dir + "/intercept.arr", img_dims, targets.intercept.v);

    nlohmann::json roi_json = nlohmann::json::array();
    for (const auto& p : roi_params)
        roi_json.push_back({{"K1", p.K1}, {"k2", p.k2}, {"k3", p.k3}, {"k4", p.k4}, {"vb", p.vb}});
    nlohmann::json meta{
        {"config", config_to_json(cfg)},
        {"index", index},
        {"master_seed", master},
        {"sample_seed", s},
        {"roi_params", roi_json},
        {"labels", labels.v},
        {"graphical_mode", mode == GraphicalMode::logan ? "logan" : "patlak"},
    };
    write_meta(dir + "/meta.json", meta);
}

} // namespace

void build_dataset(const ExperimentConfig& cfg, const std::string& config_dir,
                   const std::string& out_dir, int n_samples, uint64_t seed) {
    if (n_samples < 0) throw ConfigError("build_dataset: n_samples must be >= 0");
    fs::create_directories(out_dir);
    if (n_samples == 0) return;

    const InputFunction cp = cfg.make_input_function(config_dir);
    const ProjectionGeometry geom = ProjectionGeometry::for_image(cfg.image_size);
    const GraphicalContext ctx(cp, cfg.tracer, cfg.schedule, cfg.fit_window_frames, cfg.dt_min());

    std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n_samples; ++i) {
        try {
            generate_sample(cfg, cp, geom, ctx, out_dir + "/" + sample_dir_name(i), i, seed);
        } catch (...) {
#pragma omp critical
            if (!err) err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);
}

Sample load_sample(const std::string& dir) {
    Sample s;
    std::ifstream in(dir + "/meta.json", std::ios::binary);
    if (!in) throw DataError("missing meta.json in " + dir);
    in >> s.meta;
    const ExperimentConfig cfg = parse_config(s.meta.at("config"));

    auto read_dyn = [&](const std::string& name) {
        const ArrayFile a = read_array(dir + "/" + name);
        if (a.dims.size() != 3) throw DataError(name + ": expected 3-d array");
        DynamicImage img(static_cast<int>(a.dims[2]), static_cast<int>(a.dims[1]), cfg.schedule);
        if (a.dims[0] != img.n_frames()) throw DataError(name + ": frame count mismatch");
        const auto vals = to_doubles(a);
        img.v.assign(vals.begin(), vals.end());
        return img;
    };
    auto read_img = [&](const std::string& name) {
        const ArrayFile a = read_array(dir + "/" + name);
        if (a.dims.size() != 2) throw DataError(name + ": expected 2-d array");
        Image img(static_cast<int>(a.dims[1]), static_cast<int>(a.dims[0]));
        const auto vals = to_doubles(a);
        img.v.assign(vals.begin(), vals.end());
        return img;
    };

    s.noisy = read_dyn("noisy.arr");
    s.noisefree = read_dyn("noisefree.arr");
    s.params = ParamImages(s.noisy.width, s.noisy.height);
    s.params.K1 = read_img("param_k1.arr").v;
    s.params.k2 = read_img("param_k2.arr").v;
    s.params.k3 = read_img("param_k3.arr").v;
    s.params.k4 = read_img("param_k4.arr").v;
    s.slope = read_img("slope.arr");
    s.intercept = read_img("intercept.arr");

    s.labels = LabelMap(s.noisy.width, s.noisy.height);
    const auto& lab = s.meta.at("labels");
    if (lab.size() != s.labels.v.size()) throw DataError("label map size mismatch in " + dir);
    for (size_t i = 0; i < s.labels.v.size(); ++i) s.labels.v[i] = lab[i].get<int>();

    // vb is constant per ROI; rebuild its plane from the meta table
    const auto& rois = s.meta.at("roi_params");
    for (size_t i = 0; i < s.labels.v.size(); ++i) {
        const int r = s.labels.v[i];
        if (r > 0) s.params.vb[i] = rois.at(r - 1).at("vb").get<double>();
    }
    return s;
}

int count_samples(const std::string& dataset_dir) {
    int n = 0;
    while (fs::exists(dataset_dir + "/" + sample_dir_name(n) + "/meta.json")) ++n;
    return n;
}

} // namespace petkin
