#include "petkin/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "petkin/arrayfile.hpp"
#include "petkin/errors.hpp"

namespace petkin {

namespace {

void require_keys(const nlohmann::json& j, const std::string& where,
                  const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key))
            throw ConfigError(where + ": unknown key \"" + key + "\"");
}

double num(const nlohmann::json& j, const std::string& where) {
    if (!j.is_number()) throw ConfigError(where + ": expected a number");
    return j.get<double>();
}

double num_or(const nlohmann::json& j, const char* key, double fallback) {
    return j.contains(key) ? num(j.at(key), key) : fallback;
}

int int_or(const nlohmann::json& j, const char* key, int fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number_integer()) throw ConfigError(std::string(key) + ": expected an integer");
    return j.at(key).get<int>();
}

bool bool_or(const nlohmann::json& j, const char* key, bool fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_boolean()) throw ConfigError(std::string(key) + ": expected a boolean");
    return j.at(key).get<bool>();
}

FrameSchedule parse_schedule(const nlohmann::json& j) {
    require_keys(j, "schedule", {"pattern", "frames"});
    if (j.contains("pattern") == j.contains("frames"))
        throw ConfigError("schedule: give exactly one of \"pattern\" or \"frames\"");
    FrameSchedule s;
    if (j.contains("pattern")) {
        std::vector<std::pair<int, double>> pat;
        for (const auto& e : j.at("pattern")) {
            if (!e.is_array() || e.size() != 2)
                throw ConfigError("schedule.pattern entries must be [count, duration_min]");
            pat.emplace_back(e.at(0).get<int>(), e.at(1).get<double>());
        }
        try {
            s = FrameSchedule::from_pattern(pat);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("schedule: ") + e.what());
        }
    } else {
        for (const auto& e : j.at("frames")) {
            if (!e.is_array() || e.size() != 2)
                throw ConfigError("schedule.frames entries must be [t_start, t_end]");
            s.frames.emplace_back(e.at(0).get<double>(), e.at(1).get<double>());
        }
        try {
            s.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("schedule: ") + e.what());
        }
    }
    return s;
}

Tracer parse_tracer(const nlohmann::json& j) {
    require_keys(j, "tracer", {"name", "half_life_min", "decay_constant", "reversible"});
    Tracer t;
    t.name = j.value("name", "");
    if (j.contains("half_life_min") == j.contains("decay_constant"))
        throw ConfigError("tracer: give exactly one of half_life_min or decay_constant");
    if (j.contains("half_life_min")) {
        const double hl = num(j.at("half_life_min"), "tracer.half_life_min");
        if (!(hl > 0)) throw ConfigError("tracer.half_life_min must be > 0");
        t.decay_constant = std::log(2.0) / hl;
    } else {
        t.decay_constant = num(j.at("decay_constant"), "tracer.decay_constant");
        if (!(t.decay_constant >= 0)) throw ConfigError("tracer.decay_constant must be >= 0");
    }
    t.reversible = bool_or(j, "reversible", false);
    return t;
}

KineticParams parse_roi(const nlohmann::json& j, const std::string& where) {
    require_keys(j, where, {"k1", "k2", "k3", "k4", "vb"});
    KineticParams p;
    p.K1 = num_or(j, "k1", 0.0);
    p.k2 = num_or(j, "k2", 0.0);
    p.k3 = num_or(j, "k3", 0.0);
    p.k4 = num_or(j, "k4", 0.0);
    p.vb = num_or(j, "vb", 0.0);
    try {
        validate_params(p);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return p;
}

} // namespace

ExperimentConfig parse_config(const nlohmann::json& j) {
    require_keys(j, "config",
                 {"schema", "name", "seed", "image_size", "grid_dt_s", "phantom", "tracer",
                  "input_function", "whole_blood_file", "schedule", "rois", "param_cv", "noise",
                  "recon", "dataset", "fit_window_frames", "train", "fit"});
    ExperimentConfig c;
    if (!j.contains("schema") || !j.at("schema").is_number_integer())
        throw ConfigError("config: missing integer \"schema\"");
    c.schema = j.at("schema").get<int>();
    if (c.schema != 1) throw ConfigError("config: unsupported schema version");
    c.name = j.value("name", "");
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    c.image_size = int_or(j, "image_size", 128);
    if (c.image_size < 16) throw ConfigError("image_size must be >= 16");
    c.grid_dt_s = num_or(j, "grid_dt_s", 1.0);
    if (!(c.grid_dt_s > 0)) throw ConfigError("grid_dt_s must be > 0");

    if (j.contains("phantom")) {
        const auto& p = j.at("phantom");
        require_keys(p, "phantom", {"kind", "n_rois", "warp_amplitude"});
        c.phantom.kind = p.value("kind", "brain-like");
        if (c.phantom.kind != "brain-like" && c.phantom.kind != "thorax-like")
            throw ConfigError("phantom.kind must be brain-like or thorax-like");
        c.phantom.n_rois = int_or(p, "n_rois", c.phantom.kind == "brain-like" ? 5 : 3);
        if (c.phantom.n_rois < 1) throw ConfigError("phantom.n_rois must be >= 1");
        c.phantom.warp_amplitude = num_or(p, "warp_amplitude", 1.0);
        if (c.phantom.warp_amplitude < 0) throw ConfigError("phantom.warp_amplitude must be >= 0");
    }

    if (!j.contains("tracer")) throw ConfigError("config: missing \"tracer\"");
    c.tracer = parse_tracer(j.at("tracer"));

    if (!j.contains("input_function")) throw ConfigError("config: missing \"input_function\"");
    {
        const auto& f = j.at("input_function");
        require_keys(f, "input_function", {"type", "a1", "a2", "a3", "l1", "l2", "l3", "file"});
        const std::string type = f.value("type", "feng");
        if (type == "feng") {
            c.if_analytic = true;
            for (const char* k : {"a1", "a2", "a3", "l1", "l2", "l3"})
                if (!f.contains(k))
                    throw ConfigError(std::string("input_function: missing \"") + k + "\"");
            c.feng = {num(f.at("a1"), "a1"), num(f.at("a2"), "a2"), num(f.at("a3"), "a3"),
                      num(f.at("l1"), "l1"), num(f.at("l2"), "l2"), num(f.at("l3"), "l3")};
        } else if (type == "sampled") {
            c.if_analytic = false;
            if (!f.contains("file")) throw ConfigError("input_function: sampled type needs \"file\"");
            c.input_function_file = f.at("file").get<std::string>();
        } else {
            throw ConfigError("input_function.type must be feng or sampled");
        }
    }
    if (j.contains("whole_blood_file")) c.whole_blood_file = j.at("whole_blood_file").get<std::string>();

    if (!j.contains("schedule")) throw ConfigError("config: missing \"schedule\"");
    c.schedule = parse_schedule(j.at("schedule"));

    if (!j.contains("rois") || !j.at("rois").is_array() || j.at("rois").empty())
        throw ConfigError("config: missing non-empty \"rois\" array");
    int idx = 0;
    for (const auto& r : j.at("rois"))
        c.rois.push_back(parse_roi(r, "rois[" + std::to_string(idx++) + "]"));
    if (static_cast<int>(c.rois.size()) != c.phantom.n_rois)
        throw ConfigError("rois length must equal phantom.n_rois");
    if (!c.tracer.reversible)
        for (const auto& r : c.rois)
            if (r.k4 != 0.0)
                throw ConfigError("irreversible tracer requires k4 = 0 in all ROI means");

    c.param_cv = num_or(j, "param_cv", 0.2);
    if (c.param_cv < 0) throw ConfigError("param_cv must be >= 0");

    if (j.contains("noise")) {
        const auto& n = j.at("noise");
        require_keys(n, "noise", {"level", "base_counts_per_frame"});
        c.noise.level = num_or(n, "level", 0.2);
        if (!(c.noise.level > 0)) throw ConfigError("noise.level must be > 0");
        c.noise.base_counts_per_frame = num_or(n, "base_counts_per_frame", 1.0e6);
        if (!(c.noise.base_counts_per_frame > 0))
            throw ConfigError("noise.base_counts_per_frame must be > 0");
    }
    if (j.contains("recon")) {
        const auto& r = j.at("recon");
        require_keys(r, "recon", {"iterations", "subsets"});
        c.recon.iterations = int_or(r, "iterations", 6);
        c.recon.subsets = int_or(r, "subsets", 5);
        if (c.recon.iterations < 1 || c.recon.subsets < 1)
            throw ConfigError("recon iterations/subsets must be >= 1");
    }
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        require_keys(d, "dataset", {"n_train", "n_test"});
        c.dataset.n_train = int_or(d, "n_train", 180);
        c.dataset.n_test = int_or(d, "n_test", 20);
        if (c.dataset.n_train < 0 || c.dataset.n_test < 0)
            throw ConfigError("dataset sizes must be >= 0");
    }
    c.fit_window_frames = int_or(j, "fit_window_frames", 10);
    if (c.fit_window_frames < 2 || c.fit_window_frames > c.schedule.n_frames())
        throw ConfigError("fit_window_frames must be in [2, n_frames]");

    if (j.contains("train")) {
        const auto& t = j.at("train");
        require_keys(t, "train",
                     {"epochs", "batch_size", "learning_rate", "halve_every_epochs", "blocks",
                      "subnet_hidden", "subnet_layers", "clamp_sigma", "input_frames",
                      "loss_weights", "aux_weight", "use_l2", "use_l3", "use_l4", "fd_step_rel",
                      "init_seed"});
        c.train.epochs = int_or(t, "epochs", 300);
        c.train.batch_size = int_or(t, "batch_size", 1);
        c.train.learning_rate = num_or(t, "learning_rate", 1e-4);
        c.train.halve_every_epochs = int_or(t, "halve_every_epochs", 50);
        c.train.blocks = int_or(t, "blocks", 6);
        c.train.subnet_hidden = int_or(t, "subnet_hidden", 32);
        c.train.subnet_layers = int_or(t, "subnet_layers", 4);
        c.train.clamp_sigma = num_or(t, "clamp_sigma", 2.0);
        c.train.input_frames = int_or(t, "input_frames", 12);
        if (t.contains("loss_weights")) {
            const auto& w = t.at("loss_weights");
            if (!w.is_array() || w.size() != 3)
                throw ConfigError("train.loss_weights must be [lambda1, lambda2, lambda3]");
            c.train.lambda1 = w.at(0).get<double>();
            c.train.lambda2 = w.at(1).get<double>();
            c.train.lambda3 = w.at(2).get<double>();
        }
        c.train.aux_weight = num_or(t, "aux_weight", 1.0);
        c.train.use_l2 = bool_or(t, "use_l2", true);
        c.train.use_l3 = bool_or(t, "use_l3", true);
        c.train.use_l4 = bool_or(t, "use_l4", true);
        c.train.fd_step_rel = num_or(t, "fd_step_rel", 1e-4);
        if (t.contains("init_seed")) c.train.init_seed = t.at("init_seed").get<uint64_t>();
        if (c.train.epochs < 0 || c.train.batch_size != 1)
            throw ConfigError("train: epochs must be >= 0 and batch_size 1");
        if (c.train.blocks < 0 || c.train.subnet_hidden < 1 || c.train.subnet_layers < 2)
            throw ConfigError("train: bad network shape");
        if (!(c.train.clamp_sigma > 0)) throw ConfigError("train.clamp_sigma must be > 0");
        if (c.train.input_frames < 1 || c.train.input_frames > c.schedule.n_frames())
            throw ConfigError("train.input_frames out of range");
        if (!(c.train.learning_rate > 0) || c.train.halve_every_epochs < 1)
            throw ConfigError("train: bad learning-rate schedule");
    }
    if (j.contains("fit")) {
        const auto& f = j.at("fit");
        require_keys(f, "fit", {"bounds_scale", "max_iterations", "tolerance", "vb"});
        c.fit.bounds_scale = num_or(f, "bounds_scale", 5.0);
        c.fit.max_iterations = int_or(f, "max_iterations", 100);
        c.fit.tolerance = num_or(f, "tolerance", 1e-12);
        c.fit.vb = num_or(f, "vb", 0.0);
        if (!(c.fit.bounds_scale > 0) || c.fit.max_iterations < 1 || !(c.fit.tolerance > 0) ||
            c.fit.vb < 0 || c.fit.vb > 1)
            throw ConfigError("fit: bad settings");
    }
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return parse_config(j);
}

InputFunction ExperimentConfig::make_input_function(const std::string& base_dir) const {
    InputFunction f = [&] {
        if (if_analytic) return InputFunction::feng(feng);
        const auto p = std::filesystem::path(base_dir) / input_function_file;
        if (!std::filesystem::exists(p))
            throw DataError("input function file not found: " + p.string());
        const ArrayFile a = read_array(p.string());
        if (a.dims.size() != 2 || a.dims[0] != 2)
            throw DataError("sampled input function must have dims [2, n]");
        TimeActivityCurve c;
        const size_t n = static_cast<size_t>(a.dims[1]);
        c.times.assign(a.data.begin(), a.data.begin() + n);
        c.values.assign(a.data.begin() + n, a.data.end());
        return InputFunction::sampled(std::move(c));
    }();
    if (!whole_blood_file.empty()) {
        const auto p = std::filesystem::path(base_dir) / whole_blood_file;
        if (!std::filesystem::exists(p))
            throw DataError("whole-blood file not found: " + p.string());
        const ArrayFile a = read_array(p.string());
        if (a.dims.size() != 2 || a.dims[0] != 2)
            throw DataError("whole-blood curve must have dims [2, n]");
        TimeActivityCurve c;
        const size_t n = static_cast<size_t>(a.dims[1]);
        c.times.assign(a.data.begin(), a.data.begin() + n);
        c.values.assign(a.data.begin() + n, a.data.end());
        f.set_whole_blood(std::move(c));
    }
    return f;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["schema"] = c.schema;
    j["name"] = c.name;
    j["seed"] = c.seed;
    j["image_size"] = c.image_size;
    j["grid_dt_s"] = c.grid_dt_s;
    j["phantom"] = {{"kind", c.phantom.kind},
                    {"n_rois", c.phantom.n_rois},
                    {"warp_amplitude", c.phantom.warp_amplitude}};
    j["tracer"] = {{"name", c.tracer.name},
                   {"decay_constant", c.tracer.decay_constant},
                   {"reversible", c.tracer.reversible}};
    if (c.if_analytic) {
        j["input_function"] = {{"type", "feng"}, {"a1", c.feng.a1}, {"a2", c.feng.a2},
                               {"a3", c.feng.a3}, {"l1", c.feng.l1}, {"l2", c.feng.l2},
                               {"l3", c.feng.l3}};
    } else {
        j["input_function"] = {{"type", "sampled"}, {"file", c.input_function_file}};
    }
    if (!c.whole_blood_file.empty()) j["whole_blood_file"] = c.whole_blood_file;
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& [a, b] : c.schedule.frames) frames.push_back({a, b});
    j["schedule"] = {{"frames", frames}};
    nlohmann::json rois = nlohmann::json::array();
    for (const auto& r : c.rois)
        rois.push_back({{"k1", r.K1}, {"k2", r.k2}, {"k3", r.k3}, {"k4", r.k4}, {"vb", r.vb}});
    j["rois"] = rois;
    j["param_cv"] = c.param_cv;
    j["noise"] = {{"level", c.noise.level},
                  {"base_counts_per_frame", c.noise.base_counts_per_frame}};
    j["recon"] = {{"iterations", c.recon.iterations}, {"subsets", c.recon.subsets}};
    j["dataset"] = {{"n_train", c.dataset.n_train}, {"n_test", c.dataset.n_test}};
    j["fit_window_frames"] = c.fit_window_frames;
    j["train"] = {{"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"learning_rate", c.train.learning_rate},
                  {"halve_every_epochs", c.train.halve_every_epochs},
                  {"blocks", c.train.blocks},
                  {"subnet_hidden", c.train.subnet_hidden},
                  {"subnet_layers", c.train.subnet_layers},
                  {"clamp_sigma", c.train.clamp_sigma},
                  {"input_frames", c.train.input_frames},
                  {"loss_weights", {c.train.lambda1, c.train.lambda2, c.train.lambda3}},
                  {"aux_weight", c.train.aux_weight},
                  {"use_l2", c.train.use_l2},
                  {"use_l3", c.train.use_l3},
                  {"use_l4", c.train.use_l4},
                  {"fd_step_rel", c.train.fd_step_rel},
                  {"init_seed", c.train.init_seed}};
    j["fit"] = {{"bounds_scale", c.fit.bounds_scale},
                {"max_iterations", c.fit.max_iterations},
                {"tolerance", c.fit.tolerance},
                {"vb", c.fit.vb}};
    return j;
}

} // namespace petkin
