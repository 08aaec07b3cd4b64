#include "vipr/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "vipr/errors.hpp"
#include "vipr/log.hpp"

namespace vipr {

namespace fs = std::filesystem;

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ArgumentError(where + ": expected an object");
    for (const auto& [key, _] : j.items())
        if (!allowed.contains(key)) throw ArgumentError(where + ": unknown key '" + key + "'");
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& value) {
    if (!j.contains(key)) return;
    try {
        value = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ArgumentError(std::string("config key '") + key + "': " + e.what());
    }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
    if (p.empty() || p.is_absolute() || base.empty()) return p;
    return base / p;
}

bool has_seed(const nlohmann::json& j, const char* section) {
    return j.contains(section) && j.at(section).contains("train") && j.at(section).at("train").contains("seed");
}

DatasetSplit undersample_to(const DatasetSplit& split, double target_hz) {
    DatasetSplit out{split.name, {}, split.mean, split.mean_source};
    for (const auto& s : split.sequences)
        out.sequences.push_back(undersample(s, s.frame_rate_hz, std::min(target_hz, s.frame_rate_hz)).sequence);
    return out;
}

std::vector<Pose> center_poses(std::span<const SampleWindow> windows) {
    std::vector<Pose> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back(w.center_pose());
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

void require(const fs::path& path, const std::string& what, const std::string& hint) {
    if (!fs::exists(path)) throw DependencyError(what + ": missing checkpoint " + path.string() + " (" + hint + ")");
}

}  // namespace

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json d = {{"source", dataset.source}, {"target_hz", dataset.target_hz}};
    if (dataset.source == "seven-scenes") {
        d["root"] = dataset.root.string();
        d["scene"] = dataset.scene;
    } else if (dataset.source == "generic") {
        d["manifest"] = dataset.manifest.string();
    } else {
        d["scenario"] = vipr::to_json(dataset.scenario);
    }
    nlohmann::json f = {
        {"provider", flow.provider}, {"zones_x", flow.zones_x}, {"zones_y", flow.zones_y}, {"workers", flow.workers}};
    if (!flow.directory.empty()) f["directory"] = flow.directory.string();
    return {{"dataset", d},
            {"flow", f},
            {"apr", apr.to_json()},
            {"rpr", rpr.to_json()},
            {"pe", pe.to_json()},
            {"eval", {{"posenet_baseline", eval.posenet_baseline}, {"plot", eval.plot}}},
            {"seed", seed},
            {"output_dir", output_dir.string()}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const fs::path& base) {
    check_keys(j, {"dataset", "flow", "apr", "rpr", "pe", "eval", "seed", "output_dir"}, "config");
    ExperimentConfig c;
    read(j, "seed", c.seed);
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        check_keys(d, {"source", "root", "scene", "manifest", "target_hz", "scenario"}, "dataset");
        read(d, "source", c.dataset.source);
        if (d.contains("root")) c.dataset.root = resolve(base, d.at("root").get<std::string>());
        read(d, "scene", c.dataset.scene);
        if (d.contains("manifest")) c.dataset.manifest = resolve(base, d.at("manifest").get<std::string>());
        read(d, "target_hz", c.dataset.target_hz);
        if (d.contains("scenario")) c.dataset.scenario = scenario_from_json(d.at("scenario"));
    }
    if (j.contains("flow")) {
        const auto& f = j.at("flow");
        check_keys(f, {"provider", "directory", "zones_x", "zones_y", "workers"}, "flow");
        read(f, "provider", c.flow.provider);
        if (f.contains("directory")) c.flow.directory = resolve(base, f.at("directory").get<std::string>());
        read(f, "zones_x", c.flow.zones_x);
        read(f, "zones_y", c.flow.zones_y);
        read(f, "workers", c.flow.workers);
    }
    if (j.contains("apr")) c.apr = AprConfig::from_json(j.at("apr"));
    if (j.contains("rpr")) c.rpr = RprConfig::from_json(j.at("rpr"));
    if (j.contains("pe")) c.pe = PeConfig::from_json(j.at("pe"));
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        check_keys(e, {"posenet_baseline", "plot"}, "eval");
        read(e, "posenet_baseline", c.eval.posenet_baseline);
        read(e, "plot", c.eval.plot);
    }

    // The flow section owns the zone grid; an explicit rpr grid must agree.
    const bool flow_zones = j.contains("flow") && (j.at("flow").contains("zones_x") || j.at("flow").contains("zones_y"));
    const bool rpr_zones = j.contains("rpr") && (j.at("rpr").contains("zones_x") || j.at("rpr").contains("zones_y"));
    if (rpr_zones && !flow_zones) {
        c.flow.zones_x = c.rpr.zones_x;
        c.flow.zones_y = c.rpr.zones_y;
    } else if (rpr_zones && (c.rpr.zones_x != c.flow.zones_x || c.rpr.zones_y != c.flow.zones_y)) {
        throw ArgumentError("rpr zone grid differs from flow.zones_x/zones_y");
    }
    c.rpr.zones_x = c.flow.zones_x;
    c.rpr.zones_y = c.flow.zones_y;

    if (!has_seed(j, "apr")) c.apr.train.seed = c.seed;
    if (!has_seed(j, "rpr")) c.rpr.train.seed = c.seed;
    if (!has_seed(j, "pe")) c.pe.train.seed = c.seed;
    return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ArgumentError(path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

void ExperimentConfig::set_seed(std::uint64_t value) {
    seed = value;
    apr.train.seed = rpr.train.seed = pe.train.seed = value;
}

void ExperimentConfig::validate() const {
    const auto& src = dataset.source;
    if (src == "seven-scenes") {
        if (dataset.scene.empty()) throw ArgumentError("dataset.scene is required for seven-scenes");
        if (!fs::is_directory(dataset.root / dataset.scene))
            throw ArgumentError("dataset: scene directory not found: " + (dataset.root / dataset.scene).string());
    } else if (src == "generic") {
        if (!fs::is_regular_file(dataset.manifest))
            throw ArgumentError("dataset: manifest not found: " + dataset.manifest.string());
    } else if (src != "simulate") {
        throw ArgumentError("dataset.source must be seven-scenes, generic or simulate (got '" + src + "')");
    }
    if (!(dataset.target_hz > 0.0)) throw ArgumentError("dataset.target_hz must be positive");
    if (flow.provider == "flo-dir") {
        if (!fs::is_directory(flow.directory))
            throw ArgumentError("flow.directory not found: " + flow.directory.string());
    } else if (flow.provider != "synthetic") {
        throw ArgumentError("flow.provider must be flo-dir or synthetic (got '" + flow.provider + "')");
    }
    if (flow.zones_x <= 0 || flow.zones_y <= 0) throw ArgumentError("flow zone counts must be positive");
    if (flow.workers <= 0) throw ArgumentError("flow.workers must be positive");
    apr.validate();
    rpr.validate();
    pe.validate();
}

DatasetPair load_dataset(const ExperimentConfig& config) {
    const auto& ds = config.dataset;
    DatasetPair data;
    if (ds.source == "simulate") {
        data = simulate_scenario(ds.scenario, false);
    } else if (ds.source == "seven-scenes") {
        data = load_seven_scenes(ds.root, ds.scene);
    } else if (ds.source == "generic") {
        data = load_generic(ds.manifest);
    } else {
        throw ArgumentError("unknown dataset source '" + ds.source + "'");
    }
    data.train = undersample_to(data.train, ds.target_hz);
    data.test = undersample_to(data.test, ds.target_hz);
    if (ds.source == "simulate") {
        render_frames(ds.scenario.world, data.train);
        render_frames(ds.scenario.world, data.test);
    }
    log::info("dataset: ", data.train.frame_count(), " train / ", data.test.frame_count(), " test frames at ",
              ds.target_hz, " Hz target");
    return data;
}

std::unique_ptr<FlowProvider> make_flow_provider(const ExperimentConfig& config, const DatasetPair& data) {
    if (config.flow.provider == "flo-dir") return std::make_unique<FloDirectoryProvider>(config.flow.directory);
    if (config.flow.provider != "synthetic")
        throw ArgumentError("unknown flow provider '" + config.flow.provider + "'");
    if (!data.scene || !(data.scene->plane_z != 0.0))
        throw ArgumentError("synthetic flow needs camera intrinsics and a scene plane (manifest 'camera' and 'scene')");
    const auto& s = *data.scene;
    return std::make_unique<SyntheticFlowProvider>(s.camera.cropped(s.width, s.height, kCropSize, kCropSize),
                                                   s.plane_z);
}

PreparedData prepare_data(const ExperimentConfig& config, const std::optional<fs::path>& mean_cache) {
    PreparedData p;
    p.data = load_dataset(config);
    attach_train_mean(p.data, mean_cache);
    const auto flow = make_flow_provider(config, p.data);
    WindowOptions opt;
    opt.zones_x = config.flow.zones_x;
    opt.zones_y = config.flow.zones_y;
    opt.keep_flow_fields = false;
    opt.workers = config.flow.workers;
    p.train = make_windows(p.data.train, *flow, opt);
    p.test = make_windows(p.data.test, *flow, opt);
    log::info("windows: ", p.train.size(), " train / ", p.test.size(), " test");
    return p;
}

void ExperimentDir::create(const ExperimentConfig& config) const {
    for (const char* sub : {"checkpoints", "logs", "reports", "cache"}) fs::create_directories(root / sub);
    write_text(this->config(), config.to_json().dump(2) + "\n");
}

Stage parse_stage(const std::string& name) {
    if (name == "apr") return Stage::apr;
    if (name == "rpr") return Stage::rpr;
    if (name == "pe") return Stage::pe;
    throw ArgumentError("unknown stage '" + name + "' (expected apr, rpr or pe)");
}

std::string to_string(Stage stage) {
    switch (stage) {
        case Stage::apr: return "apr";
        case Stage::rpr: return "rpr";
        case Stage::pe: return "pe";
    }
    return "?";
}

StageResult train_stage(const ExperimentConfig& config, Stage stage, const ExperimentDir& dir,
                        const PreparedData& prepared) {
    StageResult r;
    const std::string name = to_string(stage);
    fs::create_directories(dir.root / "checkpoints");
    fs::create_directories(dir.root / "logs");
    if (stage == Stage::apr) {
        auto model = train_apr(prepared.train, *prepared.data.train.mean, config.apr);
        model.save(dir.checkpoint("apr"));
        nn::write_metrics_log(dir.metrics("apr"), model.history);
        r.history = model.history;
        if (config.eval.posenet_baseline && !nn::stop_requested()) {
            auto base = train_posenet(prepared.train, *prepared.data.train.mean, config.apr);
            base.save(dir.checkpoint("posenet"));
            nn::write_metrics_log(dir.metrics("posenet"), base.history);
        }
    } else if (stage == Stage::rpr) {
        auto model = train_rpr(prepared.train, config.rpr);
        model.save(dir.checkpoint("rpr"));
        nn::write_metrics_log(dir.metrics("rpr"), model.history);
        r.history = model.history;
    } else {
        require(dir.checkpoint("apr"), "train pe", "run `train apr` first");
        require(dir.checkpoint("rpr"), "train pe", "run `train rpr` first");
        auto apr = AprModel::load(dir.checkpoint("apr"), config.apr);
        auto rpr = RprModel::load(dir.checkpoint("rpr"), config.rpr);
        auto model = train_pe(prepared.train, apr, rpr, config.pe);
        model.save(dir.checkpoint("pe"));
        nn::write_metrics_log(dir.metrics("pe"), model.history);
        r.history = model.history;
    }
    r.interrupted = nn::stop_requested();
    log::info(name, ": checkpoint written to ", dir.checkpoint(name).string());
    return r;
}

EvalReport evaluate_experiment(const ExperimentConfig& config, const ExperimentDir& dir,
                               const PreparedData& prepared, bool plot) {
    const bool has_apr = fs::exists(dir.checkpoint("apr"));
    const bool has_rpr = fs::exists(dir.checkpoint("rpr"));
    const bool has_pe = fs::exists(dir.checkpoint("pe"));
    const bool has_posenet = fs::exists(dir.checkpoint("posenet"));
    if (!has_apr && !has_rpr && !has_pe && !has_posenet)
        throw ArgumentError("evaluate: no checkpoints in " + (dir.root / "checkpoints").string());
    if (prepared.test.empty()) throw DataError("evaluate: the test split yields no windows");

    const auto& windows = prepared.test;
    const auto truth = center_poses(windows);
    EvalReport report;
    report.extent = spatial_extent(truth);
    std::vector<TrajectoryStream> streams{{"ground truth", truth}};

    if (has_posenet) {
        auto model = PoseNetModel::load(dir.checkpoint("posenet"), config.apr);
        auto poses = predict_posenet(model, windows);
        report.methods.push_back(evaluate_trajectory(poses, truth, "posenet"));
        streams.push_back({"PoseNet", std::move(poses)});
    }
    std::optional<AprModel> apr;
    std::optional<RprModel> rpr;
    if (has_apr) {
        apr = AprModel::load(dir.checkpoint("apr"), config.apr);
        std::vector<Pose> poses;
        for (const auto& o : predict_apr(*apr, windows)) poses.push_back(o.center());
        report.methods.push_back(evaluate_trajectory(poses, truth, "apr"));
        streams.push_back({"APR", std::move(poses)});
    }
    if (has_rpr) {
        rpr = RprModel::load(dir.checkpoint("rpr"), config.rpr);
        const auto outputs = predict_rpr(*rpr, windows);
        std::vector<Vec3> predicted, actual;
        for (std::size_t i = 0; i < windows.size(); ++i) {
            const auto rels = outputs[i].relatives();
            for (int k = 0; k < 3; ++k) {
                predicted.push_back(rels[k].displacement_local);
                actual.push_back(windows[i].relatives[k].displacement_local);
            }
        }
        report.rpr = rpr_axis_medians(predicted, actual);

        // Dead reckoning per sequence from the first true centre pose.
        std::vector<Pose> reckoned;
        std::size_t start = 0;
        while (start < windows.size()) {
            std::size_t end = start;
            std::vector<RelativePose> rels;
            while (end < windows.size() && windows[end].frames[0].sequence == windows[start].frames[0].sequence) {
                rels.push_back(outputs[end].relatives()[1]);
                ++end;
            }
            rels.pop_back();
            for (const auto& p : integrate_dead_reckoning(windows[start].center_pose(), rels)) reckoned.push_back(p);
            start = end;
        }
        streams.push_back({"RPR dead reckoning", std::move(reckoned)});
    }
    if (has_apr && has_rpr && has_pe) {
        auto pe = PeModel::load(dir.checkpoint("pe"), config.pe);
        auto poses = predict_vipr(*apr, *rpr, pe, windows);
        report.methods.push_back(evaluate_trajectory(poses, truth, "vipr"));
        streams.push_back({"ViPR", std::move(poses)});
    } else if (has_pe) {
        log::warn("evaluate: pe checkpoint present but apr/rpr missing; ViPR skipped");
    }
    const auto* a = report.find("apr");
    const auto* v = report.find("vipr");
    if (a && v) report.improvement_pct = improvement_pct(a->position_median_m, v->position_median_m);

    fs::create_directories(dir.root / "reports");
    write_text(dir.report_json(), report.to_json().dump(2) + "\n");
    write_text(dir.report_table(), report.to_table());
    if (plot) export_trajectory_plot(streams, dir.plot());
    return report;
}

fs::path predict_sequence(const ExperimentDir& dir, const Sequence& sequence, const std::vector<SampleWindow>& windows) {
    if (sequence.frames.size() < 4) {
        throw DataError("sequence '" + sequence.id + "' has " + std::to_string(sequence.frames.size()) +
                        " frames after undersampling; at least 4 are needed");
    }
    for (const char* stage : {"apr", "rpr", "pe"}) require(dir.checkpoint(stage), "predict", "train all three stages");
    const ExperimentConfig snapshot = ExperimentConfig::load(dir.config());
    auto apr = AprModel::load(dir.checkpoint("apr"), snapshot.apr);
    auto rpr = RprModel::load(dir.checkpoint("rpr"), snapshot.rpr);
    auto pe = PeModel::load(dir.checkpoint("pe"), snapshot.pe);
    const auto poses = predict_vipr(apr, rpr, pe, windows);

    const fs::path path = dir.prediction(sequence.id);
    fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    char rate[32];
    std::snprintf(rate, sizeof rate, "%.6g", sequence.frame_rate_hz);
    out << "# sequence " << sequence.id << " rate_hz " << rate << " apr " << nn::file_hash(dir.checkpoint("apr"))
        << " rpr " << nn::file_hash(dir.checkpoint("rpr")) << " pe " << nn::file_hash(dir.checkpoint("pe")) << "\n";
    out << "# x y z qw qx qy qz (pose at the centre frame of each window)\n";
    for (const auto& p : poses) out << format_pose_line(p) << "\n";
    return path;
}

fs::path write_simulated_dataset(const ExperimentConfig& config, const fs::path& out, bool force, bool with_flo) {
    if (fs::exists(out) && !fs::is_empty(out) && !force)
        throw ArgumentError("output directory " + out.string() + " is not empty (use --force)");
    const auto& spec = config.dataset.scenario;
    std::vector<const TrajectorySpec*> all;
    for (const auto& t : spec.train) all.push_back(&t);
    for (const auto& t : spec.test) all.push_back(&t);
    if (all.empty()) throw ArgumentError("scenario has no trajectories");
    const double hz = all.front()->frame_rate_hz;
    for (const auto* t : all)
        if (t->frame_rate_hz != hz) throw ArgumentError("all simulated trajectories must share one frame rate");

    fs::create_directories(out);
    const auto& w = spec.world;
    nlohmann::json manifest = {{"frame_rate_hz", hz},
                               {"sequences", nlohmann::json::array()},
                               {"camera",
                                {{"fx", w.camera.fx},
                                 {"fy", w.camera.fy},
                                 {"cx", w.camera.cx},
                                 {"cy", w.camera.cy},
                                 {"width", w.width},
                                 {"height", w.height}}},
                               {"scene", {{"plane_z", w.plane_z}}}};
    const SyntheticFlowProvider flow(w.camera.cropped(w.width, w.height, kCropSize, kCropSize), w.plane_z);
    for (const auto* t : all) {
        const bool train = t >= spec.train.data() && t < spec.train.data() + spec.train.size();
        const Sequence seq = simulate_trajectory(w, *t, false);
        fs::create_directories(out / t->name);
        std::vector<Pose> poses;
        for (const auto& f : seq.frames) {
            char name[32];
            std::snprintf(name, sizeof name, "frame-%06zu.png", f.index);
            save_image(out / t->name / name, render_view(w, f.pose));
            poses.push_back(f.pose);
        }
        write_pose_file(out / t->name / "poses.txt", poses);
        manifest["sequences"].push_back({{"name", t->name},
                                         {"split", train ? "train" : "test"},
                                         {"images", t->name + "/frame-*.png"},
                                         {"poses", t->name + "/poses.txt"}});
        if (with_flo) {
            const auto kept = undersample(seq, hz, std::min(config.dataset.target_hz, hz)).sequence;
            for (std::size_t i = 0; i + 1 < kept.frames.size(); ++i) {
                const FlowQuery q{kept.id, i, kept.frames[i].pose, kept.frames[i + 1].pose, nullptr, nullptr,
                                  kCropSize, kCropSize};
                const fs::path path = FloDirectoryProvider::pair_path(out / "flow", kept.id, i);
                fs::create_directories(path.parent_path());
                write_flo_file(path, flow.flow(q));
            }
        }
        log::info("simulate: ", t->name, " ", seq.frames.size(), " frames");
    }
    write_text(out / "manifest.json", manifest.dump(2) + "\n");
    return out / "manifest.json";
}

}  // namespace vipr
