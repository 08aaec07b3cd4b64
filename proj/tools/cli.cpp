#include "cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>

#include "vipr/errors.hpp"
#include "vipr/experiment.hpp"
#include "vipr/log.hpp"

namespace vipr {

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string flow;
    bool deterministic = false;
    bool force = false;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_force) {
    cmd->add_option("--config", o.config, "Experiment configuration (JSON)");
    cmd->add_option("--seed", o.seed, "Global seed (overrides the config and every stage seed)");
    cmd->add_option("--flow", o.flow, "Flow provider")->check(CLI::IsMember({"flo-dir", "synthetic"}));
    cmd->add_flag("--deterministic", o.deterministic, "Single-threaded deterministic kernels");
    if (with_force) cmd->add_flag("--force", o.force, "Overwrite existing outputs");
}

// --config if given, else the experiment's snapshot, else defaults.
ExperimentConfig resolve_config(const CommonOptions& o) {
    ExperimentConfig config;
    if (!o.config.empty()) {
        config = ExperimentConfig::load(o.config);
    } else if (!o.out.empty() && fs::exists(fs::path(o.out) / "config.json")) {
        config = ExperimentConfig::load(fs::path(o.out) / "config.json");
    }
    if (o.seed) config.set_seed(*o.seed);
    if (!o.flow.empty()) config.flow.provider = o.flow;
    if (!o.out.empty()) config.output_dir = o.out;
    if (o.deterministic) config.flow.workers = 1;
    config.validate();
    nn::configure_runtime(config.seed, o.deterministic);
    return config;
}

ExperimentDir open_experiment(const ExperimentConfig& config) {
    ExperimentDir dir{config.output_dir};
    dir.create(config);
    log::open_file(dir.log());
    return dir;
}

int cmd_simulate(const CommonOptions& o) {
    if (o.out.empty()) throw ArgumentError("simulate: --out is required");
    ExperimentConfig config;
    if (!o.config.empty()) config = ExperimentConfig::load(o.config);
    if (o.seed) config.set_seed(*o.seed);
    if (!o.flow.empty()) config.flow.provider = o.flow;
    const auto manifest = write_simulated_dataset(config, o.out, o.force, config.flow.provider == "flo-dir");
    std::cout << manifest.string() << "\n";
    return 0;
}

int cmd_train(const CommonOptions& o, const std::string& stage_name) {
    const Stage stage = parse_stage(stage_name);
    const ExperimentConfig config = resolve_config(o);
    ExperimentDir dir{config.output_dir};
    if (fs::exists(dir.checkpoint(stage_name)) && !o.force) {
        throw ArgumentError("train " + stage_name + ": " + dir.checkpoint(stage_name).string() +
                            " exists (use --force)");
    }
    if (stage == Stage::pe) {
        for (const char* dep : {"apr", "rpr"}) {
            if (!fs::exists(dir.checkpoint(dep)))
                throw DependencyError(std::string("train pe: missing ") + dep + " checkpoint " +
                                      dir.checkpoint(dep).string() + " (run `train " + dep + "` first)");
        }
    }
    dir = open_experiment(config);
    const auto prepared = prepare_data(config, dir.mean_cache());
    nn::reset_stop();
    nn::install_interrupt_handler();
    const auto result = train_stage(config, stage, dir, prepared);
    log::close_file();
    if (result.interrupted) {
        std::cerr << "interrupted; partial checkpoint written to " << dir.checkpoint(stage_name).string() << "\n";
        return 1;
    }
    return 0;
}

int cmd_evaluate(const CommonOptions& o, bool plot) {
    const ExperimentConfig config = resolve_config(o);
    const ExperimentDir dir = open_experiment(config);
    const auto prepared = prepare_data(config, dir.mean_cache());
    const auto report = evaluate_experiment(config, dir, prepared, plot || config.eval.plot);
    log::close_file();
    std::cout << report.to_table();
    return 0;
}

int cmd_predict(const CommonOptions& o, const std::string& sequence_name) {
    const ExperimentConfig config = resolve_config(o);
    const ExperimentDir dir = open_experiment(config);
    const auto data = load_dataset(config);
    std::vector<const Sequence*> chosen;
    if (sequence_name.empty()) {
        for (const auto& s : data.test.sequences) chosen.push_back(&s);
    } else {
        for (const auto* split : {&data.train, &data.test})
            for (const auto& s : split->sequences)
                if (s.id == sequence_name) chosen.push_back(&s);
        if (chosen.empty()) throw ArgumentError("predict: no sequence named '" + sequence_name + "'");
    }
    const auto flow = make_flow_provider(config, data);
    WindowOptions opt;
    opt.zones_x = config.flow.zones_x;
    opt.zones_y = config.flow.zones_y;
    opt.keep_flow_fields = false;
    opt.workers = config.flow.workers;
    for (const auto* seq : chosen) {
        if (seq->frames.size() < 4) {
            throw DataError("predict: sequence '" + seq->id + "' has " + std::to_string(seq->frames.size()) +
                            " frames after undersampling; at least 4 are needed");
        }
        DatasetSplit single{"predict", {*seq}, std::nullopt, {}};
        const auto windows = make_windows(single, *flow, opt);
        std::cout << predict_sequence(dir, *seq, windows).string() << "\n";
    }
    log::close_file();
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Visual pose regression pipeline: APR, RPR and fusion", "vipr"};
    app.require_subcommand(1);
    std::string level = "info";
    app.add_option("--log-level", level, "debug, info, warn or off")
        ->check(CLI::IsMember({"debug", "info", "warn", "off"}));

    CommonOptions sim, train, eval, pred;
    auto* simulate = app.add_subcommand("simulate", "Render a synthetic scenario to disk");
    add_common(simulate, sim, true);
    simulate->add_option("--out", sim.out, "Dataset directory")->required();

    auto* train_cmd = app.add_subcommand("train", "Train one stage");
    std::string stage;
    train_cmd->add_option("stage", stage, "apr, rpr or pe")->required()->check(CLI::IsMember({"apr", "rpr", "pe"}));
    add_common(train_cmd, train, true);
    train_cmd->add_option("--out", train.out, "Experiment directory");

    auto* evaluate = app.add_subcommand("evaluate", "Evaluate the trained stages on the test split");
    bool plot = false;
    add_common(evaluate, eval, false);
    evaluate->add_option("--out", eval.out, "Experiment directory");
    evaluate->add_flag("--plot", plot, "Write a trajectory plot");

    auto* predict = app.add_subcommand("predict", "Write ViPR poses for a sequence");
    std::string sequence;
    add_common(predict, pred, false);
    predict->add_option("--out", pred.out, "Experiment directory");
    predict->add_option("--sequence", sequence, "Sequence name (default: every test sequence)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    log::set_level(level == "debug"  ? log::Level::debug
                   : level == "warn" ? log::Level::warn
                   : level == "off"  ? log::Level::off
                                     : log::Level::info);
    try {
        if (*simulate) return cmd_simulate(sim);
        if (*train_cmd) return cmd_train(train, stage);
        if (*evaluate) return cmd_evaluate(eval, plot);
        if (*predict) return cmd_predict(pred, sequence);
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const DependencyError& e) {
        std::cerr << "dependency error: " << e.what() << "\n";
        return 4;
    } catch (const TrainingError& e) {
        std::cerr << "training failed: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace vipr
