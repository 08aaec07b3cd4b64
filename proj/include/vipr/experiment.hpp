#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "vipr/apr.hpp"
#include "vipr/eval.hpp"
#include "vipr/pe.hpp"
#include "vipr/rpr.hpp"
#include "vipr/simulator.hpp"

namespace vipr {

struct DatasetSection {
    std::string source = "simulate";  // seven-scenes | generic | simulate
    std::filesystem::path root;       // seven-scenes
    std::string scene;                // seven-scenes
    std::filesystem::path manifest;   // generic
    double target_hz = 10.0;          // undersampling target
    ScenarioSpec scenario = default_scenario();  // simulate
};

struct FlowSection {
    std::string provider = "synthetic";  // synthetic | flo-dir
    std::filesystem::path directory;     // flo-dir root
    int zones_x = 16;
    int zones_y = 16;
    int workers = 1;
};

struct EvalSection {
    bool posenet_baseline = false;  // `train apr` also trains the single-frame baseline
    bool plot = false;
};

struct ExperimentConfig {
    DatasetSection dataset;
    FlowSection flow;
    AprConfig apr;
    RprConfig rpr;
    PeConfig pe;
    EvalSection eval;
    std::uint64_t seed = 1;
    std::filesystem::path output_dir = "runs/default";

    nlohmann::json to_json() const;
    // Unknown keys are rejected. Stage seeds not given explicitly follow
    // the global seed; relative paths resolve against `base`.
    static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
    static ExperimentConfig load(const std::filesystem::path& path);
    // Sets the global and every stage seed.
    void set_seed(std::uint64_t value);
    // Checks value ranges and that every referenced path exists.
    void validate() const;
};

// Loaded and undersampled dataset; simulated frames are rendered after
// undersampling. No mean image attached.
DatasetPair load_dataset(const ExperimentConfig& config);

std::unique_ptr<FlowProvider> make_flow_provider(const ExperimentConfig& config, const DatasetPair& data);

struct PreparedData {
    DatasetPair data;
    std::vector<SampleWindow> train;
    std::vector<SampleWindow> test;
};

// Dataset, train mean (cached at `mean_cache` when given) and windows.
PreparedData prepare_data(const ExperimentConfig& config,
                          const std::optional<std::filesystem::path>& mean_cache = std::nullopt);

// Layout of one experiment directory.
struct ExperimentDir {
    std::filesystem::path root;

    std::filesystem::path config() const { return root / "config.json"; }
    std::filesystem::path checkpoint(const std::string& stage) const { return root / "checkpoints" / (stage + ".pt"); }
    std::filesystem::path metrics(const std::string& stage) const {
        return root / "logs" / (stage + "_metrics.txt");
    }
    std::filesystem::path log() const { return root / "logs" / "run.log"; }
    std::filesystem::path mean_cache() const { return root / "cache" / "train_mean.bin"; }
    std::filesystem::path report_json() const { return root / "reports" / "eval.json"; }
    std::filesystem::path report_table() const { return root / "reports" / "eval.txt"; }
    std::filesystem::path plot() const { return root / "reports" / "trajectory.png"; }
    std::filesystem::path prediction(const std::string& sequence) const {
        return root / "predictions" / (sequence + ".txt");
    }

    // Creates the sub-directories and writes the config snapshot.
    void create(const ExperimentConfig& config) const;
};

enum class Stage { apr, rpr, pe };
Stage parse_stage(const std::string& name);
std::string to_string(Stage stage);

struct StageResult {
    std::vector<nn::EpochMetrics> history;
    bool interrupted = false;
};

// Trains one stage on prepared data and writes its checkpoint and metrics
// log. The PE stage loads the APR and RPR checkpoints of `dir` and throws
// DependencyError when one is missing.
StageResult train_stage(const ExperimentConfig& config, Stage stage, const ExperimentDir& dir,
                        const PreparedData& prepared);

// Evaluates every checkpoint present in `dir` on the test windows and
// writes the report (and the plot when `plot`). Throws ArgumentError when
// there is no checkpoint at all.
EvalReport evaluate_experiment(const ExperimentConfig& config, const ExperimentDir& dir,
                               const PreparedData& prepared, bool plot);

// ViPR poses for every window of one sequence, written as pose text with
// a header comment carrying the checkpoint hashes. Returns the file path.
std::filesystem::path predict_sequence(const ExperimentDir& dir, const Sequence& sequence,
                                       const std::vector<SampleWindow>& windows);

// Writes images, pose files and a generic manifest for the configured
// scenario (full frame rate); with `with_flo`, also the analytic flow of
// every undersampled pair under <out>/flow. Refuses a non-empty `out`
// unless `force`.
std::filesystem::path write_simulated_dataset(const ExperimentConfig& config, const std::filesystem::path& out,
                                              bool force, bool with_flo);

}  // namespace vipr
