#pragma once

#include <torch/torch.h>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

namespace vipr::nn {

// Weighted pose regression loss, averaged over every leading index:
//   alpha * |p_pred - p| + beta * |q_pred - s * q / |q||
// with s = sign(<q_pred, q>) chosen per element (target hemisphere aligned to
// the prediction) and |q| floored at 1e-8. Positions are [..., 3],
// quaternions [..., 4] in (w, x, y, z) order; q_pred is the raw network output.
torch::Tensor pose_loss(const torch::Tensor& pred_position, const torch::Tensor& pred_quaternion,
                        const torch::Tensor& target_position, const torch::Tensor& target_quaternion, double alpha,
                        double beta);

std::int64_t count_parameters(const torch::nn::Module& module);

struct EpochMetrics {
    int epoch = 0;
    double loss = 0.0;
    double learning_rate = 0.0;
};

// Optimiser settings shared by all stages (Adam, cosine decay).
struct TrainSettings {
    double learning_rate = 1e-3;
    double final_lr_fraction = 0.05;
    int batch_size = 16;
    int epochs = 30;
    std::uint64_t seed = 1;
};

nlohmann::json to_json(const TrainSettings& s);
// Reads the keys that are present; unknown keys are left for the caller.
void read_train_settings(const nlohmann::json& j, TrainSettings& s);

// Mini-batch loop over `sample_count` samples. `batch_loss` receives the
// sample indices of one batch and returns the mean loss (with graph).
// The history starts with epoch 0, the mean loss of the untrained model
// over all samples, followed by one entry per trained epoch. Aborts with
// TrainingError on a non-finite loss; stops early (keeping the history so
// far) when stop_requested() becomes true.
std::vector<EpochMetrics> run_training(std::vector<torch::Tensor> parameters, std::size_t sample_count,
                                       const TrainSettings& settings,
                                       const std::function<torch::Tensor(std::span<const std::int64_t>)>& batch_loss,
                                       const std::string& stage);

// One "epoch loss learning_rate" row per trained epoch; epoch 0 is written
// as a "# initial loss learning_rate" comment.
void write_metrics_log(const std::filesystem::path& path, const std::vector<EpochMetrics>& history);
std::string format_metrics(const std::vector<EpochMetrics>& history);
std::vector<EpochMetrics> parse_metrics(const std::string& text);

// Seeds torch and, when `deterministic`, pins single-threaded deterministic kernels.
void configure_runtime(std::uint64_t seed, bool deterministic);

// Cooperative interruption (Ctrl-C).
void request_stop();
bool stop_requested();
void reset_stop();
void install_interrupt_handler();

// --- checkpoint container --------------------------------------------------
//
// One torch archive per model holding the module's parameters and buffers
// plus string entries: kind, config (JSON), fingerprint, metrics history.

struct CheckpointHeader {
    std::string kind;
    nlohmann::json config;
    std::string fingerprint;
    std::vector<EpochMetrics> history;
};

std::string fingerprint(const nlohmann::json& architecture);

void save_checkpoint(const std::filesystem::path& path, const CheckpointHeader& header,
                     const torch::nn::Module& module);
CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);
// Loads the module state; throws DependencyError on kind/fingerprint mismatch.
void load_checkpoint_state(const std::filesystem::path& path, const CheckpointHeader& expected,
                           torch::nn::Module& module);

// Hex FNV-1a 64 of a file's bytes.
std::string file_hash(const std::filesystem::path& path);
std::string bytes_hash(std::span<const std::uint8_t> bytes);

}  // namespace vipr::nn
