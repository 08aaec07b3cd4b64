#pragma once

#include <torch/torch.h>

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "vipr/dataset.hpp"
#include "vipr/nn.hpp"

namespace vipr {

struct RprConfig {
    int hidden = 64;
    int layers = 3;
    int zones_x = 16;
    int zones_y = 16;
    double alpha = 1.0;
    double beta = 1.0;
    nn::TrainSettings train{3e-3, 0.02, 16, 300, 1};

    int feature_width() const { return 2 * zones_x * zones_y; }

    nlohmann::json to_json() const;
    static RprConfig from_json(const nlohmann::json& j);
    nlohmann::json architecture() const;
    void validate() const;
};

// Stacked LSTM over the three flow-feature rows; at every step one dense
// layer emits the displacement (3) and another the raw rotation change (4).
// Features are divided by the `feature_scale` buffer and displacements
// multiplied by `displacement_scale`, both fitted on the training set.
class RprNetImpl : public torch::nn::Module {
public:
    explicit RprNetImpl(const RprConfig& config);
    // [B, 3, F] -> {[B, 3, 3], [B, 3, 4]}
    std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& features);

    void set_normalization(double feature_scale, const torch::Tensor& displacement_scale);
    void zero_heads();

private:
    std::int64_t feature_width_;
    torch::nn::LSTM lstm_{nullptr};
    torch::nn::Linear displacement_head_{nullptr};
    torch::nn::Linear rotation_head_{nullptr};
    torch::Tensor feature_scale_, displacement_scale_;
};
TORCH_MODULE(RprNet);

struct RprOutput {
    std::array<Vec3, 3> displacements;
    std::array<std::array<double, 4>, 3> rotations;  // raw

    // Relative poses with normalised rotations.
    std::array<RelativePose, 3> relatives() const;
};

std::pair<torch::Tensor, torch::Tensor> rpr_forward(RprNet& net, const torch::Tensor& features);

// Mean over the three pairs of alpha |d_pred - d| + beta |q_pred - q/|q||.
torch::Tensor rpr_loss(const torch::Tensor& pred_displacement, const torch::Tensor& pred_rotation,
                       const torch::Tensor& target_displacement, const torch::Tensor& target_rotation, double alpha,
                       double beta);
double rpr_loss(const RprOutput& pred, const std::array<RelativePose, 3>& target, double alpha, double beta);

// [B, 3, F] features of the given windows.
torch::Tensor window_features_tensor(std::span<const SampleWindow> windows);

// Poses obtained by chaining `rels` onto `start`; the result has
// rels.size() + 1 entries and begins with `start`.
std::vector<Pose> integrate_dead_reckoning(const Pose& start, std::span<const RelativePose> rels);

struct RprModel {
    RprConfig config;
    RprNet net{nullptr};
    std::vector<nn::EpochMetrics> history;

    void save(const std::filesystem::path& path) const;
    static RprModel load(const std::filesystem::path& path, const std::optional<RprConfig>& expected = std::nullopt);
};

RprModel train_rpr(std::span<const SampleWindow> windows, const RprConfig& config);
std::vector<RprOutput> predict_rpr(RprModel& model, std::span<const SampleWindow> windows);

}  // namespace vipr
