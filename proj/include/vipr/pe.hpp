#pragma once

#include <torch/torch.h>

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "vipr/apr.hpp"
#include "vipr/rpr.hpp"

namespace vipr {

// Per timestep k: [x, y, z, w, p, q, r, dx, dy, dz, dw, dp, dq, dr] where
// row k pairs APR pose k with RPR relative pose k.
struct FusionInput {
    static constexpr int kColumns = 14;
    std::array<std::array<double, kColumns>, 3> rows{};
};

FusionInput build_fusion_input(const AprOutput& apr, const RprOutput& rpr);

struct PeConfig {
    int hidden = 64;
    int layers = 2;
    double alpha = 1.0;
    double beta = 1.0;
    nn::TrainSettings train{3e-3, 0.02, 16, 300, 1};

    nlohmann::json to_json() const;
    static PeConfig from_json(const nlohmann::json& j);
    nlohmann::json architecture() const;
    void validate() const;
};

// Stacked LSTM over the 3 x 14 fusion tensor; two dense layers read the last
// step and emit position (3) and raw quaternion (4). The network works in a
// frame anchored at the middle APR pose: absolute positions enter as offsets
// from it and orientations as rotations relative to it, and the heads
// predict a correction composed back onto the anchor. Anchored inputs are
// standardised per column and the position correction de-standardised, with
// statistics fitted on the training set and stored as buffers.
class PeNetImpl : public torch::nn::Module {
public:
    explicit PeNetImpl(const PeConfig& config);
    // [B, 3, 14] -> [B, 7]
    torch::Tensor forward(const torch::Tensor& input);
    // Head outputs before de-standardisation and anchoring.
    torch::Tensor forward_raw(const torch::Tensor& input);
    // Positions relative to the middle APR position, quaternions relative to
    // the middle APR orientation (w >= 0); relative columns unchanged.
    torch::Tensor anchored(const torch::Tensor& input);

    void set_normalization(const torch::Tensor& input_offset, const torch::Tensor& input_scale,
                           const torch::Tensor& position_offset, const torch::Tensor& position_scale);
    void zero_heads();

private:
    torch::nn::LSTM lstm_{nullptr};
    torch::nn::Linear position_head_{nullptr};
    torch::nn::Linear rotation_head_{nullptr};
    torch::Tensor input_offset_, input_scale_, position_offset_, position_scale_;
};
TORCH_MODULE(PeNet);

torch::Tensor fusion_tensor(std::span<const FusionInput> inputs);
torch::Tensor pe_forward(PeNet& net, const torch::Tensor& input);

// alpha |p_pred - p| + beta |q_pred - q/|q||, batch mean. pred [B, 7].
torch::Tensor pe_loss(const torch::Tensor& pred, const torch::Tensor& target_position,
                      const torch::Tensor& target_quaternion, double alpha, double beta);
double pe_loss(const std::array<double, 7>& pred, const Pose& target, double alpha, double beta);

struct PeModel {
    PeConfig config;
    PeNet net{nullptr};
    std::vector<nn::EpochMetrics> history;

    void save(const std::filesystem::path& path) const;
    static PeModel load(const std::filesystem::path& path, const std::optional<PeConfig>& expected = std::nullopt);
};

// Fusion inputs from frozen upstream predictions.
std::vector<FusionInput> fusion_inputs(AprModel& apr, RprModel& rpr, std::span<const SampleWindow> windows);

// Supervised with the ground-truth pose at the window centre (t_n).
PeModel train_pe(std::span<const SampleWindow> windows, AprModel& apr, RprModel& rpr, const PeConfig& config);
PeModel train_pe(std::span<const SampleWindow> windows, std::span<const FusionInput> inputs, const PeConfig& config);

std::vector<Pose> predict_pe(PeModel& pe, std::span<const FusionInput> inputs);
// Full pipeline: window -> APR + RPR -> fusion tensor -> final pose.
std::vector<Pose> predict_vipr(AprModel& apr, RprModel& rpr, PeModel& pe, std::span<const SampleWindow> windows);

}  // namespace vipr
