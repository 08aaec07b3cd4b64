#pragma once

#include <torch/torch.h>

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vipr/dataset.hpp"
#include "vipr/nn.hpp"

namespace vipr {

enum class Backbone { small, full };

Backbone parse_backbone(const std::string& name);
std::string to_string(Backbone backbone);

struct AprConfig {
    Backbone backbone = Backbone::small;
    int head_width = 2048;
    double alpha = 1.0;
    double beta = 30.0;
    nn::TrainSettings train{1e-3, 0.02, 16, 40, 1};

    nlohmann::json to_json() const;
    static AprConfig from_json(const nlohmann::json& j);
    // Fields that change the network's shape.
    nlohmann::json architecture() const;
    void validate() const;
};

// --- encoders -------------------------------------------------------------

class EncoderImpl : public torch::nn::Module {
public:
    virtual torch::Tensor forward(torch::Tensor x) = 0;
    virtual std::int64_t feature_dim() const = 0;
};

// Six strided convolutions + global average pooling; 128 features.
class SmallEncoderImpl : public EncoderImpl {
public:
    SmallEncoderImpl();
    torch::Tensor forward(torch::Tensor x) override;
    std::int64_t feature_dim() const override { return 128; }

private:
    torch::nn::Sequential layers_{nullptr};
};

// Inception-v1 (GoogLeNet) trunk without auxiliary classifiers; 1024 features.
class GoogLeNetEncoderImpl : public EncoderImpl {
public:
    GoogLeNetEncoderImpl();
    torch::Tensor forward(torch::Tensor x) override;
    std::int64_t feature_dim() const override { return 1024; }

private:
    torch::nn::Sequential stem_{nullptr};
    torch::nn::Sequential inception_{nullptr};
};

std::shared_ptr<EncoderImpl> make_encoder(Backbone backbone);

// Dense(width) + ReLU + Dense(7): position (3) followed by a raw quaternion (4).
class PoseHeadImpl : public torch::nn::Module {
public:
    PoseHeadImpl(std::int64_t in_features, std::int64_t width);
    torch::Tensor forward(const torch::Tensor& features);

private:
    torch::nn::Linear hidden_{nullptr};
    torch::nn::Linear out_{nullptr};
};
TORCH_MODULE(PoseHead);

// Shared encoder over three timesteps, one head per timestep.
// Input [B, 3, 3, H, W] (mean-subtracted crops), output [B, 3, 7].
// Positions are de-standardised with the `position_offset`/`position_scale`
// buffers fitted on the training targets.
class AprNetImpl : public torch::nn::Module {
public:
    explicit AprNetImpl(const AprConfig& config);
    torch::Tensor forward(const torch::Tensor& crops);
    torch::Tensor encode(const torch::Tensor& images);  // [N, 3, H, W] -> [N, F]

    void set_position_normalization(const torch::Tensor& offset, const torch::Tensor& scale);
    void set_mean_image(const MeanImage& mean);
    MeanImage mean_image() const;

private:
    std::shared_ptr<EncoderImpl> encoder_;
    std::array<PoseHead, 3> heads_{nullptr, nullptr, nullptr};
    torch::Tensor position_offset_, position_scale_, mean_image_;
};
TORCH_MODULE(AprNet);

// Single-frame PoseNet-style baseline: input [B, 3, H, W], output [B, 7].
class PoseNetImpl : public torch::nn::Module {
public:
    explicit PoseNetImpl(const AprConfig& config);
    torch::Tensor forward(const torch::Tensor& crops);

    void set_position_normalization(const torch::Tensor& offset, const torch::Tensor& scale);
    void set_mean_image(const MeanImage& mean);
    MeanImage mean_image() const;

private:
    std::shared_ptr<EncoderImpl> encoder_;
    PoseHead head_{nullptr};
    torch::Tensor position_offset_, position_scale_, mean_image_;
};
TORCH_MODULE(PoseNet);

// --- prediction types -----------------------------------------------------

struct AprOutput {
    std::array<Pose, 3> poses;  // normalised quaternions
    std::array<std::array<double, 4>, 3> raw_quaternions;

    const Pose& center() const { return poses[1]; }
};

// [B, 3, 7] -> AprOutputs.
std::vector<AprOutput> to_apr_outputs(const torch::Tensor& predictions);

// --- operations -----------------------------------------------------------

// Shape-checked forward pass.
torch::Tensor apr_forward(AprNet& net, const torch::Tensor& crops);

// Mean over the three timesteps (and the batch) of the pose loss.
// pred [B, 3, 7]; targets [B, 3, 3] and [B, 3, 4].
torch::Tensor apr_loss(const torch::Tensor& pred, const torch::Tensor& target_position,
                       const torch::Tensor& target_quaternion, double alpha, double beta);
double apr_loss(const AprOutput& pred, const std::array<Pose, 3>& target, double alpha, double beta);

// Mean-subtracted crops of the given windows: [B, 3, 3, H, W].
torch::Tensor window_crops_tensor(std::span<const SampleWindow> windows, const MeanImage& mean);

struct AprModel {
    AprConfig config;
    AprNet net{nullptr};
    std::vector<nn::EpochMetrics> history;

    void save(const std::filesystem::path& path) const;
    // With `expected`, a checkpoint of a different architecture is rejected.
    static AprModel load(const std::filesystem::path& path, const std::optional<AprConfig>& expected = std::nullopt);
};

AprModel train_apr(std::span<const SampleWindow> windows, const MeanImage& mean, const AprConfig& config);
std::vector<AprOutput> predict_apr(AprModel& model, std::span<const SampleWindow> windows);

struct PoseNetModel {
    AprConfig config;
    PoseNet net{nullptr};
    std::vector<nn::EpochMetrics> history;

    void save(const std::filesystem::path& path) const;
    static PoseNetModel load(const std::filesystem::path& path,
                             const std::optional<AprConfig>& expected = std::nullopt);
};

// Trains on the centre frame of every window.
PoseNetModel train_posenet(std::span<const SampleWindow> windows, const MeanImage& mean, const AprConfig& config);
std::vector<Pose> predict_posenet(PoseNetModel& model, std::span<const SampleWindow> windows);

// Quaternion of a raw 7-vector made unit (zero-norm guarded to identity).
Pose pose_from_raw(const float* raw7);

}  // namespace vipr
