#include "vipr/apr.hpp"

#include <cmath>
#include <set>

#include "vipr/errors.hpp"
#include "vipr/log.hpp"

namespace vipr {

namespace {

constexpr double kPositionScaleFloor = 0.05;
constexpr std::int64_t kPredictBatch = 32;

torch::nn::Conv2dOptions conv(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride = 1,
                              std::int64_t pad = -1) {
    return torch::nn::Conv2dOptions(in, out, k).stride(stride).padding(pad < 0 ? k / 2 : pad);
}

// Conv (no bias) + batch norm + ReLU.
class BasicConvImpl : public torch::nn::Module {
public:
    BasicConvImpl(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride = 1) {
        conv_ = register_module("conv", torch::nn::Conv2d(conv(in, out, k, stride).bias(false)));
        bn_ = register_module("bn", torch::nn::BatchNorm2d(torch::nn::BatchNorm2dOptions(out).eps(1e-3)));
    }
    torch::Tensor forward(const torch::Tensor& x) { return torch::relu(bn_->forward(conv_->forward(x))); }

private:
    torch::nn::Conv2d conv_{nullptr};
    torch::nn::BatchNorm2d bn_{nullptr};
};
TORCH_MODULE(BasicConv);

class InceptionImpl : public torch::nn::Module {
public:
    InceptionImpl(std::int64_t in, std::int64_t c1, std::int64_t c3r, std::int64_t c3, std::int64_t c5r,
                  std::int64_t c5, std::int64_t pool_proj) {
        b1_ = register_module("b1", torch::nn::Sequential(BasicConv(in, c1, 1)));
        b3_ = register_module("b3", torch::nn::Sequential(BasicConv(in, c3r, 1), BasicConv(c3r, c3, 3)));
        b5_ = register_module("b5", torch::nn::Sequential(BasicConv(in, c5r, 1), BasicConv(c5r, c5, 5)));
        bp_ = register_module(
            "bp", torch::nn::Sequential(
                      torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(3).stride(1).padding(1).ceil_mode(true)),
                      BasicConv(in, pool_proj, 1)));
    }
    torch::Tensor forward(const torch::Tensor& x) {
        return torch::cat({b1_->forward(x), b3_->forward(x), b5_->forward(x), bp_->forward(x)}, 1);
    }

private:
    torch::nn::Sequential b1_{nullptr}, b3_{nullptr}, b5_{nullptr}, bp_{nullptr};
};
TORCH_MODULE(Inception);

torch::nn::MaxPool2d max_pool(std::int64_t k, std::int64_t s) {
    return torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(k).stride(s).ceil_mode(true));
}

void check_crops(const torch::Tensor& crops, std::int64_t dims, const char* what) {
    if (crops.dim() != dims || crops.size(dims - 3) != 3 || (dims == 5 && crops.size(1) != 3)) {
        std::ostringstream msg;
        msg << what << ": expected " << (dims == 5 ? "[B, 3, 3, H, W]" : "[B, 3, H, W]") << " crops, got "
            << crops.sizes();
        throw ShapeError(msg.str());
    }
    if (crops.size(0) < 1) throw ShapeError(std::string(what) + ": empty batch");
}

torch::Tensor mean_to_tensor(const MeanImage& mean) {
    // HWC float -> CHW
    auto t = torch::from_blob(const_cast<float*>(mean.data.data()), {mean.height, mean.width, 3}, torch::kFloat32);
    return t.permute({2, 0, 1}).contiguous().clone();
}

MeanImage tensor_to_mean(const torch::Tensor& chw) {
    auto hwc = chw.permute({1, 2, 0}).contiguous();
    MeanImage m{static_cast<int>(chw.size(2)), static_cast<int>(chw.size(1)), {}};
    m.data.assign(hwc.data_ptr<float>(), hwc.data_ptr<float>() + hwc.numel());
    return m;
}

torch::Tensor crop_tensor(const Image& crop, const torch::Tensor& mean_chw) {
    auto t = torch::from_blob(const_cast<std::uint8_t*>(crop.data.data()), {crop.height, crop.width, 3},
                              torch::kUInt8);
    return t.permute({2, 0, 1}).to(torch::kFloat32).div_(255.0f).sub_(mean_chw);
}

// Standardisation of position targets: per-axis mean and floored std.
std::pair<torch::Tensor, torch::Tensor> position_stats(const torch::Tensor& positions) {
    auto flat = positions.reshape({-1, 3}).to(torch::kFloat64);
    auto offset = flat.mean(0);
    auto scale = flat.std(0, false).clamp_min(kPositionScaleFloor);
    return {offset.to(torch::kFloat32), scale.to(torch::kFloat32)};
}

void fill_targets(std::span<const SampleWindow> windows, bool center_only, torch::Tensor& positions,
                  torch::Tensor& quaternions) {
    const std::int64_t n = static_cast<std::int64_t>(windows.size());
    const std::int64_t steps = center_only ? 1 : 3;
    positions = torch::empty({n, steps, 3}, torch::kFloat64);
    quaternions = torch::empty({n, steps, 4}, torch::kFloat64);
    auto p = positions.accessor<double, 3>();
    auto q = quaternions.accessor<double, 3>();
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t k = 0; k < steps; ++k) {
            // Canonical quaternions are already hemisphere aligned with identity.
            const Pose& pose = windows[i].poses[center_only ? 1 : k];
            for (int a = 0; a < 3; ++a) p[i][k][a] = pose.position[a];
            for (int a = 0; a < 4; ++a) q[i][k][a] = pose.orientation[a];
        }
    }
}

torch::Tensor center_crops_tensor(std::span<const SampleWindow> windows, const torch::Tensor& mean_chw) {
    std::vector<torch::Tensor> crops;
    crops.reserve(windows.size());
    for (const auto& w : windows) crops.push_back(crop_tensor(*w.crops[1], mean_chw));
    return torch::stack(crops);
}

void validate_windows(std::span<const SampleWindow> windows, const char* stage) {
    if (windows.empty()) throw ArgumentError(std::string(stage) + ": no training windows");
    for (const auto& w : windows)
        for (const auto& c : w.crops)
            if (!c) throw ArgumentError(std::string(stage) + ": window without crops");
}

}  // namespace

Backbone parse_backbone(const std::string& name) {
    if (name == "small") return Backbone::small;
    if (name == "full") return Backbone::full;
    throw ArgumentError("unknown backbone '" + name + "' (small|full)");
}

std::string to_string(Backbone backbone) { return backbone == Backbone::small ? "small" : "full"; }

nlohmann::json AprConfig::to_json() const {
    return {{"backbone", to_string(backbone)}, {"head_width", head_width}, {"alpha", alpha},
            {"beta", beta},                    {"train", nn::to_json(train)}};
}

AprConfig AprConfig::from_json(const nlohmann::json& j) {
    static const std::set<std::string> keys = {"backbone", "head_width", "alpha", "beta", "train"};
    for (const auto& [k, _] : j.items())
        if (!keys.contains(k)) throw ArgumentError("apr config: unknown key '" + k + "'");
    AprConfig c;
    if (j.contains("backbone")) c.backbone = parse_backbone(j.at("backbone").get<std::string>());
    if (j.contains("head_width")) c.head_width = j.at("head_width").get<int>();
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    if (j.contains("beta")) c.beta = j.at("beta").get<double>();
    if (j.contains("train")) {
        static const std::set<std::string> tkeys = {"learning_rate", "final_lr_fraction", "batch_size", "epochs",
                                                    "seed"};
        for (const auto& [k, _] : j.at("train").items())
            if (!tkeys.contains(k)) throw ArgumentError("apr.train config: unknown key '" + k + "'");
        nn::read_train_settings(j.at("train"), c.train);
    }
    c.validate();
    return c;
}

nlohmann::json AprConfig::architecture() const {
    return {{"backbone", to_string(backbone)}, {"head_width", head_width}};
}

void AprConfig::validate() const {
    if (head_width <= 0) throw ArgumentError("apr: head_width must be positive");
    if (!(alpha > 0.0) || !(beta > 0.0)) throw ArgumentError("apr: alpha and beta must be positive");
}

SmallEncoderImpl::SmallEncoderImpl() {
    layers_ = register_module("layers", torch::nn::Sequential(BasicConv(3, 24, 7, 4), BasicConv(24, 32, 3, 2),
                                                              BasicConv(32, 32, 3), BasicConv(32, 64, 3, 2),
                                                              BasicConv(64, 64, 3), BasicConv(64, 128, 3, 2),
                                                              torch::nn::AdaptiveAvgPool2d(1), torch::nn::Flatten()));
}

torch::Tensor SmallEncoderImpl::forward(torch::Tensor x) { return layers_->forward(x); }

GoogLeNetEncoderImpl::GoogLeNetEncoderImpl() {
    stem_ = register_module("stem", torch::nn::Sequential(BasicConv(3, 64, 7, 2), max_pool(3, 2),
                                                          BasicConv(64, 64, 1), BasicConv(64, 192, 3),
                                                          max_pool(3, 2)));
    inception_ = register_module(
        "inception",
        torch::nn::Sequential(Inception(192, 64, 96, 128, 16, 32, 32), Inception(256, 128, 128, 192, 32, 96, 64),
                              max_pool(3, 2), Inception(480, 192, 96, 208, 16, 48, 64),
                              Inception(512, 160, 112, 224, 24, 64, 64), Inception(512, 128, 128, 256, 24, 64, 64),
                              Inception(512, 112, 144, 288, 32, 64, 64),
                              Inception(528, 256, 160, 320, 32, 128, 128), max_pool(2, 2),
                              Inception(832, 256, 160, 320, 32, 128, 128),
                              Inception(832, 384, 192, 384, 48, 128, 128), torch::nn::AdaptiveAvgPool2d(1),
                              torch::nn::Flatten()));
}

torch::Tensor GoogLeNetEncoderImpl::forward(torch::Tensor x) { return inception_->forward(stem_->forward(x)); }

std::shared_ptr<EncoderImpl> make_encoder(Backbone backbone) {
    if (backbone == Backbone::full) return std::make_shared<GoogLeNetEncoderImpl>();
    return std::make_shared<SmallEncoderImpl>();
}

PoseHeadImpl::PoseHeadImpl(std::int64_t in_features, std::int64_t width) {
    hidden_ = register_module("hidden", torch::nn::Linear(in_features, width));
    out_ = register_module("out", torch::nn::Linear(width, 7));
}

torch::Tensor PoseHeadImpl::forward(const torch::Tensor& features) {
    return out_->forward(torch::relu(hidden_->forward(features)));
}

AprNetImpl::AprNetImpl(const AprConfig& config) {
    config.validate();
    encoder_ = register_module("encoder", make_encoder(config.backbone));
    for (int k = 0; k < 3; ++k)
        heads_[k] = register_module("head" + std::to_string(k), PoseHead(encoder_->feature_dim(), config.head_width));
    position_offset_ = register_buffer("position_offset", torch::zeros({3}));
    position_scale_ = register_buffer("position_scale", torch::ones({3}));
    mean_image_ = register_buffer("mean_image", torch::zeros({3, kCropSize, kCropSize}));
}

torch::Tensor AprNetImpl::encode(const torch::Tensor& images) { return encoder_->forward(images); }

torch::Tensor AprNetImpl::forward(const torch::Tensor& crops) {
    const auto b = crops.size(0);
    auto features = encoder_->forward(crops.reshape({b * 3, crops.size(2), crops.size(3), crops.size(4)}))
                        .reshape({b, 3, -1});
    std::vector<torch::Tensor> outs;
    for (int k = 0; k < 3; ++k) {
        auto raw = heads_[k]->forward(features.select(1, k));
        auto position = raw.narrow(1, 0, 3) * position_scale_ + position_offset_;
        outs.push_back(torch::cat({position, raw.narrow(1, 3, 4)}, 1));
    }
    return torch::stack(outs, 1);
}

void AprNetImpl::set_position_normalization(const torch::Tensor& offset, const torch::Tensor& scale) {
    torch::NoGradGuard guard;
    position_offset_.copy_(offset);
    position_scale_.copy_(scale);
}

void AprNetImpl::set_mean_image(const MeanImage& mean) {
    torch::NoGradGuard guard;
    mean_image_.set_(mean_to_tensor(mean));
}

MeanImage AprNetImpl::mean_image() const { return tensor_to_mean(mean_image_); }

PoseNetImpl::PoseNetImpl(const AprConfig& config) {
    config.validate();
    encoder_ = register_module("encoder", make_encoder(config.backbone));
    head_ = register_module("head", PoseHead(encoder_->feature_dim(), config.head_width));
    position_offset_ = register_buffer("position_offset", torch::zeros({3}));
    position_scale_ = register_buffer("position_scale", torch::ones({3}));
    mean_image_ = register_buffer("mean_image", torch::zeros({3, kCropSize, kCropSize}));
}

torch::Tensor PoseNetImpl::forward(const torch::Tensor& crops) {
    auto raw = head_->forward(encoder_->forward(crops));
    return torch::cat({raw.narrow(1, 0, 3) * position_scale_ + position_offset_, raw.narrow(1, 3, 4)}, 1);
}

void PoseNetImpl::set_position_normalization(const torch::Tensor& offset, const torch::Tensor& scale) {
    torch::NoGradGuard guard;
    position_offset_.copy_(offset);
    position_scale_.copy_(scale);
}

void PoseNetImpl::set_mean_image(const MeanImage& mean) {
    torch::NoGradGuard guard;
    mean_image_.set_(mean_to_tensor(mean));
}

MeanImage PoseNetImpl::mean_image() const { return tensor_to_mean(mean_image_); }

Pose pose_from_raw(const float* raw) {
    Quaternion q{raw[3], raw[4], raw[5], raw[6]};
    if (!(q.norm() > 1e-8)) q = Quaternion::identity();
    return Pose({raw[0], raw[1], raw[2]}, q);
}

std::vector<AprOutput> to_apr_outputs(const torch::Tensor& predictions) {
    auto p = predictions.to(torch::kFloat32).contiguous();
    std::vector<AprOutput> out(static_cast<std::size_t>(p.size(0)));
    const float* data = p.data_ptr<float>();
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (int k = 0; k < 3; ++k) {
            const float* raw = data + (i * 3 + k) * 7;
            out[i].poses[k] = pose_from_raw(raw);
            for (int a = 0; a < 4; ++a) out[i].raw_quaternions[k][a] = raw[3 + a];
        }
    }
    return out;
}

torch::Tensor apr_forward(AprNet& net, const torch::Tensor& crops) {
    check_crops(crops, 5, "apr_forward");
    return net->forward(crops);
}

torch::Tensor apr_loss(const torch::Tensor& pred, const torch::Tensor& target_position,
                       const torch::Tensor& target_quaternion, double alpha, double beta) {
    if (pred.dim() != 3 || pred.size(1) != 3 || pred.size(2) != 7)
        throw ShapeError("apr_loss: predictions must be [B, 3, 7]");
    return nn::pose_loss(pred.narrow(2, 0, 3), pred.narrow(2, 3, 4), target_position, target_quaternion, alpha,
                         beta);
}

double apr_loss(const AprOutput& pred, const std::array<Pose, 3>& target, double alpha, double beta) {
    auto p = torch::empty({1, 3, 7}, torch::kFloat64);
    auto tp = torch::empty({1, 3, 3}, torch::kFloat64);
    auto tq = torch::empty({1, 3, 4}, torch::kFloat64);
    for (int k = 0; k < 3; ++k) {
        for (int a = 0; a < 3; ++a) {
            p[0][k][a] = pred.poses[k].position[a];
            tp[0][k][a] = target[k].position[a];
        }
        for (int a = 0; a < 4; ++a) {
            p[0][k][3 + a] = pred.raw_quaternions[k][a];
            tq[0][k][a] = target[k].orientation[a];
        }
    }
    return apr_loss(p, tp, tq, alpha, beta).item<double>();
}

torch::Tensor window_crops_tensor(std::span<const SampleWindow> windows, const MeanImage& mean) {
    const auto mean_chw = mean_to_tensor(mean);
    std::vector<torch::Tensor> batch;
    batch.reserve(windows.size());
    for (const auto& w : windows) {
        batch.push_back(torch::stack(
            {crop_tensor(*w.crops[0], mean_chw), crop_tensor(*w.crops[1], mean_chw), crop_tensor(*w.crops[2], mean_chw)}));
    }
    return torch::stack(batch);
}

void AprModel::save(const std::filesystem::path& path) const {
    nn::save_checkpoint(path, {"apr", config.to_json(), nn::fingerprint(config.architecture()), history}, *net);
}

AprModel AprModel::load(const std::filesystem::path& path, const std::optional<AprConfig>& expected) {
    const auto header = nn::read_checkpoint_header(path);
    AprModel m;
    m.config = expected ? *expected : AprConfig::from_json(header.config);
    m.history = header.history;
    m.net = AprNet(m.config);
    nn::load_checkpoint_state(path, {"apr", {}, nn::fingerprint(m.config.architecture()), {}}, *m.net);
    m.net->eval();
    return m;
}

AprModel train_apr(std::span<const SampleWindow> windows, const MeanImage& mean, const AprConfig& config) {
    validate_windows(windows, "train_apr");
    config.validate();
    torch::manual_seed(config.train.seed);
    AprModel model{config, AprNet(config), {}};

    torch::Tensor positions, quaternions;
    fill_targets(windows, false, positions, quaternions);
    const auto [offset, scale] = position_stats(positions);
    model.net->set_position_normalization(offset, scale);
    model.net->set_mean_image(mean);
    positions = positions.to(torch::kFloat32);
    quaternions = quaternions.to(torch::kFloat32);

    model.net->train();
    auto batch_loss = [&](std::span<const std::int64_t> idx) {
        std::vector<SampleWindow> batch;
        batch.reserve(idx.size());
        for (auto i : idx) batch.push_back(windows[static_cast<std::size_t>(i)]);
        const auto index = torch::tensor(std::vector<std::int64_t>(idx.begin(), idx.end()));
        auto pred = model.net->forward(window_crops_tensor(batch, mean));
        return apr_loss(pred, positions.index_select(0, index), quaternions.index_select(0, index), config.alpha,
                        config.beta);
    };
    model.history = nn::run_training(model.net->parameters(), windows.size(), config.train, batch_loss, "apr");
    model.net->eval();
    return model;
}

std::vector<AprOutput> predict_apr(AprModel& model, std::span<const SampleWindow> windows) {
    torch::NoGradGuard guard;
    model.net->eval();
    const MeanImage mean = model.net->mean_image();
    std::vector<AprOutput> out;
    out.reserve(windows.size());
    for (std::size_t start = 0; start < windows.size(); start += kPredictBatch) {
        const auto chunk = windows.subspan(start, std::min<std::size_t>(kPredictBatch, windows.size() - start));
        auto pred = apr_forward(model.net, window_crops_tensor(chunk, mean));
        for (auto& o : to_apr_outputs(pred)) out.push_back(o);
    }
    return out;
}

void PoseNetModel::save(const std::filesystem::path& path) const {
    nn::save_checkpoint(path, {"posenet", config.to_json(), nn::fingerprint(config.architecture()), history}, *net);
}

PoseNetModel PoseNetModel::load(const std::filesystem::path& path, const std::optional<AprConfig>& expected) {
    const auto header = nn::read_checkpoint_header(path);
    PoseNetModel m;
    m.config = expected ? *expected : AprConfig::from_json(header.config);
    m.history = header.history;
    m.net = PoseNet(m.config);
    nn::load_checkpoint_state(path, {"posenet", {}, nn::fingerprint(m.config.architecture()), {}}, *m.net);
    m.net->eval();
    return m;
}

PoseNetModel train_posenet(std::span<const SampleWindow> windows, const MeanImage& mean, const AprConfig& config) {
    validate_windows(windows, "train_posenet");
    config.validate();
    torch::manual_seed(config.train.seed);
    PoseNetModel model{config, PoseNet(config), {}};

    torch::Tensor positions, quaternions;
    fill_targets(windows, true, positions, quaternions);
    const auto [offset, scale] = position_stats(positions);
    model.net->set_position_normalization(offset, scale);
    model.net->set_mean_image(mean);
    positions = positions.select(1, 0).to(torch::kFloat32);
    quaternions = quaternions.select(1, 0).to(torch::kFloat32);
    const auto mean_chw = mean_to_tensor(mean);

    model.net->train();
    auto batch_loss = [&](std::span<const std::int64_t> idx) {
        std::vector<SampleWindow> batch;
        for (auto i : idx) batch.push_back(windows[static_cast<std::size_t>(i)]);
        const auto index = torch::tensor(std::vector<std::int64_t>(idx.begin(), idx.end()));
        auto pred = model.net->forward(center_crops_tensor(batch, mean_chw));
        return nn::pose_loss(pred.narrow(1, 0, 3), pred.narrow(1, 3, 4), positions.index_select(0, index),
                             quaternions.index_select(0, index), config.alpha, config.beta);
    };
    model.history = nn::run_training(model.net->parameters(), windows.size(), config.train, batch_loss, "posenet");
    model.net->eval();
    return model;
}

std::vector<Pose> predict_posenet(PoseNetModel& model, std::span<const SampleWindow> windows) {
    torch::NoGradGuard guard;
    model.net->eval();
    const auto mean_chw = mean_to_tensor(model.net->mean_image());
    std::vector<Pose> out;
    for (std::size_t start = 0; start < windows.size(); start += kPredictBatch) {
        const auto chunk = windows.subspan(start, std::min<std::size_t>(kPredictBatch, windows.size() - start));
        auto pred = model.net->forward(center_crops_tensor(chunk, mean_chw)).contiguous();
        const float* d = pred.data_ptr<float>();
        for (std::int64_t i = 0; i < pred.size(0); ++i) out.push_back(pose_from_raw(d + i * 7));
    }
    return out;
}

}  // namespace vipr
