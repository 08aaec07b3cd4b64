#include "vipr/rpr.hpp"

#include <set>

#include "vipr/errors.hpp"

namespace vipr {

namespace {
constexpr double kDisplacementScaleFloor = 1e-3;
constexpr double kFeatureScaleFloor = 1e-6;
}  // namespace

nlohmann::json RprConfig::to_json() const {
    return {{"hidden", hidden},   {"layers", layers}, {"zones_x", zones_x},
            {"zones_y", zones_y}, {"alpha", alpha},   {"beta", beta},
            {"train", nn::to_json(train)}};
}

RprConfig RprConfig::from_json(const nlohmann::json& j) {
    static const std::set<std::string> keys = {"hidden", "layers", "zones_x", "zones_y", "alpha", "beta", "train"};
    for (const auto& [k, _] : j.items())
        if (!keys.contains(k)) throw ArgumentError("rpr config: unknown key '" + k + "'");
    RprConfig c;
    if (j.contains("hidden")) c.hidden = j.at("hidden").get<int>();
    if (j.contains("layers")) c.layers = j.at("layers").get<int>();
    if (j.contains("zones_x")) c.zones_x = j.at("zones_x").get<int>();
    if (j.contains("zones_y")) c.zones_y = j.at("zones_y").get<int>();
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    if (j.contains("beta")) c.beta = j.at("beta").get<double>();
    if (j.contains("train")) {
        static const std::set<std::string> tkeys = {"learning_rate", "final_lr_fraction", "batch_size", "epochs",
                                                    "seed"};
        for (const auto& [k, _] : j.at("train").items())
            if (!tkeys.contains(k)) throw ArgumentError("rpr.train config: unknown key '" + k + "'");
        nn::read_train_settings(j.at("train"), c.train);
    }
    c.validate();
    return c;
}

nlohmann::json RprConfig::architecture() const {
    return {{"hidden", hidden}, {"layers", layers}, {"zones_x", zones_x}, {"zones_y", zones_y}};
}

void RprConfig::validate() const {
    if (hidden <= 0 || layers <= 0) throw ArgumentError("rpr: hidden size and layer count must be positive");
    if (zones_x <= 0 || zones_y <= 0) throw ArgumentError("rpr: zone counts must be positive");
    if (alpha < 0.0 || beta < 0.0) throw ArgumentError("rpr: loss weights must be nonnegative");
}

RprNetImpl::RprNetImpl(const RprConfig& config) : feature_width_(config.feature_width()) {
    config.validate();
    lstm_ = register_module(
        "lstm", torch::nn::LSTM(
                    torch::nn::LSTMOptions(feature_width_, config.hidden).num_layers(config.layers).batch_first(true)));
    displacement_head_ = register_module("displacement_head", torch::nn::Linear(config.hidden, 3));
    rotation_head_ = register_module("rotation_head", torch::nn::Linear(config.hidden, 4));
    feature_scale_ = register_buffer("feature_scale", torch::ones({1}));
    displacement_scale_ = register_buffer("displacement_scale", torch::ones({3}));
}

std::pair<torch::Tensor, torch::Tensor> RprNetImpl::forward(const torch::Tensor& features) {
    auto [seq, state] = lstm_->forward(features / feature_scale_);
    (void)state;
    return {displacement_head_->forward(seq) * displacement_scale_, rotation_head_->forward(seq)};
}

void RprNetImpl::set_normalization(double feature_scale, const torch::Tensor& displacement_scale) {
    torch::NoGradGuard guard;
    feature_scale_.fill_(feature_scale);
    displacement_scale_.copy_(displacement_scale);
}

void RprNetImpl::zero_heads() {
    torch::NoGradGuard guard;
    for (auto* head : {&displacement_head_, &rotation_head_}) {
        (*head)->weight.zero_();
        (*head)->bias.zero_();
    }
}

std::array<RelativePose, 3> RprOutput::relatives() const {
    std::array<RelativePose, 3> out;
    for (int k = 0; k < 3; ++k) {
        Quaternion q{rotations[k][0], rotations[k][1], rotations[k][2], rotations[k][3]};
        if (!(q.norm() > 1e-8)) q = Quaternion::identity();
        out[k] = RelativePose(displacements[k], q);
    }
    return out;
}

std::pair<torch::Tensor, torch::Tensor> rpr_forward(RprNet& net, const torch::Tensor& features) {
    if (features.dim() != 3 || features.size(1) != 3) {
        std::ostringstream msg;
        msg << "rpr_forward: expected [B, 3, F] features, got " << features.sizes();
        throw ShapeError(msg.str());
    }
    return net->forward(features);
}

torch::Tensor rpr_loss(const torch::Tensor& pred_displacement, const torch::Tensor& pred_rotation,
                       const torch::Tensor& target_displacement, const torch::Tensor& target_rotation, double alpha,
                       double beta) {
    if (pred_displacement.dim() != 3 || pred_displacement.size(1) != 3)
        throw ShapeError("rpr_loss: displacements must be [B, 3, 3]");
    return nn::pose_loss(pred_displacement, pred_rotation, target_displacement, target_rotation, alpha, beta);
}

double rpr_loss(const RprOutput& pred, const std::array<RelativePose, 3>& target, double alpha, double beta) {
    auto pd = torch::empty({1, 3, 3}, torch::kFloat64);
    auto pr = torch::empty({1, 3, 4}, torch::kFloat64);
    auto td = torch::empty({1, 3, 3}, torch::kFloat64);
    auto tr = torch::empty({1, 3, 4}, torch::kFloat64);
    for (int k = 0; k < 3; ++k) {
        for (int a = 0; a < 3; ++a) {
            pd[0][k][a] = pred.displacements[k][a];
            td[0][k][a] = target[k].displacement_local[a];
        }
        for (int a = 0; a < 4; ++a) {
            pr[0][k][a] = pred.rotations[k][a];
            tr[0][k][a] = target[k].rotation_delta[a];
        }
    }
    return rpr_loss(pd, pr, td, tr, alpha, beta).item<double>();
}

torch::Tensor window_features_tensor(std::span<const SampleWindow> windows) {
    if (windows.empty()) throw ArgumentError("window_features_tensor: no windows");
    const std::int64_t cols = windows[0].feature.cols;
    auto out = torch::empty({static_cast<std::int64_t>(windows.size()), 3, cols}, torch::kFloat32);
    float* dst = out.data_ptr<float>();
    for (const auto& w : windows) {
        if (w.feature.cols != cols || w.feature.data.size() != static_cast<std::size_t>(3 * cols))
            throw ShapeError("window_features_tensor: windows carry features of different widths");
        std::copy(w.feature.data.begin(), w.feature.data.end(), dst);
        dst += 3 * cols;
    }
    return out;
}

std::vector<Pose> integrate_dead_reckoning(const Pose& start, std::span<const RelativePose> rels) {
    std::vector<Pose> out;
    out.reserve(rels.size() + 1);
    out.push_back(start);
    for (const auto& r : rels) out.push_back(compose(out.back(), r));
    return out;
}

void RprModel::save(const std::filesystem::path& path) const {
    nn::save_checkpoint(path, {"rpr", config.to_json(), nn::fingerprint(config.architecture()), history}, *net);
}

RprModel RprModel::load(const std::filesystem::path& path, const std::optional<RprConfig>& expected) {
    const auto header = nn::read_checkpoint_header(path);
    RprModel m;
    m.config = expected ? *expected : RprConfig::from_json(header.config);
    m.history = header.history;
    m.net = RprNet(m.config);
    nn::load_checkpoint_state(path, {"rpr", {}, nn::fingerprint(m.config.architecture()), {}}, *m.net);
    m.net->eval();
    return m;
}

RprModel train_rpr(std::span<const SampleWindow> windows, const RprConfig& config) {
    if (windows.empty()) throw ArgumentError("train_rpr: no training windows");
    config.validate();
    torch::manual_seed(config.train.seed);
    RprModel model{config, RprNet(config), {}};

    const auto features = window_features_tensor(windows);
    if (features.size(2) != config.feature_width())
        throw ShapeError("train_rpr: feature width " + std::to_string(features.size(2)) + " does not match zones");

    const std::int64_t n = static_cast<std::int64_t>(windows.size());
    auto displacement = torch::empty({n, 3, 3}, torch::kFloat64);
    auto rotation = torch::empty({n, 3, 4}, torch::kFloat64);
    {
        auto d = displacement.accessor<double, 3>();
        auto r = rotation.accessor<double, 3>();
        for (std::int64_t i = 0; i < n; ++i)
            for (int k = 0; k < 3; ++k) {
                const auto& rel = windows[static_cast<std::size_t>(i)].relatives[k];
                for (int a = 0; a < 3; ++a) d[i][k][a] = rel.displacement_local[a];
                for (int a = 0; a < 4; ++a) r[i][k][a] = rel.rotation_delta[a];
            }
    }
    const double feature_scale =
        std::max(kFeatureScaleFloor, features.to(torch::kFloat64).pow(2).mean().sqrt().item<double>());
    const auto displacement_scale =
        displacement.reshape({-1, 3}).pow(2).mean(0).sqrt().clamp_min(kDisplacementScaleFloor).to(torch::kFloat32);
    model.net->set_normalization(feature_scale, displacement_scale);
    displacement = displacement.to(torch::kFloat32);
    rotation = rotation.to(torch::kFloat32);

    model.net->train();
    auto batch_loss = [&](std::span<const std::int64_t> idx) {
        const auto index = torch::tensor(std::vector<std::int64_t>(idx.begin(), idx.end()));
        auto [pd, pr] = model.net->forward(features.index_select(0, index));
        return rpr_loss(pd, pr, displacement.index_select(0, index), rotation.index_select(0, index), config.alpha,
                        config.beta);
    };
    model.history = nn::run_training(model.net->parameters(), windows.size(), config.train, batch_loss, "rpr");
    model.net->eval();
    return model;
}

std::vector<RprOutput> predict_rpr(RprModel& model, std::span<const SampleWindow> windows) {
    torch::NoGradGuard guard;
    model.net->eval();
    std::vector<RprOutput> out;
    if (windows.empty()) return out;
    auto [pd, pr] = rpr_forward(model.net, window_features_tensor(windows));
    pd = pd.contiguous();
    pr = pr.contiguous();
    const float* d = pd.data_ptr<float>();
    const float* r = pr.data_ptr<float>();
    out.resize(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i)
        for (int k = 0; k < 3; ++k) {
            const float* dk = d + (i * 3 + k) * 3;
            const float* rk = r + (i * 3 + k) * 4;
            out[i].displacements[k] = {dk[0], dk[1], dk[2]};
            out[i].rotations[k] = {rk[0], rk[1], rk[2], rk[3]};
        }
    return out;
}

}  // namespace vipr
