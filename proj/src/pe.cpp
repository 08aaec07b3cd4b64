#include "vipr/pe.hpp"

#include <set>

#include "vipr/errors.hpp"

namespace vipr {

namespace {
constexpr double kInputScaleFloor = 1e-3;
constexpr double kPositionScaleFloor = 0.05;

// Hamilton product of [..., 4] tensors in (w, x, y, z) order.
torch::Tensor quat_mul(const torch::Tensor& a, const torch::Tensor& b) {
    const auto aw = a.select(-1, 0), ax = a.select(-1, 1), ay = a.select(-1, 2), az = a.select(-1, 3);
    const auto bw = b.select(-1, 0), bx = b.select(-1, 1), by = b.select(-1, 2), bz = b.select(-1, 3);
    return torch::stack({aw * bw - ax * bx - ay * by - az * bz, aw * bx + ax * bw + ay * bz - az * by,
                         aw * by - ax * bz + ay * bw + az * bx, aw * bz + ax * by - ay * bx + az * bw},
                        -1);
}

torch::Tensor quat_conj(const torch::Tensor& q) {
    return q * torch::tensor({1.0, -1.0, -1.0, -1.0}, q.options());
}

torch::Tensor anchor_position(const torch::Tensor& input) { return input.select(1, 1).narrow(1, 0, 3); }

torch::Tensor anchor_rotation(const torch::Tensor& input) {
    const auto q = input.select(1, 1).narrow(1, 3, 4);
    return q / q.norm(2, 1, true).clamp_min(1e-8);
}
}  // namespace

FusionInput build_fusion_input(const AprOutput& apr, const RprOutput& rpr) {
    FusionInput in;
    const auto rels = rpr.relatives();
    for (int k = 0; k < 3; ++k) {
        auto& row = in.rows[k];
        const Pose& p = apr.poses[k];
        for (int a = 0; a < 3; ++a) row[a] = p.position[a];
        for (int a = 0; a < 4; ++a) row[3 + a] = p.orientation[a];
        for (int a = 0; a < 3; ++a) row[7 + a] = rels[k].displacement_local[a];
        for (int a = 0; a < 4; ++a) row[10 + a] = rels[k].rotation_delta[a];
    }
    return in;
}

nlohmann::json PeConfig::to_json() const {
    return {{"hidden", hidden}, {"layers", layers}, {"alpha", alpha}, {"beta", beta}, {"train", nn::to_json(train)}};
}

PeConfig PeConfig::from_json(const nlohmann::json& j) {
    static const std::set<std::string> keys = {"hidden", "layers", "alpha", "beta", "train"};
    for (const auto& [k, _] : j.items())
        if (!keys.contains(k)) throw ArgumentError("pe config: unknown key '" + k + "'");
    PeConfig c;
    if (j.contains("hidden")) c.hidden = j.at("hidden").get<int>();
    if (j.contains("layers")) c.layers = j.at("layers").get<int>();
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    if (j.contains("beta")) c.beta = j.at("beta").get<double>();
    if (j.contains("train")) {
        static const std::set<std::string> tkeys = {"learning_rate", "final_lr_fraction", "batch_size", "epochs",
                                                    "seed"};
        for (const auto& [k, _] : j.at("train").items())
            if (!tkeys.contains(k)) throw ArgumentError("pe.train config: unknown key '" + k + "'");
        nn::read_train_settings(j.at("train"), c.train);
    }
    c.validate();
    return c;
}

nlohmann::json PeConfig::architecture() const { return {{"hidden", hidden}, {"layers", layers}}; }

void PeConfig::validate() const {
    if (hidden <= 0 || layers <= 0) throw ArgumentError("pe: hidden size and layer count must be positive");
    if (alpha < 0.0 || beta < 0.0) throw ArgumentError("pe: loss weights must be nonnegative");
}

PeNetImpl::PeNetImpl(const PeConfig& config) {
    config.validate();
    lstm_ = register_module("lstm", torch::nn::LSTM(torch::nn::LSTMOptions(FusionInput::kColumns, config.hidden)
                                                        .num_layers(config.layers)
                                                        .batch_first(true)));
    position_head_ = register_module("position_head", torch::nn::Linear(config.hidden, 3));
    rotation_head_ = register_module("rotation_head", torch::nn::Linear(config.hidden, 4));
    input_offset_ = register_buffer("input_offset", torch::zeros({FusionInput::kColumns}));
    input_scale_ = register_buffer("input_scale", torch::ones({FusionInput::kColumns}));
    position_offset_ = register_buffer("position_offset", torch::zeros({3}));
    position_scale_ = register_buffer("position_scale", torch::ones({3}));
}

torch::Tensor PeNetImpl::anchored(const torch::Tensor& input) {
    const auto position = input.narrow(2, 0, 3) - anchor_position(input).unsqueeze(1);
    auto rotation = quat_mul(quat_conj(anchor_rotation(input)).unsqueeze(1), input.narrow(2, 3, 4));
    rotation = rotation * torch::where(rotation.narrow(2, 0, 1) < 0, -1.0, 1.0).to(rotation.dtype());
    return torch::cat({position, rotation, input.narrow(2, 7, FusionInput::kColumns - 7)}, 2);
}

torch::Tensor PeNetImpl::forward_raw(const torch::Tensor& input) {
    auto [seq, state] = lstm_->forward((anchored(input) - input_offset_) / input_scale_);
    (void)state;
    auto last = seq.select(1, seq.size(1) - 1);
    return torch::cat({position_head_->forward(last), rotation_head_->forward(last)}, 1);
}

torch::Tensor PeNetImpl::forward(const torch::Tensor& input) {
    auto raw = forward_raw(input);
    const auto position = anchor_position(input) + raw.narrow(1, 0, 3) * position_scale_ + position_offset_;
    return torch::cat({position, quat_mul(anchor_rotation(input), raw.narrow(1, 3, 4))}, 1);
}

void PeNetImpl::set_normalization(const torch::Tensor& input_offset, const torch::Tensor& input_scale,
                                  const torch::Tensor& position_offset, const torch::Tensor& position_scale) {
    torch::NoGradGuard guard;
    input_offset_.copy_(input_offset);
    input_scale_.copy_(input_scale);
    position_offset_.copy_(position_offset);
    position_scale_.copy_(position_scale);
}

void PeNetImpl::zero_heads() {
    torch::NoGradGuard guard;
    for (auto* head : {&position_head_, &rotation_head_}) {
        (*head)->weight.zero_();
        (*head)->bias.zero_();
    }
}

torch::Tensor fusion_tensor(std::span<const FusionInput> inputs) {
    auto t = torch::empty({static_cast<std::int64_t>(inputs.size()), 3, FusionInput::kColumns}, torch::kFloat32);
    auto a = t.accessor<float, 3>();
    for (std::size_t i = 0; i < inputs.size(); ++i)
        for (int k = 0; k < 3; ++k)
            for (int c = 0; c < FusionInput::kColumns; ++c)
                a[static_cast<std::int64_t>(i)][k][c] = static_cast<float>(inputs[i].rows[k][c]);
    return t;
}

torch::Tensor pe_forward(PeNet& net, const torch::Tensor& input) {
    if (input.dim() != 3 || input.size(1) != 3 || input.size(2) != FusionInput::kColumns) {
        std::ostringstream msg;
        msg << "pe_forward: expected [B, 3, 14] input, got " << input.sizes();
        throw ShapeError(msg.str());
    }
    return net->forward(input);
}

torch::Tensor pe_loss(const torch::Tensor& pred, const torch::Tensor& target_position,
                      const torch::Tensor& target_quaternion, double alpha, double beta) {
    if (pred.dim() != 2 || pred.size(1) != 7) throw ShapeError("pe_loss: predictions must be [B, 7]");
    return nn::pose_loss(pred.narrow(1, 0, 3), pred.narrow(1, 3, 4), target_position, target_quaternion, alpha,
                         beta);
}

double pe_loss(const std::array<double, 7>& pred, const Pose& target, double alpha, double beta) {
    auto p = torch::tensor(std::vector<double>(pred.begin(), pred.end()), torch::kFloat64).reshape({1, 7});
    auto tp = torch::tensor(std::vector<double>{target.position.x, target.position.y, target.position.z},
                            torch::kFloat64)
                  .reshape({1, 3});
    const auto& q = target.orientation;
    auto tq = torch::tensor(std::vector<double>{q.w, q.x, q.y, q.z}, torch::kFloat64).reshape({1, 4});
    return pe_loss(p, tp, tq, alpha, beta).item<double>();
}

void PeModel::save(const std::filesystem::path& path) const {
    nn::save_checkpoint(path, {"pe", config.to_json(), nn::fingerprint(config.architecture()), history}, *net);
}

PeModel PeModel::load(const std::filesystem::path& path, const std::optional<PeConfig>& expected) {
    const auto header = nn::read_checkpoint_header(path);
    PeModel m;
    m.config = expected ? *expected : PeConfig::from_json(header.config);
    m.history = header.history;
    m.net = PeNet(m.config);
    nn::load_checkpoint_state(path, {"pe", {}, nn::fingerprint(m.config.architecture()), {}}, *m.net);
    m.net->eval();
    return m;
}

std::vector<FusionInput> fusion_inputs(AprModel& apr, RprModel& rpr, std::span<const SampleWindow> windows) {
    if (!apr.net || !rpr.net) throw DependencyError("fusion inputs need trained APR and RPR models");
    const auto a = predict_apr(apr, windows);
    const auto r = predict_rpr(rpr, windows);
    std::vector<FusionInput> out;
    out.reserve(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) out.push_back(build_fusion_input(a[i], r[i]));
    return out;
}

PeModel train_pe(std::span<const SampleWindow> windows, std::span<const FusionInput> inputs, const PeConfig& config) {
    if (windows.empty()) throw ArgumentError("train_pe: no training windows");
    if (inputs.size() != windows.size()) throw ArgumentError("train_pe: one fusion input per window required");
    config.validate();
    torch::manual_seed(config.train.seed);
    PeModel model{config, PeNet(config), {}};

    const auto x = fusion_tensor(inputs);
    const std::int64_t n = x.size(0);
    auto target_position = torch::empty({n, 3}, torch::kFloat64);
    auto target_quaternion = torch::empty({n, 4}, torch::kFloat64);
    {
        auto p = target_position.accessor<double, 2>();
        auto q = target_quaternion.accessor<double, 2>();
        for (std::int64_t i = 0; i < n; ++i) {
            const Pose& gt = windows[static_cast<std::size_t>(i)].center_pose();
            for (int a = 0; a < 3; ++a) p[i][a] = gt.position[a];
            for (int a = 0; a < 4; ++a) q[i][a] = gt.orientation[a];
        }
    }
    const auto x64 = x.to(torch::kFloat64);
    const auto flat = model.net->anchored(x64).reshape({-1, FusionInput::kColumns});
    const auto correction = target_position - anchor_position(x64);
    model.net->set_normalization(flat.mean(0).to(torch::kFloat32),
                                 flat.std(0, false).clamp_min(kInputScaleFloor).to(torch::kFloat32),
                                 correction.mean(0).to(torch::kFloat32),
                                 correction.std(0, false).clamp_min(kPositionScaleFloor).to(torch::kFloat32));
    target_position = target_position.to(torch::kFloat32);
    target_quaternion = target_quaternion.to(torch::kFloat32);

    model.net->train();
    auto batch_loss = [&](std::span<const std::int64_t> idx) {
        const auto index = torch::tensor(std::vector<std::int64_t>(idx.begin(), idx.end()));
        auto pred = model.net->forward(x.index_select(0, index));
        return pe_loss(pred, target_position.index_select(0, index), target_quaternion.index_select(0, index),
                       config.alpha, config.beta);
    };
    model.history = nn::run_training(model.net->parameters(), windows.size(), config.train, batch_loss, "pe");
    model.net->eval();
    return model;
}

PeModel train_pe(std::span<const SampleWindow> windows, AprModel& apr, RprModel& rpr, const PeConfig& config) {
    const auto inputs = fusion_inputs(apr, rpr, windows);
    return train_pe(windows, inputs, config);
}

std::vector<Pose> predict_pe(PeModel& pe, std::span<const FusionInput> inputs) {
    torch::NoGradGuard guard;
    pe.net->eval();
    std::vector<Pose> out;
    if (inputs.empty()) return out;
    auto pred = pe_forward(pe.net, fusion_tensor(inputs)).contiguous();
    const float* d = pred.data_ptr<float>();
    for (std::int64_t i = 0; i < pred.size(0); ++i) out.push_back(pose_from_raw(d + i * 7));
    return out;
}

std::vector<Pose> predict_vipr(AprModel& apr, RprModel& rpr, PeModel& pe, std::span<const SampleWindow> windows) {
    if (!pe.net) throw DependencyError("predict_vipr: PE model missing");
    const auto inputs = fusion_inputs(apr, rpr, windows);
    return predict_pe(pe, inputs);
}

}  // namespace vipr
