#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vipr/errors.hpp"
#include "vipr/eval.hpp"
#include "vipr/rpr.hpp"

using namespace vipr;

namespace {

RprOutput output_of(const std::array<RelativePose, 3>& rels) {
    RprOutput o;
    for (int k = 0; k < 3; ++k) {
        o.displacements[k] = rels[k].displacement_local;
        for (int a = 0; a < 4; ++a) o.rotations[k][a] = rels[k].rotation_delta[a];
    }
    return o;
}

}  // namespace

TEST(RprForward, ShapeContractAndZeroHeads) {
    torch::manual_seed(1);
    RprNet net(RprConfig{});
    torch::NoGradGuard g;
    auto [d, r] = rpr_forward(net, torch::randn({4, 3, 512}));
    EXPECT_EQ(d.sizes(), (std::vector<std::int64_t>{4, 3, 3}));
    EXPECT_EQ(r.sizes(), (std::vector<std::int64_t>{4, 3, 4}));
    EXPECT_THROW(rpr_forward(net, torch::randn({4, 2, 512})), ShapeError);
    EXPECT_THROW(rpr_forward(net, torch::randn({4, 512})), ShapeError);

    net->zero_heads();
    auto [zd, zr] = rpr_forward(net, torch::zeros({2, 3, 512}));
    EXPECT_EQ(zd.abs().max().item<float>(), 0.0f);
    EXPECT_EQ(zr.abs().max().item<float>(), 0.0f);
}

TEST(RprForward, ParameterCount) {
    RprNet net(RprConfig{});
    const auto n = nn::count_parameters(*net);
    EXPECT_NEAR(static_cast<double>(n), 214605.0, 0.05 * 214605.0) << n;
    RprConfig eight;
    eight.zones_x = eight.zones_y = 8;
    EXPECT_EQ(eight.feature_width(), 128);
    RprNet small(eight);
    EXPECT_LT(nn::count_parameters(*small), n);
}

TEST(RprLoss, Examples) {
    std::array<RelativePose, 3> truth{RelativePose({0.1, 0, 0}, {1, 0, 0, 0}),
                                      RelativePose({0, 0.2, 0}, Quaternion::from_axis_angle({0, 0, 1}, 0.1)),
                                      RelativePose({0, 0, 0.05}, {1, 0, 0, 0})};
    EXPECT_NEAR(rpr_loss(output_of(truth), truth, 1.0, 1.0), 0.0, 1e-12);
    auto off = truth;
    off[2].displacement_local.x += 0.1;
    EXPECT_NEAR(rpr_loss(output_of(off), truth, 1.0, 1.0), 0.1 / 3.0, 1e-12);
    auto rotated = output_of(truth);
    rotated.rotations[0] = {0.0, 1.0, 0.0, 0.0};
    EXPECT_NEAR(rpr_loss(rotated, truth, 1.0, 0.0), 0.0, 1e-12);
    EXPECT_GT(rpr_loss(rotated, truth, 1.0, 1.0), 0.0);
}

TEST(RprLoss, SignInvariantAndGradient) {
    torch::manual_seed(2);
    const auto pd = torch::randn({3, 3, 3}, torch::kFloat64);
    const auto pr = torch::randn({3, 3, 4}, torch::kFloat64);
    const auto td = torch::randn({3, 3, 3}, torch::kFloat64);
    const auto tr = torch::randn({3, 3, 4}, torch::kFloat64);
    EXPECT_NEAR(rpr_loss(pd, pr, td, tr, 1, 2).item<double>(), rpr_loss(pd, pr, td, -tr, 1, 2).item<double>(), 1e-12);
    const double err = oracle::gradient_check(
        [&](const std::vector<torch::Tensor>& in) { return rpr_loss(in[0], in[1], td, tr, 1.0, 3.0); }, {pd, pr});
    EXPECT_LE(err, 1e-4);
}

TEST(DeadReckoning, IdentityRelsGiveConstantPose) {
    const Pose start({1, 2, 3}, Quaternion::from_axis_angle({1, 1, 0}, 0.4));
    const std::vector<RelativePose> rels(10, RelativePose());
    const auto out = integrate_dead_reckoning(start, rels);
    ASSERT_EQ(out.size(), 11u);
    for (const auto& p : out) {
        EXPECT_NEAR((p.position - start.position).norm(), 0.0, 1e-15);
        EXPECT_NEAR(p.orientation.dot(start.orientation), 1.0, 1e-15);
    }
}

TEST(DeadReckoning, StraightLineArithmetic) {
    const std::vector<RelativePose> rels(100, RelativePose({0.01, 0, 0}, {1, 0, 0, 0}));
    const auto out = integrate_dead_reckoning(Pose(), rels);
    EXPECT_NEAR(out.back().position.x, 1.0, 1e-12);
    EXPECT_NEAR(out.back().position.y, 0.0, 1e-15);
}

TEST(DeadReckoning, MatchesComposedMatrixOracle) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    std::vector<RelativePose> rels;
    for (int i = 0; i < 50; ++i)
        rels.emplace_back(Vec3{u(rng), u(rng), u(rng)}, Quaternion(1, u(rng), u(rng), u(rng)));
    const auto out = integrate_dead_reckoning(Pose(), rels);
    // Oracle: accumulate with explicit rotation matrices.
    oracle::Mat3 r{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    std::array<double, 3> p{0, 0, 0};
    for (std::size_t i = 0; i < rels.size(); ++i) {
        const auto& d = rels[i].displacement_local;
        const auto step = oracle::mul(r, {d.x, d.y, d.z});
        for (int a = 0; a < 3; ++a) p[a] += step[a];
        const auto dr = oracle::rodrigues(rels[i].rotation_delta);
        oracle::Mat3 next{};
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                for (int c = 0; c < 3; ++c) next[a][b] += r[a][c] * dr[c][b];
        r = next;
        EXPECT_NEAR(out[i + 1].position.x, p[0], 1e-9);
        EXPECT_NEAR(out[i + 1].position.y, p[1], 1e-9);
        EXPECT_NEAR(out[i + 1].position.z, p[2], 1e-9);
    }
}

TEST(RprConfig, DefaultsAndJson) {
    RprConfig c;
    EXPECT_EQ(c.hidden, 64);
    EXPECT_EQ(c.layers, 3);
    EXPECT_EQ(c.alpha, 1.0);
    EXPECT_EQ(RprConfig::from_json(c.to_json()).to_json(), c.to_json());
    EXPECT_THROW(RprConfig::from_json({{"hidden", 0}}), ArgumentError);
    EXPECT_THROW(RprConfig::from_json({{"layerz", 2}}), ArgumentError);
}

TEST(RprTrain, EmptyRejected) {
    std::vector<SampleWindow> none;
    EXPECT_THROW(train_rpr(none, RprConfig{}), ArgumentError);
}

TEST(RprTrain, LearnsConstantVelocityAndIsDeterministic) {
    const auto data = fixture::simulate({fixture::line("a", 25, 0.0), fixture::line("b", 25, 90.0)},
                                        {fixture::line("c", 12, 45.0)});
    RprConfig config;
    config.train.epochs = 60;
    auto a = train_rpr(data.train, config);
    auto b = train_rpr(data.train, config);
    EXPECT_EQ(nn::format_metrics(a.history), nn::format_metrics(b.history));
    EXPECT_LT(a.history.back().loss, 0.2 * a.history.front().loss);

    const auto out = predict_rpr(a, data.train);
    ASSERT_EQ(out.size(), data.train.size());
    std::vector<Vec3> pred, truth;
    for (std::size_t i = 0; i < out.size(); ++i)
        for (int k = 0; k < 3; ++k) {
            pred.push_back(out[i].displacements[k]);
            truth.push_back(data.train[i].relatives[k].displacement_local);
            EXPECT_TRUE(out[i].relatives()[k].rotation_delta.is_unit(1e-9));
        }
    const auto med = rpr_axis_medians(pred, truth);
    EXPECT_LT(med.error_fraction[0], 0.2);
    EXPECT_LT(med.error_fraction[1], 0.2);

    const auto dir = oracle::temp_dir("rpr-checkpoint");
    a.save(dir / "rpr.pt");
    auto loaded = RprModel::load(dir / "rpr.pt");
    const auto again = predict_rpr(loaded, data.train);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(again[i].displacements[1], out[i].displacements[1]);
    auto other = config;
    other.hidden = 32;
    EXPECT_THROW(RprModel::load(dir / "rpr.pt", other), DependencyError);
}
