#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vipr/errors.hpp"
#include "vipr/eval.hpp"
#include "vipr/simulator.hpp"

using namespace vipr;

TEST(Simulator, StepLengthFromSpeedAndRate) {
    WorldSpec world;
    TrajectorySpec t;
    t.shape = TrajectoryShape::line;
    t.speed = 0.3;
    t.frame_rate_hz = 30.0;
    t.length = 1.0;
    const auto poses = trajectory_poses(world, t);
    ASSERT_GT(poses.size(), 10u);
    for (std::size_t i = 1; i < poses.size(); ++i)
        EXPECT_NEAR((poses[i].position - poses[i - 1].position).norm(), 0.01, 1e-12);
}

TEST(Simulator, ConstantVelocityLineHasEqualRelatives) {
    WorldSpec world;
    TrajectorySpec t;
    t.shape = TrajectoryShape::line;
    t.direction = -40.0;
    t.yaw_deg = 20.0;
    t.speed = 0.5;
    t.frame_rate_hz = 10.0;
    t.length = 2.0;
    const auto poses = trajectory_poses(world, t);
    const auto first = relative_pose(poses[0], poses[1]);
    for (std::size_t i = 1; i + 1 < poses.size(); ++i) {
        const auto rel = relative_pose(poses[i], poses[i + 1]);
        EXPECT_NEAR((rel.displacement_local - first.displacement_local).norm(), 0.0, 1e-12);
        EXPECT_NEAR(rel.rotation_delta.w, 1.0, 1e-12);
    }
}

TEST(Simulator, ZigzagTrainDiagonalTestProtocol) {
    const auto spec = default_scenario();
    EXPECT_DOUBLE_EQ(spec.world.extent_x, 6.5);
    EXPECT_DOUBLE_EQ(spec.world.extent_y, 9.0);
    ASSERT_EQ(spec.train.size(), 1u);
    ASSERT_EQ(spec.test.size(), 1u);
    EXPECT_EQ(spec.train[0].shape, TrajectoryShape::zigzag);
    EXPECT_EQ(spec.test[0].shape, TrajectoryShape::diagonal);

    const auto train = trajectory_poses(spec.world, spec.train[0]);
    const auto test = trajectory_poses(spec.world, spec.test[0]);
    const auto ext = spatial_extent(train).size();
    EXPECT_GT(ext.x, 4.5);
    EXPECT_GT(ext.y, 7.0);
    EXPECT_LT(ext.x, 6.5);
    EXPECT_LT(ext.y, 9.0);
    // Horizontal lanes: most train steps move mainly along x.
    std::size_t along_x = 0;
    for (std::size_t i = 1; i < train.size(); ++i) {
        const auto d = train[i].position - train[i - 1].position;
        if (std::abs(d.x) > std::abs(d.y)) ++along_x;
    }
    EXPECT_GT(along_x, train.size() * 2 / 3);
    // Diagonal test: x and y advance together.
    for (std::size_t i = 1; i < test.size(); ++i) {
        const auto d = test[i].position - test[i - 1].position;
        EXPECT_GT(d.x, 0.0);
        EXPECT_GT(d.y, 0.0);
    }
}

TEST(Simulator, ShapesAndErrors) {
    EXPECT_EQ(parse_shape("loop"), TrajectoryShape::loop);
    EXPECT_EQ(to_string(parse_shape("diagonal")), "diagonal");
    EXPECT_THROW(parse_shape("spiral"), ArgumentError);
    WorldSpec world;
    TrajectorySpec t;
    t.speed = 0.0;
    EXPECT_THROW(trajectory_poses(world, t), ArgumentError);
    t.shape = TrajectoryShape::stationary;
    t.length = 1.0;
    t.frame_rate_hz = 10.0;
    const auto still = trajectory_poses(world, t);
    EXPECT_EQ(still.size(), 11u);
    EXPECT_EQ(still.front().position, still.back().position);
    t.frame_rate_hz = 0.0;
    EXPECT_THROW(trajectory_poses(world, t), ArgumentError);
    world.extent_x = 0.0;
    t.frame_rate_hz = 10.0;
    EXPECT_THROW(trajectory_poses(world, t), ArgumentError);
}

TEST(Simulator, DeterministicRenders) {
    WorldSpec world;
    world.width = 64;
    world.height = 48;
    world.camera = {40, 40, 31.5, 23.5};
    TrajectorySpec t;
    t.shape = TrajectoryShape::loop;
    t.speed = 2.0;
    t.frame_rate_hz = 2.0;
    const auto a = simulate_trajectory(world, t);
    const auto b = simulate_trajectory(world, t);
    ASSERT_EQ(a.frames.size(), b.frames.size());
    for (std::size_t i = 0; i < a.frames.size(); ++i) {
        EXPECT_EQ(a.frames[i].pose.position, b.frames[i].pose.position);
        EXPECT_EQ(a.frames[i].pose.orientation, b.frames[i].pose.orientation);
        EXPECT_EQ(a.frames[i].image->data, b.frames[i].image->data);
    }
    world.texture_seed = 2;
    const auto c = simulate_trajectory(world, t);
    EXPECT_NE(a.frames[0].image->data, c.frames[0].image->data);
}

TEST(Simulator, ViewIdentifiesPosition) {
    WorldSpec world;
    world.width = 32;
    world.height = 24;
    world.camera = {20, 20, 15.5, 11.5};
    const auto a = render_view(world, Pose({1.0, 1.0, 1.0}, {1, 0, 0, 0}));
    const auto b = render_view(world, Pose({5.0, 7.0, 1.0}, {1, 0, 0, 0}));
    double red = 0.0, green = 0.0;
    for (int r = 0; r < 24; ++r)
        for (int c = 0; c < 32; ++c) {
            red += b.at(r, c, 0) - a.at(r, c, 0);
            green += b.at(r, c, 1) - a.at(r, c, 1);
        }
    EXPECT_GT(red, 0.0);
    EXPECT_GT(green, 0.0);
}

TEST(Simulator, RenderAfterUndersampleMatchesFullRender) {
    WorldSpec world;
    world.width = 32;
    world.height = 24;
    world.camera = {20, 20, 15.5, 11.5};
    TrajectorySpec t;
    t.shape = TrajectoryShape::line;
    t.length = 0.6;
    ScenarioSpec spec{world, {t}, {}};
    auto lazy = simulate_scenario(spec, false);
    EXPECT_FALSE(lazy.train.sequences[0].frames[0].image);
    lazy.train = undersample(lazy.train, 10.0);
    render_frames(world, lazy.train);
    const auto full = undersample(simulate_scenario(spec, true).train, 10.0);
    ASSERT_EQ(lazy.train.sequences[0].frames.size(), full.sequences[0].frames.size());
    for (std::size_t i = 0; i < full.sequences[0].frames.size(); ++i)
        EXPECT_EQ(lazy.train.sequences[0].frames[i].image->data, full.sequences[0].frames[i].image->data);
}

TEST(Simulator, ScenarioJsonRoundTrip) {
    auto spec = default_scenario();
    spec.world.texture_seed = 9;
    spec.test[0].speed = 0.7;
    const auto back = scenario_from_json(to_json(spec));
    EXPECT_EQ(to_json(back), to_json(spec));
    auto j = to_json(spec);
    j["train"][0]["shape"] = "spiral";
    EXPECT_THROW(scenario_from_json(j), ArgumentError);
    j = to_json(spec);
    j["world"]["colour"] = 1;
    EXPECT_THROW(scenario_from_json(j), ArgumentError);
}

TEST(Simulator, SceneInfo) {
    WorldSpec world;
    const auto info = scene_info(world);
    EXPECT_EQ(info.width, 320);
    EXPECT_EQ(info.height, 240);
    EXPECT_DOUBLE_EQ(info.plane_z, 3.0);
}
