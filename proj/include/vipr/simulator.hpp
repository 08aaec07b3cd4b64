#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "vipr/dataset.hpp"

namespace vipr {

// Synthetic world: an upward-looking camera moving below a textured
// horizontal plane (a "ceiling") at height plane_z. The texture encodes
// world x/y in two colour channels with seeded detail on top, so the view
// identifies the position.
struct WorldSpec {
    double extent_x = 6.5;
    double extent_y = 9.0;
    double plane_z = 3.0;
    std::uint64_t texture_seed = 1;
    CameraIntrinsics camera{160.0, 160.0, 159.5, 119.5};
    int width = 320;
    int height = 240;
};

enum class TrajectoryShape { zigzag, diagonal, loop, line, stationary };

TrajectoryShape parse_shape(const std::string& name);
std::string to_string(TrajectoryShape shape);

struct TrajectorySpec {
    std::string name = "seq";
    TrajectoryShape shape = TrajectoryShape::zigzag;
    double speed = 1.0;            // m/s, mean
    double speed_variation = 0.0;  // relative amplitude of the sinusoidal speed profile
    double speed_period_s = 6.0;
    double frame_rate_hz = 30.0;
    double camera_z = 1.0;
    double z_amplitude = 0.0;
    double z_period_m = 5.0;
    double yaw_deg = 0.0;            // base heading of the camera
    double yaw_amplitude_deg = 0.0;  // sinusoidal yaw around the base heading
    double yaw_period_m = 6.0;
    int lanes = 5;         // zigzag lanes
    double margin = 0.6;   // distance kept from the world border
    double direction = 0;  // line: heading of travel in degrees
    double length = 0.0;   // line: metres; stationary: seconds
};

struct ScenarioSpec {
    WorldSpec world;
    std::vector<TrajectorySpec> train;
    std::vector<TrajectorySpec> test;
};

// Colour of the plane at world (x, y).
std::array<std::uint8_t, 3> texture_color(const WorldSpec& world, double x, double y);

// Deterministic render of the plane seen from `pose`.
Image render_view(const WorldSpec& world, const Pose& pose);

// Ground-truth poses sampled at the trajectory's frame rate.
std::vector<Pose> trajectory_poses(const WorldSpec& world, const TrajectorySpec& spec);

// Renders every frame of `split` that has no image yet (in memory).
void render_frames(const WorldSpec& world, DatasetSplit& split);

Sequence simulate_trajectory(const WorldSpec& world, const TrajectorySpec& spec, bool render = true);
DatasetPair simulate_scenario(const ScenarioSpec& spec, bool render = true);

// Training zig-zag and diagonal test trajectory over the default 6.5 x 9.0 m world.
ScenarioSpec default_scenario();

// JSON form {"world": {...}, "train": [...], "test": [...]}; missing keys
// keep their defaults, unknown keys are rejected.
nlohmann::json to_json(const ScenarioSpec& spec);
ScenarioSpec scenario_from_json(const nlohmann::json& j);

SceneInfo scene_info(const WorldSpec& world);

}  // namespace vipr
