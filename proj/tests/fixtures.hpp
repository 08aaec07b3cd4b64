#pragma once

// Small simulated datasets shared by the model tests.

#include <vector>

#include "vipr/dataset.hpp"
#include "vipr/simulator.hpp"

namespace fixture {

struct Windows {
    vipr::DatasetPair data;
    std::vector<vipr::SampleWindow> train;
    std::vector<vipr::SampleWindow> test;
};

// Straight line of `frames` frames at 10 Hz in the default world.
inline vipr::TrajectorySpec line(const std::string& name, int frames, double direction_deg = 20.0) {
    vipr::TrajectorySpec t;
    t.name = name;
    t.shape = vipr::TrajectoryShape::line;
    t.speed = 1.0;
    t.frame_rate_hz = 10.0;
    t.direction = direction_deg;
    t.yaw_deg = 10.0;
    t.yaw_amplitude_deg = 10.0;
    t.yaw_period_m = 2.0;
    t.z_amplitude = 0.05;
    t.length = 0.1 * (frames - 1);
    return t;
}

inline Windows simulate(const std::vector<vipr::TrajectorySpec>& train, const std::vector<vipr::TrajectorySpec>& test) {
    vipr::ScenarioSpec spec;
    spec.train = train;
    spec.test = test;
    Windows w;
    w.data = vipr::simulate_scenario(spec);
    vipr::attach_train_mean(w.data);
    const auto& scene = *w.data.scene;
    const vipr::SyntheticFlowProvider flow(scene.camera.cropped(scene.width, scene.height, vipr::kCropSize,
                                                                vipr::kCropSize),
                                           scene.plane_z);
    vipr::WindowOptions opt;
    opt.keep_flow_fields = false;
    w.train = vipr::make_windows(w.data.train, flow, opt);
    w.test = vipr::make_windows(w.data.test, flow, opt);
    return w;
}

}  // namespace fixture
