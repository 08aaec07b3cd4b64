#include "vipr/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "vipr/errors.hpp"

namespace vipr {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kWavesPerChannel = 8;

struct Wave {
    double kx, ky, phase;
};

// Seeded sum-of-sinusoids texture detail; wavelengths 0.15 .. 1.2 m.
class Texture {
public:
    explicit Texture(const WorldSpec& world) : world_(world) {
        std::mt19937_64 rng(world.texture_seed);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (auto& channel : waves_) {
            for (auto& w : channel) {
                const double theta = 2.0 * kPi * unit(rng);
                const double wavelength = 0.15 * std::pow(8.0, unit(rng));
                const double k = 2.0 * kPi / wavelength;
                w = {k * std::cos(theta), k * std::sin(theta), 2.0 * kPi * unit(rng)};
            }
        }
    }

    std::array<std::uint8_t, 3> color(double x, double y) const {
        const double fx = std::clamp(x / world_.extent_x, 0.0, 1.0);
        const double fy = std::clamp(y / world_.extent_y, 0.0, 1.0);
        const double r = 0.1 + 0.8 * fx + 0.1 * detail(0, x, y);
        const double g = 0.1 + 0.8 * fy + 0.1 * detail(1, x, y);
        const double b = 0.5 + 0.4 * detail(2, x, y);
        return {quantize(r), quantize(g), quantize(b)};
    }

private:
    double detail(int channel, double x, double y) const {
        double s = 0.0;
        for (const auto& w : waves_[channel]) s += std::sin(w.kx * x + w.ky * y + w.phase);
        return s / std::sqrt(2.0 * kWavesPerChannel);
    }

    static std::uint8_t quantize(double v) {
        return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
    }

    WorldSpec world_;
    std::array<std::array<Wave, kWavesPerChannel>, 3> waves_{};
};

struct Polyline {
    std::vector<Vec3> points;  // z unused
    std::vector<double> cumulative;

    explicit Polyline(std::vector<Vec3> pts) : points(std::move(pts)) {
        cumulative.assign(points.size(), 0.0);
        for (std::size_t i = 1; i < points.size(); ++i)
            cumulative[i] = cumulative[i - 1] + (points[i] - points[i - 1]).norm();
    }
    double length() const { return cumulative.back(); }

    Vec3 at(double s) const {
        if (points.size() == 1) return points[0];
        s = std::clamp(s, 0.0, length());
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), s);
        const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), points.size() - 1);
        const double seg = cumulative[i] - cumulative[i - 1];
        const double t = seg > 0.0 ? (s - cumulative[i - 1]) / seg : 0.0;
        return points[i - 1] + (points[i] - points[i - 1]) * t;
    }
};

Polyline build_path(const WorldSpec& world, const TrajectorySpec& spec) {
    const double m = spec.margin;
    const double x0 = m, x1 = world.extent_x - m, y0 = m, y1 = world.extent_y - m;
    if (x1 <= x0 || y1 <= y0) throw ArgumentError("trajectory margin leaves no room in the world");
    std::vector<Vec3> pts;
    switch (spec.shape) {
        case TrajectoryShape::zigzag: {
            if (spec.lanes < 2) throw ArgumentError("zigzag needs at least 2 lanes");
            for (int i = 0; i < spec.lanes; ++i) {
                const double y = y0 + (y1 - y0) * i / (spec.lanes - 1);
                const bool forward = i % 2 == 0;
                pts.push_back({forward ? x0 : x1, y, 0});
                pts.push_back({forward ? x1 : x0, y, 0});
            }
            break;
        }
        case TrajectoryShape::diagonal:
            pts = {{x0, y0, 0}, {x1, y1, 0}};
            break;
        case TrajectoryShape::loop: {
            const double cx = 0.5 * world.extent_x, cy = 0.5 * world.extent_y;
            const double ax = 0.5 * (x1 - x0), ay = 0.5 * (y1 - y0);
            constexpr int kSegments = 720;
            for (int i = 0; i <= kSegments; ++i) {
                const double a = 2.0 * kPi * i / kSegments;
                pts.push_back({cx + ax * std::cos(a), cy + ay * std::sin(a), 0});
            }
            break;
        }
        case TrajectoryShape::line: {
            const double len = spec.length > 0.0 ? spec.length : std::min(x1 - x0, y1 - y0);
            const double a = spec.direction * kPi / 180.0;
            const Vec3 dir{std::cos(a), std::sin(a), 0};
            const Vec3 c{0.5 * world.extent_x, 0.5 * world.extent_y, 0};
            pts = {c - dir * (0.5 * len), c + dir * (0.5 * len)};
            break;
        }
        case TrajectoryShape::stationary:
            pts = {{0.5 * world.extent_x, 0.5 * world.extent_y, 0}};
            break;
    }
    return Polyline(std::move(pts));
}

}  // namespace

TrajectoryShape parse_shape(const std::string& name) {
    if (name == "zigzag") return TrajectoryShape::zigzag;
    if (name == "diagonal") return TrajectoryShape::diagonal;
    if (name == "loop") return TrajectoryShape::loop;
    if (name == "line") return TrajectoryShape::line;
    if (name == "stationary" || name == "static") return TrajectoryShape::stationary;
    throw ArgumentError("unknown trajectory shape '" + name + "' (zigzag|diagonal|loop|line|stationary)");
}

std::string to_string(TrajectoryShape shape) {
    switch (shape) {
        case TrajectoryShape::zigzag: return "zigzag";
        case TrajectoryShape::diagonal: return "diagonal";
        case TrajectoryShape::loop: return "loop";
        case TrajectoryShape::line: return "line";
        case TrajectoryShape::stationary: return "stationary";
    }
    return "?";
}

std::array<std::uint8_t, 3> texture_color(const WorldSpec& world, double x, double y) {
    return Texture(world).color(x, y);
}

Image render_view(const WorldSpec& world, const Pose& pose) {
    const Texture texture(world);
    const RotationMatrix r = quat_to_rotation(pose.orientation);
    const Vec3& c = pose.position;
    const auto& k = world.camera;
    Image img(world.width, world.height);
    for (int row = 0; row < world.height; ++row) {
        for (int col = 0; col < world.width; ++col) {
            const Vec3 ray = r.apply({(col - k.cx) / k.fx, (row - k.cy) / k.fy, 1.0});
            if (ray.z <= 1e-9) continue;
            const double t = (world.plane_z - c.z) / ray.z;
            if (t <= 0.0) continue;
            const auto rgb = texture.color(c.x + t * ray.x, c.y + t * ray.y);
            for (int ch = 0; ch < 3; ++ch) img.at(row, col, ch) = rgb[ch];
        }
    }
    return img;
}

std::vector<Pose> trajectory_poses(const WorldSpec& world, const TrajectorySpec& spec) {
    if (!(spec.frame_rate_hz > 0.0)) throw ArgumentError("trajectory frame rate must be positive");
    if (!(world.extent_x > 0.0) || !(world.extent_y > 0.0)) throw ArgumentError("world extent must be positive");
    if (spec.shape != TrajectoryShape::stationary && !(spec.speed > 0.0))
        throw ArgumentError("trajectory '" + spec.name + "': speed must be positive for shape " +
                            to_string(spec.shape));
    if (std::abs(spec.speed_variation) >= 1.0) throw ArgumentError("speed variation must be below 1");
    if (!(spec.camera_z + std::abs(spec.z_amplitude) < world.plane_z))
        throw ArgumentError("camera must stay below the textured plane");

    const Polyline path = build_path(world, spec);
    const double dt = 1.0 / spec.frame_rate_hz;
    const double a = spec.speed_variation;
    const double period = spec.speed_period_s;
    auto arc_length = [&](double t) {
        return spec.speed * (t + a * period / (2.0 * kPi) * (1.0 - std::cos(2.0 * kPi * t / period)));
    };

    std::size_t frames;
    if (spec.shape == TrajectoryShape::stationary) {
        frames = static_cast<std::size_t>(std::max(1.0, std::floor(spec.length * spec.frame_rate_hz) + 1.0));
    } else {
        frames = 0;
        while (arc_length(static_cast<double>(frames) * dt) <= path.length() + 1e-12) ++frames;
    }

    std::vector<Pose> poses;
    poses.reserve(frames);
    const double deg = kPi / 180.0;
    for (std::size_t i = 0; i < frames; ++i) {
        const double s = spec.shape == TrajectoryShape::stationary ? 0.0 : arc_length(static_cast<double>(i) * dt);
        Vec3 p = path.at(s);
        p.z = spec.camera_z + spec.z_amplitude * std::sin(2.0 * kPi * s / spec.z_period_m);
        const double yaw =
            (spec.yaw_deg + spec.yaw_amplitude_deg * std::sin(2.0 * kPi * s / spec.yaw_period_m)) * deg;
        poses.emplace_back(p, Quaternion{std::cos(0.5 * yaw), 0.0, 0.0, std::sin(0.5 * yaw)});
    }
    return poses;
}

Sequence simulate_trajectory(const WorldSpec& world, const TrajectorySpec& spec, bool render) {
    const auto poses = trajectory_poses(world, spec);
    Sequence seq{spec.name, spec.frame_rate_hz, {}};
    seq.frames.reserve(poses.size());
    for (std::size_t i = 0; i < poses.size(); ++i) {
        FrameRecord fr;
        fr.sequence = spec.name;
        fr.index = i;
        fr.timestamp = static_cast<double>(i) / spec.frame_rate_hz;
        fr.pose = poses[i];
        if (render) fr.image = std::make_shared<const Image>(render_view(world, poses[i]));
        seq.frames.push_back(std::move(fr));
    }
    return seq;
}

void render_frames(const WorldSpec& world, DatasetSplit& split) {
    for (auto& seq : split.sequences)
        for (auto& fr : seq.frames)
            if (!fr.image && fr.image_path.empty()) fr.image = std::make_shared<const Image>(render_view(world, fr.pose));
}

DatasetPair simulate_scenario(const ScenarioSpec& spec, bool render) {
    DatasetPair out;
    out.train.name = "train";
    out.test.name = "test";
    for (const auto& t : spec.train) out.train.sequences.push_back(simulate_trajectory(spec.world, t, render));
    for (const auto& t : spec.test) out.test.sequences.push_back(simulate_trajectory(spec.world, t, render));
    out.scene = scene_info(spec.world);
    return out;
}

ScenarioSpec default_scenario() {
    ScenarioSpec s;
    TrajectorySpec train;
    train.name = "train-zigzag";
    train.shape = TrajectoryShape::zigzag;
    train.speed = 1.2;
    train.speed_variation = 0.25;
    train.z_amplitude = 0.05;
    train.yaw_amplitude_deg = 15.0;
    s.train.push_back(train);

    TrajectorySpec test = train;
    test.name = "test-diagonal";
    test.shape = TrajectoryShape::diagonal;
    test.speed = 1.2;
    test.yaw_period_m = 5.0;
    s.test.push_back(test);
    return s;
}

namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ArgumentError(where + ": expected an object");
    for (const auto& [key, _] : j.items()) {
        bool known = false;
        for (const char* a : allowed) known = known || key == a;
        if (!known) throw ArgumentError(where + ": unknown key '" + key + "'");
    }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& value) {
    if (j.contains(key)) value = j.at(key).get<T>();
}

nlohmann::json to_json(const TrajectorySpec& t) {
    return {{"name", t.name},
            {"shape", to_string(t.shape)},
            {"speed", t.speed},
            {"speed_variation", t.speed_variation},
            {"speed_period_s", t.speed_period_s},
            {"frame_rate_hz", t.frame_rate_hz},
            {"camera_z", t.camera_z},
            {"z_amplitude", t.z_amplitude},
            {"z_period_m", t.z_period_m},
            {"yaw_deg", t.yaw_deg},
            {"yaw_amplitude_deg", t.yaw_amplitude_deg},
            {"yaw_period_m", t.yaw_period_m},
            {"lanes", t.lanes},
            {"margin", t.margin},
            {"direction", t.direction},
            {"length", t.length}};
}

TrajectorySpec trajectory_from_json(const nlohmann::json& j) {
    check_keys(j,
               {"name", "shape", "speed", "speed_variation", "speed_period_s", "frame_rate_hz", "camera_z",
                "z_amplitude", "z_period_m", "yaw_deg", "yaw_amplitude_deg", "yaw_period_m", "lanes", "margin",
                "direction", "length"},
               "trajectory");
    TrajectorySpec t;
    read(j, "name", t.name);
    if (j.contains("shape")) t.shape = parse_shape(j.at("shape").get<std::string>());
    read(j, "speed", t.speed);
    read(j, "speed_variation", t.speed_variation);
    read(j, "speed_period_s", t.speed_period_s);
    read(j, "frame_rate_hz", t.frame_rate_hz);
    read(j, "camera_z", t.camera_z);
    read(j, "z_amplitude", t.z_amplitude);
    read(j, "z_period_m", t.z_period_m);
    read(j, "yaw_deg", t.yaw_deg);
    read(j, "yaw_amplitude_deg", t.yaw_amplitude_deg);
    read(j, "yaw_period_m", t.yaw_period_m);
    read(j, "lanes", t.lanes);
    read(j, "margin", t.margin);
    read(j, "direction", t.direction);
    read(j, "length", t.length);
    if (!(t.frame_rate_hz > 0.0)) throw ArgumentError("trajectory '" + t.name + "': frame_rate_hz must be positive");
    return t;
}

}  // namespace

nlohmann::json to_json(const ScenarioSpec& spec) {
    const auto& w = spec.world;
    nlohmann::json j;
    j["world"] = {{"extent_x", w.extent_x},
                  {"extent_y", w.extent_y},
                  {"plane_z", w.plane_z},
                  {"texture_seed", w.texture_seed},
                  {"camera", {{"fx", w.camera.fx}, {"fy", w.camera.fy}, {"cx", w.camera.cx}, {"cy", w.camera.cy}}},
                  {"width", w.width},
                  {"height", w.height}};
    j["train"] = nlohmann::json::array();
    j["test"] = nlohmann::json::array();
    for (const auto& t : spec.train) j["train"].push_back(to_json(t));
    for (const auto& t : spec.test) j["test"].push_back(to_json(t));
    return j;
}

ScenarioSpec scenario_from_json(const nlohmann::json& j) {
    check_keys(j, {"world", "train", "test"}, "scenario");
    ScenarioSpec spec = default_scenario();
    if (j.contains("world")) {
        const auto& w = j.at("world");
        check_keys(w, {"extent_x", "extent_y", "plane_z", "texture_seed", "camera", "width", "height"},
                   "scenario.world");
        read(w, "extent_x", spec.world.extent_x);
        read(w, "extent_y", spec.world.extent_y);
        read(w, "plane_z", spec.world.plane_z);
        read(w, "texture_seed", spec.world.texture_seed);
        read(w, "width", spec.world.width);
        read(w, "height", spec.world.height);
        if (w.contains("camera")) {
            const auto& c = w.at("camera");
            check_keys(c, {"fx", "fy", "cx", "cy"}, "scenario.world.camera");
            read(c, "fx", spec.world.camera.fx);
            read(c, "fy", spec.world.camera.fy);
            read(c, "cx", spec.world.camera.cx);
            read(c, "cy", spec.world.camera.cy);
        }
    }
    if (j.contains("train")) {
        spec.train.clear();
        for (const auto& t : j.at("train")) spec.train.push_back(trajectory_from_json(t));
    }
    if (j.contains("test")) {
        spec.test.clear();
        for (const auto& t : j.at("test")) spec.test.push_back(trajectory_from_json(t));
    }
    if (!(spec.world.extent_x > 0.0 && spec.world.extent_y > 0.0))
        throw ArgumentError("scenario.world: extents must be positive");
    if (spec.world.width <= 0 || spec.world.height <= 0)
        throw ArgumentError("scenario.world: image size must be positive");
    return spec;
}

SceneInfo scene_info(const WorldSpec& world) { return {world.camera, world.width, world.height, world.plane_z}; }

}  // namespace vipr
