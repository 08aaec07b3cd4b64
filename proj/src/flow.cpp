#include "vipr/flow.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "vipr/errors.hpp"

namespace vipr {

static_assert(std::endian::native == std::endian::little, ".flo I/O assumes a little-endian host");

FlowField::FlowField(int w, int h)
    : width(w), height(h), u(static_cast<std::size_t>(w) * h, 0.0f), v(static_cast<std::size_t>(w) * h, 0.0f) {}

CameraIntrinsics CameraIntrinsics::cropped(int image_width, int image_height, int crop_width,
                                           int crop_height) const {
    const int x0 = (image_width - crop_width) / 2;
    const int y0 = (image_height - crop_height) / 2;
    return {fx, fy, cx - x0, cy - y0};
}

FlowField read_flo(std::span<const std::uint8_t> bytes) {
    constexpr std::size_t kHeader = 12;
    if (bytes.size() < kHeader) throw FormatError(".flo: truncated header");
    float magic = 0.0f;
    std::int32_t dims[2] = {};
    std::memcpy(&magic, bytes.data(), 4);
    std::memcpy(dims, bytes.data() + 4, 8);
    if (magic != kFloMagic) throw FormatError(".flo: bad magic number");
    if (dims[0] <= 0 || dims[1] <= 0) throw FormatError(".flo: non-positive dimensions");
    const std::size_t n = static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]);
    if (bytes.size() - kHeader < n * 2 * sizeof(float)) throw FormatError(".flo: truncated payload");

    FlowField f(dims[0], dims[1]);
    const std::uint8_t* p = bytes.data() + kHeader;
    for (std::size_t i = 0; i < n; ++i, p += 8) {
        std::memcpy(&f.u[i], p, 4);
        std::memcpy(&f.v[i], p + 4, 4);
    }
    return f;
}

std::vector<std::uint8_t> write_flo(const FlowField& field) {
    const std::size_t n = static_cast<std::size_t>(field.width) * field.height;
    if (field.width <= 0 || field.height <= 0 || field.u.size() != n || field.v.size() != n)
        throw ShapeError("write_flo: inconsistent flow field");
    std::vector<std::uint8_t> out(12 + n * 8);
    const std::int32_t dims[2] = {field.width, field.height};
    std::memcpy(out.data(), &kFloMagic, 4);
    std::memcpy(out.data() + 4, dims, 8);
    std::uint8_t* p = out.data() + 12;
    for (std::size_t i = 0; i < n; ++i, p += 8) {
        std::memcpy(p, &field.u[i], 4);
        std::memcpy(p + 4, &field.v[i], 4);
    }
    return out;
}

FlowField read_flo_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("missing flow file " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return read_flo(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_flo_file(const std::filesystem::path& path, const FlowField& field) {
    const auto bytes = write_flo(field);
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("cannot write flow file " + path.string());
}

std::vector<int> zone_edges(int extent, int zones) {
    if (zones <= 0) throw ArgumentError("zone count must be positive");
    if (zones > extent)
        throw ArgumentError("zone count " + std::to_string(zones) + " exceeds dimension " + std::to_string(extent));
    std::vector<int> edges(zones + 1, 0);
    const int base = extent / zones;
    const int rem = extent % zones;
    for (int i = 0; i < zones; ++i) edges[i + 1] = edges[i] + base + (i < rem ? 1 : 0);
    return edges;
}

ZoneGrid zone_mean(const FlowField& field, int zones_x, int zones_y) {
    const auto ex = zone_edges(field.width, zones_x);
    const auto ey = zone_edges(field.height, zones_y);
    ZoneGrid g{zones_x, zones_y, std::vector<double>(static_cast<std::size_t>(zones_x) * zones_y),
               std::vector<double>(static_cast<std::size_t>(zones_x) * zones_y)};
    for (int zy = 0; zy < zones_y; ++zy) {
        for (int zx = 0; zx < zones_x; ++zx) {
            double su = 0.0, sv = 0.0;
            for (int r = ey[zy]; r < ey[zy + 1]; ++r) {
                for (int c = ex[zx]; c < ex[zx + 1]; ++c) {
                    su += field.u[field.index(r, c)];
                    sv += field.v[field.index(r, c)];
                }
            }
            const double count = static_cast<double>(ey[zy + 1] - ey[zy]) * (ex[zx + 1] - ex[zx]);
            g.mean_u[static_cast<std::size_t>(zy) * zones_x + zx] = su / count;
            g.mean_v[static_cast<std::size_t>(zy) * zones_x + zx] = sv / count;
        }
    }
    return g;
}

FlowFeature build_flow_feature(const ZoneGrid& a, const ZoneGrid& b, const ZoneGrid& c) {
    const ZoneGrid* grids[3] = {&a, &b, &c};
    for (const auto* g : grids) {
        if (g->zones_x != a.zones_x || g->zones_y != a.zones_y)
            throw ArgumentError("build_flow_feature: zone grids differ in shape");
    }
    const int per_dir = a.zones_x * a.zones_y;
    FlowFeature f{2 * per_dir, std::vector<float>(static_cast<std::size_t>(FlowFeature::kRows) * 2 * per_dir)};
    for (int k = 0; k < 3; ++k) {
        float* row = f.data.data() + static_cast<std::size_t>(k) * f.cols;
        for (int i = 0; i < per_dir; ++i) {
            row[i] = static_cast<float>(grids[k]->mean_u[i]);
            row[per_dir + i] = static_cast<float>(grids[k]->mean_v[i]);
        }
    }
    return f;
}

FlowFeature build_flow_feature(std::span<const FlowField> fields, int zones_x, int zones_y) {
    if (fields.size() != 3)
        throw ArgumentError("build_flow_feature: expected 3 flow fields, got " + std::to_string(fields.size()));
    for (const auto& f : fields) {
        if (f.width != fields[0].width || f.height != fields[0].height)
            throw ArgumentError("build_flow_feature: flow fields differ in size");
    }
    return build_flow_feature(zone_mean(fields[0], zones_x, zones_y), zone_mean(fields[1], zones_x, zones_y),
                              zone_mean(fields[2], zones_x, zones_y));
}

FlowField synthetic_flow(const RelativePose& rel, const CameraIntrinsics& camera, double plane_depth, int width,
                         int height) {
    if (!(plane_depth > 0.0)) throw ArgumentError("synthetic_flow: plane depth must be positive");
    if (width <= 0 || height <= 0) throw ArgumentError("synthetic_flow: image size must be positive");
    FlowField f(width, height);
    // Second camera's orientation in the first frame is rotation_delta;
    // a first-frame point P maps to R^T (P - d) in the second frame.
    const RotationMatrix rt = quat_to_rotation(rel.rotation_delta).transpose();
    // Work in units of the plane depth so the identity maps each pixel
    // onto itself exactly.
    const Vec3 d = rel.displacement_local * (1.0 / plane_depth);
    for (int r = 0; r < height; ++r) {
        const double y1 = (r - camera.cy) / camera.fy;
        for (int c = 0; c < width; ++c) {
            const double x1 = (c - camera.cx) / camera.fx;
            const Vec3 p2 = rt.apply(Vec3{x1, y1, 1.0} - d);
            if (p2.z * plane_depth <= 1e-9) continue;
            f.u[f.index(r, c)] = static_cast<float>(camera.fx * (p2.x / p2.z - x1));
            f.v[f.index(r, c)] = static_cast<float>(camera.fy * (p2.y / p2.z - y1));
        }
    }
    return f;
}

FloDirectoryProvider::FloDirectoryProvider(std::filesystem::path root) : root_(std::move(root)) {
    if (!std::filesystem::is_directory(root_)) throw DataError("flow directory not found: " + root_.string());
}

std::filesystem::path FloDirectoryProvider::pair_path(const std::filesystem::path& root, const std::string& sequence,
                                                      std::size_t pair_index) {
    char name[32];
    std::snprintf(name, sizeof name, "pair-%06zu.flo", pair_index);
    return root / sequence / name;
}

FlowField FloDirectoryProvider::flow(const FlowQuery& query) const {
    const auto path = pair_path(root_, query.sequence, query.pair_index);
    FlowField f = read_flo_file(path);
    if (f.width != query.width || f.height != query.height) {
        throw DataError(path.string() + ": flow is " + std::to_string(f.width) + "x" + std::to_string(f.height) +
                        ", expected " + std::to_string(query.width) + "x" + std::to_string(query.height));
    }
    return f;
}

SyntheticFlowProvider::SyntheticFlowProvider(CameraIntrinsics crop_camera, double plane_z)
    : camera_(crop_camera), plane_z_(plane_z) {}

FlowField SyntheticFlowProvider::flow(const FlowQuery& query) const {
    const RotationMatrix r = quat_to_rotation(query.first_pose.orientation);
    // Depth along the optical axis to the plane z = plane_z.
    const double axis_z = r(2, 2);
    const double depth = (plane_z_ - query.first_pose.position.z) / axis_z;
    if (!(std::abs(axis_z) > 1e-6) || !(depth > 0.0))
        throw DataError("synthetic flow: plane is not in front of camera in sequence " + query.sequence);
    return synthetic_flow(relative_pose(query.first_pose, query.second_pose), camera_, depth, query.width,
                          query.height);
}

}  // namespace vipr
