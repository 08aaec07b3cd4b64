#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vipr/geometry.hpp"
#include "vipr/image.hpp"

namespace vipr {

// Dense optical flow: per-pixel displacement (u, v) from the first image of
// a pair to the second, in pixels. Grids are row-major, height x width.
struct FlowField {
    int width = 0;
    int height = 0;
    std::vector<float> u;
    std::vector<float> v;

    FlowField() = default;
    FlowField(int w, int h);

    std::size_t index(int row, int col) const { return static_cast<std::size_t>(row) * width + col; }
    bool operator==(const FlowField&) const = default;
};

struct ZoneGrid {
    int zones_x = 0;
    int zones_y = 0;
    // zones_y x zones_x, row-major.
    std::vector<double> mean_u;
    std::vector<double> mean_v;
};

// Three rows (one per image pair) of reshape(mean_u) ++ reshape(mean_v).
struct FlowFeature {
    static constexpr int kRows = 3;
    int cols = 0;
    std::vector<float> data;  // kRows x cols, row-major

    std::span<const float> row(int k) const {
        return {data.data() + static_cast<std::size_t>(k) * cols, static_cast<std::size_t>(cols)};
    }
};

struct CameraIntrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;

    // Intrinsics of a centre crop taken from an image of the given size.
    CameraIntrinsics cropped(int image_width, int image_height, int crop_width, int crop_height) const;
};

// --- Middlebury .flo -----------------------------------------------------

inline constexpr float kFloMagic = 202021.25f;

FlowField read_flo(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_flo(const FlowField& field);
FlowField read_flo_file(const std::filesystem::path& path);
void write_flo_file(const std::filesystem::path& path, const FlowField& field);

// --- zone reduction ------------------------------------------------------

// Zone boundaries along one axis: `zones + 1` offsets. When `extent` is not
// divisible by `zones`, the leading `extent % zones` zones get one extra pixel.
std::vector<int> zone_edges(int extent, int zones);

ZoneGrid zone_mean(const FlowField& field, int zones_x, int zones_y);
FlowFeature build_flow_feature(std::span<const FlowField> fields, int zones_x = 16, int zones_y = 16);
FlowFeature build_flow_feature(const ZoneGrid& a, const ZoneGrid& b, const ZoneGrid& c);

// --- analytic flow -------------------------------------------------------

// Flow induced by moving a pinhole camera by `rel` in front of a
// fronto-parallel plane at depth `plane_depth` (first camera frame).
// Pixels whose scene point ends up behind the second camera are zero.
FlowField synthetic_flow(const RelativePose& rel, const CameraIntrinsics& camera, double plane_depth, int width,
                         int height);

// --- providers -----------------------------------------------------------

// What a provider is asked for: the flow from one frame to the next.
struct FlowQuery {
    std::string sequence;
    std::size_t pair_index = 0;  // flow from frame pair_index to pair_index + 1
    Pose first_pose;
    Pose second_pose;
    const Image* first_crop = nullptr;
    const Image* second_crop = nullptr;
    int width = 0;
    int height = 0;
};

// Implementations must be safe for concurrent calls once constructed.
class FlowProvider {
public:
    virtual ~FlowProvider() = default;
    virtual FlowField flow(const FlowQuery& query) const = 0;
    virtual std::string name() const = 0;
};

// Precomputed flow, laid out as <root>/<sequence>/pair-%06d.flo.
class FloDirectoryProvider final : public FlowProvider {
public:
    explicit FloDirectoryProvider(std::filesystem::path root);
    FlowField flow(const FlowQuery& query) const override;
    std::string name() const override { return "flo-dir"; }

    static std::filesystem::path pair_path(const std::filesystem::path& root, const std::string& sequence,
                                           std::size_t pair_index);

private:
    std::filesystem::path root_;
};

// Analytic flow for scenes whose only surface is the horizontal plane
// z = plane_z, seen by cameras with intrinsics `crop_camera`.
class SyntheticFlowProvider final : public FlowProvider {
public:
    SyntheticFlowProvider(CameraIntrinsics crop_camera, double plane_z);
    FlowField flow(const FlowQuery& query) const override;
    std::string name() const override { return "synthetic"; }

private:
    CameraIntrinsics camera_;
    double plane_z_;
};

}  // namespace vipr
