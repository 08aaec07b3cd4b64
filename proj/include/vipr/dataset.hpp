#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vipr/flow.hpp"
#include "vipr/geometry.hpp"
#include "vipr/image.hpp"

namespace vipr {

inline constexpr int kCropSize = 224;

struct FrameRecord {
    std::string sequence;
    std::size_t index = 0;
    double timestamp = 0.0;
    std::filesystem::path image_path;      // used when `image` is null
    std::shared_ptr<const Image> image;  // in-memory frame (simulator)
    Pose pose;

    // Returns the in-memory image or loads it from disk.
    std::shared_ptr<const Image> load() const;
};

struct Sequence {
    std::string id;
    double frame_rate_hz = 30.0;
    std::vector<FrameRecord> frames;
};

// Camera model and scene plane of a synthetic or calibrated recording.
struct SceneInfo {
    CameraIntrinsics camera;  // full-frame intrinsics
    int width = 0;
    int height = 0;
    double plane_z = 0.0;
};

struct DatasetSplit {
    std::string name;
    std::vector<Sequence> sequences;
    std::optional<MeanImage> mean;
    // Name of the split the mean image was computed from; must be "train".
    std::string mean_source;

    std::size_t frame_count() const;
};

struct DatasetPair {
    DatasetSplit train;
    DatasetSplit test;
    std::optional<SceneInfo> scene;
};

// Four consecutive frames t_{n-1} .. t_{n+2} and everything derived from them.
struct SampleWindow {
    std::array<FrameRecord, 4> frames;
    // Crops of t_{n-1}, t_n, t_{n+1}.
    std::array<std::shared_ptr<const Image>, 3> crops;
    // Flow for pairs (n-1, n), (n, n+1), (n+1, n+2); null when not retained.
    std::array<std::shared_ptr<const FlowField>, 3> flows;
    FlowFeature feature;
    std::array<Pose, 3> poses;
    std::array<RelativePose, 3> relatives;

    const Pose& center_pose() const { return poses[1]; }
};

struct WindowOptions {
    int crop_width = kCropSize;
    int crop_height = kCropSize;
    int zones_x = 16;
    int zones_y = 16;
    bool keep_flow_fields = true;
    int workers = 1;
};

// --- ingest ---------------------------------------------------------------

// Published 7-Scenes layout: <root>/<scene>/seq-XX/frame-XXXXXX.{color.png,pose.txt}
// plus TrainSplit.txt / TestSplit.txt (the official split is used when
// those files are absent).
DatasetPair load_seven_scenes(const std::filesystem::path& root, const std::string& scene);

// JSON manifest; see README for the schema. Paths are relative to the
// manifest's directory.
DatasetPair load_generic(const std::filesystem::path& manifest);

// --- transforms -----------------------------------------------------------

struct UndersampleResult {
    Sequence sequence;
    std::size_t stride = 1;
    double effective_hz = 0.0;
};

// Keeps every k-th frame starting at 0, k = round(source_hz / target_hz).
UndersampleResult undersample(const Sequence& sequence, double source_hz, double target_hz);
DatasetSplit undersample(const DatasetSplit& split, double target_hz);

// Mean image over the centre crops of every frame of `train`.
MeanImage compute_mean_image(const DatasetSplit& train, int crop_width = kCropSize, int crop_height = kCropSize);
// Computes (or loads from `cache`, if given and present) the train mean and
// attaches it to both splits.
void attach_train_mean(DatasetPair& data, const std::optional<std::filesystem::path>& cache = std::nullopt);

std::size_t window_count(std::size_t sequence_length);

// One window per start index in every sequence with >= 4 frames.
std::vector<SampleWindow> make_windows(const DatasetSplit& split, const FlowProvider& flow,
                                       const WindowOptions& options = {});

}  // namespace vipr
