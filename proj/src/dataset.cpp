#include "vipr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <thread>

#include "vipr/errors.hpp"
#include "vipr/log.hpp"

namespace vipr {

namespace fs = std::filesystem;

namespace {

constexpr double kSevenScenesHz = 30.0;

// Official 7-Scenes train/test sequence split.
const std::map<std::string, std::pair<std::vector<int>, std::vector<int>>> kSevenScenesSplits = {
    {"chess", {{1, 2, 4, 6}, {3, 5}}},
    {"fire", {{1, 2}, {3, 4}}},
    {"heads", {{2}, {1}}},
    {"office", {{1, 3, 4, 5, 8, 10}, {2, 6, 7, 9}}},
    {"pumpkin", {{2, 3, 6, 8}, {1, 7}}},
    {"redkitchen", {{1, 2, 5, 7, 8, 11, 13}, {3, 4, 6, 12, 14}}},
    {"stairs", {{2, 3, 5, 6}, {1, 4}}},
};

template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
    if (workers <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(w);
    for (std::size_t t = 0; t < w; ++t) {
        threads.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += w) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : threads) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::vector<int> read_split_file(const fs::path& path) {
    std::ifstream in(path);
    std::vector<int> seqs;
    std::string tok;
    while (in >> tok) {
        const auto digits = tok.find_first_of("0123456789");
        if (digits == std::string::npos) throw ParseError(path.string() + ": bad entry '" + tok + "'");
        seqs.push_back(std::stoi(tok.substr(digits)));
    }
    return seqs;
}

Sequence load_seven_scenes_sequence(const fs::path& scene_dir, int seq_no) {
    char name[16];
    std::snprintf(name, sizeof name, "seq-%02d", seq_no);
    const fs::path dir = scene_dir / name;
    if (!fs::is_directory(dir)) throw DataError("missing sequence directory " + dir.string());

    // Frame stems seen as either an image or a pose file.
    std::set<std::string> stems;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto fname = entry.path().filename().string();
        if (!fname.starts_with("frame-")) continue;
        for (const std::string suffix : {".color.png", ".pose.txt"})
            if (fname.ends_with(suffix)) stems.insert(fname.substr(0, fname.size() - suffix.size()));
    }

    Sequence seq{name, kSevenScenesHz, {}};
    std::size_t i = 0;
    for (const auto& stem : stems) {
        const fs::path image_path = dir / (stem + ".color.png");
        const fs::path pose_path = dir / (stem + ".pose.txt");
        if (!fs::exists(image_path)) throw DataError("missing image file " + image_path.string());
        if (!fs::exists(pose_path)) throw DataError("missing pose file " + pose_path.string());
        FrameRecord fr;
        fr.sequence = seq.id;
        fr.index = i;
        fr.timestamp = static_cast<double>(i++) / kSevenScenesHz;
        fr.image_path = image_path;
        fr.pose = read_matrix_pose_file(pose_path);
        seq.frames.push_back(std::move(fr));
    }
    return seq;
}

bool wildcard_match(std::string_view pattern, std::string_view text) {
    std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
    while (t < text.size()) {
        if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == text[t])) {
            ++p;
            ++t;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = t;
        } else if (star != std::string_view::npos) {
            p = star + 1;
            t = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

std::vector<fs::path> glob_files(const fs::path& base, const std::string& pattern) {
    const fs::path full = base / pattern;
    const fs::path dir = full.parent_path();
    const std::string name_pattern = full.filename().string();
    if (!fs::is_directory(dir)) throw DataError("image directory not found: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && wildcard_match(name_pattern, entry.path().filename().string()))
            out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

void check_keys(const nlohmann::json& obj, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.contains(key)) throw ParseError(where + ": unknown key '" + key + "'");
    }
}

}  // namespace

std::shared_ptr<const Image> FrameRecord::load() const {
    if (image) return image;
    return std::make_shared<const Image>(load_image(image_path));
}

std::size_t DatasetSplit::frame_count() const {
    std::size_t n = 0;
    for (const auto& s : sequences) n += s.frames.size();
    return n;
}

DatasetPair load_seven_scenes(const fs::path& root, const std::string& scene) {
    const fs::path scene_dir = root / scene;
    if (!fs::is_directory(scene_dir)) throw DataError("7-Scenes scene directory not found: " + scene_dir.string());

    std::vector<int> train_ids, test_ids;
    if (fs::exists(scene_dir / "TrainSplit.txt") && fs::exists(scene_dir / "TestSplit.txt")) {
        train_ids = read_split_file(scene_dir / "TrainSplit.txt");
        test_ids = read_split_file(scene_dir / "TestSplit.txt");
    } else if (auto it = kSevenScenesSplits.find(scene); it != kSevenScenesSplits.end()) {
        std::tie(train_ids, test_ids) = it->second;
    } else {
        throw DataError("no split files in " + scene_dir.string() + " and '" + scene + "' is not a 7-Scenes scene");
    }

    DatasetPair out;
    out.train.name = "train";
    out.test.name = "test";
    for (int id : train_ids) out.train.sequences.push_back(load_seven_scenes_sequence(scene_dir, id));
    for (int id : test_ids) out.test.sequences.push_back(load_seven_scenes_sequence(scene_dir, id));
    return out;
}

DatasetPair load_generic(const fs::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw DataError("cannot open manifest " + manifest.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(manifest.string() + ": " + e.what());
    }
    check_keys(j, {"frame_rate_hz", "sequences", "camera", "scene"}, manifest.string());
    if (!j.contains("frame_rate_hz") || !j.contains("sequences"))
        throw ParseError(manifest.string() + ": 'frame_rate_hz' and 'sequences' are required");

    const double hz = j.at("frame_rate_hz").get<double>();
    if (!(hz > 0.0)) throw ParseError(manifest.string() + ": frame_rate_hz must be positive");
    const fs::path base = manifest.parent_path();

    DatasetPair out;
    out.train.name = "train";
    out.test.name = "test";
    for (const auto& s : j.at("sequences")) {
        check_keys(s, {"name", "split", "images", "poses"}, manifest.string() + " sequences[]");
        const auto name = s.at("name").get<std::string>();
        const auto split = s.value("split", std::string("train"));
        const auto images = glob_files(base, s.at("images").get<std::string>());
        const auto poses = read_pose_file(base / s.at("poses").get<std::string>());
        if (images.size() != poses.size()) {
            throw DataError("sequence '" + name + "': " + std::to_string(images.size()) + " images but " +
                            std::to_string(poses.size()) + " pose lines");
        }
        Sequence seq{name, hz, {}};
        for (std::size_t i = 0; i < images.size(); ++i) {
            FrameRecord fr;
            fr.sequence = name;
            fr.index = i;
            fr.timestamp = static_cast<double>(i) / hz;
            fr.image_path = images[i];
            fr.pose = poses[i];
            seq.frames.push_back(std::move(fr));
        }
        if (split == "train") {
            out.train.sequences.push_back(std::move(seq));
        } else if (split == "test") {
            out.test.sequences.push_back(std::move(seq));
        } else {
            throw ParseError("sequence '" + name + "': split must be 'train' or 'test'");
        }
    }

    if (j.contains("camera")) {
        const auto& c = j.at("camera");
        check_keys(c, {"fx", "fy", "cx", "cy", "width", "height"}, manifest.string() + " camera");
        SceneInfo scene;
        scene.camera = {c.at("fx").get<double>(), c.at("fy").get<double>(), c.at("cx").get<double>(),
                        c.at("cy").get<double>()};
        scene.width = c.at("width").get<int>();
        scene.height = c.at("height").get<int>();
        if (j.contains("scene")) {
            check_keys(j.at("scene"), {"plane_z"}, manifest.string() + " scene");
            scene.plane_z = j.at("scene").at("plane_z").get<double>();
        }
        out.scene = scene;
    }
    return out;
}

UndersampleResult undersample(const Sequence& sequence, double source_hz, double target_hz) {
    if (!(target_hz > 0.0)) throw ArgumentError("undersample: target rate must be positive");
    if (!(source_hz > 0.0)) throw ArgumentError("undersample: source rate must be positive");
    if (target_hz > source_hz) throw ArgumentError("undersample: target rate exceeds source rate");
    const auto stride = static_cast<std::size_t>(std::max(1.0, std::round(source_hz / target_hz)));
    UndersampleResult r;
    r.stride = stride;
    r.effective_hz = source_hz / static_cast<double>(stride);
    r.sequence.id = sequence.id;
    r.sequence.frame_rate_hz = r.effective_hz;
    for (std::size_t i = 0; i < sequence.frames.size(); i += stride) {
        FrameRecord fr = sequence.frames[i];
        fr.index = r.sequence.frames.size();
        r.sequence.frames.push_back(std::move(fr));
    }
    if (std::abs(r.effective_hz - target_hz) > 1e-9) {
        log::info("undersample ", sequence.id, ": stride ", stride, " gives ", r.effective_hz, " Hz (requested ",
                  target_hz, " Hz)");
    }
    return r;
}

DatasetSplit undersample(const DatasetSplit& split, double target_hz) {
    DatasetSplit out{split.name, {}, split.mean, split.mean_source};
    for (const auto& s : split.sequences)
        out.sequences.push_back(undersample(s, s.frame_rate_hz, target_hz).sequence);
    return out;
}

MeanImage compute_mean_image(const DatasetSplit& train, int crop_width, int crop_height) {
    MeanAccumulator acc;
    for (const auto& s : train.sequences)
        for (const auto& f : s.frames) acc.add(center_crop(*f.load(), crop_width, crop_height));
    if (acc.count() == 0) throw ArgumentError("compute_mean_image: train split has no frames");
    return acc.finish();
}

void attach_train_mean(DatasetPair& data, const std::optional<fs::path>& cache) {
    if (data.train.name != "train") throw ArgumentError("mean image must come from the train split");
    MeanImage mean;
    if (cache && fs::exists(*cache)) {
        mean = read_mean_image(*cache);
    } else {
        mean = compute_mean_image(data.train);
        if (cache) write_mean_image(*cache, mean);
    }
    data.train.mean = mean;
    data.train.mean_source = data.train.name;
    data.test.mean = std::move(mean);
    data.test.mean_source = data.train.name;
}

std::size_t window_count(std::size_t sequence_length) { return sequence_length >= 4 ? sequence_length - 3 : 0; }

std::vector<SampleWindow> make_windows(const DatasetSplit& split, const FlowProvider& flow,
                                       const WindowOptions& options) {
    std::vector<SampleWindow> out;
    for (const auto& seq : split.sequences) {
        const std::size_t n = seq.frames.size();
        if (n < 4) {
            log::warn("sequence ", seq.id, " has ", n, " frames (< 4); skipped");
            continue;
        }
        std::vector<std::shared_ptr<const Image>> crops(n);
        parallel_for(n, options.workers, [&](std::size_t i) {
            crops[i] = std::make_shared<const Image>(
                center_crop(*seq.frames[i].load(), options.crop_width, options.crop_height));
        });

        std::vector<std::shared_ptr<const FlowField>> flows(n - 1);
        std::vector<ZoneGrid> zones(n - 1);
        parallel_for(n - 1, options.workers, [&](std::size_t i) {
            FlowQuery q{seq.id,         i, seq.frames[i].pose, seq.frames[i + 1].pose, crops[i].get(),
                        crops[i + 1].get(), options.crop_width, options.crop_height};
            auto f = std::make_shared<const FlowField>(flow.flow(q));
            zones[i] = zone_mean(*f, options.zones_x, options.zones_y);
            if (options.keep_flow_fields) flows[i] = std::move(f);
        });

        for (std::size_t s = 0; s + 3 < n; ++s) {
            SampleWindow w;
            for (std::size_t k = 0; k < 4; ++k) w.frames[k] = seq.frames[s + k];
            for (std::size_t k = 0; k < 3; ++k) {
                w.crops[k] = crops[s + k];
                w.flows[k] = flows[s + k];
                w.poses[k] = seq.frames[s + k].pose;
                w.relatives[k] = relative_pose(seq.frames[s + k].pose, seq.frames[s + k + 1].pose);
            }
            w.feature = build_flow_feature(zones[s], zones[s + 1], zones[s + 2]);
            out.push_back(std::move(w));
        }
    }
    return out;
}

}  // namespace vipr
