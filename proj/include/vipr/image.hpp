#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace vipr {

// 8-bit RGB image, row-major, channels interleaved.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    static constexpr int kChannels = 3;

    Image() = default;
    Image(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * kChannels, 0) {}

    std::uint8_t& at(int row, int col, int ch) {
        return data[(static_cast<std::size_t>(row) * width + col) * kChannels + ch];
    }
    std::uint8_t at(int row, int col, int ch) const {
        return data[(static_cast<std::size_t>(row) * width + col) * kChannels + ch];
    }
    bool empty() const { return data.empty(); }
};

// Per-pixel, per-channel mean in [0, 1] intensity units, same layout as Image.
struct MeanImage {
    int width = 0;
    int height = 0;
    std::vector<float> data;
};

// Centre crop; odd margins are split with floor division (the extra pixel
// goes to the bottom/right). Throws ArgumentError if the image is smaller.
Image center_crop(const Image& image, int crop_width, int crop_height);

// (crop / 255 - mean), returned channel-planar (CHW) for network input.
std::vector<float> subtract_mean(const Image& crop, const MeanImage& mean);

// Running accumulation of a mean image over equally sized crops.
class MeanAccumulator {
public:
    void add(const Image& crop);
    MeanImage finish() const;
    std::size_t count() const { return count_; }

private:
    int width_ = 0;
    int height_ = 0;
    std::size_t count_ = 0;
    std::vector<double> sum_;
};

Image load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const Image& image);

// Raw float file with a `.flo`-like header: float magic 202021.5, int32
// width, int32 height, int32 channels (= 3), then width*height*3 floats
// (little-endian, interleaved).
void write_mean_image(const std::filesystem::path& path, const MeanImage& mean);
MeanImage read_mean_image(const std::filesystem::path& path);

}  // namespace vipr
