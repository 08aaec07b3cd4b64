#include "vipr/image.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "vipr/errors.hpp"

namespace vipr {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {
constexpr float kMeanMagic = 202021.5f;
}

Image center_crop(const Image& image, int crop_width, int crop_height) {
    if (crop_width <= 0 || crop_height <= 0) throw ArgumentError("center_crop: crop size must be positive");
    if (image.width < crop_width || image.height < crop_height) {
        throw ArgumentError("center_crop: image " + std::to_string(image.width) + "x" +
                            std::to_string(image.height) + " is smaller than crop " +
                            std::to_string(crop_width) + "x" + std::to_string(crop_height));
    }
    const int x0 = (image.width - crop_width) / 2;
    const int y0 = (image.height - crop_height) / 2;
    Image out(crop_width, crop_height);
    const std::size_t row_bytes = static_cast<std::size_t>(crop_width) * Image::kChannels;
    for (int r = 0; r < crop_height; ++r) {
        const auto* src = &image.data[(static_cast<std::size_t>(y0 + r) * image.width + x0) * Image::kChannels];
        std::memcpy(&out.data[r * row_bytes], src, row_bytes);
    }
    return out;
}

std::vector<float> subtract_mean(const Image& crop, const MeanImage& mean) {
    if (crop.width != mean.width || crop.height != mean.height)
        throw ShapeError("subtract_mean: crop and mean image sizes differ");
    const std::size_t plane = static_cast<std::size_t>(crop.width) * crop.height;
    std::vector<float> out(plane * Image::kChannels);
    for (std::size_t i = 0; i < plane; ++i)
        for (int c = 0; c < Image::kChannels; ++c) {
            const std::size_t k = i * Image::kChannels + c;
            out[c * plane + i] = static_cast<float>(crop.data[k]) / 255.0f - mean.data[k];
        }
    return out;
}

void MeanAccumulator::add(const Image& crop) {
    if (count_ == 0) {
        width_ = crop.width;
        height_ = crop.height;
        sum_.assign(crop.data.size(), 0.0);
    } else if (crop.width != width_ || crop.height != height_) {
        throw ShapeError("MeanAccumulator: crops must share one size");
    }
    for (std::size_t i = 0; i < crop.data.size(); ++i) sum_[i] += crop.data[i];
    ++count_;
}

MeanImage MeanAccumulator::finish() const {
    if (count_ == 0) throw ArgumentError("MeanAccumulator: no crops accumulated");
    MeanImage m{width_, height_, std::vector<float>(sum_.size())};
    const double scale = 1.0 / (255.0 * static_cast<double>(count_));
    for (std::size_t i = 0; i < sum_.size(); ++i) m.data[i] = static_cast<float>(sum_[i] * scale);
    return m;
}

Image load_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw DataError("missing image file " + path.string());
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw DataError("cannot decode image file " + path.string());
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    Image img(rgb.cols, rgb.rows);
    for (int r = 0; r < rgb.rows; ++r)
        std::memcpy(&img.data[static_cast<std::size_t>(r) * rgb.cols * 3], rgb.ptr(r),
                    static_cast<std::size_t>(rgb.cols) * 3);
    return img;
}

void save_image(const std::filesystem::path& path, const Image& image) {
    cv::Mat rgb(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.data.data()));
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    if (!cv::imwrite(path.string(), bgr)) throw DataError("cannot write image " + path.string());
}

void write_mean_image(const std::filesystem::path& path, const MeanImage& mean) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write mean image " + path.string());
    const std::int32_t header[3] = {mean.width, mean.height, Image::kChannels};
    out.write(reinterpret_cast<const char*>(&kMeanMagic), sizeof kMeanMagic);
    out.write(reinterpret_cast<const char*>(header), sizeof header);
    out.write(reinterpret_cast<const char*>(mean.data.data()),
              static_cast<std::streamsize>(mean.data.size() * sizeof(float)));
    if (!out) throw DataError("write failed: " + path.string());
}

MeanImage read_mean_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open mean image " + path.string());
    float magic = 0.0f;
    std::int32_t header[3] = {};
    in.read(reinterpret_cast<char*>(&magic), sizeof magic);
    in.read(reinterpret_cast<char*>(header), sizeof header);
    if (!in || magic != kMeanMagic) throw FormatError(path.string() + ": not a mean image file");
    if (header[0] <= 0 || header[1] <= 0 || header[2] != Image::kChannels)
        throw FormatError(path.string() + ": bad mean image header");
    MeanImage m{header[0], header[1], std::vector<float>(static_cast<std::size_t>(header[0]) * header[1] * 3)};
    in.read(reinterpret_cast<char*>(m.data.data()), static_cast<std::streamsize>(m.data.size() * sizeof(float)));
    if (!in) throw FormatError(path.string() + ": truncated mean image");
    return m;
}

}  // namespace vipr
