#include "sift/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "sift/error.hpp"

namespace sift {

std::string slice_filename(int index, int n_slices) {
    const int width = std::max(3, static_cast<int>(std::to_string(std::max(n_slices - 1, 0)).size()));
    std::string digits = std::to_string(index);
    if (static_cast<int>(digits.size()) < width) digits.insert(0, width - digits.size(), '0');
    return digits + ".png";
}

Image read_png16(const std::filesystem::path& path) {
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (mat.empty()) throw Error("cannot read image " + path.string());
    if (mat.channels() != 1) throw Error("expected single-channel image: " + path.string());
    Image image(mat.rows, mat.cols);
    if (mat.depth() == CV_16U) {
        for (int y = 0; y < mat.rows; ++y) {
            const auto* row = mat.ptr<std::uint16_t>(y);
            for (int x = 0; x < mat.cols; ++x) image.at(y, x) = static_cast<float>(row[x]) / 65535.0f;
        }
    } else if (mat.depth() == CV_8U) {
        for (int y = 0; y < mat.rows; ++y) {
            const auto* row = mat.ptr<std::uint8_t>(y);
            for (int x = 0; x < mat.cols; ++x) image.at(y, x) = static_cast<float>(row[x]) / 255.0f;
        }
    } else {
        throw Error("unsupported pixel depth in " + path.string());
    }
    return image;
}

void write_png16(const std::filesystem::path& path, const Image& image) {
    cv::Mat mat(image.height, image.width, CV_16UC1);
    for (int y = 0; y < image.height; ++y) {
        auto* row = mat.ptr<std::uint16_t>(y);
        for (int x = 0; x < image.width; ++x) {
            const float v = std::clamp(image.at(y, x), 0.0f, 1.0f);
            row[x] = static_cast<std::uint16_t>(std::lround(v * 65535.0f));
        }
    }
    if (!cv::imwrite(path.string(), mat)) throw Error("cannot write image " + path.string());
}

Volume read_volume(const std::filesystem::path& dir, int n_slices) {
    Volume volume;
    volume.reserve(n_slices);
    for (int i = 0; i < n_slices; ++i) {
        volume.push_back(read_png16(dir / slice_filename(i, n_slices)));
        if (volume.back().height != volume.front().height || volume.back().width != volume.front().width)
            throw Error("slice shape mismatch in " + dir.string());
    }
    return volume;
}

void write_volume(const std::filesystem::path& dir, const Volume& volume) {
    std::filesystem::create_directories(dir);
    const int n = static_cast<int>(volume.size());
    for (int i = 0; i < n; ++i) write_png16(dir / slice_filename(i, n), volume[i]);
}

Image crop(const Image& image, int x0, int y0, int w, int h) {
    if (x0 < 0 || y0 < 0 || w <= 0 || h <= 0 || x0 + w > image.width || y0 + h > image.height)
        throw Error("crop window outside image");
    Image out(h, w);
    for (int y = 0; y < h; ++y)
        std::copy_n(&image.pixels[static_cast<std::size_t>(y0 + y) * image.width + x0], w, &out.at(y, 0));
    return out;
}

namespace {
int reflect(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}
}  // namespace

Image pad_reflect_to(const Image& image, int min_size) {
    if (image.height >= min_size && image.width >= min_size) return image;
    const int h = std::max(image.height, min_size);
    const int w = std::max(image.width, min_size);
    const int top = (h - image.height) / 2;
    const int left = (w - image.width) / 2;
    Image out(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out.at(y, x) = image.at(reflect(y - top, image.height), reflect(x - left, image.width));
    return out;
}

}  // namespace sift
