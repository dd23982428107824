#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace sift {

/// Single-channel float image, row-major, intensities nominally in [0, 1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> pixels;

    Image() = default;
    Image(int h, int w, float fill = 0.0f)
        : height(h), width(w), pixels(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {}

    [[nodiscard]] bool empty() const noexcept { return pixels.empty(); }
    [[nodiscard]] float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    [[nodiscard]] float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

    friend bool operator==(const Image&, const Image&) = default;
};

/// Ordered slice stack; every slice of a volume has the same shape.
using Volume = std::vector<Image>;

/// Zero-padded slice file name (`000.png`, `001.png`, ...). Width grows past 3 digits
/// only for volumes with more than 1000 slices.
std::string slice_filename(int index, int n_slices);

/// 16-bit grayscale PNG I/O. Pixel values map linearly between [0, 1] and [0, 65535].
Image read_png16(const std::filesystem::path& path);
void write_png16(const std::filesystem::path& path, const Image& image);

Volume read_volume(const std::filesystem::path& dir, int n_slices);
void write_volume(const std::filesystem::path& dir, const Volume& volume);

/// Copies the half-open window [x0, x0+w) x [y0, y0+h).
Image crop(const Image& image, int x0, int y0, int w, int h);

/// Reflect-pads (edge pixels not repeated) so both sides are at least `min_size`.
Image pad_reflect_to(const Image& image, int min_size);

}  // namespace sift
