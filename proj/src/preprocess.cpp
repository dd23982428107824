#include "sift/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>

#include "sift/error.hpp"
#include "sift/log.hpp"
#include "sift/parallel.hpp"

namespace fs = std::filesystem;

namespace sift {

Image resize_bilinear(const Image& image, int height, int width) {
    if (image.empty()) throw Error("cannot resize an empty image");
    if (height < 1 || width < 1) throw Error("resize target must be positive");
    if (height == image.height && width == image.width) return image;

    const double sy = static_cast<double>(image.height) / height;
    const double sx = static_cast<double>(image.width) / width;
    std::vector<int> x0(width), x1(width);
    std::vector<float> fx(width);
    for (int x = 0; x < width; ++x) {
        const double src = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
        x0[x] = static_cast<int>(std::floor(src));
        x1[x] = std::min(x0[x] + 1, image.width - 1);
        fx[x] = static_cast<float>(src - x0[x]);
    }
    Image out(height, width);
    for (int y = 0; y < height; ++y) {
        const double src = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
        const int y0 = static_cast<int>(std::floor(src));
        const int y1 = std::min(y0 + 1, image.height - 1);
        const float fy = static_cast<float>(src - y0);
        for (int x = 0; x < width; ++x) {
            const float top = image.at(y0, x0[x]) * (1 - fx[x]) + image.at(y0, x1[x]) * fx[x];
            const float bottom = image.at(y1, x0[x]) * (1 - fx[x]) + image.at(y1, x1[x]) * fx[x];
            out.at(y, x) = top * (1 - fy) + bottom * fy;
        }
    }
    return out;
}

std::array<int, 2> short_side_shape(int height, int width, int target) {
    if (height < 1 || width < 1) throw Error("empty image");
    if (target < 1) throw Error("short-side target must be >= 1");
    if (height <= width) {
        const auto w = static_cast<int>(std::lround(static_cast<double>(width) * target / height));
        return {target, std::max(w, 1)};
    }
    const auto h = static_cast<int>(std::lround(static_cast<double>(height) * target / width));
    return {std::max(h, 1), target};
}

Image resize_short_side(const Image& image, int target) {
    if (image.empty()) throw Error("cannot resize an empty image");
    const auto [h, w] = short_side_shape(image.height, image.width, target);
    return resize_bilinear(image, h, w);
}

namespace {

using u128 = unsigned __int128;

// a * b compared with c * d for a, c < 2^128 and b, d < 2^64, via 192-bit products.
int compare_products(u128 a, std::uint64_t b, u128 c, std::uint64_t d) {
    const auto widen = [](u128 x, std::uint64_t y) {
        const u128 lo = static_cast<u128>(static_cast<std::uint64_t>(x)) * y;
        const u128 hi = static_cast<u128>(static_cast<std::uint64_t>(x >> 64)) * y + (lo >> 64);
        return std::pair<u128, std::uint64_t>{hi, static_cast<std::uint64_t>(lo)};
    };
    const auto l = widen(a, b), r = widen(c, d);
    return l < r ? -1 : (l > r ? 1 : 0);
}

}  // namespace

OtsuResult otsu_threshold(const Histogram& histogram) {
    // N^2 * sigma_b^2 = (n0 * S - N * s0)^2 / (n0 * n1); compared exactly in integers.
    std::uint64_t total = 0, sum = 0;
    int occupied = 0, only_bin = 0;
    for (int i = 0; i < 256; ++i) {
        total += histogram[i];
        sum += static_cast<std::uint64_t>(i) * histogram[i];
        if (histogram[i]) {
            ++occupied;
            only_bin = i;
        }
    }
    if (total == 0) throw Error("otsu_threshold: empty histogram");
    if (occupied == 1) return {only_bin, true};
    // Keeps n0 * S below 2^64.
    if (total >= (std::uint64_t{1} << 28)) throw Error("otsu_threshold: histogram exceeds 2^28 samples");

    std::uint64_t n0 = 0, s0 = 0;
    u128 best_num = 0;
    std::uint64_t best_den = 1;
    bool found = false;
    int level = 0;
    for (int t = 0; t < 255; ++t) {
        n0 += histogram[t];
        s0 += static_cast<std::uint64_t>(t) * histogram[t];
        const std::uint64_t n1 = total - n0;
        if (n0 == 0 || n1 == 0) continue;
        const std::uint64_t a = n0 * sum, b = total * s0;
        const u128 d = a > b ? a - b : b - a;
        const u128 num = d * d;
        const std::uint64_t den = n0 * n1;
        if (!found || compare_products(num, best_den, best_num, den) > 0) {
            best_num = num;
            best_den = den;
            level = t;
            found = true;
        }
    }
    return {level, false};
}

VolumeCrop volume_crop_bounds(const Volume& volume, int pad) {
    if (volume.empty()) throw Error("volume_crop_bounds: empty volume");
    const int h = volume.front().height, w = volume.front().width;
    float lo = std::numeric_limits<float>::max(), hi = std::numeric_limits<float>::lowest();
    for (const auto& s : volume) {
        if (s.height != h || s.width != w) throw Error("volume_crop_bounds: slices differ in shape");
        const auto [mn, mx] = std::minmax_element(s.pixels.begin(), s.pixels.end());
        lo = std::min(lo, *mn);
        hi = std::max(hi, *mx);
    }
    const CropRect full{0, 0, w, h};
    if (!(hi > lo)) {
        log::warn("volume is constant; using the full image as crop");
        return {full, true};
    }

    const double scale = 256.0 / (static_cast<double>(hi) - lo);
    auto bin_of = [&](float v) { return std::min(255, static_cast<int>((v - lo) * scale)); };

    int bx0 = w, by0 = h, bx1 = 0, by1 = 0;
    std::vector<std::uint8_t> bins(static_cast<std::size_t>(h) * w);
    for (const auto& s : volume) {
        Histogram hist{};
        for (std::size_t i = 0; i < bins.size(); ++i) {
            bins[i] = static_cast<std::uint8_t>(bin_of(s.pixels[i]));
            ++hist[bins[i]];
        }
        const OtsuResult otsu = otsu_threshold(hist);
        if (otsu.degenerate) continue;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (bins[static_cast<std::size_t>(y) * w + x] > otsu.level) {
                    bx0 = std::min(bx0, x);
                    by0 = std::min(by0, y);
                    bx1 = std::max(bx1, x + 1);
                    by1 = std::max(by1, y + 1);
                }
    }
    if (bx1 <= bx0 || by1 <= by0) {
        log::warn("no foreground found in any slice; using the full image as crop");
        return {full, true};
    }
    return {{std::max(0, bx0 - pad), std::max(0, by0 - pad), std::min(w, bx1 + pad), std::min(h, by1 + pad)}, false};
}

BBox map_bbox(const BBox& box, double scale_x, double scale_y, const CropRect& crop) {
    const int x0 = static_cast<int>(std::floor(box.x * scale_x)) - crop.x0;
    const int y0 = static_cast<int>(std::floor(box.y * scale_y)) - crop.y0;
    const int x1 = static_cast<int>(std::ceil(box.x1() * scale_x)) - crop.x0;
    const int y1 = static_cast<int>(std::ceil(box.y1() * scale_y)) - crop.y0;
    const int cx0 = std::max(0, x0), cy0 = std::max(0, y0);
    const int cx1 = std::min(crop.width(), x1), cy1 = std::min(crop.height(), y1);
    if (cx1 <= cx0 || cy1 <= cy0) throw Error("annotation falls outside the crop window");
    return {cx0, cy0, cx1 - cx0, cy1 - cy0};
}

PreprocessedVolume preprocess_volume(const Volume& volume, int short_side, int pad) {
    if (volume.empty()) throw Error("preprocess_volume: empty volume");
    PreprocessedVolume out;
    Volume resized;
    resized.reserve(volume.size());
    for (const auto& s : volume) resized.push_back(resize_short_side(s, short_side));
    out.scale_x = static_cast<double>(resized.front().width) / volume.front().width;
    out.scale_y = static_cast<double>(resized.front().height) / volume.front().height;
    const VolumeCrop vc = volume_crop_bounds(resized, pad);
    out.rect = vc.rect;
    out.degenerate = vc.degenerate;
    out.volume.reserve(resized.size());
    for (const auto& s : resized) out.volume.push_back(crop(s, vc.rect.x0, vc.rect.y0, vc.rect.width(), vc.rect.height()));
    return out;
}

StudyManifest preprocess_dataset(const StudyManifest& manifest, const fs::path& out_dir, int short_side, int pad,
                                 std::vector<PreprocessLogEntry>* log_entries, int workers) {
    StudyManifest out;
    out.root_path = out_dir;
    out.entries = manifest.entries;
    std::vector<PreprocessLogEntry> entries(manifest.entries.size());

    parallel_for(manifest.entries.size(), workers, [&](std::size_t i) {
        const auto& rec = manifest.entries[i];
        const Volume raw = read_volume(manifest.volume_dir(rec), rec.n_slices);
        const PreprocessedVolume pv = preprocess_volume(raw, short_side, pad);
        write_volume(out_dir / rec.path, pv.volume);
        if (rec.annotation) {
            out.entries[i].annotation->bbox = map_bbox(rec.annotation->bbox, pv.scale_x, pv.scale_y, pv.rect);
        }
        const auto [rh, rw] = short_side_shape(raw.front().height, raw.front().width, short_side);
        entries[i] = {rec.volume_id(), pv.rect, rh, rw, pv.degenerate};
    });
    if (log_entries) *log_entries = std::move(entries);
    return out;
}

}  // namespace sift
