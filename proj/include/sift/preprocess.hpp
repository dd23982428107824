#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sift/dataset.hpp"
#include "sift/image.hpp"

namespace sift {

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct CropRect {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    [[nodiscard]] int width() const noexcept { return x1 - x0; }
    [[nodiscard]] int height() const noexcept { return y1 - y0; }
    [[nodiscard]] bool contains(const CropRect& o) const noexcept {
        return o.x0 >= x0 && o.y0 >= y0 && o.x1 <= x1 && o.y1 <= y1;
    }
    friend bool operator==(const CropRect&, const CropRect&) = default;
};

Image resize_bilinear(const Image& image, int height, int width);

/// Bilinear resize so that min(height, width) == target; the long side is
/// round(long * target / short). Returned unchanged if already at target.
Image resize_short_side(const Image& image, int target = 1024);

/// Output shape of resize_short_side without doing the work.
std::array<int, 2> short_side_shape(int height, int width, int target);

struct OtsuResult {
    int level = 0;  // pixels in bins <= level are background
    bool degenerate = false;
};

using Histogram = std::array<std::uint64_t, 256>;

/// Level maximizing the between-class variance of {bins <= level} vs {bins > level};
/// the lowest level wins ties. A histogram with all mass in one bin is degenerate.
OtsuResult otsu_threshold(const Histogram& histogram);

struct VolumeCrop {
    CropRect rect;
    bool degenerate = false;  // no slice had foreground; rect is the full image
};

/// Union of per-slice Otsu foregrounds (strictly above the level), padded and clipped.
/// Intensities are binned to 256 levels by the volume-wide min/max.
VolumeCrop volume_crop_bounds(const Volume& volume, int pad = 8);

/// Maps a box through a scale (new/old per axis) followed by a crop. The result is
/// clipped to the crop window; throws when nothing remains.
BBox map_bbox(const BBox& box, double scale_x, double scale_y, const CropRect& crop);

struct PreprocessedVolume {
    Volume volume;
    CropRect rect;  // in resized coordinates
    double scale_x = 1.0;
    double scale_y = 1.0;
    bool degenerate = false;
};

PreprocessedVolume preprocess_volume(const Volume& volume, int short_side = 1024, int pad = 8);

struct PreprocessLogEntry {
    std::string volume_id;
    CropRect rect;
    int resized_height = 0;
    int resized_width = 0;
    bool degenerate = false;
};

/// Runs resize + crop over every volume of a manifest, writes the processed volumes
/// under `out_dir` (same relative layout) and returns the remapped manifest, whose
/// root is `out_dir`. Parallel across volumes with at most `workers` threads.
StudyManifest preprocess_dataset(const StudyManifest& manifest, const std::filesystem::path& out_dir, int short_side,
                                 int pad, std::vector<PreprocessLogEntry>* log_entries = nullptr, int workers = 1);

}  // namespace sift
