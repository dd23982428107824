#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "sift/dataset.hpp"
#include "sift/image.hpp"

namespace sift {

/// Procedural pseudo-tomosynthesis benchmark. One study per patient with four
/// volumes (L/R x CC/MLO); abnormal patients carry one lesion on one side,
/// visible in both views of that side and annotated on its central slice only.
struct SynthConfig {
    int n_patients = 20;
    double abnormal_fraction = 0.1;
    int slices_per_volume = 24;
    int slice_height = 128;
    int slice_width = 128;
    double lesion_intensity_boost = 0.35;
    double lesion_radius_min = 4.0;
    double lesion_radius_max = 7.0;
    int lesion_z_extent = 9;
    std::uint64_t seed = 7;

    void validate() const;
    [[nodiscard]] int abnormal_patients() const;
};

/// Ground truth for a generated volume; not written to the manifest.
struct LesionTruth {
    double center_x = 0;
    double center_y = 0;
    double radius_x = 0;
    double radius_y = 0;
    int first_slice = 0;  // lesion spans [first_slice, first_slice + z_extent)
    int z_extent = 0;
};

struct GeneratedVolume {
    VolumeRecord record;
    Volume volume;
    std::optional<LesionTruth> lesion;
};

/// Synthesizes the four volumes of one patient. Pure function of (config, patient_index).
std::vector<GeneratedVolume> generate_patient(const SynthConfig& config, int patient_index);

/// Writes `manifest.csv` plus one PNG directory per volume under `out_dir/volumes/`.
/// Bit-identical for any worker count.
StudyManifest generate_dataset(const SynthConfig& config, const std::filesystem::path& out_dir, int workers = 1);

}  // namespace sift
