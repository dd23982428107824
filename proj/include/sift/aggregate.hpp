#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sift/dataset.hpp"

namespace sift {

struct SliceScore {
    std::string volume_id;
    int slice_index = 0;
    double score = 0.0;
    ClassLabel label = ClassLabel::normal;
    friend bool operator==(const SliceScore&, const SliceScore&) = default;
};

struct VolumeScore {
    std::string volume_id;
    double score = 0.0;
    ClassLabel label = ClassLabel::normal;
    friend bool operator==(const VolumeScore&, const VolumeScore&) = default;
};

/// Per-slice scores plus the per-volume rollup. Rows are kept sorted by
/// (volume_id, slice_index) so assembly order never shows in the output.
struct ScoreTable {
    std::vector<SliceScore> slices;
    std::vector<VolumeScore> volumes;

    void sort();
    [[nodiscard]] std::vector<double> slice_scores() const;
    [[nodiscard]] std::vector<ClassLabel> slice_labels() const;
    [[nodiscard]] std::vector<double> volume_scores() const;
    [[nodiscard]] std::vector<ClassLabel> volume_labels() const;
};

/// Arithmetic mean of per-patch abnormal probabilities.
double mean_probability(std::span<const double> patch_probabilities);

/// Volume score = max over its slice scores.
double score_volume(std::span<const double> slice_scores);

/// Rebuilds `volumes` from `slices`: max score per volume, class taken from the
/// record with the matching volume_id.
void rollup_volumes(ScoreTable& table, std::span<const VolumeRecord> records);

/// Threshold minimizing |normal recall - abnormal recall| over the midpoints of
/// consecutive distinct scores plus one sentinel below the minimum and one above the
/// maximum. Predict abnormal iff score >= t. Ties: higher normal recall, then lower t.
double select_threshold(std::span<const double> scores, std::span<const ClassLabel> labels);

/// Threshold candidates used by select_threshold, ascending.
std::vector<double> threshold_candidates(std::span<const double> scores);

/// `volume_id,slice_index,score,label` with fixed 9-decimal formatting.
void write_slice_scores(const ScoreTable& table, const std::filesystem::path& path);
/// `volume_id,score,label`.
void write_volume_scores(const ScoreTable& table, const std::filesystem::path& path);
ScoreTable read_score_table(const std::filesystem::path& slices_csv, const std::filesystem::path& volumes_csv);

}  // namespace sift
