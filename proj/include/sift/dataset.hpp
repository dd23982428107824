#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sift {

enum class Laterality { L, R };
enum class View { CC, MLO };
enum class ClassLabel { normal, abnormal };

std::string_view to_string(Laterality l) noexcept;
std::string_view to_string(View v) noexcept;
std::string_view to_string(ClassLabel c) noexcept;

[[nodiscard]] constexpr View other_view(View v) noexcept { return v == View::CC ? View::MLO : View::CC; }

/// Axis-aligned box in post-preprocessing pixel coordinates.
struct BBox {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;

    [[nodiscard]] int x1() const noexcept { return x + width; }
    [[nodiscard]] int y1() const noexcept { return y + height; }
    friend bool operator==(const BBox&, const BBox&) = default;
};

struct Annotation {
    int slice_index = 0;
    BBox bbox;
    friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct VolumeRecord {
    std::string patient_id;
    std::string study_id;
    Laterality laterality = Laterality::L;
    View view = View::CC;
    std::filesystem::path path;  // relative to the manifest root
    int n_slices = 1;
    ClassLabel class_label = ClassLabel::normal;
    std::optional<Annotation> annotation;

    /// `<patient>_<study>_<L|R>_<CC|MLO>`; unique within a valid manifest.
    [[nodiscard]] std::string volume_id() const;
    friend bool operator==(const VolumeRecord&, const VolumeRecord&) = default;
};

struct StudyManifest {
    std::vector<VolumeRecord> entries;
    std::filesystem::path root_path;

    [[nodiscard]] std::filesystem::path volume_dir(const VolumeRecord& r) const { return root_path / r.path; }
    [[nodiscard]] std::filesystem::path volume_dir(std::size_t i) const { return volume_dir(entries.at(i)); }
    [[nodiscard]] std::size_t total_slices() const;
    [[nodiscard]] std::vector<std::string> patient_ids() const;  // sorted, distinct
};

/// Addressable slice: an index into StudyManifest::entries plus a slice index.
struct SliceRef {
    std::size_t volume = 0;
    int slice_index = 0;
    friend bool operator==(const SliceRef&, const SliceRef&) = default;
};

struct SplitSpec {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
    std::uint64_t seed = 0;
    /// Splits patients with and without abnormal volumes separately so that small
    /// abnormal cohorts reach every split.
    bool stratify = true;
};

struct SplitResult {
    StudyManifest train;
    StudyManifest val;
    StudyManifest test;
};

struct SplitCounts {
    std::size_t patients = 0;
    std::size_t volumes = 0;
    std::size_t abnormal_volumes = 0;
};

inline constexpr const char* kManifestHeader =
    "patient_id,study_id,laterality,view,path,n_slices,class_label,annot_slice,annot_x,annot_y,annot_w,annot_h";

/// Parses and validates a manifest CSV. Paths resolve against the CSV's directory.
/// With `check_files`, each volume directory must exist and annotated boxes are
/// checked against the annotated slice's actual dimensions.
StudyManifest load_manifest(const std::filesystem::path& csv_path, bool check_files = true);

/// Writes a manifest CSV; entry paths are rewritten relative to the CSV's directory.
void write_manifest(const StudyManifest& manifest, const std::filesystem::path& csv_path);

/// Structural invariants that do not need the filesystem.
void validate_manifest(const StudyManifest& manifest);

SplitResult split_subjectwise(const StudyManifest& manifest, const SplitSpec& spec);
SplitCounts count(const StudyManifest& manifest);

/// Abnormal iff the volume is annotated and |slice_index - annotated index| <= window.
ClassLabel slice_label(const VolumeRecord& volume, int slice_index, int window = 9);

std::vector<SliceRef> all_slices(const StudyManifest& manifest);

}  // namespace sift
