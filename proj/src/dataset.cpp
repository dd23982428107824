#include "sift/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "sift/error.hpp"
#include "sift/image.hpp"
#include "sift/rng.hpp"

namespace fs = std::filesystem;

namespace sift {

std::string_view to_string(Laterality l) noexcept { return l == Laterality::L ? "L" : "R"; }
std::string_view to_string(View v) noexcept { return v == View::CC ? "CC" : "MLO"; }
std::string_view to_string(ClassLabel c) noexcept { return c == ClassLabel::normal ? "normal" : "abnormal"; }

std::string VolumeRecord::volume_id() const {
    std::string id = patient_id;
    id += '_';
    id += study_id;
    id += '_';
    id += to_string(laterality);
    id += '_';
    id += to_string(view);
    return id;
}

std::size_t StudyManifest::total_slices() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += static_cast<std::size_t>(e.n_slices);
    return n;
}

std::vector<std::string> StudyManifest::patient_ids() const {
    std::set<std::string> ids;
    for (const auto& e : entries) ids.insert(e.patient_id);
    return {ids.begin(), ids.end()};
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

int parse_int(const std::string& s, const char* column, std::size_t row) {
    int value = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc{} || ptr != end) throw ManifestError(std::string("bad integer in column ") + column + ": '" + s + "'", row);
    return value;
}

bool valid_id(const std::string& s) {
    return !s.empty() && s.find_first_of(",\"\n\r") == std::string::npos;
}

VolumeRecord parse_row(const std::vector<std::string>& f, std::size_t row) {
    if (f.size() != 12) throw ManifestError("expected 12 columns, got " + std::to_string(f.size()), row);
    VolumeRecord r;
    r.patient_id = f[0];
    r.study_id = f[1];
    if (!valid_id(r.patient_id) || !valid_id(r.study_id)) throw ManifestError("empty patient_id or study_id", row);
    if (f[2] == "L") r.laterality = Laterality::L;
    else if (f[2] == "R") r.laterality = Laterality::R;
    else throw ManifestError("laterality must be L or R, got '" + f[2] + "'", row);
    if (f[3] == "CC") r.view = View::CC;
    else if (f[3] == "MLO") r.view = View::MLO;
    else throw ManifestError("view must be CC or MLO, got '" + f[3] + "'", row);
    if (f[4].empty()) throw ManifestError("empty path", row);
    r.path = f[4];
    r.n_slices = parse_int(f[5], "n_slices", row);
    if (f[6] == "normal") r.class_label = ClassLabel::normal;
    else if (f[6] == "abnormal") r.class_label = ClassLabel::abnormal;
    else throw ManifestError("class_label must be normal or abnormal, got '" + f[6] + "'", row);

    const bool any_annot = std::any_of(f.begin() + 7, f.end(), [](const std::string& s) { return !s.empty(); });
    const bool all_annot = std::all_of(f.begin() + 7, f.end(), [](const std::string& s) { return !s.empty(); });
    if (any_annot && !all_annot) throw ManifestError("partially filled annotation columns", row);
    if (all_annot) {
        Annotation a;
        a.slice_index = parse_int(f[7], "annot_slice", row);
        a.bbox = {parse_int(f[8], "annot_x", row), parse_int(f[9], "annot_y", row), parse_int(f[10], "annot_w", row),
                  parse_int(f[11], "annot_h", row)};
        r.annotation = a;
    }
    return r;
}

void validate_record(const VolumeRecord& r, std::size_t row) {
    if (r.n_slices < 1) throw ManifestError("n_slices must be >= 1", row);
    if (r.class_label == ClassLabel::abnormal && !r.annotation)
        throw ManifestError("abnormal volume " + r.volume_id() + " has no annotation", row);
    if (r.class_label == ClassLabel::normal && r.annotation)
        throw ManifestError("normal volume " + r.volume_id() + " carries an annotation", row);
    if (r.annotation) {
        const auto& a = *r.annotation;
        if (a.slice_index < 0 || a.slice_index >= r.n_slices) throw ManifestError("annotated slice index out of range", row);
        if (a.bbox.width <= 0 || a.bbox.height <= 0) throw ManifestError("bbox width and height must be positive", row);
        if (a.bbox.x < 0 || a.bbox.y < 0) throw ManifestError("bbox out of bounds", row);
    }
}

}  // namespace

void validate_manifest(const StudyManifest& manifest) {
    std::set<std::tuple<std::string, std::string, Laterality, View>> seen;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const auto& r = manifest.entries[i];
        validate_record(r, i + 1);
        if (!seen.emplace(r.patient_id, r.study_id, r.laterality, r.view).second)
            throw ManifestError("duplicate volume " + r.volume_id(), i + 1);
    }
}

StudyManifest load_manifest(const fs::path& csv_path, bool check_files) {
    std::ifstream in(csv_path);
    if (!in) throw ManifestError("cannot open manifest " + csv_path.string());
    std::string line;
    if (!std::getline(in, line)) throw ManifestError("empty manifest " + csv_path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kManifestHeader) throw ManifestError("unexpected manifest header: " + line);

    StudyManifest manifest;
    manifest.root_path = csv_path.parent_path();
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ++row;
        if (line.empty()) continue;
        manifest.entries.push_back(parse_row(split_fields(line), row));
    }
    validate_manifest(manifest);

    if (check_files) {
        for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
            const auto& r = manifest.entries[i];
            const fs::path dir = manifest.volume_dir(r);
            if (!fs::is_directory(dir)) throw ManifestError("volume directory missing: " + dir.string(), i + 1);
            if (r.annotation) {
                const Image slice = read_png16(dir / slice_filename(r.annotation->slice_index, r.n_slices));
                const auto& b = r.annotation->bbox;
                if (b.x1() > slice.width || b.y1() > slice.height)
                    throw ManifestError("bbox out of bounds for " + std::to_string(slice.width) + "x" +
                                            std::to_string(slice.height) + " slice",
                                        i + 1);
            }
        }
    }
    return manifest;
}

void write_manifest(const StudyManifest& manifest, const fs::path& csv_path) {
    const fs::path dir = csv_path.parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    std::ofstream out(csv_path);
    if (!out) throw Error("cannot write manifest " + csv_path.string());
    out << kManifestHeader << '\n';
    for (const auto& r : manifest.entries) {
        const fs::path abs = manifest.root_path / r.path;
        const fs::path rel = fs::weakly_canonical(abs).lexically_relative(fs::weakly_canonical(dir.empty() ? fs::path(".") : dir));
        out << r.patient_id << ',' << r.study_id << ',' << to_string(r.laterality) << ',' << to_string(r.view) << ','
            << rel.generic_string() << ',' << r.n_slices << ',' << to_string(r.class_label);
        if (r.annotation) {
            const auto& a = *r.annotation;
            out << ',' << a.slice_index << ',' << a.bbox.x << ',' << a.bbox.y << ',' << a.bbox.width << ','
                << a.bbox.height;
        } else {
            out << ",,,,,";
        }
        out << '\n';
    }
    if (!out) throw Error("failed writing manifest " + csv_path.string());
}

namespace {

struct Cut {
    std::size_t train = 0, val = 0, test = 0;
};

Cut cut_counts(std::size_t n, const SplitSpec& spec) {
    constexpr double eps = 1e-9;
    Cut c;
    c.val = static_cast<std::size_t>(std::floor(spec.val * static_cast<double>(n) + eps));
    c.test = static_cast<std::size_t>(std::floor(spec.test * static_cast<double>(n) + eps));
    if (n >= 3) {
        c.val = std::max<std::size_t>(c.val, 1);
        c.test = std::max<std::size_t>(c.test, 1);
    } else if (n == 2) {
        c.val = 0;
        c.test = 1;
    } else {
        c.val = c.test = 0;
    }
    c.train = n - c.val - c.test;
    return c;
}

template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i - 1)));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace

SplitResult split_subjectwise(const StudyManifest& manifest, const SplitSpec& spec) {
    if (!(spec.train > 0 && spec.val > 0 && spec.test > 0)) throw Error("split ratios must all be positive");
    if (std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-6) throw Error("split ratios must sum to 1");

    std::vector<std::string> abnormal, normal;
    {
        std::map<std::string, bool> has_abnormal;
        for (const auto& e : manifest.entries) has_abnormal[e.patient_id] |= e.class_label == ClassLabel::abnormal;
        for (const auto& [id, abn] : has_abnormal) (spec.stratify && abn ? abnormal : normal).push_back(id);
    }
    const std::size_t n_patients = abnormal.size() + normal.size();
    if (n_patients < 3) throw Error("need at least 3 patients to split, got " + std::to_string(n_patients));

    std::map<std::string, int> assignment;  // 0 train, 1 val, 2 test
    Rng rng = make_rng(spec.seed, {0x5eed});
    for (auto* group : {&abnormal, &normal}) {
        shuffle_in_place(*group, rng);
        const Cut c = cut_counts(group->size(), spec);
        for (std::size_t i = 0; i < group->size(); ++i)
            assignment[(*group)[i]] = i < c.train ? 0 : (i < c.train + c.val ? 1 : 2);
    }

    SplitResult out;
    for (auto* m : {&out.train, &out.val, &out.test}) m->root_path = manifest.root_path;
    for (const auto& e : manifest.entries) {
        switch (assignment.at(e.patient_id)) {
            case 0: out.train.entries.push_back(e); break;
            case 1: out.val.entries.push_back(e); break;
            default: out.test.entries.push_back(e); break;
        }
    }
    return out;
}

SplitCounts count(const StudyManifest& manifest) {
    SplitCounts c;
    c.patients = manifest.patient_ids().size();
    c.volumes = manifest.entries.size();
    for (const auto& e : manifest.entries) c.abnormal_volumes += e.class_label == ClassLabel::abnormal;
    return c;
}

ClassLabel slice_label(const VolumeRecord& volume, int slice_index, int window) {
    if (slice_index < 0 || slice_index >= volume.n_slices)
        throw Error("slice index " + std::to_string(slice_index) + " out of range for " + volume.volume_id());
    if (!volume.annotation) return ClassLabel::normal;
    return std::abs(slice_index - volume.annotation->slice_index) <= window ? ClassLabel::abnormal : ClassLabel::normal;
}

std::vector<SliceRef> all_slices(const StudyManifest& manifest) {
    std::vector<SliceRef> out;
    out.reserve(manifest.total_slices());
    for (std::size_t v = 0; v < manifest.entries.size(); ++v)
        for (int s = 0; s < manifest.entries[v].n_slices; ++s) out.push_back({v, s});
    return out;
}

}  // namespace sift
