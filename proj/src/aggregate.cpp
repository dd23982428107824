#include "sift/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include "sift/error.hpp"

namespace sift {

void ScoreTable::sort() {
    std::sort(slices.begin(), slices.end(), [](const SliceScore& a, const SliceScore& b) {
        return std::tie(a.volume_id, a.slice_index) < std::tie(b.volume_id, b.slice_index);
    });
    std::sort(volumes.begin(), volumes.end(),
              [](const VolumeScore& a, const VolumeScore& b) { return a.volume_id < b.volume_id; });
}

std::vector<double> ScoreTable::slice_scores() const {
    std::vector<double> out;
    out.reserve(slices.size());
    for (const auto& s : slices) out.push_back(s.score);
    return out;
}

std::vector<ClassLabel> ScoreTable::slice_labels() const {
    std::vector<ClassLabel> out;
    out.reserve(slices.size());
    for (const auto& s : slices) out.push_back(s.label);
    return out;
}

std::vector<double> ScoreTable::volume_scores() const {
    std::vector<double> out;
    out.reserve(volumes.size());
    for (const auto& v : volumes) out.push_back(v.score);
    return out;
}

std::vector<ClassLabel> ScoreTable::volume_labels() const {
    std::vector<ClassLabel> out;
    out.reserve(volumes.size());
    for (const auto& v : volumes) out.push_back(v.label);
    return out;
}

double mean_probability(std::span<const double> patch_probabilities) {
    if (patch_probabilities.empty()) throw Error("mean_probability: need at least one patch");
    return std::accumulate(patch_probabilities.begin(), patch_probabilities.end(), 0.0) /
           static_cast<double>(patch_probabilities.size());
}

double score_volume(std::span<const double> slice_scores) {
    if (slice_scores.empty()) throw Error("score_volume: empty slice list");
    return *std::max_element(slice_scores.begin(), slice_scores.end());
}

void rollup_volumes(ScoreTable& table, std::span<const VolumeRecord> records) {
    std::map<std::string, ClassLabel> labels;
    for (const auto& r : records) labels[r.volume_id()] = r.class_label;
    std::map<std::string, std::vector<double>> per_volume;
    for (const auto& s : table.slices) per_volume[s.volume_id].push_back(s.score);
    table.volumes.clear();
    for (const auto& [id, scores] : per_volume) {
        const auto it = labels.find(id);
        if (it == labels.end()) throw Error("rollup_volumes: unknown volume " + id);
        table.volumes.push_back({id, score_volume(scores), it->second});
    }
    table.sort();
}

std::vector<double> threshold_candidates(std::span<const double> scores) {
    if (scores.empty()) throw Error("threshold_candidates: no scores");
    std::vector<double> s(scores.begin(), scores.end());
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    std::vector<double> out;
    out.reserve(s.size() + 1);
    out.push_back(s.front() - 1.0);
    for (std::size_t i = 1; i < s.size(); ++i) out.push_back(0.5 * (s[i - 1] + s[i]));
    out.push_back(s.back() + 1.0);
    return out;
}

double select_threshold(std::span<const double> scores, std::span<const ClassLabel> labels) {
    if (scores.size() != labels.size()) throw Error("select_threshold: scores and labels differ in length");
    std::size_t n_pos = 0, n_neg = 0;
    for (auto l : labels) (l == ClassLabel::abnormal ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) throw Error("select_threshold: both classes must be present");

    // Sweep candidates ascending; counts of samples below each candidate move monotonically.
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double best_t = 0.0, best_gap = 2.0, best_nr = -1.0;
    std::size_t below = 0, tn = 0, fn = 0;
    for (double t : threshold_candidates(scores)) {
        while (below < idx.size() && scores[idx[below]] < t) {
            (labels[idx[below]] == ClassLabel::abnormal ? fn : tn)++;
            ++below;
        }
        const double nr = static_cast<double>(tn) / static_cast<double>(n_neg);
        const double ar = static_cast<double>(n_pos - fn) / static_cast<double>(n_pos);
        const double gap = std::abs(nr - ar);
        if (gap < best_gap || (gap == best_gap && nr > best_nr)) {
            best_gap = gap;
            best_nr = nr;
            best_t = t;
        }
    }
    return best_t;
}

namespace {

std::string format_score(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9f", v);
    return buf;
}

ClassLabel parse_label(const std::string& s) {
    if (s == "normal") return ClassLabel::normal;
    if (s == "abnormal") return ClassLabel::abnormal;
    throw Error("bad label in score table: " + s);
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, const std::string& header) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != header) throw Error("unexpected header in " + path.string());
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        rows.push_back(std::move(f));
    }
    return rows;
}

}  // namespace

void write_slice_scores(const ScoreTable& table, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "volume_id,slice_index,score,label\n";
    for (const auto& s : table.slices)
        out << s.volume_id << ',' << s.slice_index << ',' << format_score(s.score) << ',' << to_string(s.label) << '\n';
}

void write_volume_scores(const ScoreTable& table, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "volume_id,score,label\n";
    for (const auto& v : table.volumes) out << v.volume_id << ',' << format_score(v.score) << ',' << to_string(v.label) << '\n';
}

ScoreTable read_score_table(const std::filesystem::path& slices_csv, const std::filesystem::path& volumes_csv) {
    ScoreTable t;
    for (const auto& f : read_csv(slices_csv, "volume_id,slice_index,score,label")) {
        if (f.size() != 4) throw Error("malformed row in " + slices_csv.string());
        t.slices.push_back({f[0], std::stoi(f[1]), std::stod(f[2]), parse_label(f[3])});
    }
    for (const auto& f : read_csv(volumes_csv, "volume_id,score,label")) {
        if (f.size() != 3) throw Error("malformed row in " + volumes_csv.string());
        t.volumes.push_back({f[0], std::stod(f[1]), parse_label(f[2])});
    }
    t.sort();
    return t;
}

}  // namespace sift
