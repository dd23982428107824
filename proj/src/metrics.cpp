#include "sift/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sift/error.hpp"

namespace sift {

namespace {

struct ClassSizes {
    std::size_t pos = 0;
    std::size_t neg = 0;
};

ClassSizes check_inputs(std::span<const double> scores, std::span<const ClassLabel> labels, const char* what) {
    if (scores.size() != labels.size()) throw Error(std::string(what) + ": scores and labels differ in length");
    ClassSizes c;
    for (auto l : labels) (l == ClassLabel::abnormal ? c.pos : c.neg)++;
    if (c.pos == 0 || c.neg == 0) throw Error(std::string(what) + ": both classes must be present");
    return c;
}

/// Indices sorted by descending score.
std::vector<std::size_t> descending_order(std::span<const double> scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

/// Un-thinned ROC: the start point plus one point per distinct score (descending thresholds).
std::vector<RocPoint> full_roc(std::span<const double> scores, std::span<const ClassLabel> labels, ClassSizes c) {
    const auto idx = descending_order(scores);
    std::vector<RocPoint> pts;
    pts.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < idx.size();) {
        const double s = scores[idx[i]];
        while (i < idx.size() && scores[idx[i]] == s) {
            (labels[idx[i]] == ClassLabel::abnormal ? tp : fp)++;
            ++i;
        }
        pts.push_back({static_cast<double>(fp) / c.neg, static_cast<double>(tp) / c.pos, s});
    }
    return pts;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const ClassLabel> labels) {
    const ClassSizes c = check_inputs(scores, labels, "auc");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;  // sum of 1-based average ranks of abnormal samples
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (labels[idx[k]] == ClassLabel::abnormal) rank_sum += avg_rank;
        i = j;
    }
    const double np = static_cast<double>(c.pos), nn = static_cast<double>(c.neg);
    return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

Counts confusion_at(std::span<const double> scores, std::span<const ClassLabel> labels, double threshold) {
    if (scores.size() != labels.size()) throw Error("confusion_at: scores and labels differ in length");
    Counts c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted_abnormal = scores[i] >= threshold;
        if (labels[i] == ClassLabel::abnormal) (predicted_abnormal ? c.tp : c.fn)++;
        else (predicted_abnormal ? c.fp : c.tn)++;
    }
    return c;
}

double npv(const Counts& counts) {
    const std::size_t denom = counts.tn + counts.fn;
    if (denom == 0) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(counts.tn) / static_cast<double>(denom);
}

ClassRecall recall_per_class(const Counts& counts) {
    if (counts.tp + counts.fn == 0) throw Error("recall_per_class: no abnormal samples");
    if (counts.tn + counts.fp == 0) throw Error("recall_per_class: no normal samples");
    return {static_cast<double>(counts.tn) / static_cast<double>(counts.tn + counts.fp),
            static_cast<double>(counts.tp) / static_cast<double>(counts.tp + counts.fn)};
}

double specificity_at_sensitivity(std::span<const double> scores, std::span<const ClassLabel> labels, double level) {
    const ClassSizes c = check_inputs(scores, labels, "specificity_at_sensitivity");
    if (!(level > 0.0 && level <= 1.0)) throw Error("specificity_at_sensitivity: level must lie in (0, 1]");
    double best = 0.0;
    // Rates are exact rationals; work on recovered counts to avoid rounding at the boundary.
    const double pos = static_cast<double>(c.pos), neg = static_cast<double>(c.neg);
    const double needed = level * pos;
    for (const auto& p : full_roc(scores, labels, c)) {
        const double tp = std::round(p.tpr * pos);
        const double tn = neg - std::round(p.fpr * neg);
        if (tp + 1e-9 >= needed) best = std::max(best, tn / neg);
    }
    return best;
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const ClassLabel> labels) {
    const ClassSizes c = check_inputs(scores, labels, "roc_curve");
    const auto pts = full_roc(scores, labels, c);
    std::vector<RocPoint> out;
    out.push_back(pts.front());
    for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
        const auto& a = out.back();
        const auto& b = pts[i];
        const auto& n = pts[i + 1];
        // Collinear with the last kept point and the next point.
        const double cross = (b.fpr - a.fpr) * (n.tpr - a.tpr) - (b.tpr - a.tpr) * (n.fpr - a.fpr);
        if (std::abs(cross) > 1e-15) out.push_back(b);
    }
    out.push_back(pts.back());
    return out;
}

double trapezoid_area(std::span<const RocPoint> curve) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i)
        area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) * 0.5;
    return area;
}

MetricReport compute_report(std::span<const double> scores, std::span<const ClassLabel> labels, double threshold) {
    check_inputs(scores, labels, "compute_report");
    MetricReport r;
    r.auc = auc(scores, labels);
    r.counts = confusion_at(scores, labels, threshold);
    r.npv = npv(r.counts);
    r.npv_defined = !std::isnan(r.npv);
    const auto rec = recall_per_class(r.counts);
    r.normal_recall = rec.normal_recall;
    r.abnormal_recall = rec.abnormal_recall;
    r.spec_at_87 = specificity_at_sensitivity(scores, labels, 0.87);
    r.spec_at_80 = specificity_at_sensitivity(scores, labels, 0.80);
    r.threshold_used = threshold;
    return r;
}

}  // namespace sift
