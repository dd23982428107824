#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sift/dataset.hpp"

namespace sift {

/// Abnormal is the positive class throughout: sensitivity = abnormal recall,
/// specificity = normal recall.
struct Counts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;
    friend bool operator==(const Counts&, const Counts&) = default;
};

/// Mann-Whitney AUC (ties count one half) via average ranks, O(n log n).
double auc(std::span<const double> scores, std::span<const ClassLabel> labels);

/// Predict abnormal iff score >= threshold.
Counts confusion_at(std::span<const double> scores, std::span<const ClassLabel> labels, double threshold);

/// TN / (TN + FN); quiet NaN when there are no negative predictions.
double npv(const Counts& counts);

struct ClassRecall {
    double normal_recall = 0.0;
    double abnormal_recall = 0.0;
};
ClassRecall recall_per_class(const Counts& counts);

/// Best specificity among thresholds whose sensitivity is >= level.
double specificity_at_sensitivity(std::span<const double> scores, std::span<const ClassLabel> labels, double level);

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;  // +inf for the (0, 0) start point
};

/// ROC from (0,0) to (1,1), one candidate point per distinct score; points lying on a
/// straight segment between their neighbours are dropped.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const ClassLabel> labels);

double trapezoid_area(std::span<const RocPoint> curve);

/// Evaluation summary. Accuracy is intentionally not part of it: under extreme
/// imbalance it rewards predicting everything normal.
struct MetricReport {
    double auc = 0.0;
    double npv = 0.0;
    bool npv_defined = false;
    double normal_recall = 0.0;
    double abnormal_recall = 0.0;
    double spec_at_87 = 0.0;
    double spec_at_80 = 0.0;
    double threshold_used = 0.0;
    Counts counts;
};

MetricReport compute_report(std::span<const double> scores, std::span<const ClassLabel> labels, double threshold);

}  // namespace sift
