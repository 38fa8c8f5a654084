#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace tcfa {

struct SplitSpec {
    double train_fraction = 0.8;
    bool stratified = true;  // always true; kept as a declared field
    std::uint64_t seed = 0;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Per-class shuffled partition; per-class test counts are
// round((1 - train_fraction) * N_c). Indices come back sorted ascending.
SplitIndices stratified_split(const std::vector<int>& labels, const SplitSpec& spec);

struct RocPoint {
    double threshold = 0.0;  // classify positive iff score >= threshold
    double fpr = 0.0;
    double tpr = 0.0;
};

// Thresholds at all distinct scores, tied scores grouped into one step. The
// first point is (0,0) at a sentinel threshold above every score; the last
// is (1,1). AUC by the trapezoidal rule.
struct RocCurve {
    std::vector<RocPoint> points;
    double auc = 0.0;
};

RocCurve roc_curve(const std::vector<double>& scores, const std::vector<int>& labels);

struct ConfusionMatrix {
    long tp = 0, fp = 0, tn = 0, fn = 0;
};

// (specificity %, sensitivity %) = (TN/(FP+TN)*100, TP/(TP+FN)*100).
std::pair<double, double> confusion_metrics(const ConfusionMatrix& cm);

ConfusionMatrix confusion_at(const std::vector<double>& scores,
                             const std::vector<int>& labels, double threshold);

struct CutoffResult {
    double threshold = 0.0;
    double specificity_pct = 0.0;
    double sensitivity_pct = 0.0;
};

// Threshold maximizing specificity + sensitivity (Youden); ties go to the
// higher threshold.
CutoffResult optimal_cutoff(const RocCurve& curve);

// Hosmer-Lemeshow interpretation bands; boundary values take the higher band.
std::string auc_guideline(double auc);

struct EvalReport {
    double auc = 0.0;
    double threshold = 0.0;
    double specificity_pct = 0.0;
    double sensitivity_pct = 0.0;
    ConfusionMatrix confusion;
    std::string guideline;
};

EvalReport evaluate_scores(const std::vector<double>& scores,
                           const std::vector<int>& labels);

std::string report_to_json(const EvalReport& report);
void write_report_json(const EvalReport& report, const std::string& path);
void write_roc_csv(const RocCurve& curve, const std::string& path);

}  // namespace tcfa
