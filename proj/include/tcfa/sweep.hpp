#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcfa/features.hpp"
#include "tcfa/fnn.hpp"
#include "tcfa/knn.hpp"
#include "tcfa/selection.hpp"

namespace tcfa {

enum class ClassifierKind : std::uint8_t { Fnn = 0, Knn = 1, Rf = 2, Cnn = 3 };

std::string classifier_name(ClassifierKind kind);
ClassifierKind parse_classifier(const std::string& name);

struct SweepPoint {
    int n = 0;
    double auc = 0.0;
};

struct SweepSeries {
    std::string name;  // "fnn", "knn", "rf_e10", "rf_e50", "rf_e100"
    std::vector<SweepPoint> points;
};

struct SweepBest {
    std::string series;
    int n = 0;
    double auc = 0.0;
    double specificity_pct = 0.0;
    double sensitivity_pct = 0.0;
};

struct SweepResult {
    std::vector<SweepSeries> series;
    SweepBest best;
};

struct SweepOptions {
    ClassifierKind kind = ClassifierKind::Knn;
    FnnTrainConfig fnn;                          // per-N seeds derived from `seed`
    std::vector<int> rf_tree_counts = {10, 50, 100};
    std::uint64_t seed = 0;
    int threads = 1;
};

// For every N in 1..F: select the top-N ranked features, refit the
// normalizer and the classifier on the training split, score the test split
// and record the AUC. The ranking is fit on the training split only. KNN
// re-selects (K, weight) per N on a stratified 10% validation carve-out; RF
// produces one series per tree count. Per-N jobs run in parallel with
// derived seeds, so results are identical for any thread count.
SweepResult feature_sweep(const FeatureMatrix& train_raw, const FeatureMatrix& test_raw,
                          const SweepOptions& opts);

// CSV: n,auc
void write_sweep_csv(const SweepSeries& series, const std::string& path);

}  // namespace tcfa
