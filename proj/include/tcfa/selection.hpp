#pragma once

#include <string>
#include <vector>

#include "tcfa/features.hpp"

namespace tcfa {

struct RankEntry {
    int feature = 0;        // 0-based column index; reported as F<feature+1>
    double score = 0.0;
    double share_pct = 0.0;
};

// Descending by score, ties broken by ascending feature index. Shares sum to
// 100% unless every score is zero, in which case all_zero is set and the
// shares are 0.
struct FeatureRanking {
    std::vector<RankEntry> entries;
    bool all_zero = false;
};

// Sum-as-frequency chi-square of each feature column against the class
// label: observed_c = sum of the feature over class c, expected_c = grand
// sum * N_c / N, score = sum_c (observed_c - expected_c)^2 / expected_c,
// with 0/0 terms contributing 0.
std::vector<double> chi2_scores(const FeatureMatrix& m);

FeatureRanking rank_features(const FeatureMatrix& m);

// Column subset of the n top-ranked features, preserving row order, ids and
// labels.
FeatureMatrix select_top_n(const FeatureRanking& ranking, const FeatureMatrix& m, int n);

// CSV: rank,feature,score,share_pct with features printed as F<k>.
void write_ranking_csv(const FeatureRanking& r, const std::string& path);
FeatureRanking read_ranking_csv(const std::string& path);

}  // namespace tcfa
