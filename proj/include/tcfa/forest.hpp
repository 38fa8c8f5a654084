#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tcfa/features.hpp"

namespace tcfa {

// Flat node array; children indexed into the same vector. Leaves carry the
// class-weighted TCFA probability.
struct TreeNode {
    int feature = -1;          // -1 marks a leaf
    double threshold = 0.0;    // go left iff value <= threshold
    int left = -1;
    int right = -1;
    double p_tcfa = 0.0;
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // node 0 is the root
};

struct RfModel {
    std::vector<DecisionTree> trees;
    std::array<double, 2> class_weights{1.0, 1.0};
    int n_features = 0;
};

// Bootstrap-aggregated trees: each tree is fit on a with-replacement resample
// of the training set, splits maximize class-weighted Gini decrease over a
// random draw of ceil(sqrt(F)) usable features, and trees grow until leaves
// are pure or no valid split exists. Sample weights are inversely
// proportional to class frequency (w_c = N / (2 * N_c)). Deterministic given
// the seed for any thread count (per-tree derived RNG streams).
RfModel rf_train(const FeatureMatrix& train, int n_trees, std::uint64_t seed,
                 int threads = 1);

// Mean over trees of the leaf TCFA probability.
double rf_predict_proba(const RfModel& model, std::span<const double> x);

void rf_save(const RfModel& model, const std::string& path);
RfModel rf_load(const std::string& path);

}  // namespace tcfa
