#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tcfa/features.hpp"

namespace tcfa {

enum class KnnWeight : std::uint8_t { Uniform = 0, Distance = 1 };

// Stores the training matrix; prediction is brute-force Euclidean search.
struct KnnModel {
    std::vector<double> data;  // rows x cols, row-major
    std::vector<int> labels;
    int cols = 0;
    int k = 5;
    KnnWeight weight = KnnWeight::Distance;

    std::size_t rows() const { return labels.size(); }
};

double euclidean_distance(std::span<const double> p, std::span<const double> q);

// K must be one of {1,3,5,7,9} and at most the training size.
KnnModel knn_fit(const FeatureMatrix& train, int k, KnnWeight weight);

// UNIFORM: fraction of the K nearest labeled TCFA. DISTANCE: 1/d weighted
// mean label. Exact matches short-circuit: if any neighbor distance is 0 the
// score is the mean label over all zero-distance training points. Ties at
// the K-th distance break toward the lower training-row index.
double knn_predict_proba(const KnnModel& model, std::span<const double> x);

// Grid search over K in {1,3,5,7,9} x {uniform, distance} on a stratified
// 10% validation carve-out of the training split, by validation AUC. Ties
// prefer the smaller K, then the uniform weight.
struct KnnHyperparams {
    int k = 5;
    KnnWeight weight = KnnWeight::Distance;
    double val_auc = 0.0;
};
KnnHyperparams knn_select_hyperparams(const FeatureMatrix& train, std::uint64_t seed,
                                      int threads = 1);

void knn_save(const KnnModel& model, const std::string& path);
KnnModel knn_load(const std::string& path);

}  // namespace tcfa
