#include "tcfa/knn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tcfa/evaluation.hpp"
#include "tcfa/parallel.hpp"
#include "tcfa/rng.hpp"
#include "tcfa/serialize.hpp"

namespace tcfa {

double euclidean_distance(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size())
        throw std::invalid_argument("euclidean_distance: dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double d = p[i] - q[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

namespace {

bool valid_k(int k) { return k == 1 || k == 3 || k == 5 || k == 7 || k == 9; }

}  // namespace

KnnModel knn_fit(const FeatureMatrix& train, int k, KnnWeight weight) {
    if (train.rows() == 0) throw std::invalid_argument("knn_fit: empty training set");
    if (!valid_k(k)) throw std::invalid_argument("knn_fit: K must be in {1,3,5,7,9}");
    if (static_cast<std::size_t>(k) > train.rows())
        throw std::invalid_argument("knn_fit: K exceeds training size");
    KnnModel model;
    model.data = train.values;
    model.labels = train.labels;
    model.cols = train.cols;
    model.k = k;
    model.weight = weight;
    return model;
}

double knn_predict_proba(const KnnModel& model, std::span<const double> x) {
    if (model.rows() == 0) throw std::invalid_argument("knn_predict_proba: empty model");
    if (static_cast<int>(x.size()) != model.cols)
        throw std::invalid_argument("knn_predict_proba: dimension mismatch");

    const std::size_t n = model.rows();
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t r = 0; r < n; ++r) {
        std::span<const double> row{model.data.data() + r * model.cols,
                                    static_cast<std::size_t>(model.cols)};
        dist[r] = {euclidean_distance(x, row), r};
    }
    std::size_t k = static_cast<std::size_t>(std::min<std::size_t>(model.k, n));
    // (distance, index) ordering realizes the lower-row-index tie rule.
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());

    if (dist[0].first == 0.0) {
        // Exact match: average the labels of every zero-distance point.
        double sum = 0.0;
        long count = 0;
        for (const auto& [d, idx] : dist) {
            if (d == 0.0) {
                sum += model.labels[idx];
                ++count;
            }
        }
        return sum / static_cast<double>(count);
    }

    if (model.weight == KnnWeight::Uniform) {
        double sum = 0.0;
        for (std::size_t i = 0; i < k; ++i) sum += model.labels[dist[i].second];
        return sum / static_cast<double>(k);
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        double w = 1.0 / dist[i].first;
        num += w * model.labels[dist[i].second];
        den += w;
    }
    return num / den;
}

namespace {

FeatureMatrix subset_rows(const FeatureMatrix& m, const std::vector<std::size_t>& rows) {
    FeatureMatrix out;
    out.cols = m.cols;
    for (std::size_t r : rows) out.add_row(m.ids[r], m.labels[r], m.row(r));
    return out;
}

}  // namespace

KnnHyperparams knn_select_hyperparams(const FeatureMatrix& train, std::uint64_t seed,
                                      int threads) {
    SplitSpec carve;
    carve.train_fraction = 0.9;
    carve.seed = seed;
    SplitIndices split = stratified_split(train.labels, carve);
    long val_pos = 0, val_neg = 0;
    for (std::size_t i : split.test) (train.labels[i] ? val_pos : val_neg)++;
    if (val_pos == 0 || val_neg == 0)
        throw std::invalid_argument(
            "knn_select_hyperparams: validation carve-out lacks a class; set K explicitly");

    FeatureMatrix fit_part = subset_rows(train, split.train);
    FeatureMatrix val_part = subset_rows(train, split.test);

    static constexpr int kGrid[5] = {1, 3, 5, 7, 9};
    static constexpr KnnWeight kWeights[2] = {KnnWeight::Uniform, KnnWeight::Distance};

    KnnHyperparams best;
    best.val_auc = -1.0;
    for (int k : kGrid) {
        if (static_cast<std::size_t>(k) > fit_part.rows()) break;
        for (KnnWeight w : kWeights) {
            KnnModel model = knn_fit(fit_part, k, w);
            std::vector<double> scores(val_part.rows());
            parallel_for(val_part.rows(), threads, [&](std::size_t i) {
                scores[i] = knn_predict_proba(model, val_part.row(i));
            });
            double auc = roc_curve(scores, val_part.labels).auc;
            // Grid order (ascending K, uniform first) plus strict > gives the
            // documented tie preference.
            if (auc > best.val_auc) best = {k, w, auc};
        }
    }
    if (best.val_auc < 0.0)
        throw std::invalid_argument("knn_select_hyperparams: training carve-out too small");
    return best;
}

void knn_save(const KnnModel& model, const std::string& path) {
    BinaryWriter w(path);
    w.str("TCFA-KNN");
    w.u32(1);  // format version
    w.i32(model.k);
    w.u8(static_cast<std::uint8_t>(model.weight));
    w.i32(model.cols);
    w.i32_vec(model.labels);
    w.f64_vec(model.data);
    w.close();
}

KnnModel knn_load(const std::string& path) {
    BinaryReader r(path);
    if (r.str() != "TCFA-KNN") throw std::runtime_error("not a KNN model file: " + path);
    if (r.u32() != 1) throw std::runtime_error("unsupported KNN model version: " + path);
    KnnModel model;
    model.k = r.i32();
    model.weight = static_cast<KnnWeight>(r.u8());
    model.cols = r.i32();
    model.labels = r.i32_vec();
    model.data = r.f64_vec();
    if (model.data.size() != model.labels.size() * static_cast<std::size_t>(model.cols))
        throw std::runtime_error("corrupt KNN model file: " + path);
    return model;
}

}  // namespace tcfa
