#include "tcfa/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tcfa/parallel.hpp"
#include "tcfa/rng.hpp"
#include "tcfa/serialize.hpp"

namespace tcfa {

namespace {

struct TreeBuilder {
    const FeatureMatrix& data;
    const std::array<double, 2>& class_weights;
    int max_candidates;  // ceil(sqrt(F))
    Rng& rng;
    DecisionTree tree;

    // Scratch reused across nodes.
    std::vector<std::pair<double, int>> sorted;  // (value, label)

    int build(std::vector<std::size_t>& indices) {
        double w[2] = {0.0, 0.0};
        for (std::size_t i : indices) w[data.labels[i]] += class_weights[data.labels[i]];
        double total = w[0] + w[1];

        int node_id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes[node_id].p_tcfa = total > 0.0 ? w[1] / total : 0.0;
        if (w[0] == 0.0 || w[1] == 0.0 || indices.size() < 2) return node_id;

        double parent_impurity = 1.0 - (w[0] * w[0] + w[1] * w[1]) / (total * total);

        // Walk a random permutation of all features, evaluating up to
        // max_candidates features that actually vary within the node; a node
        // only becomes a leaf when no feature anywhere can split it.
        std::vector<int> feature_order(data.cols);
        std::iota(feature_order.begin(), feature_order.end(), 0);
        rng.shuffle(feature_order);

        int best_feature = -1;
        double best_threshold = 0.0;
        double best_child_impurity = parent_impurity;
        int evaluated = 0;
        for (int f : feature_order) {
            if (evaluated >= max_candidates) break;
            sorted.clear();
            for (std::size_t i : indices)
                sorted.emplace_back(data.at(i, f), data.labels[i]);
            std::sort(sorted.begin(), sorted.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            if (sorted.front().first == sorted.back().first) continue;  // constant
            ++evaluated;

            double lw[2] = {0.0, 0.0};
            double rw[2] = {w[0], w[1]};
            for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
                double cw = class_weights[sorted[i].second];
                lw[sorted[i].second] += cw;
                rw[sorted[i].second] -= cw;
                if (sorted[i].first == sorted[i + 1].first) continue;
                double lt = lw[0] + lw[1];
                double rt = rw[0] + rw[1];
                double li = 1.0 - (lw[0] * lw[0] + lw[1] * lw[1]) / (lt * lt);
                double ri = 1.0 - (rw[0] * rw[0] + rw[1] * rw[1]) / (rt * rt);
                double child = (lt * li + rt * ri) / total;
                if (child < best_child_impurity) {
                    best_child_impurity = child;
                    best_feature = f;
                    best_threshold = sorted[i].first +
                                     (sorted[i + 1].first - sorted[i].first) / 2.0;
                }
            }
        }
        if (best_feature < 0) return node_id;  // no valid split anywhere

        std::vector<std::size_t> left, right;
        for (std::size_t i : indices) {
            (data.at(i, best_feature) <= best_threshold ? left : right).push_back(i);
        }
        if (left.empty() || right.empty()) return node_id;  // degenerate split
        indices.clear();
        indices.shrink_to_fit();

        tree.nodes[node_id].feature = best_feature;
        tree.nodes[node_id].threshold = best_threshold;
        int l = build(left);
        int r = build(right);
        tree.nodes[node_id].left = l;
        tree.nodes[node_id].right = r;
        return node_id;
    }
};

DecisionTree build_tree(const FeatureMatrix& train, const std::array<double, 2>& weights,
                        std::uint64_t tree_seed) {
    Rng rng(tree_seed);
    std::vector<std::size_t> bootstrap(train.rows());
    for (auto& i : bootstrap) i = rng.uniform_int(train.rows());

    TreeBuilder builder{train, weights,
                        static_cast<int>(std::ceil(std::sqrt(static_cast<double>(train.cols)))),
                        rng, {}, {}};
    builder.build(bootstrap);
    return std::move(builder.tree);
}

}  // namespace

RfModel rf_train(const FeatureMatrix& train, int n_trees, std::uint64_t seed, int threads) {
    if (train.rows() < 2) throw std::invalid_argument("rf_train: need at least 2 samples");
    if (n_trees < 1) throw std::invalid_argument("rf_train: need at least 1 tree");
    long counts[2] = {0, 0};
    for (int l : train.labels) counts[l]++;
    if (counts[0] == 0 || counts[1] == 0)
        throw std::invalid_argument("rf_train: both classes must be present");

    RfModel model;
    model.n_features = train.cols;
    double n = static_cast<double>(train.rows());
    model.class_weights = {n / (2.0 * counts[0]), n / (2.0 * counts[1])};

    model.trees.resize(n_trees);
    parallel_for(static_cast<std::size_t>(n_trees), threads, [&](std::size_t t) {
        model.trees[t] = build_tree(train, model.class_weights, derive_seed(seed, t));
    });
    return model;
}

double rf_predict_proba(const RfModel& model, std::span<const double> x) {
    if (model.trees.empty()) throw std::invalid_argument("rf_predict_proba: empty model");
    if (static_cast<int>(x.size()) != model.n_features)
        throw std::invalid_argument("rf_predict_proba: dimension mismatch");
    double sum = 0.0;
    for (const auto& tree : model.trees) {
        int node = 0;
        while (tree.nodes[node].feature >= 0) {
            const TreeNode& tn = tree.nodes[node];
            node = x[tn.feature] <= tn.threshold ? tn.left : tn.right;
        }
        sum += tree.nodes[node].p_tcfa;
    }
    return sum / static_cast<double>(model.trees.size());
}

void rf_save(const RfModel& model, const std::string& path) {
    BinaryWriter w(path);
    w.str("TCFA-RF");
    w.u32(1);
    w.i32(model.n_features);
    w.f64(model.class_weights[0]);
    w.f64(model.class_weights[1]);
    w.u64(model.trees.size());
    for (const auto& tree : model.trees) {
        w.u64(tree.nodes.size());
        for (const auto& n : tree.nodes) {
            w.i32(n.feature);
            w.f64(n.threshold);
            w.i32(n.left);
            w.i32(n.right);
            w.f64(n.p_tcfa);
        }
    }
    w.close();
}

RfModel rf_load(const std::string& path) {
    BinaryReader r(path);
    if (r.str() != "TCFA-RF") throw std::runtime_error("not an RF model file: " + path);
    if (r.u32() != 1) throw std::runtime_error("unsupported RF model version: " + path);
    RfModel model;
    model.n_features = r.i32();
    model.class_weights[0] = r.f64();
    model.class_weights[1] = r.f64();
    model.trees.resize(r.u64());
    for (auto& tree : model.trees) {
        tree.nodes.resize(r.u64());
        for (auto& n : tree.nodes) {
            n.feature = r.i32();
            n.threshold = r.f64();
            n.left = r.i32();
            n.right = r.i32();
            n.p_tcfa = r.f64();
        }
    }
    return model;
}

}  // namespace tcfa
