#include "tcfa/sweep.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "tcfa/evaluation.hpp"
#include "tcfa/forest.hpp"
#include "tcfa/parallel.hpp"
#include "tcfa/rng.hpp"

namespace tcfa {

std::string classifier_name(ClassifierKind kind) {
    switch (kind) {
        case ClassifierKind::Fnn: return "fnn";
        case ClassifierKind::Knn: return "knn";
        case ClassifierKind::Rf: return "rf";
        case ClassifierKind::Cnn: return "cnn";
    }
    return "?";
}

ClassifierKind parse_classifier(const std::string& name) {
    if (name == "fnn") return ClassifierKind::Fnn;
    if (name == "knn") return ClassifierKind::Knn;
    if (name == "rf") return ClassifierKind::Rf;
    if (name == "cnn") return ClassifierKind::Cnn;
    throw std::invalid_argument("unknown classifier '" + name + "'");
}

namespace {

struct PointEval {
    double auc = 0.0;
    double sp = 0.0;
    double se = 0.0;
};

PointEval eval_scores(const std::vector<double>& scores, const std::vector<int>& labels) {
    RocCurve curve = roc_curve(scores, labels);
    CutoffResult cut = optimal_cutoff(curve);
    return {curve.auc, cut.specificity_pct, cut.sensitivity_pct};
}

}  // namespace

SweepResult feature_sweep(const FeatureMatrix& train_raw, const FeatureMatrix& test_raw,
                          const SweepOptions& opts) {
    if (opts.kind == ClassifierKind::Cnn)
        throw std::invalid_argument("feature_sweep: the CNN path does not use features");
    if (train_raw.cols != test_raw.cols)
        throw std::invalid_argument("feature_sweep: train/test column mismatch");

    // Ranking on the (normalized) training split only.
    NormalizationParams full_norm = fit_normalizer(train_raw);
    FeatureRanking ranking = rank_features(apply_normalizer(full_norm, train_raw));

    const int F = train_raw.cols;
    int n_series = opts.kind == ClassifierKind::Rf
                       ? static_cast<int>(opts.rf_tree_counts.size())
                       : 1;

    SweepResult result;
    result.series.resize(n_series);
    for (int si = 0; si < n_series; ++si) {
        result.series[si].name =
            opts.kind == ClassifierKind::Rf
                ? "rf_e" + std::to_string(opts.rf_tree_counts[si])
                : classifier_name(opts.kind);
        result.series[si].points.resize(F);
    }
    std::vector<std::vector<PointEval>> evals(n_series,
                                              std::vector<PointEval>(F));

    parallel_for(static_cast<std::size_t>(F), opts.threads, [&](std::size_t j) {
        int n = static_cast<int>(j) + 1;
        FeatureMatrix train_sub = select_top_n(ranking, train_raw, n);
        FeatureMatrix test_sub = select_top_n(ranking, test_raw, n);
        NormalizationParams norm = fit_normalizer(train_sub);
        FeatureMatrix train_n = apply_normalizer(norm, train_sub);
        FeatureMatrix test_n = apply_normalizer(norm, test_sub);
        std::uint64_t point_seed = derive_seed(opts.seed, "sweep/n=" + std::to_string(n));

        auto score_with = [&](auto predict) {
            std::vector<double> scores(test_n.rows());
            for (std::size_t r = 0; r < test_n.rows(); ++r)
                scores[r] = predict(test_n.row(r));
            return eval_scores(scores, test_n.labels);
        };

        switch (opts.kind) {
            case ClassifierKind::Fnn: {
                FnnTrainConfig cfg = opts.fnn;
                cfg.seed = point_seed;
                FnnModel model = fnn_train(train_n, cfg).model;
                evals[0][j] = score_with([&](std::span<const double> x) {
                    return fnn_predict_proba(model, x);
                });
                break;
            }
            case ClassifierKind::Knn: {
                KnnHyperparams hp = knn_select_hyperparams(
                    train_n, derive_seed(opts.seed, "sweep/knn-val"), 1);
                KnnModel model = knn_fit(train_n, hp.k, hp.weight);
                evals[0][j] = score_with([&](std::span<const double> x) {
                    return knn_predict_proba(model, x);
                });
                break;
            }
            case ClassifierKind::Rf: {
                for (int si = 0; si < n_series; ++si) {
                    RfModel model = rf_train(
                        train_n, opts.rf_tree_counts[si],
                        derive_seed(point_seed, "e" + std::to_string(opts.rf_tree_counts[si])),
                        1);
                    evals[si][j] = score_with([&](std::span<const double> x) {
                        return rf_predict_proba(model, x);
                    });
                }
                break;
            }
            case ClassifierKind::Cnn:
                break;  // rejected above
        }
    });

    result.best.auc = -1.0;
    for (int si = 0; si < n_series; ++si) {
        for (int j = 0; j < F; ++j) {
            result.series[si].points[j] = {j + 1, evals[si][j].auc};
            // Strict > keeps the lowest N / earliest series on ties.
            if (evals[si][j].auc > result.best.auc) {
                result.best = {result.series[si].name, j + 1, evals[si][j].auc,
                               evals[si][j].sp, evals[si][j].se};
            }
        }
    }
    return result;
}

void write_sweep_csv(const SweepSeries& series, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "n,auc\n";
    char buf[64];
    for (const auto& p : series.points) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g\n", p.n, p.auc);
        out << buf;
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace tcfa
