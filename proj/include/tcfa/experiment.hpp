#pragma once

#include <cstdint>
#include <string>

#include "tcfa/cnn.hpp"
#include "tcfa/evaluation.hpp"
#include "tcfa/fnn.hpp"
#include "tcfa/knn.hpp"
#include "tcfa/phantom.hpp"
#include "tcfa/sweep.hpp"

namespace tcfa {

// One seeded end-to-end run: load or generate a corpus, split it, then either
// the feature path (segment, extract, normalize, rank, optional sweep, train,
// evaluate) or the CNN path (augment, train, evaluate). Every stage seed is
// derived from the master seed by stage name.
struct ExperimentConfig {
    std::string corpus_dir;   // empty -> generate from `phantom`
    PhantomConfig phantom;
    ClassifierKind classifier = ClassifierKind::Knn;
    int n_features = 0;       // 0 = all extracted features
    int knn_k = 0;            // 0 = select (K, weight) on a validation carve-out
    KnnWeight knn_weight = KnnWeight::Distance;
    int rf_trees = 100;
    FnnTrainConfig fnn;
    CnnConfig cnn;
    SplitSpec split;
    bool sweep = false;
    std::string out_dir;
    std::uint64_t seed = 0;
    int threads = 1;
};

// Writes report.json, roc.csv, the serialized model, ranking.csv (feature
// path), trainlog.csv (CNN path), sweep CSVs when enabled, and run.log with
// the config echo and every derived stage seed. Refuses to touch a directory
// that already holds a completed run (an existing report.json). Reruns with
// an identical config are byte-identical.
EvalReport run_experiment(const ExperimentConfig& cfg);

// Segment + extract the full corpus into a raw 105-column feature matrix.
FeatureMatrix extract_corpus_features(const Corpus& corpus, int threads);

}  // namespace tcfa
