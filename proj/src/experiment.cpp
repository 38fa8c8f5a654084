#include "tcfa/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "tcfa/augment.hpp"
#include "tcfa/forest.hpp"
#include "tcfa/parallel.hpp"
#include "tcfa/segmentation.hpp"
#include "tcfa/selection.hpp"

namespace fs = std::filesystem;

namespace tcfa {

namespace {

// Prefix any stage failure with a stage tag so the CLI exit message names
// the failing stage.
template <typename Fn>
auto stage(const std::string& name, Fn&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        throw std::runtime_error("[" + name + "] " + e.what());
    }
}

FeatureMatrix subset_rows(const FeatureMatrix& m, const std::vector<std::size_t>& rows) {
    FeatureMatrix out;
    out.cols = m.cols;
    for (std::size_t r : rows) out.add_row(m.ids[r], m.labels[r], m.row(r));
    return out;
}

std::vector<int> corpus_labels(const Corpus& corpus) {
    std::vector<int> labels;
    labels.reserve(corpus.samples.size());
    for (const auto& s : corpus.samples)
        labels.push_back(s.label == SampleClass::Tcfa ? 1 : 0);
    return labels;
}

struct SeedLog {
    std::vector<std::pair<std::string, std::uint64_t>> entries;
    std::uint64_t master = 0;
    std::uint64_t derive(const std::string& name) {
        std::uint64_t s = derive_seed(master, name);
        entries.emplace_back(name, s);
        return s;
    }
};

std::string config_echo(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << "classifier = " << classifier_name(cfg.classifier) << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "threads = " << cfg.threads << "\n";
    os << "sweep = " << (cfg.sweep ? 1 : 0) << "\n";
    os << "train_fraction = " << cfg.split.train_fraction << "\n";
    if (cfg.corpus_dir.empty()) {
        os << "data = phantom(side=" << cfg.phantom.side
           << ", size=" << cfg.phantom.corpus_size
           << ", tcfa_fraction=" << cfg.phantom.tcfa_fraction
           << ", strength=" << cfg.phantom.signature_strength << ")\n";
    } else {
        os << "data = " << cfg.corpus_dir << "\n";
    }
    switch (cfg.classifier) {
        case ClassifierKind::Knn:
            os << "knn_k = " << cfg.knn_k << " (0 = validation choice)\n";
            os << "knn_weight = "
               << (cfg.knn_weight == KnnWeight::Uniform ? "uniform" : "distance") << "\n";
            break;
        case ClassifierKind::Rf:
            os << "rf_trees = " << cfg.rf_trees << "\n";
            break;
        case ClassifierKind::Fnn:
            os << "fnn_epochs = " << cfg.fnn.epochs << "\n";
            os << "fnn_lr0 = " << cfg.fnn.lr0 << "\n";
            break;
        case ClassifierKind::Cnn:
            os << "cnn_epochs = " << cfg.cnn.max_epochs << "\n";
            os << "cnn_lr0 = " << cfg.cnn.lr0 << "\n";
            os << "cnn_batch = " << cfg.cnn.batch_size << "\n";
            break;
    }
    if (cfg.n_features > 0) os << "n_features = " << cfg.n_features << "\n";
    return os.str();
}

void write_model_meta(const std::string& path, ClassifierKind kind,
                      const std::vector<int>& feature_indices) {
    nlohmann::ordered_json j;
    j["kind"] = classifier_name(kind);
    j["features"] = feature_indices;  // 0-based original column indices
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

}  // namespace

FeatureMatrix extract_corpus_features(const Corpus& corpus, int threads) {
    std::vector<FeatureVector> fvs(corpus.samples.size());
    parallel_for(corpus.samples.size(), threads, [&](std::size_t i) {
        const LabeledSample& s = corpus.samples[i];
        validate(s);
        RoiMask roi = precise_roi_segmentation(s.mask);
        fvs[i] = extract_features(s.image, roi);
    });
    FeatureMatrix m;
    m.cols = kFeatureCount;
    for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
        m.add_row(corpus.samples[i].id,
                  corpus.samples[i].label == SampleClass::Tcfa ? 1 : 0,
                  fvs[i].values);
    }
    return m;
}

EvalReport run_experiment(const ExperimentConfig& cfg) {
    if (cfg.out_dir.empty())
        throw std::invalid_argument("[setup] run_experiment: out_dir is required");
    fs::path out(cfg.out_dir);
    if (fs::exists(out / "report.json"))
        throw std::runtime_error("[setup] refusing to overwrite completed run directory " +
                                 cfg.out_dir);
    fs::create_directories(out);

    SeedLog seeds;
    seeds.master = cfg.seed;
    std::vector<std::string> artifacts;

    // Data.
    Corpus corpus = stage("data", [&] {
        if (!cfg.corpus_dir.empty()) return read_corpus(cfg.corpus_dir);
        PhantomConfig ph = cfg.phantom;
        ph.seed = seeds.derive("phantom");
        return generate_corpus(ph, cfg.threads);
    });

    SplitSpec split = cfg.split;
    split.seed = seeds.derive("split");
    SplitIndices idx = stage("split", [&] {
        return stratified_split(corpus_labels(corpus), split);
    });

    EvalReport report;
    if (cfg.classifier == ClassifierKind::Cnn) {
        std::vector<LabeledSample> train_samples, test_samples;
        for (std::size_t i : idx.train) train_samples.push_back(corpus.samples[i]);
        for (std::size_t i : idx.test) test_samples.push_back(corpus.samples[i]);

        std::uint64_t augment_seed = seeds.derive("augment");
        std::vector<LabeledSample> augmented = stage("augment", [&] {
            return augment_minority(train_samples, augment_seed);
        });

        // 10% stratified validation carve-out of the augmented training set.
        SplitSpec carve;
        carve.train_fraction = 0.9;
        carve.seed = seeds.derive("cnn-val");
        std::vector<int> aug_labels;
        for (const auto& s : augmented)
            aug_labels.push_back(s.label == SampleClass::Tcfa ? 1 : 0);
        SplitIndices carve_idx = stage("cnn-val", [&] {
            return stratified_split(aug_labels, carve);
        });
        std::vector<LabeledSample> fit_set, val_set;
        for (std::size_t i : carve_idx.train) fit_set.push_back(augmented[i]);
        for (std::size_t i : carve_idx.test) val_set.push_back(augmented[i]);

        CnnConfig cnn_cfg = cfg.cnn;
        cnn_cfg.side = corpus.samples.front().image.width;
        cnn_cfg.seed = seeds.derive("cnn");
        auto [model, log] = stage("cnn-train", [&] {
            return cnn_train(fit_set, val_set, cnn_cfg, cfg.threads);
        });

        std::vector<const GreyImage*> test_imgs;
        std::vector<int> test_labels;
        for (const auto& s : test_samples) {
            test_imgs.push_back(&s.image);
            test_labels.push_back(s.label == SampleClass::Tcfa ? 1 : 0);
        }
        std::vector<double> scores = stage("eval", [&] {
            return cnn_predict_batch(model, test_imgs, cfg.threads);
        });
        report = evaluate_scores(scores, test_labels);
        RocCurve curve = roc_curve(scores, test_labels);

        write_trainlog_csv(log, (out / "trainlog.csv").string());
        artifacts.push_back("trainlog.csv");
        cnn_save(model, (out / "model.bin").string());
        artifacts.push_back("model.bin");
        write_model_meta((out / "model_meta.json").string(), cfg.classifier, {});
        artifacts.push_back("model_meta.json");
        write_roc_csv(curve, (out / "roc.csv").string());
        artifacts.push_back("roc.csv");
    } else {
        FeatureMatrix all = stage("extract", [&] {
            return extract_corpus_features(corpus, cfg.threads);
        });
        FeatureMatrix train_raw = subset_rows(all, idx.train);
        FeatureMatrix test_raw = subset_rows(all, idx.test);

        FeatureRanking ranking = stage("rank", [&] {
            NormalizationParams norm = fit_normalizer(train_raw);
            return rank_features(apply_normalizer(norm, train_raw));
        });
        write_ranking_csv(ranking, (out / "ranking.csv").string());
        artifacts.push_back("ranking.csv");

        if (cfg.sweep) {
            SweepOptions opts;
            opts.kind = cfg.classifier;
            opts.fnn = cfg.fnn;
            opts.seed = seeds.derive("sweep");
            opts.threads = cfg.threads;
            SweepResult sw = stage("sweep", [&] {
                return feature_sweep(train_raw, test_raw, opts);
            });
            for (const auto& series : sw.series) {
                std::string name = "sweep_" + series.name + ".csv";
                write_sweep_csv(series, (out / name).string());
                artifacts.push_back(name);
            }
            nlohmann::ordered_json j;
            j["series"] = sw.best.series;
            j["n"] = sw.best.n;
            j["auc"] = sw.best.auc;
            j["specificity_pct"] = sw.best.specificity_pct;
            j["sensitivity_pct"] = sw.best.sensitivity_pct;
            std::ofstream bf(out / "sweep_best.json");
            bf << j.dump(2) << "\n";
            artifacts.push_back("sweep_best.json");
        }

        std::vector<int> used_features;
        if (cfg.n_features > 0) {
            train_raw = select_top_n(ranking, train_raw, cfg.n_features);
            test_raw = select_top_n(ranking, test_raw, cfg.n_features);
            for (int j = 0; j < cfg.n_features; ++j)
                used_features.push_back(ranking.entries[j].feature);
        } else {
            for (int j = 0; j < train_raw.cols; ++j) used_features.push_back(j);
        }

        NormalizationParams norm = fit_normalizer(train_raw);
        FeatureMatrix train_n = apply_normalizer(norm, train_raw);
        FeatureMatrix test_n = apply_normalizer(norm, test_raw);
        write_normalizer_csv(norm, (out / "norm.csv").string());
        artifacts.push_back("norm.csv");

        std::function<double(std::span<const double>)> predict;
        std::string model_path = (out / "model.bin").string();
        switch (cfg.classifier) {
            case ClassifierKind::Knn: {
                int k = cfg.knn_k;
                KnnWeight weight = cfg.knn_weight;
                if (k == 0) {
                    KnnHyperparams hp = stage("knn-val", [&] {
                        return knn_select_hyperparams(train_n, seeds.derive("knn-val"),
                                                      cfg.threads);
                    });
                    k = hp.k;
                    weight = hp.weight;
                }
                auto model = std::make_shared<KnnModel>(knn_fit(train_n, k, weight));
                knn_save(*model, model_path);
                predict = [model](std::span<const double> x) {
                    return knn_predict_proba(*model, x);
                };
                break;
            }
            case ClassifierKind::Fnn: {
                FnnTrainConfig fc = cfg.fnn;
                fc.seed = seeds.derive("fnn");
                auto model = std::make_shared<FnnModel>(
                    stage("fnn-train", [&] { return fnn_train(train_n, fc).model; }));
                fnn_save(*model, model_path);
                predict = [model](std::span<const double> x) {
                    return fnn_predict_proba(*model, x);
                };
                break;
            }
            case ClassifierKind::Rf: {
                auto model = std::make_shared<RfModel>(stage("rf-train", [&] {
                    return rf_train(train_n, cfg.rf_trees, seeds.derive("rf"), cfg.threads);
                }));
                rf_save(*model, model_path);
                predict = [model](std::span<const double> x) {
                    return rf_predict_proba(*model, x);
                };
                break;
            }
            case ClassifierKind::Cnn:
                break;  // handled above
        }
        artifacts.push_back("model.bin");
        write_model_meta((out / "model_meta.json").string(), cfg.classifier, used_features);
        artifacts.push_back("model_meta.json");

        std::vector<double> scores(test_n.rows());
        stage("eval", [&] {
            parallel_for(test_n.rows(), cfg.threads, [&](std::size_t r) {
                scores[r] = predict(test_n.row(r));
            });
            return 0;
        });
        report = evaluate_scores(scores, test_n.labels);
        write_roc_csv(roc_curve(scores, test_n.labels), (out / "roc.csv").string());
        artifacts.push_back("roc.csv");
    }

    write_report_json(report, (out / "report.json").string());
    artifacts.push_back("report.json");

    std::ofstream log(out / "run.log");
    if (!log) throw std::runtime_error("[report] cannot write run.log");
    log << "== config ==\n" << config_echo(cfg);
    log << "== derived seeds ==\n";
    log << "master = " << seeds.master << "\n";
    for (const auto& [name, value] : seeds.entries)
        log << name << " = " << value << "\n";
    log << "== artifacts ==\n";
    for (const auto& a : artifacts) log << a << "\n";
    return report;
}

}  // namespace tcfa
