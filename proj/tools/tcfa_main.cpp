// tcfa: batch pipeline driver. Subcommands mirror the pipeline stages so a
// run can be reproduced end-to-end (run-all) or stage by stage through the
// documented file formats (PGM corpus, feature/ranking CSVs, model binaries).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "json.hpp"

#include "tcfa/augment.hpp"
#include "tcfa/experiment.hpp"
#include "tcfa/forest.hpp"
#include "tcfa/parallel.hpp"
#include "tcfa/segmentation.hpp"
#include "tcfa/selection.hpp"

namespace fs = std::filesystem;
using namespace tcfa;

namespace {

struct CommonOpts {
    std::uint64_t seed = 0;
    std::string out;
    int threads = 1;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool need_seed) {
    cmd->set_config("--config", "", "key-value config file");
    auto* s = cmd->add_option("--seed", opts.seed, "master RNG seed");
    if (need_seed) s->required();
    cmd->add_option("--out", opts.out, "output directory or file")->required();
    cmd->add_option("--threads", opts.threads, "worker thread count")
        ->check(CLI::PositiveNumber);
}

void add_phantom(CLI::App* cmd, PhantomConfig& ph) {
    cmd->add_option("--side", ph.side, "phantom image side length");
    cmd->add_option("--count", ph.corpus_size, "corpus size");
    cmd->add_option("--tcfa-fraction", ph.tcfa_fraction, "TCFA class fraction");
    cmd->add_option("--strength", ph.signature_strength,
                    "planted TCFA signature strength in [0,1]");
}

void add_classifier_opts(CLI::App* cmd, ExperimentConfig& cfg, std::string& classifier) {
    cmd->add_option("--classifier", classifier, "fnn|knn|rf|cnn");
    cmd->add_option("--top-n", cfg.n_features, "train on the top-N ranked features");
    cmd->add_option("--knn-k", cfg.knn_k, "KNN K (odd, 1..9; 0 = choose on validation)");
    cmd->add_option_function<std::string>(
        "--knn-weight",
        [&cfg](const std::string& v) {
            if (v == "uniform") cfg.knn_weight = KnnWeight::Uniform;
            else if (v == "distance") cfg.knn_weight = KnnWeight::Distance;
            else throw CLI::ValidationError("--knn-weight must be uniform or distance");
        },
        "uniform|distance");
    cmd->add_option("--rf-trees", cfg.rf_trees, "random forest tree count");
    cmd->add_option("--fnn-epochs", cfg.fnn.epochs, "FNN epoch budget");
    cmd->add_option("--fnn-lr", cfg.fnn.lr0, "FNN initial learning rate");
    cmd->add_option("--cnn-epochs", cfg.cnn.max_epochs, "CNN epoch budget");
    cmd->add_option("--cnn-lr", cfg.cnn.lr0, "CNN initial learning rate");
    cmd->add_option("--cnn-batch", cfg.cnn.batch_size, "CNN batch size");
}

int run_generate(const CommonOpts& common, PhantomConfig ph) {
    ph.seed = common.seed;
    Corpus corpus = generate_corpus(ph, common.threads);
    write_corpus(corpus, common.out, ph.seed);
    std::cout << "wrote " << corpus.samples.size() << " samples to " << common.out << "\n";
    return 0;
}

int run_segment(const std::string& data, const CommonOpts& common) {
    Corpus corpus = read_corpus(data);
    fs::create_directories(common.out);
    for (const auto& s : corpus.samples) {
        RoiMask roi = precise_roi_segmentation(s.mask);
        write_pgm(roi, (fs::path(common.out) / (s.id + "_roi.pgm")).string());
    }
    std::cout << "segmented " << corpus.samples.size() << " masks into " << common.out
              << "\n";
    return 0;
}

int run_extract(const std::string& data, const CommonOpts& common) {
    Corpus corpus = read_corpus(data);
    FeatureMatrix m = extract_corpus_features(corpus, common.threads);
    write_feature_csv(m, common.out);
    std::cout << "extracted " << m.rows() << " x " << m.cols << " feature matrix to "
              << common.out << "\n";
    return 0;
}

int run_select(const std::string& features, const CommonOpts& common, int top_n,
               const std::string& subset_out) {
    FeatureMatrix raw = read_feature_csv(features);
    NormalizationParams norm = fit_normalizer(raw);
    FeatureRanking ranking = rank_features(apply_normalizer(norm, raw));
    write_ranking_csv(ranking, common.out);
    std::cout << "wrote ranking of " << ranking.entries.size() << " features to "
              << common.out << "\n";
    if (top_n > 0 && !subset_out.empty()) {
        write_feature_csv(select_top_n(ranking, raw, top_n), subset_out);
        std::cout << "wrote top-" << top_n << " subset to " << subset_out << "\n";
    }
    return 0;
}

int run_experiment_cmd(ExperimentConfig cfg) {
    EvalReport report = run_experiment(cfg);
    std::cout << report_to_json(report);
    return 0;
}

// Rebuilds the feature-path scoring pipeline from a train/run directory.
int run_eval(const std::string& model_dir, const std::string& features,
             const std::string& data, const CommonOpts& common) {
    std::ifstream meta_in(fs::path(model_dir) / "model_meta.json");
    if (!meta_in) throw std::runtime_error("missing model_meta.json in " + model_dir);
    nlohmann::json meta = nlohmann::json::parse(meta_in);
    ClassifierKind kind = parse_classifier(meta.at("kind").get<std::string>());
    std::string model_path = (fs::path(model_dir) / "model.bin").string();
    fs::create_directories(common.out);

    std::vector<double> scores;
    std::vector<int> labels;
    if (kind == ClassifierKind::Cnn) {
        if (data.empty()) throw std::runtime_error("eval with a CNN model needs --data");
        Corpus corpus = read_corpus(data);
        CnnModel model = cnn_load(model_path);
        std::vector<const GreyImage*> imgs;
        for (const auto& s : corpus.samples) {
            imgs.push_back(&s.image);
            labels.push_back(s.label == SampleClass::Tcfa ? 1 : 0);
        }
        scores = cnn_predict_batch(model, imgs, common.threads);
    } else {
        if (features.empty())
            throw std::runtime_error("eval with a feature model needs --features");
        FeatureMatrix raw = read_feature_csv(features);
        std::vector<int> cols = meta.at("features").get<std::vector<int>>();
        FeatureMatrix sub;
        sub.cols = static_cast<int>(cols.size());
        std::vector<double> row(cols.size());
        for (std::size_t r = 0; r < raw.rows(); ++r) {
            for (std::size_t j = 0; j < cols.size(); ++j) row[j] = raw.at(r, cols[j]);
            sub.add_row(raw.ids[r], raw.labels[r], row);
        }
        NormalizationParams norm =
            read_normalizer_csv((fs::path(model_dir) / "norm.csv").string());
        FeatureMatrix normed = apply_normalizer(norm, sub);
        labels = normed.labels;
        scores.resize(normed.rows());

        if (kind == ClassifierKind::Knn) {
            KnnModel model = knn_load(model_path);
            parallel_for(normed.rows(), common.threads, [&](std::size_t r) {
                scores[r] = knn_predict_proba(model, normed.row(r));
            });
        } else if (kind == ClassifierKind::Rf) {
            RfModel model = rf_load(model_path);
            parallel_for(normed.rows(), common.threads, [&](std::size_t r) {
                scores[r] = rf_predict_proba(model, normed.row(r));
            });
        } else {
            FnnModel model = fnn_load(model_path);
            parallel_for(normed.rows(), common.threads, [&](std::size_t r) {
                scores[r] = fnn_predict_proba(model, normed.row(r));
            });
        }
    }
    EvalReport report = evaluate_scores(scores, labels);
    write_report_json(report, (fs::path(common.out) / "report.json").string());
    write_roc_csv(roc_curve(scores, labels), (fs::path(common.out) / "roc.csv").string());
    std::cout << report_to_json(report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TCFA classification pipeline"};
    app.require_subcommand(1);

    // generate
    CommonOpts gen_common;
    PhantomConfig gen_phantom;
    auto* gen = app.add_subcommand("generate", "generate a synthetic phantom corpus");
    add_common(gen, gen_common, true);
    add_phantom(gen, gen_phantom);

    // segment
    CommonOpts seg_common;
    std::string seg_data;
    auto* seg = app.add_subcommand("segment", "write precise ROI masks for a corpus");
    add_common(seg, seg_common, false);
    seg->add_option("--data", seg_data, "corpus directory")->required();

    // extract
    CommonOpts ext_common;
    std::string ext_data;
    auto* ext = app.add_subcommand("extract", "extract the feature matrix CSV");
    add_common(ext, ext_common, false);
    ext->add_option("--data", ext_data, "corpus directory")->required();

    // select
    CommonOpts sel_common;
    std::string sel_features, sel_subset_out;
    int sel_top_n = 0;
    auto* sel = app.add_subcommand("select", "chi-square ranking of a feature CSV");
    add_common(sel, sel_common, false);
    sel->add_option("--features", sel_features, "feature CSV path")->required();
    sel->add_option("--top-n", sel_top_n, "also write the top-N column subset");
    sel->add_option("--subset-out", sel_subset_out, "path for the top-N subset CSV");

    // train / run-all / sweep share the experiment config surface.
    ExperimentConfig train_cfg;
    CommonOpts train_common;
    std::string train_classifier = "knn";
    std::string train_data;
    auto* train = app.add_subcommand("train", "train one classifier on a corpus");
    add_common(train, train_common, true);
    train->add_option("--data", train_data, "corpus directory")->required();
    add_classifier_opts(train, train_cfg, train_classifier);

    ExperimentConfig all_cfg;
    CommonOpts all_common;
    std::string all_classifier = "knn";
    std::string all_data;
    bool all_sweep = false;
    auto* all = app.add_subcommand("run-all", "full pipeline: data to report");
    add_common(all, all_common, true);
    all->add_option("--data", all_data, "corpus directory (omit to generate a phantom corpus)");
    add_phantom(all, all_cfg.phantom);
    add_classifier_opts(all, all_cfg, all_classifier);
    all->add_flag("--sweep", all_sweep, "also run the AUC-vs-N feature sweep");
    all->add_option("--train-fraction", all_cfg.split.train_fraction,
                    "training split fraction");

    ExperimentConfig sweep_cfg;
    CommonOpts sweep_common;
    std::string sweep_classifier = "knn";
    std::string sweep_data;
    auto* sweep = app.add_subcommand("sweep", "AUC-vs-N feature sweep only");
    add_common(sweep, sweep_common, true);
    sweep->add_option("--data", sweep_data,
                      "corpus directory (omit to generate a phantom corpus)");
    add_phantom(sweep, sweep_cfg.phantom);
    add_classifier_opts(sweep, sweep_cfg, sweep_classifier);
    sweep->add_option("--train-fraction", sweep_cfg.split.train_fraction,
                      "training split fraction");

    // eval
    CommonOpts eval_common;
    std::string eval_model_dir, eval_features, eval_data;
    auto* eval = app.add_subcommand("eval", "score a dataset with a trained model");
    add_common(eval, eval_common, false);
    eval->add_option("--model-dir", eval_model_dir, "directory holding model.bin + meta")
        ->required();
    eval->add_option("--features", eval_features, "raw feature CSV (feature models)");
    eval->add_option("--data", eval_data, "corpus directory (CNN models)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return run_generate(gen_common, gen_phantom);
        if (seg->parsed()) return run_segment(seg_data, seg_common);
        if (ext->parsed()) return run_extract(ext_data, ext_common);
        if (sel->parsed())
            return run_select(sel_features, sel_common, sel_top_n, sel_subset_out);
        if (train->parsed() || all->parsed() || sweep->parsed()) {
            ExperimentConfig cfg = train->parsed() ? train_cfg
                                   : all->parsed() ? all_cfg
                                                   : sweep_cfg;
            const CommonOpts& common = train->parsed() ? train_common
                                       : all->parsed() ? all_common
                                                       : sweep_common;
            cfg.classifier = parse_classifier(train->parsed()   ? train_classifier
                                              : all->parsed()   ? all_classifier
                                                                : sweep_classifier);
            cfg.corpus_dir = train->parsed() ? train_data
                             : all->parsed() ? all_data
                                             : sweep_data;
            cfg.seed = common.seed;
            cfg.out_dir = common.out;
            cfg.threads = common.threads;
            cfg.sweep = all->parsed() ? all_sweep : sweep->parsed();
            return run_experiment_cmd(cfg);
        }
        if (eval->parsed())
            return run_eval(eval_model_dir, eval_features, eval_data, eval_common);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
