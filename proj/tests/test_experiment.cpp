#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "tcfa/experiment.hpp"
#include "tcfa/forest.hpp"

using namespace tcfa;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

ExperimentConfig small_knn_config(const std::string& out) {
    ExperimentConfig cfg;
    cfg.phantom.side = 32;
    cfg.phantom.corpus_size = 150;
    cfg.phantom.tcfa_fraction = 0.2;
    cfg.classifier = ClassifierKind::Knn;
    cfg.out_dir = out;
    cfg.seed = 314159;
    cfg.threads = 2;
    return cfg;
}

}  // namespace

TEST_CASE("run_experiment writes a content-complete run directory") {
    fs::path root = fs::temp_directory_path() / "tcfa_run_knn";
    fs::remove_all(root);
    ExperimentConfig cfg = small_knn_config(root.string());
    EvalReport report = run_experiment(cfg);
    CHECK(report.auc > 0.9);  // strong planted signal

    for (const char* name : {"report.json", "roc.csv", "ranking.csv", "model.bin",
                             "model_meta.json", "norm.csv", "run.log"}) {
        CHECK(fs::exists(root / name));
    }
    // Every artifact the run log lists actually exists.
    std::string log = slurp(root / "run.log");
    std::istringstream lines(log);
    std::string line;
    bool in_artifacts = false;
    int listed = 0;
    while (std::getline(lines, line)) {
        if (line == "== artifacts ==") {
            in_artifacts = true;
            continue;
        }
        if (in_artifacts && !line.empty()) {
            CHECK(fs::exists(root / line));
            ++listed;
        }
    }
    CHECK(listed >= 6);
    // The log records the derived stage seeds.
    CHECK(log.find("phantom = ") != std::string::npos);
    CHECK(log.find("split = ") != std::string::npos);
    CHECK(log.find("master = 314159") != std::string::npos);
    fs::remove_all(root);
}

TEST_CASE("identical reruns are byte-identical; thread count does not matter") {
    fs::path a = fs::temp_directory_path() / "tcfa_rerun_a";
    fs::path b = fs::temp_directory_path() / "tcfa_rerun_b";
    fs::path c = fs::temp_directory_path() / "tcfa_rerun_c";
    for (const auto& p : {a, b, c}) fs::remove_all(p);

    ExperimentConfig cfg = small_knn_config(a.string());
    run_experiment(cfg);
    cfg.out_dir = b.string();
    run_experiment(cfg);
    cfg.out_dir = c.string();
    cfg.threads = 1;
    run_experiment(cfg);

    CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
    CHECK(slurp(a / "report.json") == slurp(c / "report.json"));
    CHECK(slurp(a / "roc.csv") == slurp(c / "roc.csv"));
    CHECK(slurp(a / "ranking.csv") == slurp(c / "ranking.csv"));
    for (const auto& p : {a, b, c}) fs::remove_all(p);
}

TEST_CASE("a completed run directory is never overwritten") {
    fs::path root = fs::temp_directory_path() / "tcfa_run_locked";
    fs::remove_all(root);
    ExperimentConfig cfg = small_knn_config(root.string());
    run_experiment(cfg);
    CHECK_THROWS_WITH_AS(run_experiment(cfg),
                         doctest::Contains("refusing to overwrite"), std::runtime_error);
    fs::remove_all(root);
}

TEST_CASE("stage failures carry a stage tag") {
    ExperimentConfig cfg = small_knn_config(
        (fs::temp_directory_path() / "tcfa_run_badstage").string());
    fs::remove_all(cfg.out_dir);
    cfg.corpus_dir = "/nonexistent/corpus/dir";
    try {
        run_experiment(cfg);
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("[data]") == 0);
    }
    fs::remove_all(cfg.out_dir);
}

TEST_CASE("rf experiment with sweep emits one series per tree count") {
    fs::path root = fs::temp_directory_path() / "tcfa_run_rf_sweep";
    fs::remove_all(root);
    ExperimentConfig cfg = small_knn_config(root.string());
    cfg.classifier = ClassifierKind::Rf;
    cfg.rf_trees = 20;
    cfg.sweep = true;
    cfg.phantom.corpus_size = 60;
    cfg.phantom.tcfa_fraction = 0.25;
    run_experiment(cfg);
    for (const char* name : {"sweep_rf_e10.csv", "sweep_rf_e50.csv", "sweep_rf_e100.csv",
                             "sweep_best.json"}) {
        CHECK(fs::exists(root / name));
    }
    // Full series: one AUC per N in 1..105.
    std::string csv = slurp(root / "sweep_rf_e10.csv");
    int lines = 0;
    for (char ch : csv) lines += ch == '\n';
    CHECK(lines == 106);  // header + 105 points
    fs::remove_all(root);
}

TEST_CASE("feature sweep finds the planted dimensionality") {
    // 105 features, 5 informative: AUC(N=5) must be within 0.03 of the best.
    Rng rng(271828);
    const int planted[5] = {0, 20, 40, 60, 80};
    auto make_matrix = [&](int rows) {
        FeatureMatrix m;
        m.cols = 105;
        for (int r = 0; r < rows; ++r) {
            int label = r % 4 == 0 ? 1 : 0;
            std::vector<double> row(105);
            for (auto& v : row) v = rng.uniform();
            for (int f : planted)
                row[f] = label ? rng.uniform(0.55, 1.0) : rng.uniform(0.0, 0.65);
            m.add_row("r" + std::to_string(r), label, row);
        }
        return m;
    };
    FeatureMatrix train = make_matrix(240);
    FeatureMatrix test = make_matrix(120);

    SweepOptions opts;
    opts.kind = ClassifierKind::Knn;
    opts.seed = 5;
    opts.threads = 2;
    SweepResult result = feature_sweep(train, test, opts);
    REQUIRE(result.series.size() == 1);
    REQUIRE(result.series[0].points.size() == 105);

    double auc5 = result.series[0].points[4].auc;
    double best = 0.0;
    for (const auto& p : result.series[0].points) best = std::max(best, p.auc);
    CHECK(best - auc5 <= 0.03);
    CHECK(result.best.auc == best);
}

TEST_CASE("cnn experiment writes the training log and the model") {
    fs::path root = fs::temp_directory_path() / "tcfa_run_cnn";
    fs::remove_all(root);
    ExperimentConfig cfg;
    cfg.phantom.side = 16;
    cfg.phantom.corpus_size = 60;
    cfg.phantom.tcfa_fraction = 0.25;
    cfg.classifier = ClassifierKind::Cnn;
    cfg.cnn.side = 16;
    cfg.cnn.blocks = {{1, 4}, {1, 8}};
    cfg.cnn.fc_hidden = 8;
    cfg.cnn.batch_size = 8;
    cfg.cnn.max_epochs = 2;
    cfg.out_dir = root.string();
    cfg.seed = 99;
    cfg.threads = 2;
    EvalReport report = run_experiment(cfg);
    CHECK(report.auc >= 0.0);
    for (const char* name : {"report.json", "roc.csv", "trainlog.csv", "model.bin",
                             "run.log"}) {
        CHECK(fs::exists(root / name));
    }
    std::string log = slurp(root / "run.log");
    CHECK(log.find("augment = ") != std::string::npos);
    CHECK(log.find("cnn = ") != std::string::npos);
    fs::remove_all(root);
}
