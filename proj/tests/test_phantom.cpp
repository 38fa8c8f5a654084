#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "tcfa/experiment.hpp"
#include "tcfa/phantom.hpp"
#include "tcfa/segmentation.hpp"

using namespace tcfa;

TEST_CASE("phantom generation is deterministic in (seed, index)") {
    PhantomConfig cfg;
    cfg.side = 32;
    cfg.corpus_size = 50;
    LabeledSample a = generate_phantom(cfg, 17);
    LabeledSample b = generate_phantom(cfg, 17);
    CHECK(a.image.pixels == b.image.pixels);
    CHECK(a.mask.labels == b.mask.labels);
    CHECK(a.label == b.label);
    LabeledSample c = generate_phantom(cfg, 18);
    CHECK(a.image.pixels != c.image.pixels);
}

TEST_CASE("corpus class counts follow the rounding rule") {
    PhantomConfig cfg;
    cfg.side = 16;
    cfg.corpus_size = 33;
    cfg.tcfa_fraction = 0.1;
    Corpus corpus = generate_corpus(cfg, 2);
    std::size_t tcfa = 0;
    for (const auto& s : corpus.samples) tcfa += s.label == SampleClass::Tcfa;
    CHECK(tcfa == 3);  // round(0.1 * 33)
    CHECK(corpus.samples.size() == 33);

    PhantomConfig big;
    big.side = 16;
    big.corpus_size = 110;
    Corpus c2 = generate_corpus(big, 2);
    std::size_t t2 = 0;
    for (const auto& s : c2.samples) t2 += s.label == SampleClass::Tcfa;
    CHECK(t2 == 10);  // 1/11 of 110
}

TEST_CASE("different seeds change pixels but not class counts") {
    PhantomConfig a;
    a.side = 16;
    a.corpus_size = 20;
    a.tcfa_fraction = 0.2;
    PhantomConfig b = a;
    b.seed = a.seed + 1;
    Corpus ca = generate_corpus(a, 2);
    Corpus cb = generate_corpus(b, 2);
    std::size_t ta = 0, tb = 0;
    bool identical = true;
    for (std::size_t i = 0; i < ca.samples.size(); ++i) {
        ta += ca.samples[i].label == SampleClass::Tcfa;
        tb += cb.samples[i].label == SampleClass::Tcfa;
        identical &= ca.samples[i].image.pixels == cb.samples[i].image.pixels;
    }
    CHECK(ta == tb);
    CHECK_FALSE(identical);
}

TEST_CASE("generated masks are valid and the roi bands partition the plaque") {
    PhantomConfig cfg;
    cfg.corpus_size = 12;
    Corpus corpus = generate_corpus(cfg, 2);
    for (const auto& s : corpus.samples) {
        validate(s);
        RoiMask roi = precise_roi_segmentation(s.mask);
        std::size_t plaque = 0, bands = 0, lumen = 0;
        for (std::size_t i = 0; i < s.mask.labels.size(); ++i) {
            plaque += s.mask.labels[i] == TissueLabel::Plaque;
            lumen += s.mask.labels[i] == TissueLabel::Lumen;
            Region r = roi.regions[i];
            bands += r == Region::Cap || r == Region::Suf1 || r == Region::Suf2 ||
                     r == Region::Suf3;
        }
        CHECK(plaque == bands);
        CHECK(plaque > 0);
        CHECK(lumen > 0);
    }
}

TEST_CASE("corpus writes and reads back through the PGM + manifest layout") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "tcfa_corpus_io";
    fs::remove_all(dir);
    PhantomConfig cfg;
    cfg.side = 16;
    cfg.corpus_size = 14;
    cfg.tcfa_fraction = 0.2;
    Corpus corpus = generate_corpus(cfg, 2);
    write_corpus(corpus, dir.string(), cfg.seed);

    // Manifest row count equals the corpus size.
    std::ifstream manifest(dir / "manifest.csv");
    std::string line;
    int rows = -1;  // header
    while (std::getline(manifest, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 14);

    Corpus back = read_corpus(dir.string());
    REQUIRE(back.samples.size() == corpus.samples.size());
    for (std::size_t i = 0; i < back.samples.size(); ++i) {
        CHECK(back.samples[i].id == corpus.samples[i].id);
        CHECK(back.samples[i].label == corpus.samples[i].label);
        CHECK(back.samples[i].image.pixels == corpus.samples[i].image.pixels);
        CHECK(back.samples[i].mask.labels == corpus.samples[i].mask.labels);
    }
    fs::remove_all(dir);
}

TEST_CASE("infeasible geometry is rejected") {
    PhantomConfig cfg;
    cfg.wall_thickness_max = 0.5;  // cannot fit inside the frame
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    PhantomConfig bad_frac;
    bad_frac.tcfa_fraction = 0.0;
    CHECK_THROWS_AS(bad_frac.validate(), std::invalid_argument);
    PhantomConfig small;
    small.corpus_size = 5;
    CHECK_THROWS_AS(generate_corpus(small, 1), std::invalid_argument);
}

TEST_CASE("dark-Cap ratio separates the classes at 5 sigma on 1100 samples") {
    PhantomConfig cfg;  // defaults: 1100 samples, 64x64, strength 1
    Corpus corpus = generate_corpus(cfg, 2);
    FeatureMatrix m = extract_corpus_features(corpus, 2);

    // F2 is column 1 (0-based): the [0,10] intensity bin of the Cap.
    double sum[2] = {0, 0}, sumsq[2] = {0, 0};
    long count[2] = {0, 0};
    for (std::size_t r = 0; r < m.rows(); ++r) {
        double v = m.at(r, 1);
        int l = m.labels[r];
        sum[l] += v;
        sumsq[l] += v * v;
        count[l]++;
    }
    double mean0 = sum[0] / count[0], mean1 = sum[1] / count[1];
    double var0 = sumsq[0] / count[0] - mean0 * mean0;
    double var1 = sumsq[1] / count[1] - mean1 * mean1;
    double welch = (mean1 - mean0) / std::sqrt(var1 / count[1] + var0 / count[0]);
    CHECK(welch > 5.0);
}

TEST_CASE("zero signature strength leaves the label with no signal") {
    // End-to-end KNN pipeline over 5 seeds: held-out AUC stays at chance.
    double sum_auc = 0.0;
    for (std::uint64_t seed : {11, 22, 33, 44, 55}) {
        PhantomConfig ph;
        ph.side = 32;
        ph.corpus_size = 400;
        ph.tcfa_fraction = 0.5;  // balanced for a tight null distribution
        ph.signature_strength = 0.0;
        ph.seed = seed;
        Corpus corpus = generate_corpus(ph, 2);
        FeatureMatrix raw = extract_corpus_features(corpus, 2);

        SplitSpec spec;
        spec.seed = seed;
        SplitIndices idx = stratified_split(raw.labels, spec);
        FeatureMatrix train, test;
        train.cols = raw.cols;
        test.cols = raw.cols;
        for (std::size_t i : idx.train) train.add_row(raw.ids[i], raw.labels[i], raw.row(i));
        for (std::size_t i : idx.test) test.add_row(raw.ids[i], raw.labels[i], raw.row(i));

        NormalizationParams norm = fit_normalizer(train);
        FeatureMatrix train_n = apply_normalizer(norm, train);
        FeatureMatrix test_n = apply_normalizer(norm, test);
        KnnModel model = knn_fit(train_n, 9, KnnWeight::Distance);
        std::vector<double> scores(test_n.rows());
        for (std::size_t r = 0; r < test_n.rows(); ++r)
            scores[r] = knn_predict_proba(model, test_n.row(r));
        sum_auc += roc_curve(scores, test_n.labels).auc;
    }
    double mean_auc = sum_auc / 5.0;
    CHECK(mean_auc > 0.45);
    CHECK(mean_auc < 0.55);
}
