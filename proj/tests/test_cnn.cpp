#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "tcfa/cnn.hpp"
#include "tcfa/rng.hpp"

using namespace tcfa;

TEST_CASE("elu closed-form values") {
    CHECK(elu(0.0, 1.0) == 0.0);
    CHECK(elu(5.0, 1.0) == 5.0);
    CHECK(elu(-1.0, 1.0) == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-15));
    CHECK(elu(-2.0, 0.5) == doctest::Approx(0.5 * (std::exp(-2.0) - 1.0)));
}

TEST_CASE("elu is monotone and continuous on a 10001-point grid") {
    const double gamma = 1.0;
    double prev = elu(-10.0, gamma);
    for (int i = 1; i <= 10000; ++i) {
        double x = -10.0 + 20.0 * i / 10000.0;
        double y = elu(x, gamma);
        CHECK(y >= prev);                     // monotone
        CHECK(std::abs(y - prev) <= 0.0025);  // grid step 0.002, slope <= 1
        prev = y;
    }
}

TEST_CASE("shape law holds for every block-plan depth") {
    Rng data_rng(1);
    for (int n_blocks = 1; n_blocks <= 4; ++n_blocks) {
        CnnConfig cfg;
        cfg.side = 32;
        cfg.blocks.clear();
        for (int b = 0; b < n_blocks; ++b) cfg.blocks.push_back({1, 4 << b});
        cfg.fc_hidden = 8;
        cfg.dropout_p = 0.0;
        cfg.validate();
        CHECK(cfg.final_side() == 32 >> n_blocks);

        CnnModel model = cnn_build(cfg);
        Tensor4 x(2, 1, 32, 32);
        for (auto& v : x.v) v = data_rng.uniform();
        Tensor4 logits = model.forward(x, false, nullptr, 1);
        CHECK(logits.n == 2);
        CHECK(logits.c == 2);
        CHECK(logits.h == 1);
        CHECK(logits.w == 1);
    }
    CnnConfig bad;
    bad.side = 24;  // not divisible by 2^4
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    CnnConfig drop;
    drop.dropout_p = 1.0;
    CHECK_THROWS_AS(drop.validate(), std::invalid_argument);
}

TEST_CASE("convolution preserves spatial dims and max pool halves them") {
    Rng rng(2);
    auto conv = make_conv3x3(3, 5, rng);
    Tensor4 x(2, 3, 12, 12);
    for (auto& v : x.v) v = rng.uniform(-1.0, 1.0);
    Tensor4 y = conv->forward(x, false, nullptr, 1);
    CHECK(y.c == 5);
    CHECK(y.h == 12);
    CHECK(y.w == 12);
    auto pool = make_maxpool2x2();
    Tensor4 p = pool->forward(y, false, nullptr, 1);
    CHECK(p.h == 6);
    CHECK(p.w == 6);
}

TEST_CASE("batch-norm training statistics: mean ~0, variance ~1") {
    Rng rng(3);
    auto bn = make_batchnorm(4, 0.9, 1e-5);  // fresh layer: gamma 1, beta 0
    Tensor4 x(8, 4, 6, 6);
    for (auto& v : x.v) v = rng.uniform(-3.0, 7.0);
    Tensor4 y = bn->forward(x, true, nullptr, 1);
    const std::size_t plane = y.plane();
    const double m = static_cast<double>(y.n) * plane;
    for (int c = 0; c < 4; ++c) {
        double mean = 0.0, var = 0.0;
        for (int s = 0; s < y.n; ++s) {
            const double* p = y.sample(s);
            for (std::size_t i = 0; i < plane; ++i) mean += p[c * plane + i];
        }
        mean /= m;
        for (int s = 0; s < y.n; ++s) {
            const double* p = y.sample(s);
            for (std::size_t i = 0; i < plane; ++i) {
                double d = p[c * plane + i] - mean;
                var += d * d;
            }
        }
        var /= m;
        CHECK(std::abs(mean) < 1e-5);
        CHECK(std::abs(var - 1.0) < 1e-3);
    }
}

TEST_CASE("dropout: stochastic mean approximates the inference output") {
    Rng data_rng(4);
    Tensor4 x(1, 64, 1, 1);
    for (auto& v : x.v) v = data_rng.uniform(0.5, 1.5);

    auto drop = make_dropout(0.5);
    Tensor4 inference = drop->forward(x, false, nullptr, 1);
    CHECK(inference.v == x.v);  // identity at inference

    Rng mask_rng(5);
    std::vector<double> mean(x.v.size(), 0.0);
    const int passes = 10000;
    for (int p = 0; p < passes; ++p) {
        Tensor4 y = drop->forward(x, true, &mask_rng, 1);
        for (std::size_t i = 0; i < y.v.size(); ++i) mean[i] += y.v[i];
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < mean.size(); ++i) {
        double d = mean[i] / passes - x.v[i];
        num += d * d;
        den += x.v[i] * x.v[i];
    }
    CHECK(std::sqrt(num / den) < 0.03);
}

TEST_CASE("cnn gradients match central differences on a 2-layer toy config") {
    CnnConfig cfg;
    cfg.side = 8;
    cfg.blocks = {{1, 2}, {1, 3}};
    cfg.fc_hidden = 4;
    cfg.dropout_p = 0.0;  // keep the objective deterministic for the probe
    cfg.seed = 6;
    CnnModel model = cnn_build(cfg);

    Rng rng(7);
    Tensor4 x(3, 1, 8, 8);
    for (auto& v : x.v) v = rng.uniform();
    std::vector<int> y = {1, 0, 1};

    model.zero_grads();
    cnn_loss_and_grad(model, x, y, 1);
    // Copy the analytic gradients before probing mutates the buffers.
    std::vector<std::vector<double>> analytic;
    for (auto& p : model.params()) analytic.push_back(*p.grad);

    auto loss = [&] { return cnn_batch_loss(model, x, y, true, 1); };
    double worst = 0.0;
    Rng pick(8);
    auto params = model.params();
    for (std::size_t t = 0; t < params.size(); ++t) {
        std::vector<double>& value = *params[t].value;
        // Probe every entry of the small tensors, a random subset of large ones.
        std::size_t probes = std::min<std::size_t>(value.size(), 24);
        for (std::size_t k = 0; k < probes; ++k) {
            std::size_t i = value.size() <= 24 ? k : pick.uniform_int(value.size());
            double numeric = oracle::central_difference(loss, value[i]);
            double a = analytic[t][i];
            double scale = std::max({std::abs(a), std::abs(numeric), 1e-7});
            worst = std::max(worst, std::abs(a - numeric) / scale);
        }
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("early stopper: a flat validation series stops at epoch 4") {
    EarlyStopper stopper;  // patience 3
    CHECK_FALSE(stopper.update(0.5, 1));  // first value improves on infinity
    CHECK_FALSE(stopper.update(0.5, 2));
    CHECK_FALSE(stopper.update(0.5, 3));
    CHECK(stopper.update(0.5, 4));  // third stale epoch fires
    CHECK(stopper.best_epoch == 1);
}

TEST_CASE("early stopper resets on any strict improvement") {
    EarlyStopper stopper;
    stopper.update(0.6, 1);
    stopper.update(0.6, 2);
    stopper.update(0.55, 3);  // improvement resets the counter
    CHECK_FALSE(stopper.update(0.56, 4));
    CHECK_FALSE(stopper.update(0.56, 5));
    CHECK(stopper.update(0.56, 6));
    CHECK(stopper.best_epoch == 3);
}

namespace {

std::vector<LabeledSample> tiny_image_set(Rng& rng, int n, int side) {
    std::vector<LabeledSample> out;
    for (int i = 0; i < n; ++i) {
        LabeledSample s;
        s.label = i % 2 ? SampleClass::Tcfa : SampleClass::Normal;
        s.id = "x" + std::to_string(i);
        s.image = GreyImage(side, side);
        // A label-dependent intensity offset keeps the toy problem learnable.
        int offset = s.label == SampleClass::Tcfa ? 150 : 50;
        for (auto& p : s.image.pixels)
            p = static_cast<std::uint8_t>(offset + rng.uniform_int(50));
        s.mask = MaskImage(side, side, TissueLabel::Plaque);
        out.push_back(std::move(s));
    }
    return out;
}

CnnConfig tiny_cnn_config() {
    CnnConfig cfg;
    cfg.side = 16;
    cfg.blocks = {{1, 4}, {1, 8}};
    cfg.fc_hidden = 8;
    cfg.batch_size = 8;
    cfg.max_epochs = 3;
    cfg.seed = 11;
    return cfg;
}

}  // namespace

TEST_CASE("cnn training is deterministic for seed and thread count") {
    Rng rng(12);
    auto train = tiny_image_set(rng, 24, 16);
    auto val = tiny_image_set(rng, 8, 16);
    CnnConfig cfg = tiny_cnn_config();

    auto [m1, log1] = cnn_train(train, val, cfg, 1);
    auto [m2, log2] = cnn_train(train, val, cfg, 2);
    REQUIRE(log1.rows.size() == log2.rows.size());
    for (std::size_t i = 0; i < log1.rows.size(); ++i) {
        CHECK(log1.rows[i].train_loss == log2.rows[i].train_loss);
        CHECK(log1.rows[i].val_loss == log2.rows[i].val_loss);
        CHECK(log1.rows[i].val_acc == log2.rows[i].val_acc);
        CHECK(log1.rows[i].lr == log2.rows[i].lr);
    }
    GreyImage probe = train[0].image;
    CHECK(cnn_predict_proba(m1, probe) == cnn_predict_proba(m2, probe));
}

TEST_CASE("cnn batch inference equals per-sample inference") {
    Rng rng(13);
    auto train = tiny_image_set(rng, 16, 16);
    CnnConfig cfg = tiny_cnn_config();
    cfg.max_epochs = 2;
    auto [model, log] = cnn_train(train, {}, cfg, 2);

    std::vector<const GreyImage*> imgs;
    for (const auto& s : train) imgs.push_back(&s.image);
    std::vector<double> batch = cnn_predict_batch(model, imgs, 2);
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        double single = cnn_predict_proba(model, *imgs[i]);
        CHECK(std::abs(single - batch[i]) < 1e-6);
        CHECK(single >= 0.0);
        CHECK(single <= 1.0);
        // Softmax head and inference mode are deterministic.
        CHECK(cnn_predict_proba(model, *imgs[i]) == single);
    }
}

TEST_CASE("cnn trainer validates inputs and logs the schedule") {
    Rng rng(14);
    auto train = tiny_image_set(rng, 12, 16);
    CnnConfig cfg = tiny_cnn_config();
    cfg.max_epochs = 2;
    CHECK_THROWS_AS(cnn_train({}, {}, cfg, 1), std::invalid_argument);

    auto [model, log] = cnn_train(train, {}, cfg, 1);
    REQUIRE(log.rows.size() == 2);
    CHECK(log.rows[0].epoch == 1);
    CHECK(log.rows[1].epoch == 2);
    CHECK(log.rows[0].lr == cfg.lr0);  // well inside the first decay step
    CHECK(log.stop_reason == StopReason::Budget);
    CHECK(std::isnan(log.rows[0].val_loss));  // no validation set given

    namespace fs = std::filesystem;
    fs::path path = fs::temp_directory_path() / "tcfa_trainlog.csv";
    write_trainlog_csv(log, path.string());
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "epoch,train_loss,val_loss,val_acc,lr");
    fs::remove(path);
}

TEST_CASE("cnn model round-trips bit-identically") {
    Rng rng(15);
    auto train = tiny_image_set(rng, 16, 16);
    CnnConfig cfg = tiny_cnn_config();
    cfg.max_epochs = 2;
    auto [model, log] = cnn_train(train, {}, cfg, 2);

    namespace fs = std::filesystem;
    fs::path path = fs::temp_directory_path() / "tcfa_cnn_model.bin";
    cnn_save(model, path.string());
    CnnModel back = cnn_load(path.string());
    for (const auto& s : train)
        CHECK(cnn_predict_proba(back, s.image) == cnn_predict_proba(model, s.image));
    fs::remove(path);
}

TEST_CASE("warm start resumes from the given weights") {
    Rng rng(16);
    auto train = tiny_image_set(rng, 16, 16);
    CnnConfig cfg = tiny_cnn_config();
    cfg.max_epochs = 1;
    auto [first, log1] = cnn_train(train, {}, cfg, 1);
    auto [second, log2] = cnn_train(train, {}, cfg, 1, &first, 2);
    // Two single-epoch legs shrink the loss further than one.
    CHECK(log2.rows.back().train_loss < log1.rows.back().train_loss);
}
