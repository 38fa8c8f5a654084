#include "tcfa/fnn.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tcfa/rng.hpp"
#include "tcfa/serialize.hpp"

namespace tcfa {

namespace {

// Row-wise softmax of the logits, numerically stabilized.
Matrix softmax_rows(const Matrix& logits) {
    Matrix p = logits;
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        double m = p.row(r).maxCoeff();
        p.row(r) = (p.row(r).array() - m).exp();
        p.row(r) /= p.row(r).sum();
    }
    return p;
}

// Forward pass keeping post-activation values for backprop.
void forward_pass(const FnnModel& model, const Matrix& x, std::vector<Matrix>& acts,
                  Matrix& probs) {
    acts.clear();
    acts.push_back(x);
    Matrix h = x;
    std::size_t n_layers = model.weights.size();
    for (std::size_t l = 0; l + 1 < n_layers; ++l) {
        h = (h * model.weights[l]).rowwise() + model.biases[l].transpose();
        h = h.cwiseMax(0.0);  // ReLU
        acts.push_back(h);
    }
    Matrix logits =
        (h * model.weights.back()).rowwise() + model.biases.back().transpose();
    probs = softmax_rows(logits);
}

double l2_penalty(const FnnModel& model, double batch_n) {
    double sq = 0.0;
    for (const auto& w : model.weights) sq += w.squaredNorm();
    return 0.5 * model.l2_alpha * sq / batch_n;
}

}  // namespace

FnnModel fnn_init(int input_dim, const FnnTrainConfig& cfg) {
    if (input_dim < 1) throw std::invalid_argument("fnn_init: input_dim must be >= 1");
    if (cfg.lr0 <= 0.0 || cfg.lr_decay_per_epoch <= 0.0)
        throw std::invalid_argument("fnn_init: rates must be positive");
    if (cfg.batch_size < 1) throw std::invalid_argument("fnn_init: batch size must be >= 1");

    FnnModel model;
    model.l2_alpha = cfg.l2_alpha;
    model.layer_sizes.push_back(input_dim);
    for (int h : cfg.hidden) model.layer_sizes.push_back(h);
    model.layer_sizes.push_back(2);

    Rng rng(cfg.seed);
    for (std::size_t l = 0; l + 1 < model.layer_sizes.size(); ++l) {
        int fan_in = model.layer_sizes[l];
        int fan_out = model.layer_sizes[l + 1];
        double bound = std::sqrt(6.0 / (fan_in + fan_out));
        Matrix w(fan_in, fan_out);
        for (int i = 0; i < fan_in; ++i)
            for (int j = 0; j < fan_out; ++j) w(i, j) = rng.uniform(-bound, bound);
        model.weights.push_back(std::move(w));
        model.biases.push_back(Vector::Zero(fan_out));
    }
    return model;
}

double fnn_loss_and_grad(const FnnModel& model, const Matrix& x,
                         const std::vector<int>& y, FnnGrads& grads) {
    const auto n = static_cast<double>(x.rows());
    if (x.rows() != static_cast<Eigen::Index>(y.size()))
        throw std::invalid_argument("fnn_loss_and_grad: batch size mismatch");
    if (x.cols() != model.layer_sizes.front())
        throw std::invalid_argument("fnn_loss_and_grad: input dimension mismatch");

    std::vector<Matrix> acts;
    Matrix probs;
    forward_pass(model, x, acts, probs);

    double loss = 0.0;
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        double p = probs(r, y[r]);
        loss -= std::log(p > 1e-300 ? p : 1e-300);
    }
    loss /= n;
    loss += l2_penalty(model, n);

    grads.weights.resize(model.weights.size());
    grads.biases.resize(model.biases.size());

    // dL/dlogits = (softmax - onehot) / n
    Matrix delta = probs;
    for (Eigen::Index r = 0; r < delta.rows(); ++r) delta(r, y[r]) -= 1.0;
    delta /= n;

    for (int l = static_cast<int>(model.weights.size()) - 1; l >= 0; --l) {
        grads.weights[l].noalias() = acts[l].transpose() * delta;
        grads.weights[l] += (model.l2_alpha / n) * model.weights[l];
        grads.biases[l] = delta.colwise().sum().transpose();
        if (l > 0) {
            Matrix back = delta * model.weights[l].transpose();
            // ReLU derivative from the saved post-activation values.
            delta = back.cwiseProduct(
                (acts[l].array() > 0.0).cast<double>().matrix());
        }
    }
    return loss;
}

double fnn_batch_loss(const FnnModel& model, const Matrix& x, const std::vector<int>& y) {
    std::vector<Matrix> acts;
    Matrix probs;
    forward_pass(model, x, acts, probs);
    double loss = 0.0;
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        double p = probs(r, y[r]);
        loss -= std::log(p > 1e-300 ? p : 1e-300);
    }
    loss /= static_cast<double>(x.rows());
    loss += l2_penalty(model, static_cast<double>(x.rows()));
    return loss;
}

FnnTrainResult fnn_train(const FeatureMatrix& train, const FnnTrainConfig& cfg) {
    if (train.rows() == 0) throw std::invalid_argument("fnn_train: empty training set");
    long pos = 0;
    for (int l : train.labels) pos += l;
    if (pos == 0 || pos == static_cast<long>(train.rows()))
        throw std::invalid_argument("fnn_train: both classes must be present");

    FnnTrainResult result;
    result.model = fnn_init(train.cols, cfg);
    FnnModel& model = result.model;

    // RMSprop caches, one per parameter tensor.
    std::vector<Matrix> cache_w;
    std::vector<Vector> cache_b;
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        cache_w.push_back(Matrix::Zero(model.weights[l].rows(), model.weights[l].cols()));
        cache_b.push_back(Vector::Zero(model.biases[l].size()));
    }
    constexpr double kRmsDecay = 0.9;
    constexpr double kRmsEps = 1e-8;

    Rng rng(derive_seed(cfg.seed, "fnn-shuffle"));
    std::vector<std::size_t> order(train.rows());
    std::iota(order.begin(), order.end(), 0);

    FnnGrads grads;
    double lr = cfg.lr0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t bn = std::min<std::size_t>(cfg.batch_size, order.size() - start);
            Matrix x(bn, train.cols);
            std::vector<int> y(bn);
            for (std::size_t i = 0; i < bn; ++i) {
                std::size_t r = order[start + i];
                for (int c = 0; c < train.cols; ++c) x(i, c) = train.at(r, c);
                y[i] = train.labels[r];
            }
            double loss = fnn_loss_and_grad(model, x, y, grads);
            if (!std::isfinite(loss))
                throw std::runtime_error(
                    "fnn_train: loss became non-finite at epoch " + std::to_string(epoch) +
                    " (learning rate " + std::to_string(lr) + ")");
            epoch_loss += loss * static_cast<double>(bn);
            seen += bn;

            for (std::size_t l = 0; l < model.weights.size(); ++l) {
                cache_w[l].array() = kRmsDecay * cache_w[l].array() +
                                     (1.0 - kRmsDecay) * grads.weights[l].array().square();
                model.weights[l].array() -=
                    lr * grads.weights[l].array() / (cache_w[l].array().sqrt() + kRmsEps);
                cache_b[l].array() = kRmsDecay * cache_b[l].array() +
                                     (1.0 - kRmsDecay) * grads.biases[l].array().square();
                model.biases[l].array() -=
                    lr * grads.biases[l].array() / (cache_b[l].array().sqrt() + kRmsEps);
            }
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(seen));
        lr *= cfg.lr_decay_per_epoch;
    }
    return result;
}

double fnn_predict_proba(const FnnModel& model, std::span<const double> x) {
    if (static_cast<int>(x.size()) != model.layer_sizes.front())
        throw std::invalid_argument("fnn_predict_proba: dimension mismatch");
    Matrix row(1, x.size());
    for (std::size_t i = 0; i < x.size(); ++i) row(0, i) = x[i];
    std::vector<Matrix> acts;
    Matrix probs;
    forward_pass(model, row, acts, probs);
    return probs(0, 1);
}

double fnn_accuracy(const FnnModel& model, const FeatureMatrix& data) {
    std::size_t correct = 0;
    for (std::size_t r = 0; r < data.rows(); ++r) {
        double p = fnn_predict_proba(model, data.row(r));
        if ((p > 0.5 ? 1 : 0) == data.labels[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.rows());
}

void fnn_save(const FnnModel& model, const std::string& path) {
    BinaryWriter w(path);
    w.str("TCFA-FNN");
    w.u32(1);
    w.f64(model.l2_alpha);
    w.i32_vec(model.layer_sizes);
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        const Matrix& m = model.weights[l];
        std::vector<double> flat(m.data(), m.data() + m.size());
        w.f64_vec(flat);
        const Vector& b = model.biases[l];
        w.f64_vec(std::vector<double>(b.data(), b.data() + b.size()));
    }
    w.close();
}

FnnModel fnn_load(const std::string& path) {
    BinaryReader r(path);
    if (r.str() != "TCFA-FNN") throw std::runtime_error("not an FNN model file: " + path);
    if (r.u32() != 1) throw std::runtime_error("unsupported FNN model version: " + path);
    FnnModel model;
    model.l2_alpha = r.f64();
    model.layer_sizes = r.i32_vec();
    if (model.layer_sizes.size() < 2)
        throw std::runtime_error("corrupt FNN model file: " + path);
    for (std::size_t l = 0; l + 1 < model.layer_sizes.size(); ++l) {
        int rows = model.layer_sizes[l];
        int cols = model.layer_sizes[l + 1];
        std::vector<double> flat = r.f64_vec();
        if (flat.size() != static_cast<std::size_t>(rows) * cols)
            throw std::runtime_error("corrupt FNN model file: " + path);
        model.weights.emplace_back(Eigen::Map<const Matrix>(flat.data(), rows, cols));
        std::vector<double> bias = r.f64_vec();
        if (bias.size() != static_cast<std::size_t>(cols))
            throw std::runtime_error("corrupt FNN model file: " + path);
        model.biases.emplace_back(Eigen::Map<const Vector>(bias.data(), cols));
    }
    return model;
}

}  // namespace tcfa
