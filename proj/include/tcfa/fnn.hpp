#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tcfa/features.hpp"

namespace tcfa {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct FnnTrainConfig {
    std::vector<int> hidden = {50, 100, 200, 80, 40};
    double l2_alpha = 1e-4;        // applied as 0.5 * alpha * ||W||^2 / batch
    double lr0 = 0.001;
    double lr_decay_per_epoch = 0.95;
    int batch_size = 100;
    int epochs = 100;
    std::uint64_t seed = 0;
};

// Hidden layers use ReLU; the two-way output head is a softmax.
struct FnnModel {
    std::vector<int> layer_sizes;  // input, hidden..., 2
    std::vector<Matrix> weights;   // weights[l] is (in x out)
    std::vector<Vector> biases;
    double l2_alpha = 1e-4;
};

struct FnnGrads {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
};

// Scaled-uniform (Glorot) initialization, seeded.
FnnModel fnn_init(int input_dim, const FnnTrainConfig& cfg);

// Cross-entropy + L2 objective and its gradient on one batch. Exposed so the
// finite-difference check can probe the exact objective the trainer uses.
double fnn_loss_and_grad(const FnnModel& model, const Matrix& x,
                         const std::vector<int>& y, FnnGrads& grads);

double fnn_batch_loss(const FnnModel& model, const Matrix& x, const std::vector<int>& y);

// Mini-batch RMSprop (decay 0.9, epsilon 1e-8), learning rate multiplied by
// lr_decay_per_epoch each epoch. Deterministic given cfg.seed. Per-epoch mean
// training losses are returned for schedule diagnostics.
struct FnnTrainResult {
    FnnModel model;
    std::vector<double> epoch_losses;
};
FnnTrainResult fnn_train(const FeatureMatrix& train, const FnnTrainConfig& cfg);

double fnn_predict_proba(const FnnModel& model, std::span<const double> x);

// Per-sample training accuracy at the 0.5 probability cut.
double fnn_accuracy(const FnnModel& model, const FeatureMatrix& data);

void fnn_save(const FnnModel& model, const std::string& path);
FnnModel fnn_load(const std::string& path);

}  // namespace tcfa
