#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tcfa/image.hpp"
#include "tcfa/rng.hpp"
#include "tcfa/serialize.hpp"

namespace tcfa {

// Scalar exponential linear unit: x for x >= 0, gamma * (e^x - 1) below.
inline double elu(double x, double gamma) {
    return x >= 0.0 ? x : gamma * (std::exp(x) - 1.0);
}

// Stepped exponential schedule: lr0 * decay^floor(step / every). Iterated
// multiplication keeps the low-exponent multipliers bit-exact.
inline double lr_at_step(double lr0, long step, double decay = 0.95, long every = 1000) {
    double lr = lr0;
    for (long k = step / every; k > 0; --k) lr *= decay;
    return lr;
}

// NCHW tensor of doubles.
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0) {}

    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    std::size_t sample_size() const { return static_cast<std::size_t>(c) * plane(); }
    double* sample(int i) { return v.data() + static_cast<std::size_t>(i) * sample_size(); }
    const double* sample(int i) const {
        return v.data() + static_cast<std::size_t>(i) * sample_size();
    }
};

struct ParamRef {
    std::vector<double>* value;
    std::vector<double>* grad;
    std::vector<double>* cache;  // RMSprop accumulator
};

// Sequential layer with explicit backward. Forward order is fixed; within a
// layer, per-sample work may run in parallel but every reduction happens in
// sample order, so results are identical for any thread count.
class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor4 forward(const Tensor4& x, bool training, Rng* rng, int threads) = 0;
    virtual Tensor4 backward(const Tensor4& dy, int threads) = 0;
    virtual void collect_params(std::vector<ParamRef>&) {}
    virtual void collect_state(std::vector<std::vector<double>*>&) {}
    virtual std::string kind() const = 0;
    virtual void save(BinaryWriter&) const {}
    virtual void load(BinaryReader&) {}
};

struct CnnBlock {
    int convs = 2;
    int channels = 16;
};

struct CnnConfig {
    int side = 64;  // desk scale; CnnConfig::clinical() switches to 512
    std::vector<CnnBlock> blocks = {{2, 16}, {2, 32}, {2, 64}, {2, 128}};
    double elu_gamma = 1.0;
    double dropout_p = 0.5;       // on the fully connected hidden activations
    int fc_hidden = 128;
    int batch_size = 32;
    double lr0 = 0.001;           // Table-5 value; 0.0001 reachable via config
    double lr_decay = 0.95;
    long lr_decay_steps = 1000;
    int patience = 3;             // early stop on validation loss
    int max_epochs = 30;
    double bn_momentum = 0.9;
    double bn_eps = 1e-5;
    std::uint64_t seed = 0;

    // Full-scale plan: 512 x 512 input through an 18-conv VGG-style stack.
    static CnnConfig clinical();

    void validate() const;  // side divisible by 2^blocks, dropout in [0,1)
    int final_side() const { return side >> blocks.size(); }
};

struct CnnModel {
    CnnConfig cfg;
    std::vector<std::unique_ptr<Layer>> layers;

    Tensor4 forward(const Tensor4& x, bool training, Rng* rng, int threads);
    Tensor4 backward(const Tensor4& dlogits, int threads);
    void zero_grads();
    std::vector<ParamRef> params();
    std::vector<std::vector<double>*> state();  // params + batch-norm running stats

    std::vector<std::vector<double>> snapshot_state();
    void restore_state(const std::vector<std::vector<double>>& snap);
};

// Architecture from config with seeded scaled-uniform initialization.
CnnModel cnn_build(const CnnConfig& cfg);

enum class StopReason : std::uint8_t { Patience = 0, Budget = 1 };

struct TrainLogRow {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;  // NaN when no validation set is given
    double val_acc = 0.0;
    double lr = 0.0;        // rate applied on the epoch's last step
};

struct TrainLog {
    std::vector<TrainLogRow> rows;
    StopReason stop_reason = StopReason::Budget;
    int best_epoch = 0;
};

void write_trainlog_csv(const TrainLog& log, const std::string& path);

// Patience-based stopping on validation loss; improvement means strictly
// smaller than the best seen. update() returns true when patience runs out.
struct EarlyStopper {
    int patience = 3;
    double best = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int stale = 0;

    bool update(double val_loss, int epoch) {
        if (val_loss < best) {
            best = val_loss;
            best_epoch = epoch;
            stale = 0;
            return false;
        }
        return ++stale >= patience;
    }
};

// Softmax cross-entropy over a batch; gradients land in the layers' grad
// buffers. Exposed for the finite-difference checks.
double cnn_loss_and_grad(CnnModel& model, const Tensor4& x, const std::vector<int>& y,
                         int threads);
double cnn_batch_loss(CnnModel& model, const Tensor4& x, const std::vector<int>& y,
                      bool training, int threads);

// Mini-batch RMSprop under the stepped-decay schedule, with patience-based
// early stopping on validation loss and best-epoch weight restoration. An
// empty validation set disables early stopping (the budget is the stop).
// Deterministic given cfg.seed and the inputs, for any thread count.
// warm_start (with initial_step for the schedule) resumes a trained model.
std::pair<CnnModel, TrainLog> cnn_train(const std::vector<LabeledSample>& train,
                                        const std::vector<LabeledSample>& val,
                                        const CnnConfig& cfg, int threads,
                                        const CnnModel* warm_start = nullptr,
                                        long initial_step = 0);

// Inference mode: running statistics, no dropout; pixel intensities are
// scaled to [0,1] by division by 255 before the first layer.
double cnn_predict_proba(CnnModel& model, const GreyImage& image);
std::vector<double> cnn_predict_batch(CnnModel& model,
                                      const std::vector<const GreyImage*>& images,
                                      int threads);

Tensor4 images_to_tensor(const std::vector<const GreyImage*>& images, int side);

void cnn_save(const CnnModel& model, const std::string& path);
CnnModel cnn_load(const std::string& path);

// Layer factories used by the builder and by unit tests probing single layers.
std::unique_ptr<Layer> make_conv3x3(int in_ch, int out_ch, Rng& rng);
std::unique_ptr<Layer> make_batchnorm(int channels, double momentum, double eps);
std::unique_ptr<Layer> make_elu_layer(double gamma);
std::unique_ptr<Layer> make_maxpool2x2();
std::unique_ptr<Layer> make_flatten();
std::unique_ptr<Layer> make_dense(int in_dim, int out_dim, Rng& rng);
std::unique_ptr<Layer> make_dropout(double p);

}  // namespace tcfa
