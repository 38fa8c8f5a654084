#include "tcfa/cnn.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/Core>

#include "tcfa/parallel.hpp"

namespace tcfa {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;
using ColMat = Eigen::MatrixXd;

// Per-sample weight-gradient contributions are summed in waves of this fixed
// size, in sample order, so the reduction order never depends on the thread
// count.
constexpr int kGradWave = 4;

void fill_glorot(std::vector<double>& v, int fan_in, int fan_out, Rng& rng) {
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& x : v) x = rng.uniform(-bound, bound);
}

// 3x3 patches around every pixel (zero padded), one column per pixel.
void im2col3x3(const double* x, int ch, int h, int w, ColMat& col) {
    col.resize(ch * 9, static_cast<Eigen::Index>(h) * w);
    for (int ic = 0; ic < ch; ++ic) {
        const double* plane = x + static_cast<std::size_t>(ic) * h * w;
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                int krow = ic * 9 + (dr + 1) * 3 + (dc + 1);
                for (int r = 0; r < h; ++r) {
                    int sr = r + dr;
                    if (sr < 0 || sr >= h) {
                        for (int c = 0; c < w; ++c) col(krow, r * w + c) = 0.0;
                        continue;
                    }
                    const double* srow = plane + static_cast<std::size_t>(sr) * w;
                    for (int c = 0; c < w; ++c) {
                        int sc = c + dc;
                        col(krow, r * w + c) = (sc < 0 || sc >= w) ? 0.0 : srow[sc];
                    }
                }
            }
        }
    }
}

// Scatter-add of column gradients back onto the padded input grid.
void col2im3x3(const ColMat& col, int ch, int h, int w, double* dx) {
    for (int ic = 0; ic < ch; ++ic) {
        double* plane = dx + static_cast<std::size_t>(ic) * h * w;
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                int krow = ic * 9 + (dr + 1) * 3 + (dc + 1);
                for (int r = 0; r < h; ++r) {
                    int sr = r + dr;
                    if (sr < 0 || sr >= h) continue;
                    double* srow = plane + static_cast<std::size_t>(sr) * w;
                    for (int c = 0; c < w; ++c) {
                        int sc = c + dc;
                        if (sc < 0 || sc >= w) continue;
                        srow[sc] += col(krow, r * w + c);
                    }
                }
            }
        }
    }
}

class Conv2d final : public Layer {
public:
    Conv2d(int in_ch, int out_ch, Rng& rng) : in_(in_ch), out_(out_ch) {
        kernel_.assign(static_cast<std::size_t>(out_ch) * in_ch * 9, 0.0);
        fill_glorot(kernel_, in_ch * 9, out_ch * 9, rng);
        bias_.assign(out_ch, 0.0);
        kernel_grad_.assign(kernel_.size(), 0.0);
        bias_grad_.assign(bias_.size(), 0.0);
        kernel_cache_.assign(kernel_.size(), 0.0);
        bias_cache_.assign(bias_.size(), 0.0);
    }

    // All Eigen products run on Eigen-owned (aligned) buffers so the packet
    // traversal never depends on the heap addresses of the raw vectors; maps
    // over malloc'd storage would make results vary at the ULP level between
    // runs. Reductions are explicit ordered loops for the same reason.
    Tensor4 forward(const Tensor4& x, bool training, Rng*, int threads) override {
        if (x.c != in_) throw std::invalid_argument("conv: channel mismatch");
        Tensor4 y(x.n, out_, x.h, x.w);
        RowMat k = kernel_matrix();
        parallel_for(static_cast<std::size_t>(x.n), threads, [&](std::size_t s) {
            ColMat col;
            im2col3x3(x.sample(static_cast<int>(s)), in_, x.h, x.w, col);
            RowMat out(out_, x.plane());
            out.noalias() = k * col;
            double* dst = y.sample(static_cast<int>(s));
            for (int oc = 0; oc < out_; ++oc) {
                for (std::size_t p = 0; p < x.plane(); ++p)
                    dst[oc * x.plane() + p] = out(oc, p) + bias_[oc];
            }
        });
        if (training) x_ = x;
        return y;
    }

    Tensor4 backward(const Tensor4& dy, int threads) override {
        const int n = dy.n, h = dy.h, w = dy.w;
        const std::size_t plane = dy.plane();
        Tensor4 dx(n, in_, h, w);
        RowMat k = kernel_matrix();

        // Bias gradient: ordered serial reduction.
        for (int s = 0; s < n; ++s) {
            const double* g = dy.sample(s);
            for (int oc = 0; oc < out_; ++oc) {
                double acc = 0.0;
                for (std::size_t p = 0; p < plane; ++p) acc += g[oc * plane + p];
                bias_grad_[oc] += acc;
            }
        }

        // Weight gradients in fixed-size waves, reduced in sample order, so
        // the result is identical for any thread count.
        std::vector<RowMat> wave_grads(kGradWave);
        for (int start = 0; start < n; start += kGradWave) {
            int count = std::min(kGradWave, n - start);
            parallel_for(static_cast<std::size_t>(count), threads, [&](std::size_t j) {
                int s = start + static_cast<int>(j);
                ColMat col;
                im2col3x3(x_.sample(s), in_, h, w, col);
                RowMat g(out_, plane);
                const double* gsrc = dy.sample(s);
                for (int oc = 0; oc < out_; ++oc)
                    for (std::size_t p = 0; p < plane; ++p) g(oc, p) = gsrc[oc * plane + p];
                wave_grads[j].noalias() = g * col.transpose();
                ColMat dcol(in_ * 9, plane);
                dcol.noalias() = k.transpose() * g;
                col2im3x3(dcol, in_, h, w, dx.sample(s));
            });
            for (int j = 0; j < count; ++j) {
                const RowMat& dw = wave_grads[j];
                for (std::size_t i = 0; i < kernel_grad_.size(); ++i)
                    kernel_grad_[i] += dw.data()[i];
            }
        }
        return dx;
    }

    void collect_params(std::vector<ParamRef>& out) override {
        out.push_back({&kernel_, &kernel_grad_, &kernel_cache_});
        out.push_back({&bias_, &bias_grad_, &bias_cache_});
    }
    void collect_state(std::vector<std::vector<double>*>& out) override {
        out.push_back(&kernel_);
        out.push_back(&bias_);
    }
    std::string kind() const override { return "conv3x3"; }
    void save(BinaryWriter& w) const override {
        w.i32(in_);
        w.i32(out_);
        w.f64_vec(kernel_);
        w.f64_vec(bias_);
    }
    void load(BinaryReader& r) override {
        if (r.i32() != in_ || r.i32() != out_)
            throw std::runtime_error("conv layer shape mismatch in model file");
        kernel_ = r.f64_vec();
        bias_ = r.f64_vec();
        if (kernel_.size() != static_cast<std::size_t>(out_) * in_ * 9 ||
            bias_.size() != static_cast<std::size_t>(out_))
            throw std::runtime_error("corrupt conv layer in model file");
    }

private:
    RowMat kernel_matrix() const {
        RowMat k(out_, in_ * 9);
        for (std::size_t i = 0; i < kernel_.size(); ++i) k.data()[i] = kernel_[i];
        return k;
    }

    int in_, out_;
    std::vector<double> kernel_, bias_;
    std::vector<double> kernel_grad_, bias_grad_;
    std::vector<double> kernel_cache_, bias_cache_;
    Tensor4 x_;
};

class BatchNorm2d final : public Layer {
public:
    BatchNorm2d(int ch, double momentum, double eps)
        : ch_(ch), momentum_(momentum), eps_(eps) {
        gamma_.assign(ch, 1.0);
        beta_.assign(ch, 0.0);
        running_mean_.assign(ch, 0.0);
        running_var_.assign(ch, 1.0);
        gamma_grad_.assign(ch, 0.0);
        beta_grad_.assign(ch, 0.0);
        gamma_cache_.assign(ch, 0.0);
        beta_cache_.assign(ch, 0.0);
    }

    Tensor4 forward(const Tensor4& x, bool training, Rng*, int threads) override {
        if (x.c != ch_) throw std::invalid_argument("batchnorm: channel mismatch");
        Tensor4 y(x.n, x.c, x.h, x.w);
        const std::size_t plane = x.plane();
        if (!training) {
            parallel_for(static_cast<std::size_t>(x.n), threads, [&](std::size_t s) {
                const double* in = x.sample(static_cast<int>(s));
                double* out = y.sample(static_cast<int>(s));
                for (int c = 0; c < ch_; ++c) {
                    double inv = 1.0 / std::sqrt(running_var_[c] + eps_);
                    for (std::size_t i = 0; i < plane; ++i) {
                        std::size_t idx = c * plane + i;
                        out[idx] = gamma_[c] * (in[idx] - running_mean_[c]) * inv + beta_[c];
                    }
                }
            });
            return y;
        }

        // Batch statistics, reduced serially in index order.
        const double m = static_cast<double>(x.n) * plane;
        std::vector<double> mean(ch_, 0.0), var(ch_, 0.0);
        for (int s = 0; s < x.n; ++s) {
            const double* in = x.sample(s);
            for (int c = 0; c < ch_; ++c) {
                double acc = 0.0;
                for (std::size_t i = 0; i < plane; ++i) acc += in[c * plane + i];
                mean[c] += acc;
            }
        }
        for (int c = 0; c < ch_; ++c) mean[c] /= m;
        for (int s = 0; s < x.n; ++s) {
            const double* in = x.sample(s);
            for (int c = 0; c < ch_; ++c) {
                double acc = 0.0;
                for (std::size_t i = 0; i < plane; ++i) {
                    double d = in[c * plane + i] - mean[c];
                    acc += d * d;
                }
                var[c] += acc;
            }
        }
        for (int c = 0; c < ch_; ++c) var[c] /= m;

        invstd_.resize(ch_);
        for (int c = 0; c < ch_; ++c) invstd_[c] = 1.0 / std::sqrt(var[c] + eps_);
        xhat_ = Tensor4(x.n, x.c, x.h, x.w);
        parallel_for(static_cast<std::size_t>(x.n), threads, [&](std::size_t s) {
            const double* in = x.sample(static_cast<int>(s));
            double* xh = xhat_.sample(static_cast<int>(s));
            double* out = y.sample(static_cast<int>(s));
            for (int c = 0; c < ch_; ++c) {
                for (std::size_t i = 0; i < plane; ++i) {
                    std::size_t idx = c * plane + i;
                    xh[idx] = (in[idx] - mean[c]) * invstd_[c];
                    out[idx] = gamma_[c] * xh[idx] + beta_[c];
                }
            }
        });
        for (int c = 0; c < ch_; ++c) {
            running_mean_[c] = momentum_ * running_mean_[c] + (1.0 - momentum_) * mean[c];
            running_var_[c] = momentum_ * running_var_[c] + (1.0 - momentum_) * var[c];
        }
        return y;
    }

    Tensor4 backward(const Tensor4& dy, int threads) override {
        const std::size_t plane = dy.plane();
        const double m = static_cast<double>(dy.n) * plane;
        std::vector<double> sum_dy(ch_, 0.0), sum_dy_xhat(ch_, 0.0);
        for (int s = 0; s < dy.n; ++s) {
            const double* g = dy.sample(s);
            const double* xh = xhat_.sample(s);
            for (int c = 0; c < ch_; ++c) {
                double a = 0.0, b = 0.0;
                for (std::size_t i = 0; i < plane; ++i) {
                    std::size_t idx = c * plane + i;
                    a += g[idx];
                    b += g[idx] * xh[idx];
                }
                sum_dy[c] += a;
                sum_dy_xhat[c] += b;
            }
        }
        for (int c = 0; c < ch_; ++c) {
            beta_grad_[c] += sum_dy[c];
            gamma_grad_[c] += sum_dy_xhat[c];
        }
        Tensor4 dx(dy.n, dy.c, dy.h, dy.w);
        parallel_for(static_cast<std::size_t>(dy.n), threads, [&](std::size_t s) {
            const double* g = dy.sample(static_cast<int>(s));
            const double* xh = xhat_.sample(static_cast<int>(s));
            double* out = dx.sample(static_cast<int>(s));
            for (int c = 0; c < ch_; ++c) {
                double k = gamma_[c] * invstd_[c];
                double mean_dy = sum_dy[c] / m;
                double mean_dy_xhat = sum_dy_xhat[c] / m;
                for (std::size_t i = 0; i < plane; ++i) {
                    std::size_t idx = c * plane + i;
                    out[idx] = k * (g[idx] - mean_dy - xh[idx] * mean_dy_xhat);
                }
            }
        });
        return dx;
    }

    void collect_params(std::vector<ParamRef>& out) override {
        out.push_back({&gamma_, &gamma_grad_, &gamma_cache_});
        out.push_back({&beta_, &beta_grad_, &beta_cache_});
    }
    void collect_state(std::vector<std::vector<double>*>& out) override {
        out.push_back(&gamma_);
        out.push_back(&beta_);
        out.push_back(&running_mean_);
        out.push_back(&running_var_);
    }
    std::string kind() const override { return "batchnorm"; }
    void save(BinaryWriter& w) const override {
        w.i32(ch_);
        w.f64_vec(gamma_);
        w.f64_vec(beta_);
        w.f64_vec(running_mean_);
        w.f64_vec(running_var_);
    }
    void load(BinaryReader& r) override {
        if (r.i32() != ch_) throw std::runtime_error("batchnorm shape mismatch in model file");
        gamma_ = r.f64_vec();
        beta_ = r.f64_vec();
        running_mean_ = r.f64_vec();
        running_var_ = r.f64_vec();
    }

private:
    int ch_;
    double momentum_, eps_;
    std::vector<double> gamma_, beta_, running_mean_, running_var_;
    std::vector<double> gamma_grad_, beta_grad_, gamma_cache_, beta_cache_;
    std::vector<double> invstd_;
    Tensor4 xhat_;
};

class EluLayer final : public Layer {
public:
    explicit EluLayer(double gamma) : gamma_(gamma) {
        if (gamma <= 0.0) throw std::invalid_argument("elu: gamma must be positive");
    }

    Tensor4 forward(const Tensor4& x, bool training, Rng*, int threads) override {
        Tensor4 y(x.n, x.c, x.h, x.w);
        parallel_for(static_cast<std::size_t>(x.n), threads, [&](std::size_t s) {
            const double* in = x.sample(static_cast<int>(s));
            double* out = y.sample(static_cast<int>(s));
            for (std::size_t i = 0; i < x.sample_size(); ++i) out[i] = elu(in[i], gamma_);
        });
        if (training) x_ = x;
        return y;
    }

    Tensor4 backward(const Tensor4& dy, int threads) override {
        Tensor4 dx(dy.n, dy.c, dy.h, dy.w);
        parallel_for(static_cast<std::size_t>(dy.n), threads, [&](std::size_t s) {
            const double* g = dy.sample(static_cast<int>(s));
            const double* in = x_.sample(static_cast<int>(s));
            double* out = dx.sample(static_cast<int>(s));
            for (std::size_t i = 0; i < dy.sample_size(); ++i) {
                out[i] = g[i] * (in[i] >= 0.0 ? 1.0 : gamma_ * std::exp(in[i]));
            }
        });
        return dx;
    }

    std::string kind() const override { return "elu"; }

private:
    double gamma_;
    Tensor4 x_;
};

class MaxPool2x2 final : public Layer {
public:
    Tensor4 forward(const Tensor4& x, bool training, Rng*, int threads) override {
        if (x.h % 2 != 0 || x.w % 2 != 0)
            throw std::invalid_argument("maxpool: spatial dims must be even");
        int oh = x.h / 2, ow = x.w / 2;
        Tensor4 y(x.n, x.c, oh, ow);
        argmax_.assign(y.v.size(), 0);
        in_shape_ = {x.n, x.c, x.h, x.w};
        parallel_for(static_cast<std::size_t>(x.n), threads, [&](std::size_t s) {
            const double* in = x.sample(static_cast<int>(s));
            double* out = y.sample(static_cast<int>(s));
            std::size_t out_off = s * y.sample_size();
            for (int c = 0; c < x.c; ++c) {
                for (int r = 0; r < oh; ++r) {
                    for (int col = 0; col < ow; ++col) {
                        double best = -1e308;
                        int best_idx = 0;
                        for (int dr = 0; dr < 2; ++dr) {
                            for (int dc = 0; dc < 2; ++dc) {
                                int idx = c * x.h * x.w + (2 * r + dr) * x.w + (2 * col + dc);
                                if (in[idx] > best) {  // first occurrence wins ties
                                    best = in[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        std::size_t o = static_cast<std::size_t>(c) * oh * ow +
                                        static_cast<std::size_t>(r) * ow + col;
                        out[o] = best;
                        argmax_[out_off + o] = best_idx;
                    }
                }
            }
        });
        (void)training;
        return y;
    }

    Tensor4 backward(const Tensor4& dy, int threads) override {
        Tensor4 dx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
        parallel_for(static_cast<std::size_t>(dy.n), threads, [&](std::size_t s) {
            const double* g = dy.sample(static_cast<int>(s));
            double* out = dx.sample(static_cast<int>(s));
            std::size_t off = s * dy.sample_size();
            for (std::size_t i = 0; i < dy.sample_size(); ++i)
                out[argmax_[off + i]] += g[i];
        });
        return dx;
    }

    std::string kind() const override { return "maxpool2x2"; }

private:
    std::vector<int> argmax_;
    std::array<int, 4> in_shape_{};
};

class Flatten final : public Layer {
public:
    Tensor4 forward(const Tensor4& x, bool, Rng*, int) override {
        in_shape_ = {x.n, x.c, x.h, x.w};
        Tensor4 y(x.n, static_cast<int>(x.sample_size()), 1, 1);
        y.v = x.v;
        return y;
    }
    Tensor4 backward(const Tensor4& dy, int) override {
        Tensor4 dx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
        dx.v = dy.v;
        return dx;
    }
    std::string kind() const override { return "flatten"; }

private:
    std::array<int, 4> in_shape_{};
};

class Dense final : public Layer {
public:
    Dense(int in_dim, int out_dim, Rng& rng) : in_(in_dim), out_(out_dim) {
        w_.assign(static_cast<std::size_t>(in_dim) * out_dim, 0.0);
        fill_glorot(w_, in_dim, out_dim, rng);
        b_.assign(out_dim, 0.0);
        w_grad_.assign(w_.size(), 0.0);
        b_grad_.assign(b_.size(), 0.0);
        w_cache_.assign(w_.size(), 0.0);
        b_cache_.assign(b_.size(), 0.0);
    }

    // Same owned-buffer rule as the convolutions: products on aligned Eigen
    // matrices, reductions as ordered loops.
    Tensor4 forward(const Tensor4& x, bool training, Rng*, int) override {
        if (static_cast<int>(x.sample_size()) != in_)
            throw std::invalid_argument("dense: dimension mismatch");
        Tensor4 y(x.n, out_, 1, 1);
        RowMat xin = to_matrix(x.v, x.n, in_);
        RowMat w = to_matrix(w_, in_, out_);
        RowMat out(x.n, out_);
        out.noalias() = xin * w;
        for (int r = 0; r < x.n; ++r)
            for (int j = 0; j < out_; ++j) y.v[r * out_ + j] = out(r, j) + b_[j];
        if (training) x_ = x;
        return y;
    }

    Tensor4 backward(const Tensor4& dy, int) override {
        RowMat g = to_matrix(dy.v, dy.n, out_);
        RowMat xin = to_matrix(x_.v, x_.n, in_);
        RowMat w = to_matrix(w_, in_, out_);
        RowMat dw(in_, out_);
        dw.noalias() = xin.transpose() * g;
        for (std::size_t i = 0; i < w_grad_.size(); ++i) w_grad_[i] += dw.data()[i];
        for (int j = 0; j < out_; ++j) {
            double acc = 0.0;
            for (int r = 0; r < dy.n; ++r) acc += dy.v[r * out_ + j];
            b_grad_[j] += acc;
        }
        Tensor4 dx(x_.n, in_, 1, 1);
        RowMat dxm(x_.n, in_);
        dxm.noalias() = g * w.transpose();
        for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] = dxm.data()[i];
        return dx;
    }

    void collect_params(std::vector<ParamRef>& out) override {
        out.push_back({&w_, &w_grad_, &w_cache_});
        out.push_back({&b_, &b_grad_, &b_cache_});
    }
    void collect_state(std::vector<std::vector<double>*>& out) override {
        out.push_back(&w_);
        out.push_back(&b_);
    }
    static RowMat to_matrix(const std::vector<double>& v, int rows, int cols) {
        RowMat m(rows, cols);
        for (std::size_t i = 0; i < v.size(); ++i) m.data()[i] = v[i];
        return m;
    }
    std::string kind() const override { return "dense"; }
    void save(BinaryWriter& w) const override {
        w.i32(in_);
        w.i32(out_);
        w.f64_vec(w_);
        w.f64_vec(b_);
    }
    void load(BinaryReader& r) override {
        if (r.i32() != in_ || r.i32() != out_)
            throw std::runtime_error("dense layer shape mismatch in model file");
        w_ = r.f64_vec();
        b_ = r.f64_vec();
    }

private:
    int in_, out_;
    std::vector<double> w_, b_, w_grad_, b_grad_, w_cache_, b_cache_;
    Tensor4 x_;
};

// Inverted dropout: scaling by 1/(1-p) at train time keeps the stochastic
// mean equal to the deterministic inference output.
class Dropout final : public Layer {
public:
    explicit Dropout(double p) : p_(p) {
        if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0,1)");
    }

    Tensor4 forward(const Tensor4& x, bool training, Rng* rng, int) override {
        if (!training || p_ == 0.0) return x;
        if (!rng) throw std::invalid_argument("dropout: training forward needs an RNG");
        Tensor4 y(x.n, x.c, x.h, x.w);
        mask_.resize(x.v.size());
        double keep = 1.0 - p_;
        for (std::size_t i = 0; i < x.v.size(); ++i) {
            mask_[i] = rng->uniform() < keep ? 1.0 / keep : 0.0;
            y.v[i] = x.v[i] * mask_[i];
        }
        return y;
    }

    Tensor4 backward(const Tensor4& dy, int) override {
        if (mask_.size() != dy.v.size()) return dy;  // forward was a pass-through
        Tensor4 dx(dy.n, dy.c, dy.h, dy.w);
        for (std::size_t i = 0; i < dy.v.size(); ++i) dx.v[i] = dy.v[i] * mask_[i];
        return dx;
    }

    std::string kind() const override { return "dropout"; }

private:
    double p_;
    std::vector<double> mask_;
};

}  // namespace

std::unique_ptr<Layer> make_conv3x3(int in_ch, int out_ch, Rng& rng) {
    return std::make_unique<Conv2d>(in_ch, out_ch, rng);
}
std::unique_ptr<Layer> make_batchnorm(int channels, double momentum, double eps) {
    return std::make_unique<BatchNorm2d>(channels, momentum, eps);
}
std::unique_ptr<Layer> make_elu_layer(double gamma) {
    return std::make_unique<EluLayer>(gamma);
}
std::unique_ptr<Layer> make_maxpool2x2() { return std::make_unique<MaxPool2x2>(); }
std::unique_ptr<Layer> make_flatten() { return std::make_unique<Flatten>(); }
std::unique_ptr<Layer> make_dense(int in_dim, int out_dim, Rng& rng) {
    return std::make_unique<Dense>(in_dim, out_dim, rng);
}
std::unique_ptr<Layer> make_dropout(double p) { return std::make_unique<Dropout>(p); }

CnnConfig CnnConfig::clinical() {
    CnnConfig cfg;
    cfg.side = 512;
    cfg.blocks = {{2, 16}, {2, 32}, {3, 64}, {3, 128}, {4, 256}, {4, 256}};
    cfg.fc_hidden = 256;
    return cfg;
}

void CnnConfig::validate() const {
    if (blocks.empty()) throw std::invalid_argument("cnn config: needs at least one block");
    if (side < (1 << blocks.size()) || side % (1 << blocks.size()) != 0)
        throw std::invalid_argument("cnn config: side must be divisible by 2^blocks");
    if (dropout_p < 0.0 || dropout_p >= 1.0)
        throw std::invalid_argument("cnn config: dropout must be in [0,1)");
    if (elu_gamma <= 0.0) throw std::invalid_argument("cnn config: elu gamma must be positive");
    if (batch_size < 1) throw std::invalid_argument("cnn config: batch size must be >= 1");
    if (lr0 <= 0.0) throw std::invalid_argument("cnn config: lr0 must be positive");
    for (const auto& b : blocks) {
        if (b.convs < 1 || b.channels < 1)
            throw std::invalid_argument("cnn config: bad block plan");
    }
}

CnnModel cnn_build(const CnnConfig& cfg) {
    cfg.validate();
    CnnModel model;
    model.cfg = cfg;
    Rng rng(derive_seed(cfg.seed, "cnn-init"));
    int ch = 1;
    for (const auto& block : cfg.blocks) {
        for (int j = 0; j < block.convs; ++j) {
            model.layers.push_back(make_conv3x3(ch, block.channels, rng));
            model.layers.push_back(make_batchnorm(block.channels, cfg.bn_momentum, cfg.bn_eps));
            model.layers.push_back(make_elu_layer(cfg.elu_gamma));
            ch = block.channels;
        }
        model.layers.push_back(make_maxpool2x2());
    }
    model.layers.push_back(make_flatten());
    int flat = ch * cfg.final_side() * cfg.final_side();
    model.layers.push_back(make_dense(flat, cfg.fc_hidden, rng));
    model.layers.push_back(make_elu_layer(cfg.elu_gamma));
    model.layers.push_back(make_dropout(cfg.dropout_p));
    model.layers.push_back(make_dense(cfg.fc_hidden, 2, rng));
    return model;
}

Tensor4 CnnModel::forward(const Tensor4& x, bool training, Rng* rng, int threads) {
    Tensor4 h = x;
    for (auto& layer : layers) h = layer->forward(h, training, rng, threads);
    return h;
}

Tensor4 CnnModel::backward(const Tensor4& dlogits, int threads) {
    Tensor4 g = dlogits;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it)
        g = (*it)->backward(g, threads);
    return g;
}

void CnnModel::zero_grads() {
    std::vector<ParamRef> refs = params();
    for (auto& p : refs) std::fill(p.grad->begin(), p.grad->end(), 0.0);
}

std::vector<ParamRef> CnnModel::params() {
    std::vector<ParamRef> refs;
    for (auto& layer : layers) layer->collect_params(refs);
    return refs;
}

std::vector<std::vector<double>*> CnnModel::state() {
    std::vector<std::vector<double>*> out;
    for (auto& layer : layers) layer->collect_state(out);
    return out;
}

std::vector<std::vector<double>> CnnModel::snapshot_state() {
    std::vector<std::vector<double>> snap;
    for (auto* v : state()) snap.push_back(*v);
    return snap;
}

void CnnModel::restore_state(const std::vector<std::vector<double>>& snap) {
    auto refs = state();
    if (refs.size() != snap.size())
        throw std::invalid_argument("restore_state: snapshot shape mismatch");
    for (std::size_t i = 0; i < refs.size(); ++i) *refs[i] = snap[i];
}

namespace {

// Softmax cross-entropy; fills dlogits with (p - onehot) / n when requested.
double softmax_ce(const Tensor4& logits, const std::vector<int>& y, Tensor4* dlogits) {
    const int n = logits.n;
    if (static_cast<std::size_t>(n) != y.size())
        throw std::invalid_argument("softmax_ce: batch size mismatch");
    if (dlogits) *dlogits = Tensor4(n, 2, 1, 1);
    double loss = 0.0;
    for (int s = 0; s < n; ++s) {
        double a = logits.v[2 * s], b = logits.v[2 * s + 1];
        double m = std::max(a, b);
        double ea = std::exp(a - m), eb = std::exp(b - m);
        double z = ea + eb;
        double p0 = ea / z, p1 = eb / z;
        double py = y[s] ? p1 : p0;
        loss -= std::log(py > 1e-300 ? py : 1e-300);
        if (dlogits) {
            dlogits->v[2 * s] = (p0 - (y[s] == 0 ? 1.0 : 0.0)) / n;
            dlogits->v[2 * s + 1] = (p1 - (y[s] == 1 ? 1.0 : 0.0)) / n;
        }
    }
    return loss / n;
}

}  // namespace

double cnn_loss_and_grad(CnnModel& model, const Tensor4& x, const std::vector<int>& y,
                         int threads) {
    Tensor4 logits = model.forward(x, true, nullptr, threads);
    Tensor4 dlogits;
    double loss = softmax_ce(logits, y, &dlogits);
    model.backward(dlogits, threads);
    return loss;
}

double cnn_batch_loss(CnnModel& model, const Tensor4& x, const std::vector<int>& y,
                      bool training, int threads) {
    Tensor4 logits = model.forward(x, training, nullptr, threads);
    return softmax_ce(logits, y, nullptr);
}

Tensor4 images_to_tensor(const std::vector<const GreyImage*>& images, int side) {
    Tensor4 t(static_cast<int>(images.size()), 1, side, side);
    for (std::size_t s = 0; s < images.size(); ++s) {
        const GreyImage& img = *images[s];
        if (img.width != side || img.height != side)
            throw std::invalid_argument("images_to_tensor: image side mismatch");
        double* dst = t.sample(static_cast<int>(s));
        for (std::size_t i = 0; i < img.pixels.size(); ++i)
            dst[i] = static_cast<double>(img.pixels[i]) / 255.0;
    }
    return t;
}

namespace {

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

EvalResult evaluate_set(CnnModel& model, const std::vector<LabeledSample>& samples,
                        int threads) {
    EvalResult res;
    if (samples.empty()) {
        res.loss = std::numeric_limits<double>::quiet_NaN();
        res.accuracy = std::numeric_limits<double>::quiet_NaN();
        return res;
    }
    const int chunk = model.cfg.batch_size;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < samples.size();
         start += static_cast<std::size_t>(chunk)) {
        std::size_t bn = std::min<std::size_t>(chunk, samples.size() - start);
        std::vector<const GreyImage*> imgs(bn);
        std::vector<int> y(bn);
        for (std::size_t i = 0; i < bn; ++i) {
            imgs[i] = &samples[start + i].image;
            y[i] = samples[start + i].label == SampleClass::Tcfa ? 1 : 0;
        }
        Tensor4 x = images_to_tensor(imgs, model.cfg.side);
        Tensor4 logits = model.forward(x, false, nullptr, threads);
        loss_sum += softmax_ce(logits, y, nullptr) * static_cast<double>(bn);
        for (std::size_t i = 0; i < bn; ++i) {
            int pred = logits.v[2 * i + 1] > logits.v[2 * i] ? 1 : 0;
            if (pred == y[i]) ++correct;
        }
    }
    res.loss = loss_sum / static_cast<double>(samples.size());
    res.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
    return res;
}

}  // namespace

std::pair<CnnModel, TrainLog> cnn_train(const std::vector<LabeledSample>& train,
                                        const std::vector<LabeledSample>& val,
                                        const CnnConfig& cfg, int threads,
                                        const CnnModel* warm_start, long initial_step) {
    cfg.validate();
    if (train.empty()) throw std::invalid_argument("cnn_train: empty training set");

    CnnModel model = cnn_build(cfg);
    if (warm_start) model.restore_state(const_cast<CnnModel*>(warm_start)->snapshot_state());

    std::vector<ParamRef> params = model.params();
    constexpr double kRmsDecay = 0.9;
    constexpr double kRmsEps = 1e-8;

    Rng shuffle_rng(derive_seed(cfg.seed, "cnn-shuffle"));
    Rng dropout_rng(derive_seed(cfg.seed, "cnn-dropout"));

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    TrainLog log;
    EarlyStopper stopper;
    stopper.patience = cfg.patience;
    std::vector<std::vector<double>> best_state = model.snapshot_state();
    long global_step = initial_step;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        double last_lr = lr_at_step(cfg.lr0, global_step, cfg.lr_decay, cfg.lr_decay_steps);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t bn = std::min<std::size_t>(cfg.batch_size, order.size() - start);
            std::vector<const GreyImage*> imgs(bn);
            std::vector<int> y(bn);
            for (std::size_t i = 0; i < bn; ++i) {
                const LabeledSample& s = train[order[start + i]];
                imgs[i] = &s.image;
                y[i] = s.label == SampleClass::Tcfa ? 1 : 0;
            }
            Tensor4 x = images_to_tensor(imgs, cfg.side);

            model.zero_grads();
            Tensor4 logits = model.forward(x, true, &dropout_rng, threads);
            Tensor4 dlogits;
            double loss = softmax_ce(logits, y, &dlogits);
            if (!std::isfinite(loss))
                throw std::runtime_error("cnn_train: loss became non-finite at epoch " +
                                         std::to_string(epoch));
            model.backward(dlogits, threads);

            double lr = lr_at_step(cfg.lr0, global_step, cfg.lr_decay, cfg.lr_decay_steps);
            last_lr = lr;
            for (auto& p : params) {
                auto& v = *p.value;
                auto& g = *p.grad;
                auto& c = *p.cache;
                for (std::size_t i = 0; i < v.size(); ++i) {
                    c[i] = kRmsDecay * c[i] + (1.0 - kRmsDecay) * g[i] * g[i];
                    v[i] -= lr * g[i] / (std::sqrt(c[i]) + kRmsEps);
                }
            }
            ++global_step;
            epoch_loss += loss * static_cast<double>(bn);
        }
        epoch_loss /= static_cast<double>(train.size());

        EvalResult ev = evaluate_set(model, val, threads);
        log.rows.push_back({epoch, epoch_loss, ev.loss, ev.accuracy, last_lr});

        if (!val.empty()) {
            bool stop = stopper.update(ev.loss, epoch);
            if (stopper.best_epoch == epoch) best_state = model.snapshot_state();
            log.best_epoch = stopper.best_epoch;
            if (stop) {
                log.stop_reason = StopReason::Patience;
                model.restore_state(best_state);
                return {std::move(model), std::move(log)};
            }
        } else {
            log.best_epoch = epoch;
        }
    }
    log.stop_reason = StopReason::Budget;
    if (!val.empty()) model.restore_state(best_state);
    return {std::move(model), std::move(log)};
}

double cnn_predict_proba(CnnModel& model, const GreyImage& image) {
    std::vector<const GreyImage*> one{&image};
    Tensor4 x = images_to_tensor(one, model.cfg.side);
    Tensor4 logits = model.forward(x, false, nullptr, 1);
    double a = logits.v[0], b = logits.v[1];
    double m = std::max(a, b);
    double ea = std::exp(a - m), eb = std::exp(b - m);
    return eb / (ea + eb);
}

std::vector<double> cnn_predict_batch(CnnModel& model,
                                      const std::vector<const GreyImage*>& images,
                                      int threads) {
    std::vector<double> scores(images.size());
    const int chunk = model.cfg.batch_size;
    for (std::size_t start = 0; start < images.size();
         start += static_cast<std::size_t>(chunk)) {
        std::size_t bn = std::min<std::size_t>(chunk, images.size() - start);
        std::vector<const GreyImage*> part(images.begin() + start,
                                           images.begin() + start + bn);
        Tensor4 x = images_to_tensor(part, model.cfg.side);
        Tensor4 logits = model.forward(x, false, nullptr, threads);
        for (std::size_t i = 0; i < bn; ++i) {
            double a = logits.v[2 * i], b = logits.v[2 * i + 1];
            double m = std::max(a, b);
            double ea = std::exp(a - m), eb = std::exp(b - m);
            scores[start + i] = eb / (ea + eb);
        }
    }
    return scores;
}

void write_trainlog_csv(const TrainLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "epoch,train_loss,val_loss,val_acc,lr\n";
    char buf[160];
    for (const auto& row : log.rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", row.epoch,
                      row.train_loss, row.val_loss, row.val_acc, row.lr);
        out << buf;
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

void cnn_save(const CnnModel& model, const std::string& path) {
    BinaryWriter w(path);
    w.str("TCFA-CNN");
    w.u32(1);
    const CnnConfig& c = model.cfg;
    w.i32(c.side);
    w.u64(c.blocks.size());
    for (const auto& b : c.blocks) {
        w.i32(b.convs);
        w.i32(b.channels);
    }
    w.f64(c.elu_gamma);
    w.f64(c.dropout_p);
    w.i32(c.fc_hidden);
    w.i32(c.batch_size);
    w.f64(c.lr0);
    w.f64(c.lr_decay);
    w.i64(c.lr_decay_steps);
    w.i32(c.patience);
    w.i32(c.max_epochs);
    w.f64(c.bn_momentum);
    w.f64(c.bn_eps);
    w.u64(c.seed);
    for (const auto& layer : model.layers) {
        w.str(layer->kind());
        layer->save(w);
    }
    w.close();
}

CnnModel cnn_load(const std::string& path) {
    BinaryReader r(path);
    if (r.str() != "TCFA-CNN") throw std::runtime_error("not a CNN model file: " + path);
    if (r.u32() != 1) throw std::runtime_error("unsupported CNN model version: " + path);
    CnnConfig c;
    c.side = r.i32();
    c.blocks.resize(r.u64());
    for (auto& b : c.blocks) {
        b.convs = r.i32();
        b.channels = r.i32();
    }
    c.elu_gamma = r.f64();
    c.dropout_p = r.f64();
    c.fc_hidden = r.i32();
    c.batch_size = r.i32();
    c.lr0 = r.f64();
    c.lr_decay = r.f64();
    c.lr_decay_steps = r.i64();
    c.patience = r.i32();
    c.max_epochs = r.i32();
    c.bn_momentum = r.f64();
    c.bn_eps = r.f64();
    c.seed = r.u64();
    CnnModel model = cnn_build(c);
    for (auto& layer : model.layers) {
        std::string kind = r.str();
        if (kind != layer->kind())
            throw std::runtime_error("model file layer order mismatch: " + path);
        layer->load(r);
    }
    return model;
}

}  // namespace tcfa
