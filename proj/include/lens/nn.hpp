#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lens/rng.hpp"
#include "lens/tensor.hpp"

namespace lens {

// One dense layer's parameters. W is [out x in], b is [out].
struct DenseWeights {
    Tensor W;
    Tensor b;

    DenseWeights() = default;
    DenseWeights(Tensor w, Tensor bias) : W(std::move(w)), b(std::move(bias)) {
        if (W.rank() != 2 || b.rank() != 1 || b.shape()[0] != W.rows()) {
            throw std::invalid_argument("DenseWeights: inconsistent W/b shapes");
        }
    }

    std::size_t in() const { return W.cols(); }
    std::size_t out() const { return W.rows(); }

    friend bool operator==(const DenseWeights& a, const DenseWeights& b) {
        return a.W == b.W && a.b == b.b;
    }
};

struct LayerKind {
    enum class Kind { dense, dense_relu };

    Kind kind = Kind::dense;
    std::size_t in = 0;
    std::size_t out = 0;

    static LayerKind dense(std::size_t in, std::size_t out) {
        check_dims(in, out);
        return {Kind::dense, in, out};
    }
    static LayerKind dense_relu(std::size_t in, std::size_t out) {
        check_dims(in, out);
        return {Kind::dense_relu, in, out};
    }

    bool relu() const { return kind == Kind::dense_relu; }

    friend bool operator==(const LayerKind&, const LayerKind&) = default;

private:
    static void check_dims(std::size_t in, std::size_t out) {
        if (in < 1 || out < 1) {
            throw std::invalid_argument("LayerKind: in/out must be >= 1");
        }
    }
};

// out = x * W^T + b, with elementwise max(., 0) iff relu.
// Deterministic: fixed loop order, no reassociation.
inline Tensor dense_forward(const DenseWeights& w, const Tensor& x, bool relu) {
    if (x.rank() != 2 || x.cols() != w.in()) {
        throw std::invalid_argument("dense_forward: input has " +
                                    std::to_string(x.rank() == 2 ? x.cols() : 0) +
                                    " cols, layer expects " + std::to_string(w.in()));
    }
    const std::size_t batch = x.rows(), nin = w.in(), nout = w.out();
    Tensor out = Tensor::matrix(batch, nout);
    for (std::size_t r = 0; r < batch; ++r) {
        const double* xi = x.row(r);
        for (std::size_t o = 0; o < nout; ++o) {
            const double* wrow = w.W.row(o);
            double acc = w.b.values()[o];
            for (std::size_t i = 0; i < nin; ++i) {
                acc += wrow[i] * xi[i];
            }
            out.at(r, o) = relu && acc < 0.0 ? 0.0 : acc;
        }
    }
    return out;
}

struct DenseGrads {
    Tensor grad_W;  // [out x in]
    Tensor grad_b;  // [out]
    Tensor grad_x;  // [batch x in]
};

// Reverse-mode gradients of dense_forward. The pre-activation is recomputed
// from (w, x); relu adopts the max(0,.) subgradient with relu'(0) = 0.
inline DenseGrads dense_backward(const DenseWeights& w, const Tensor& x,
                                 const Tensor& grad_out, bool relu) {
    if (x.rank() != 2 || x.cols() != w.in()) {
        throw std::invalid_argument("dense_backward: x/layer shape mismatch");
    }
    if (grad_out.rank() != 2 || grad_out.rows() != x.rows() || grad_out.cols() != w.out()) {
        throw std::invalid_argument("dense_backward: grad_out shape mismatch");
    }
    const std::size_t batch = x.rows(), nin = w.in(), nout = w.out();

    // grad through the activation
    Tensor grad_z = grad_out;
    if (relu) {
        for (std::size_t r = 0; r < batch; ++r) {
            const double* xi = x.row(r);
            for (std::size_t o = 0; o < nout; ++o) {
                const double* wrow = w.W.row(o);
                double z = w.b.values()[o];
                for (std::size_t i = 0; i < nin; ++i) z += wrow[i] * xi[i];
                if (z <= 0.0) grad_z.at(r, o) = 0.0;
            }
        }
    }

    DenseGrads g{Tensor::matrix(nout, nin), Tensor({nout}), Tensor::matrix(batch, nin)};
    for (std::size_t r = 0; r < batch; ++r) {
        const double* xi = x.row(r);
        for (std::size_t o = 0; o < nout; ++o) {
            const double gz = grad_z.at(r, o);
            if (gz == 0.0) continue;
            g.grad_b.values()[o] += gz;
            double* gw = g.grad_W.data() + o * nin;
            const double* wrow = w.W.row(o);
            double* gx = g.grad_x.data() + r * nin;
            for (std::size_t i = 0; i < nin; ++i) {
                gw[i] += gz * xi[i];
                gx[i] += gz * wrow[i];
            }
        }
    }
    return g;
}

// Mean squared error over all elements; grad = 2 (pred - target) / batch.
inline std::pair<double, Tensor> mse_loss(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target)) {
        throw std::invalid_argument("mse_loss: shape mismatch");
    }
    const std::size_t n = pred.size();
    if (n == 0) {
        throw std::invalid_argument("mse_loss: empty prediction");
    }
    Tensor grad(pred.shape());
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = pred.values()[i] - target.values()[i];
        loss += d * d;
        grad.values()[i] = 2.0 * d / static_cast<double>(n);
    }
    return {loss / static_cast<double>(n), std::move(grad)};
}

inline void sgd_step(std::vector<double>& params, const std::vector<double>& grads, double lr) {
    if (params.size() != grads.size()) {
        throw std::invalid_argument("sgd_step: param/grad size mismatch");
    }
    if (!(lr > 0.0)) {
        throw std::invalid_argument("sgd_step: lr must be > 0");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] -= lr * grads[i];
    }
}

inline void sgd_step(DenseWeights& w, const DenseGrads& g, double lr) {
    sgd_step(w.W.values(), g.grad_W.values(), lr);
    sgd_step(w.b.values(), g.grad_b.values(), lr);
}

// He-normal for relu layers (std = sqrt(2/in)), Glorot-normal otherwise.
// Biases start at zero.
inline DenseWeights init_dense(const LayerKind& kind, Rng& rng) {
    const double std_dev = kind.relu()
                               ? std::sqrt(2.0 / static_cast<double>(kind.in))
                               : std::sqrt(2.0 / static_cast<double>(kind.in + kind.out));
    Tensor W = Tensor::matrix(kind.out, kind.in);
    std::normal_distribution<double> d(0.0, std_dev);
    for (double& v : W.values()) v = d(rng);
    return {std::move(W), Tensor({kind.out})};
}

}  // namespace lens
