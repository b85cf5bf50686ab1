#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lens/ensemble.hpp"
#include "lens/nngp.hpp"
#include "lens/tensor.hpp"

namespace lens {

namespace detail {

inline Eigen::MatrixXd kernel_matrix(const Tensor& A, const Tensor& B, const KernelSpec& spec) {
    if (A.cols() != B.cols()) throw std::invalid_argument("kernel_matrix: dimension mismatch");
    Eigen::MatrixXd K(A.rows(), B.rows());
    for (std::size_t i = 0; i < A.rows(); ++i) {
        for (std::size_t j = 0; j < B.rows(); ++j) {
            K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                nngp_kernel(A.row(i), B.row(j), A.cols(), spec);
        }
    }
    if (!K.allFinite()) throw std::runtime_error("kernel_matrix: non-finite kernel value");
    return K;
}

inline const std::vector<double>& jitter_ladder() {
    static const std::vector<double> ladder{0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6};
    return ladder;
}

// Cholesky of K + diag_add I, escalating jitter until the factorization
// succeeds. Throws once the ladder is exhausted.
inline std::pair<Eigen::MatrixXd, double> cholesky_with_jitter(const Eigen::MatrixXd& K,
                                                               double diag_add) {
    for (double jitter : jitter_ladder()) {
        Eigen::MatrixXd M = K;
        M.diagonal().array() += diag_add + jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(M);
        if (llt.info() == Eigen::Success) {
            return {llt.matrixL(), jitter};
        }
    }
    throw std::runtime_error("cholesky_with_jitter: factorization failed at max jitter");
}

}  // namespace detail

// Exact GP regression posterior under the NNGP prior.
struct GpPosterior {
    KernelSpec kernel;
    double noise_var = 0.0;
    Tensor X;               // training inputs [T x D]
    Eigen::MatrixXd L;      // lower Cholesky factor of K(X,X) + noise I (+ jitter)
    Eigen::VectorXd alpha;  // (K + noise I)^{-1} y
    double jitter = 0.0;
};

inline GpPosterior gp_fit(const Tensor& X, const Tensor& y, const KernelSpec& spec,
                          double noise_var) {
    if (X.rank() != 2 || y.rank() != 2 || y.cols() != 1 || X.rows() != y.rows()) {
        throw std::invalid_argument("gp_fit: X must be [T x D], y must be [T x 1]");
    }
    if (X.rows() < 1) throw std::invalid_argument("gp_fit: empty training set");
    if (noise_var < 0.0) throw std::invalid_argument("gp_fit: negative noise variance");

    GpPosterior post;
    post.kernel = spec;
    post.noise_var = noise_var;
    post.X = X;
    const Eigen::MatrixXd K = detail::kernel_matrix(X, X, spec);
    auto [L, jitter] = detail::cholesky_with_jitter(K, noise_var);
    post.L = std::move(L);
    post.jitter = jitter;

    Eigen::VectorXd yv(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) yv(static_cast<Eigen::Index>(i)) = y.at(i, 0);
    post.alpha = post.L.transpose().triangularView<Eigen::Upper>().solve(
        post.L.triangularView<Eigen::Lower>().solve(yv));
    return post;
}

// Predictive mean and latent variance at one point. include_noise adds the
// observation noise, which is what a model predicting y is compared against.
inline GaussianPrediction gp_predict(const GpPosterior& post, const double* x,
                                     bool include_noise = false) {
    const std::size_t t = post.X.rows();
    const std::size_t d = post.X.cols();
    Eigen::VectorXd ks(t);
    for (std::size_t i = 0; i < t; ++i) {
        ks(static_cast<Eigen::Index>(i)) = nngp_kernel(post.X.row(i), x, d, post.kernel);
    }
    const double kxx = nngp_kernel(x, x, d, post.kernel);
    const double mean = ks.dot(post.alpha);
    const Eigen::VectorXd v = post.L.triangularView<Eigen::Lower>().solve(ks);
    double var = std::max(kxx - v.squaredNorm(), 0.0);
    if (include_noise) var += post.noise_var;
    return {mean, var};
}

inline std::vector<GaussianPrediction> gp_predict_all(const GpPosterior& post, const Tensor& X,
                                                      bool include_noise = false) {
    if (X.rank() != 2 || X.cols() != post.X.cols()) {
        throw std::invalid_argument("gp_predict_all: input dimension mismatch");
    }
    std::vector<GaussianPrediction> preds;
    preds.reserve(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) {
        preds.push_back(gp_predict(post, X.row(i), include_noise));
    }
    return preds;
}

}  // namespace lens
