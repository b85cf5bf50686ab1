#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace lens {

// Infinite-width ReLU network covariance (arc-cosine recursion).
// depth = number of hidden ReLU layers the recursion models.
struct KernelSpec {
    int depth = 2;
    double sigma_w2 = 2.0;
    double sigma_b2 = 0.1;
};

// k0 = sigma_b^2 + sigma_w^2 <x1, x2> / D, then per hidden layer
//   k' = sigma_b^2 + sigma_w^2/(2 pi) sqrt(k11 k22) (sin t + (pi - t) cos t),
//   t  = arccos(k12 / sqrt(k11 k22)), argument clamped to [-1, 1].
inline double nngp_kernel(const double* x1, const double* x2, std::size_t dim,
                          const KernelSpec& spec) {
    if (dim == 0) throw std::invalid_argument("nngp_kernel: zero-dimensional input");
    const double inv_d = 1.0 / static_cast<double>(dim);
    double d11 = 0.0, d22 = 0.0, d12 = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        d11 += x1[i] * x1[i];
        d22 += x2[i] * x2[i];
        d12 += x1[i] * x2[i];
    }
    double k11 = spec.sigma_b2 + spec.sigma_w2 * d11 * inv_d;
    double k22 = spec.sigma_b2 + spec.sigma_w2 * d22 * inv_d;
    double k12 = spec.sigma_b2 + spec.sigma_w2 * d12 * inv_d;

    constexpr double pi = std::numbers::pi;
    for (int layer = 0; layer < spec.depth; ++layer) {
        const double norm = std::sqrt(k11 * k22);
        const double c = std::clamp(norm > 0.0 ? k12 / norm : 0.0, -1.0, 1.0);
        const double theta = std::acos(c);
        k12 = spec.sigma_b2 +
              spec.sigma_w2 / (2.0 * pi) * norm * (std::sin(theta) + (pi - theta) * c);
        k11 = spec.sigma_b2 + 0.5 * spec.sigma_w2 * k11;
        k22 = spec.sigma_b2 + 0.5 * spec.sigma_w2 * k22;
    }
    return k12;
}

inline double nngp_kernel(const std::vector<double>& x1, const std::vector<double>& x2,
                          const KernelSpec& spec) {
    if (x1.size() != x2.size()) throw std::invalid_argument("nngp_kernel: dimension mismatch");
    return nngp_kernel(x1.data(), x2.data(), x1.size(), spec);
}

}  // namespace lens
