#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <utility>
#include <vector>

namespace lens {

// Dense row-major array of 64-bit floats. The only value carrier in the
// library; almost always rank 2 ([batch x features]).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(element_count(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (element_count(shape_) != data_.size()) {
            throw std::invalid_argument("Tensor: product(shape) != data length");
        }
    }

    // Validating constructor: rejects NaN/Inf. Used at API boundaries.
    static Tensor checked(std::vector<std::size_t> shape, std::vector<double> data) {
        Tensor t(std::move(shape), std::move(data));
        if (!t.all_finite()) {
            throw std::invalid_argument("Tensor: non-finite element");
        }
        return t;
    }

    static Tensor matrix(std::size_t rows, std::size_t cols) {
        return Tensor({rows, cols});
    }

    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        std::size_t r = rows.size();
        std::size_t c = r == 0 ? 0 : rows.begin()->size();
        std::vector<double> data;
        data.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) {
                throw std::invalid_argument("Tensor::from_rows: ragged rows");
            }
            data.insert(data.end(), row.begin(), row.end());
        }
        return Tensor({r, c}, std::move(data));
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }

    std::size_t rows() const {
        require_matrix();
        return shape_[0];
    }
    std::size_t cols() const {
        require_matrix();
        return shape_[1];
    }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    const double* row(std::size_t r) const { return data_.data() + r * cols(); }

    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

    void require_matrix() const {
        if (shape_.size() != 2) {
            throw std::invalid_argument("Tensor: matrix access on non-matrix");
        }
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

}  // namespace lens
