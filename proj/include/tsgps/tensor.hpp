#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "tsgps/errors.hpp"

namespace tsgps {

/// Dense 2-D row-major matrix of doubles. All math in the project runs
/// in 64-bit floating point.
class Tensor {
public:
    Tensor() = default;

    /// Zero-filled rows x cols.
    Tensor(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str());
    }

    /// Build from nested braces: Tensor::from_rows({{1,2},{3,4}}).
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

    static Tensor constant(std::size_t rows, std::size_t cols, double v) {
        Tensor t(rows, cols);
        t.fill(v);
        return t;
    }

    static Tensor identity(std::size_t n) {
        Tensor t(n, n);
        for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
        return t;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    bool all_finite() const;

    /// Exact (bitwise-value) equality; shapes must match too.
    bool operator==(const Tensor& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

// Elementwise helpers used throughout the math code.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scaled(const Tensor& a, double s);
Tensor transposed(const Tensor& a);

namespace kernels {

/// Number of worker threads used by the parallel kernels. 1 = serial.
/// The parallel kernels are bit-identical to the serial references:
/// every output element is one dot product accumulated in a fixed
/// order, so only the assignment of elements to threads changes.
void set_threads(int n);
int threads();

// Serial reference implementations, kept for testing and benchmarks.
Tensor matmul_serial(const Tensor& a, const Tensor& b);
Tensor matmul_nt_serial(const Tensor& a, const Tensor& b); // a . b^T
Tensor matmul_tn_serial(const Tensor& a, const Tensor& b); // a^T . b

// Dispatching entry points (OpenMP above the size threshold when
// threads() > 1, serial otherwise).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor matmul_tn(const Tensor& a, const Tensor& b);

} // namespace kernels

} // namespace tsgps
