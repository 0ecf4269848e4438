#include "tsgps/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tsgps {

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t r = rows.size();
    std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c)
            throw ShapeError("ragged initializer: row of length " +
                             std::to_string(row.size()) + " in a " +
                             std::to_string(c) + "-column tensor");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(r, c, std::move(data));
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": shapes " + a.shape_str() +
                         " and " + b.shape_str() + " differ");
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out(a.rows(), a.cols());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < a.size(); ++i) po[i] = pa[i] + pb[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out(a.rows(), a.cols());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < a.size(); ++i) po[i] = pa[i] - pb[i];
    return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "hadamard");
    Tensor out(a.rows(), a.cols());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < a.size(); ++i) po[i] = pa[i] * pb[i];
    return out;
}

Tensor scaled(const Tensor& a, double s) {
    Tensor out(a.rows(), a.cols());
    const double* pa = a.data();
    double* po = out.data();
    for (std::size_t i = 0; i < a.size(); ++i) po[i] = pa[i] * s;
    return out;
}

Tensor transposed(const Tensor& a) {
    Tensor out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            out(j, i) = a(i, j);
    return out;
}

namespace kernels {

namespace {

std::atomic<int> g_threads{1};

// Work (multiply-adds) below which spinning up a team is not worth it.
constexpr std::size_t kParallelCutoff = 64 * 1024;

void check_inner(const Tensor& a, const Tensor& b, std::size_t ak, std::size_t bk,
                 const char* what) {
    if (ak != bk)
        throw ShapeError(std::string(what) + ": inner dimensions of " +
                         a.shape_str() + " and " + b.shape_str() + " disagree");
}

// C[i,:] += a_ip * B[p,:], the vectorizable core of all three kernels.
inline void axpy_row(double* __restrict__ c, const double* __restrict__ b,
                     double a, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
}

inline double dot(const double* __restrict__ x, const double* __restrict__ y,
                  std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

} // namespace

void set_threads(int n) { g_threads.store(n < 1 ? 1 : n); }
int threads() { return g_threads.load(); }

Tensor matmul_serial(const Tensor& a, const Tensor& b) {
    check_inner(a, b, a.cols(), b.rows(), "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c.row(i);
        const double* ai = a.row(i);
        for (std::size_t p = 0; p < k; ++p)
            axpy_row(ci, b.row(p), ai[p], n);
    }
    return c;
}

Tensor matmul_nt_serial(const Tensor& a, const Tensor& b) {
    check_inner(a, b, a.cols(), b.cols(), "matmul_nt");
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    Tensor c(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c.row(i);
        const double* ai = a.row(i);
        for (std::size_t j = 0; j < n; ++j)
            ci[j] = dot(ai, b.row(j), k);
    }
    return c;
}

Tensor matmul_tn_serial(const Tensor& a, const Tensor& b) {
    check_inner(a, b, a.rows(), b.rows(), "matmul_tn");
    const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
    Tensor c(m, n);
    for (std::size_t p = 0; p < k; ++p) {
        const double* ap = a.row(p);
        const double* bp = b.row(p);
        for (std::size_t i = 0; i < m; ++i)
            axpy_row(c.row(i), bp, ap[i], n);
    }
    return c;
}

#ifdef _OPENMP

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_inner(a, b, a.cols(), b.rows(), "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (threads() <= 1 || m * k * n < kParallelCutoff) return matmul_serial(a, b);
    Tensor c(m, n);
#pragma omp parallel for num_threads(threads()) schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        double* ci = c.row(static_cast<std::size_t>(i));
        const double* ai = a.row(static_cast<std::size_t>(i));
        for (std::size_t p = 0; p < k; ++p)
            axpy_row(ci, b.row(p), ai[p], n);
    }
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    check_inner(a, b, a.cols(), b.cols(), "matmul_nt");
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    if (threads() <= 1 || m * k * n < kParallelCutoff) return matmul_nt_serial(a, b);
    Tensor c(m, n);
#pragma omp parallel for num_threads(threads()) schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        double* ci = c.row(static_cast<std::size_t>(i));
        const double* ai = a.row(static_cast<std::size_t>(i));
        for (std::size_t j = 0; j < n; ++j)
            ci[j] = dot(ai, b.row(j), k);
    }
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    check_inner(a, b, a.rows(), b.rows(), "matmul_tn");
    const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
    if (threads() <= 1 || m * k * n < kParallelCutoff) return matmul_tn_serial(a, b);
    Tensor c(m, n);
    // Parallel over output rows: each thread scans all of a/b but owns
    // its slice of c, accumulating in the same p-order as the serial kernel.
#pragma omp parallel for num_threads(threads()) schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        double* ci = c.row(static_cast<std::size_t>(i));
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a(p, static_cast<std::size_t>(i));
            axpy_row(ci, b.row(p), aip, n);
        }
    }
    return c;
}

#else

Tensor matmul(const Tensor& a, const Tensor& b) { return matmul_serial(a, b); }
Tensor matmul_nt(const Tensor& a, const Tensor& b) { return matmul_nt_serial(a, b); }
Tensor matmul_tn(const Tensor& a, const Tensor& b) { return matmul_tn_serial(a, b); }

#endif

} // namespace kernels

} // namespace tsgps
