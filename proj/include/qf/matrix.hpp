#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace qf {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. Column blocks double as batches: a
// hidden-state block for a batch of A quantile levels is stored as H x A.
struct Mat {
    int rows = 0;
    int cols = 0;
    Vec a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}
    Mat(int r, int c, Vec data) : rows(r), cols(c), a(std::move(data)) {
        if (a.size() != static_cast<std::size_t>(r) * c)
            throw std::invalid_argument("Mat: data size does not match shape");
    }

    double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

    std::size_t size() const { return a.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    void zero() { std::fill(a.begin(), a.end(), 0.0); }
    void resize(int r, int c) {
        rows = r;
        cols = c;
        a.assign(static_cast<std::size_t>(r) * c, 0.0);
    }
};

inline void check_shape(const Mat& m, int rows, int cols, const char* what) {
    if (m.rows != rows || m.cols != cols)
        throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                                    std::to_string(cols) + ", got " + std::to_string(m.rows) + "x" +
                                    std::to_string(m.cols));
}

// C += A * B
inline void gemm_acc(Mat& c, const Mat& a, const Mat& b) {
    if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
        throw std::invalid_argument("gemm_acc: shape mismatch");
    const int n = a.rows, k = a.cols, m = b.cols;
    for (int i = 0; i < n; ++i) {
        double* crow = &c.a[static_cast<std::size_t>(i) * m];
        const double* arow = &a.a[static_cast<std::size_t>(i) * k];
        for (int p = 0; p < k; ++p) {
            const double t = arow[p];
            const double* brow = &b.a[static_cast<std::size_t>(p) * m];
            for (int j = 0; j < m; ++j) crow[j] += t * brow[j];
        }
    }
}

// C += A * B^T
inline void gemm_acc_nt(Mat& c, const Mat& a, const Mat& b) {
    if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows)
        throw std::invalid_argument("gemm_acc_nt: shape mismatch");
    const int n = a.rows, k = a.cols, m = b.rows;
    for (int i = 0; i < n; ++i) {
        const double* arow = &a.a[static_cast<std::size_t>(i) * k];
        double* crow = &c.a[static_cast<std::size_t>(i) * m];
        for (int j = 0; j < m; ++j) {
            const double* brow = &b.a[static_cast<std::size_t>(j) * k];
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] += s;
        }
    }
}

// C += A^T * B
inline void gemm_acc_tn(Mat& c, const Mat& a, const Mat& b) {
    if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
        throw std::invalid_argument("gemm_acc_tn: shape mismatch");
    const int n = a.cols, k = a.rows, m = b.cols;
    for (int p = 0; p < k; ++p) {
        const double* arow = &a.a[static_cast<std::size_t>(p) * n];
        const double* brow = &b.a[static_cast<std::size_t>(p) * m];
        for (int i = 0; i < n; ++i) {
            const double t = arow[i];
            double* crow = &c.a[static_cast<std::size_t>(i) * m];
            for (int j = 0; j < m; ++j) crow[j] += t * brow[j];
        }
    }
}

// out(i, j) += bias(i)
inline void add_bias(Mat& out, const Vec& bias) {
    if (static_cast<int>(bias.size()) != out.rows)
        throw std::invalid_argument("add_bias: bias length != rows");
    for (int i = 0; i < out.rows; ++i) {
        double* row = &out.a[static_cast<std::size_t>(i) * out.cols];
        for (int j = 0; j < out.cols; ++j) row[j] += bias[i];
    }
}

}  // namespace qf
