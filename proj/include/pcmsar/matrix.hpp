#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pcmsar/errors.hpp"

namespace pcmsar {

using Vec = std::vector<double>;

// Small dense row-major matrix. Everything in the loss stack is tiny, so a
// plain triple-loop multiply is all we need.
struct Mat {
    int rows = 0;
    int cols = 0;
    Vec a;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0)
        : rows(r), cols(c),
          a(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

    double operator()(int i, int j) const {
        return a[static_cast<std::size_t>(i) * cols + j];
    }
    double& operator()(int i, int j) {
        return a[static_cast<std::size_t>(i) * cols + j];
    }
    const double* row(int i) const {
        return a.data() + static_cast<std::size_t>(i) * cols;
    }
    double* row(int i) {
        return a.data() + static_cast<std::size_t>(i) * cols;
    }
};

inline void check_dims(bool ok, const std::string& what) {
    if (!ok) throw ParamError("shape mismatch in " + what);
}

// C = A * B
inline Mat matmul(const Mat& A, const Mat& B) {
    check_dims(A.cols == B.rows, "matmul");
    Mat C(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i) {
        for (int k = 0; k < A.cols; ++k) {
            double aik = A(i, k);
            if (aik == 0.0) continue;
            const double* brow = B.row(k);
            double* crow = C.row(i);
            for (int j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return C;
}

// C = A * B^T
inline Mat matmul_abt(const Mat& A, const Mat& B) {
    check_dims(A.cols == B.cols, "matmul_abt");
    Mat C(A.rows, B.rows);
    for (int i = 0; i < A.rows; ++i) {
        for (int j = 0; j < B.rows; ++j) {
            double s = 0.0;
            const double* ar = A.row(i);
            const double* br = B.row(j);
            for (int k = 0; k < A.cols; ++k) s += ar[k] * br[k];
            C(i, j) = s;
        }
    }
    return C;
}

// C = A^T * B
inline Mat matmul_atb(const Mat& A, const Mat& B) {
    check_dims(A.rows == B.rows, "matmul_atb");
    Mat C(A.cols, B.cols);
    for (int k = 0; k < A.rows; ++k) {
        const double* ar = A.row(k);
        const double* br = B.row(k);
        for (int i = 0; i < A.cols; ++i) {
            double aki = ar[i];
            if (aki == 0.0) continue;
            double* crow = C.row(i);
            for (int j = 0; j < B.cols; ++j) crow[j] += aki * br[j];
        }
    }
    return C;
}

inline Vec col_mean(const Mat& A) {
    Vec m(static_cast<std::size_t>(A.cols), 0.0);
    for (int i = 0; i < A.rows; ++i) {
        const double* r = A.row(i);
        for (int j = 0; j < A.cols; ++j) m[static_cast<std::size_t>(j)] += r[j];
    }
    for (double& v : m) v /= A.rows;
    return m;
}

inline void add_scaled(Mat& dst, const Mat& src, double s) {
    check_dims(dst.rows == src.rows && dst.cols == src.cols, "add_scaled");
    for (std::size_t i = 0; i < dst.a.size(); ++i) dst.a[i] += s * src.a[i];
}

}  // namespace pcmsar
