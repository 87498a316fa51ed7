// Copyright imkit contributors
// SPDX-License-Identifier: Apache-2.0

#include "imkit/linalg.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

#include "imkit/serial.hpp"

namespace imkit::linalg {

namespace {

constexpr double kRankTol = 1e-10;  // relative singular-value cutoff

Mat random_uniform(Index rows, Index cols, double scale, Rng& rng) {
    Mat m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-scale, scale);
    return m;
}

bool has_full_col_rank(const Mat& m) {
    Eigen::BDCSVD<Mat> svd(m);
    const Vec& sv = svd.singularValues();
    if (sv.size() == 0) return false;
    return sv(sv.size() - 1) > kRankTol * sv(0);
}

// Random orthogonal matrix (Q factor of a random square matrix).
Mat random_orthogonal(Index n, Rng& rng) {
    Mat g = random_uniform(n, n, 1.0, rng);
    Eigen::HouseholderQR<Mat> qr(g);
    return qr.householderQ() * Mat::Identity(n, n);
}

}  // namespace

bool is_finite(const Mat& m) {
    return m.allFinite();
}

Mat gen_full_col_rank(Index rows, Index cols, double scale, Rng& rng) {
    if (rows < 1 || cols < 1 || rows < cols)
        throw ConfigError("gen_full_col_rank: need rows >= cols >= 1");
    if (scale < 0.0 || !std::isfinite(scale))
        throw ConfigError("gen_full_col_rank: scale must be nonnegative and finite");
    // scale == 0 runs through the attempts and surfaces as a generation
    // failure, matching the degenerate-rng case.
    for (int attempt = 0; attempt < 16; ++attempt) {
        Mat m = random_uniform(rows, cols, scale, rng);
        if (has_full_col_rank(m)) return m;
    }
    throw GenerationError("gen_full_col_rank: rank-deficient after 16 attempts (degenerate rng or scale?)");
}

Mat left_inverse(const Mat& m) {
    const Mat gram = m.transpose() * m;
    Eigen::FullPivLU<Mat> lu(gram);
    lu.setThreshold(kRankTol);
    if (!lu.isInvertible())
        throw RankError("left_inverse: m^T m numerically singular (input not full column rank)");
    return lu.solve(m.transpose());
}

Mat kernel_basis(const Mat& pi1, Rng& rng) {
    const Index rows = pi1.rows(), cols = pi1.cols();
    if (rows <= cols)
        throw RankError("kernel_basis: rows must exceed cols (empty kernel)");
    if (!has_full_col_rank(pi1))
        throw RankError("kernel_basis: input not full column rank");

    // Last rows-cols columns of the full Q factor span the complement.
    Eigen::HouseholderQR<Mat> qr(pi1);
    Mat q = qr.householderQ() * Mat::Identity(rows, rows);
    Mat n1 = q.rightCols(rows - cols);

    auto min_row_norm = [](const Mat& m) { return m.rowwise().norm().minCoeff(); };
    for (int attempt = 0; attempt < 16 && min_row_norm(n1) < 1e-12; ++attempt) {
        n1 = n1 * random_orthogonal(n1.cols(), rng);
    }
    return n1;
}

RowNorms row_norms(const Mat& m) {
    RowNorms out;
    out.l1 = m.cwiseAbs().rowwise().sum();
    out.l2 = m.rowwise().norm();
    return out;
}

namespace {

// Error-free transformations: TwoSum and fma-based TwoProduct.
struct CompensatedAccumulator {
    double sum = 0.0;
    double comp = 0.0;

    void add_product(double a, double b) {
        const double p = a * b;
        const double perr = std::fma(a, b, -p);
        add(p);
        comp += perr;
    }

    void add(double v) {
        const double t = sum + v;
        if (std::abs(sum) >= std::abs(v)) {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }

    double value() const { return sum + comp; }
};

}  // namespace

Vec accurate_product(const Mat& a, const Vec& x) {
    if (a.cols() != x.size()) throw DimensionError("accurate_product: shape mismatch");
    Vec out(a.rows());
    for (Index i = 0; i < a.rows(); ++i) {
        CompensatedAccumulator acc;
        for (Index j = 0; j < a.cols(); ++j) acc.add_product(a(i, j), x(j));
        out(i) = acc.value();
    }
    return out;
}

Vec accurate_product_sum(const Mat& a, const Vec& x, const Mat& b, const Vec& y) {
    if (a.cols() != x.size() || b.cols() != y.size() || a.rows() != b.rows())
        throw DimensionError("accurate_product_sum: shape mismatch");
    Vec out(a.rows());
    for (Index i = 0; i < a.rows(); ++i) {
        CompensatedAccumulator acc;
        for (Index j = 0; j < a.cols(); ++j) acc.add_product(a(i, j), x(j));
        for (Index j = 0; j < b.cols(); ++j) acc.add_product(b(i, j), y(j));
        out(i) = acc.value();
    }
    return out;
}

Vec accurate_offset_difference(const Vec& u, const Mat& p, const Vec& y) {
    if (p.cols() != y.size() || p.rows() != u.size())
        throw DimensionError("accurate_offset_difference: shape mismatch");
    Vec out(u.size());
    for (Index i = 0; i < u.size(); ++i) {
        CompensatedAccumulator acc;
        acc.add(u(i));
        for (Index j = 0; j < p.cols(); ++j) acc.add_product(-p(i, j), y(j));
        out(i) = acc.value();
    }
    return out;
}

double condition_number(const Mat& m) {
    Eigen::BDCSVD<Mat> svd(m);
    const Vec& sv = svd.singularValues();
    const double smin = sv(sv.size() - 1);
    if (smin <= 0.0 || sv(0) <= 0.0) return std::numeric_limits<double>::infinity();
    return sv(0) / smin;
}

void write_mat(std::ostream& os, const Mat& m) {
    serial::put_u64(os, static_cast<std::uint64_t>(m.rows()));
    serial::put_u64(os, static_cast<std::uint64_t>(m.cols()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) serial::put_f64(os, m(i, j));
}

Mat read_mat(std::istream& is) {
    const std::uint64_t rows = serial::get_u64(is);
    const std::uint64_t cols = serial::get_u64(is);
    if (rows == 0 || cols == 0 || rows > (1u << 24) || cols > (1u << 24))
        throw IoError("read_mat: implausible dimensions");
    Mat m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = serial::get_f64(is);
    return m;
}

void write_vec(std::ostream& os, const Vec& v) {
    serial::put_u64(os, static_cast<std::uint64_t>(v.size()));
    for (Index i = 0; i < v.size(); ++i) serial::put_f64(os, v(i));
}

Vec read_vec(std::istream& is) {
    const std::uint64_t dim = serial::get_u64(is);
    if (dim > (1u << 26)) throw IoError("read_vec: implausible dimension");
    Vec v(static_cast<Index>(dim));
    for (Index i = 0; i < v.size(); ++i) v(i) = serial::get_f64(is);
    return v;
}

}  // namespace imkit::linalg
