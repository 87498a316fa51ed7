// Copyright imkit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <random>

#include "imkit/errors.hpp"

namespace imkit {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

// Seedable 64-bit random stream. mt19937_64 output is fully specified by the
// standard and the uniform mapping below avoids std::uniform_real_distribution
// (whose draw sequence is implementation-defined), so seeded runs are
// bit-reproducible.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Strictly inside (0, 1); 53-bit resolution.
    double uniform01() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  private:
    std::mt19937_64 engine_;
};

namespace linalg {

bool is_finite(const Mat& m);

// Random matrix with entries i.i.d. uniform on [-scale, scale], regenerated
// (at most 16 times) until the numerical column rank equals cols, i.e. the
// smallest singular value exceeds 1e-10 times the largest.
// Throws GenerationError after 16 failures, ConfigError on bad dims/scale.
Mat gen_full_col_rank(Index rows, Index cols, double scale, Rng& rng);

// Moore-Penrose left inverse (m^T m)^{-1} m^T via a pivoted LU solve.
// Throws RankError when m^T m is numerically singular.
Mat left_inverse(const Mat& m);

// Orthonormal basis of the orthogonal complement of col(pi1), which equals
// ker(pi1^L) for the pseudo-inverse left inverse. Columns = rows - cols.
// Rows of the result are made nonzero when possible by right-multiplying with
// random orthogonal matrices (up to 16 attempts); a kernel that forces a zero
// row (e.g. an axis-aligned complement of dimension 1) is returned as-is.
Mat kernel_basis(const Mat& pi1, Rng& rng);

struct RowNorms {
    Vec l1;  // per-row sum of absolute values
    Vec l2;  // per-row Euclidean norm
};

RowNorms row_norms(const Mat& m);

// Compensated (fma-based, Ogita-Rump-Oishi) matrix-vector products. The
// decode paths multiply O(1e4) key entries against O(1e4..1e5) noise-bearing
// data whose true result is O(1); naive accumulation loses ~eps * sum|terms|
// there, compensation keeps the error near eps * |result|. Deterministic.
Vec accurate_product(const Mat& a, const Vec& x);

// Row-wise a*x + b*y in one compensated accumulation per row.
Vec accurate_product_sum(const Mat& a, const Vec& x, const Mat& b, const Vec& y);

// Row-wise u - p*y in one compensated accumulation per row.
Vec accurate_offset_difference(const Vec& u, const Mat& p, const Vec& y);

// sigma_max / sigma_min; +inf for numerically rank-deficient input.
double condition_number(const Mat& m);

// Serialization: two u64 dims then rows*cols f64, row-major, little-endian.
void write_mat(std::ostream& os, const Mat& m);
Mat read_mat(std::istream& is);

// u64 dim then dim f64, little-endian.
void write_vec(std::ostream& os, const Vec& v);
Vec read_vec(std::istream& is);

}  // namespace linalg
}  // namespace imkit
