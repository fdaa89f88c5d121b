#pragma once

#include <span>
#include <utility>
#include <vector>

#include "spdreg/errors.hpp"
#include "spdreg/trial.hpp"

namespace spdreg {

/// Symmetric positive-definite matrix, the manifold element. Symmetry and
/// positive-definiteness are checked at construction; an optional diagonal
/// loading `shrinkage` adds gamma * (trace/R) * I before validation, the
/// standard remedy for near-rank-deficient sample covariances.
class SpdMatrix {
public:
    explicit SpdMatrix(Matrix m, double shrinkage = 0.0);

    int dim() const { return static_cast<int>(value_.rows()); }
    const Matrix& value() const { return value_; }

    static SpdMatrix identity(int dim) { return SpdMatrix(Matrix::Identity(dim, dim)); }

private:
    Matrix value_;
};

/// Element of the tangent space at some base point, stored as the weighted
/// upper-triangular vectorization of a symmetric matrix. Entries follow
/// row-major upper-triangular order: (0,0), (0,1), ..., (0,R-1), (1,1), ...
/// Diagonal entries carry weight 1 and off-diagonal entries weight sqrt(2),
/// so the Euclidean norm equals the Frobenius norm of the symmetric matrix.
class TangentVector {
public:
    TangentVector(int base_dim, Vector entries);

    int base_dim() const { return base_dim_; }
    const Vector& entries() const { return entries_; }

    /// Reassemble the symmetric matrix this vector encodes.
    Matrix to_symmetric() const;

private:
    int base_dim_;
    Vector entries_;
};

/// Tangent-space dimension for base dimension r: r(r+1)/2.
constexpr int tangent_dim(int r) { return r * (r + 1) / 2; }

struct MeanConfig {
    double tolerance = 1e-8;  // Frobenius norm of iterate change
    int max_iterations = 50;
};

/// V diag(log lambda) V^T from the symmetric eigendecomposition of a.
Matrix matrix_log(const SpdMatrix& a);

/// V diag(exp lambda) V^T; the input must be symmetric, the output is SPD by
/// construction.
SpdMatrix matrix_exp(const Matrix& a);

/// (S, T) with S*S = a and T = S^{-1}. Throws IllConditionedError when the
/// eigenvalue spread exceeds 1e12.
std::pair<SpdMatrix, SpdMatrix> matrix_sqrt_and_invsqrt(const SpdMatrix& a);

/// Affine-invariant geodesic distance: sqrt(sum_r log^2 lambda_r) over the
/// eigenvalues of a^{-1} b.
double riemannian_distance(const SpdMatrix& a, const SpdMatrix& b);

/// Projects x onto the tangent space at base:
/// base^{1/2} logm(base^{-1/2} x base^{-1/2}) base^{1/2}.
Matrix log_map(const SpdMatrix& base, const SpdMatrix& x);

/// Inverse of log_map: base^{1/2} expm(base^{-1/2} v base^{-1/2}) base^{1/2}.
SpdMatrix exp_map(const SpdMatrix& base, const Matrix& v);

/// Weighted upper-triangular vectorization of logm(base^{-1/2} x base^{-1/2}).
/// The Euclidean norm of the result equals riemannian_distance(base, x).
TangentVector tangent_vectorize(const SpdMatrix& base, const SpdMatrix& x);

/// Same, but starting from an already-whitened matrix
/// w = base^{-1/2} x base^{-1/2}. Lets callers with a cached inverse square
/// root skip the factor computation.
TangentVector tangent_vectorize_whitened(const Matrix& whitened);

/// Intrinsic (Karcher) mean by fixed-point iteration from the identity:
/// mean <- Exp_mean((1/N) sum_n Log_mean(mat_n)) until the iterate change
/// drops below cfg.tolerance. Throws NonConvergenceError (carrying the last
/// iterate and gradient residual) when the iteration cap is hit, and
/// IllConditionedError when the inner matrices break down numerically.
SpdMatrix intrinsic_mean(std::span<const SpdMatrix> mats, const MeanConfig& cfg = {});

}  // namespace spdreg
