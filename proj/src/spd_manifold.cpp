#include "spdreg/spd_manifold.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace spdreg {

namespace {

constexpr double kSymmetryTol = 1e-10;
constexpr double kConditionFloor = 1e-12;

bool is_symmetric(const Matrix& m) {
    if (m.rows() != m.cols()) return false;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < m.cols(); ++j) {
            const double tol = kSymmetryTol * std::max(1.0, std::abs(m(i, j)));
            if (std::abs(m(i, j) - m(j, i)) > tol) return false;
        }
    }
    return true;
}

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Eigendecomposition of a symmetric matrix, re-symmetrized first to kill
// floating-point drift from products like T*x*T.
Eigen::SelfAdjointEigenSolver<Matrix> sym_eig(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(m));
    if (solver.info() != Eigen::Success) {
        throw IllConditionedError("symmetric eigendecomposition failed");
    }
    return solver;
}

void require_same_dim(const SpdMatrix& a, const SpdMatrix& b) {
    if (a.dim() != b.dim()) {
        throw ShapeError("SPD operands have different dimensions: " +
                         std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
    }
}

}  // namespace

SpdMatrix::SpdMatrix(Matrix m, double shrinkage) {
    if (m.rows() == 0 || m.rows() != m.cols()) {
        throw ShapeError("SpdMatrix requires a square nonempty matrix");
    }
    if (!m.allFinite()) {
        throw InvalidInputError("SpdMatrix entries must be finite");
    }
    if (!is_symmetric(m)) {
        throw InvalidInputError("SpdMatrix must be symmetric");
    }
    if (shrinkage > 0.0) {
        const double load = shrinkage * m.trace() / static_cast<double>(m.rows());
        m += load * Matrix::Identity(m.rows(), m.cols());
    }
    Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(m), Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success || solver.eigenvalues().minCoeff() <= 0.0) {
        throw InvalidInputError("SpdMatrix must be positive-definite");
    }
    value_ = symmetrize(m);
}

TangentVector::TangentVector(int base_dim, Vector entries)
    : base_dim_(base_dim), entries_(std::move(entries)) {
    if (base_dim_ <= 0 || entries_.size() != tangent_dim(base_dim_)) {
        throw ShapeError("TangentVector length must be base_dim*(base_dim+1)/2");
    }
}

Matrix TangentVector::to_symmetric() const {
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    Matrix m(base_dim_, base_dim_);
    Eigen::Index idx = 0;
    for (int i = 0; i < base_dim_; ++i) {
        for (int j = i; j < base_dim_; ++j, ++idx) {
            const double v = (i == j) ? entries_[idx] : entries_[idx] * inv_sqrt2;
            m(i, j) = v;
            m(j, i) = v;
        }
    }
    return m;
}

Matrix matrix_log(const SpdMatrix& a) {
    auto eig = sym_eig(a.value());
    const Vector logs = eig.eigenvalues().array().log();
    return symmetrize(eig.eigenvectors() * logs.asDiagonal() * eig.eigenvectors().transpose());
}

SpdMatrix matrix_exp(const Matrix& a) {
    if (!a.allFinite()) {
        throw InvalidInputError("matrix_exp: non-finite input");
    }
    if (!is_symmetric(a)) {
        throw InvalidInputError("matrix_exp: input must be symmetric");
    }
    auto eig = sym_eig(a);
    const Vector exps = eig.eigenvalues().array().exp();
    if (!exps.allFinite()) {
        throw IllConditionedError("matrix_exp: eigenvalue overflow");
    }
    return SpdMatrix(
        symmetrize(eig.eigenvectors() * exps.asDiagonal() * eig.eigenvectors().transpose()));
}

std::pair<SpdMatrix, SpdMatrix> matrix_sqrt_and_invsqrt(const SpdMatrix& a) {
    auto eig = sym_eig(a.value());
    const Vector& ev = eig.eigenvalues();
    if (ev.minCoeff() < kConditionFloor * ev.maxCoeff()) {
        throw IllConditionedError("matrix_sqrt_and_invsqrt: eigenvalue spread exceeds 1e12");
    }
    const Vector roots = ev.array().sqrt();
    const Vector inv_roots = roots.cwiseInverse();
    const Matrix& v = eig.eigenvectors();
    return {SpdMatrix(symmetrize(v * roots.asDiagonal() * v.transpose())),
            SpdMatrix(symmetrize(v * inv_roots.asDiagonal() * v.transpose()))};
}

double riemannian_distance(const SpdMatrix& a, const SpdMatrix& b) {
    require_same_dim(a, b);
    // Eigenvalues of a^{-1} b via the symmetric-definite pencil (b, a).
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> solver(b.value(), a.value(),
                                                            Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        throw IllConditionedError("riemannian_distance: generalized eigensolve failed");
    }
    const Vector& ev = solver.eigenvalues();
    if (ev.minCoeff() <= 0.0) {
        throw IllConditionedError("riemannian_distance: nonpositive pencil eigenvalue");
    }
    return std::sqrt(ev.array().log().square().sum());
}

Matrix log_map(const SpdMatrix& base, const SpdMatrix& x) {
    require_same_dim(base, x);
    auto [s, t] = matrix_sqrt_and_invsqrt(base);
    const Matrix inner = matrix_log(SpdMatrix(symmetrize(t.value() * x.value() * t.value())));
    return symmetrize(s.value() * inner * s.value());
}

SpdMatrix exp_map(const SpdMatrix& base, const Matrix& v) {
    if (base.dim() != v.rows() || v.rows() != v.cols()) {
        throw ShapeError("exp_map: tangent matrix shape mismatch");
    }
    auto [s, t] = matrix_sqrt_and_invsqrt(base);
    const SpdMatrix inner = matrix_exp(symmetrize(t.value() * v * t.value()));
    return SpdMatrix(symmetrize(s.value() * inner.value() * s.value()));
}

TangentVector tangent_vectorize_whitened(const Matrix& whitened) {
    const int r = static_cast<int>(whitened.rows());
    const Matrix m = matrix_log(SpdMatrix(symmetrize(whitened)));
    const double sqrt2 = std::sqrt(2.0);
    Vector out(tangent_dim(r));
    Eigen::Index idx = 0;
    for (int i = 0; i < r; ++i) {
        out[idx++] = m(i, i);
        for (int j = i + 1; j < r; ++j) {
            out[idx++] = sqrt2 * m(i, j);
        }
    }
    return TangentVector(r, std::move(out));
}

TangentVector tangent_vectorize(const SpdMatrix& base, const SpdMatrix& x) {
    require_same_dim(base, x);
    auto [s, t] = matrix_sqrt_and_invsqrt(base);
    return tangent_vectorize_whitened(t.value() * x.value() * t.value());
}

SpdMatrix intrinsic_mean(std::span<const SpdMatrix> mats, const MeanConfig& cfg) {
    if (mats.empty()) {
        throw InvalidInputError("intrinsic_mean: empty input list");
    }
    if (cfg.tolerance <= 0.0 || cfg.max_iterations < 1) {
        throw InvalidInputError("intrinsic_mean: invalid MeanConfig");
    }
    const int r = mats.front().dim();
    for (const auto& m : mats) {
        if (m.dim() != r) throw ShapeError("intrinsic_mean: mixed dimensions");
    }
    const double n = static_cast<double>(mats.size());

    SpdMatrix mean = SpdMatrix::identity(r);
    double residual = 0.0;
    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        const Matrix prev = mean.value();
        auto [s, t] = matrix_sqrt_and_invsqrt(mean);
        // Average of logm(T Sigma_n T) in fixed index order; the update
        // Exp_mean of the mean tangent reduces to S expm(avg) S.
        Matrix avg = Matrix::Zero(r, r);
        for (const auto& m : mats) {
            avg += matrix_log(SpdMatrix(symmetrize(t.value() * m.value() * t.value())));
        }
        avg /= n;
        residual = (s.value() * avg * s.value()).norm();
        if (!avg.allFinite()) {
            throw IllConditionedError("intrinsic_mean: non-finite tangent average");
        }
        try {
            const SpdMatrix step = matrix_exp(avg);
            mean = SpdMatrix(symmetrize(s.value() * step.value() * s.value()));
        } catch (const Error&) {
            throw IllConditionedError("intrinsic_mean: update left the SPD cone");
        }
        if ((mean.value() - prev).norm() < cfg.tolerance) {
            return mean;
        }
    }
    throw NonConvergenceError("intrinsic_mean: iteration cap reached", mean.value(), residual,
                              cfg.max_iterations);
}

}  // namespace spdreg
