#pragma once

#include <Eigen/QR>

#include "spdreg/rng.hpp"
#include "spdreg/spd_manifold.hpp"
#include "spdreg/trial.hpp"

namespace spdreg::test {

inline Matrix random_gaussian(Rng& rng, int rows, int cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.gaussian();
    return m;
}

inline Matrix random_orthogonal(Rng& rng, int dim) {
    Eigen::HouseholderQR<Matrix> qr(random_gaussian(rng, dim, dim));
    Matrix q = qr.householderQ();
    return q;
}

inline Matrix random_symmetric(Rng& rng, int dim, double scale = 1.0) {
    const Matrix g = random_gaussian(rng, dim, dim);
    return scale * 0.5 * (g + g.transpose());
}

/// Random SPD matrix with eigenvalues log-uniform in [lo, hi].
inline SpdMatrix random_spd(Rng& rng, int dim, double lo = 0.1, double hi = 10.0) {
    const Matrix q = random_orthogonal(rng, dim);
    Vector ev(dim);
    for (int i = 0; i < dim; ++i) {
        ev[i] = std::exp(rng.uniform(std::log(lo), std::log(hi)));
    }
    Matrix m = q * ev.asDiagonal() * q.transpose();
    return SpdMatrix(0.5 * (m + m.transpose()));
}

}  // namespace spdreg::test
