#pragma once

#include <functional>

#include "manifold/core.hpp"

namespace manifold {

/// Eigenpairs of a real symmetric matrix, ordered by descending |value|.
struct SymmetricEigenpairs {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
    /// Every eigenvalue when the full spectrum was computed; empty otherwise.
    Eigen::VectorXd spectrum;
};

/// Flips each column so that its entry of largest magnitude (first on ties)
/// is positive.
void fix_eigenvector_signs(Eigen::MatrixXd& vectors);

/// Dense solver; returns the `count` pairs of largest magnitude and keeps the
/// full spectrum.
SymmetricEigenpairs dense_largest_magnitude(const Eigen::MatrixXd& a, Index count);

struct LanczosOptions {
    /// Relative residual |A v - theta v| / max|theta| required for every returned pair.
    double tolerance = 1e-9;
    /// Krylov basis cap; 0 means min(m, max(20 * count, 200)).
    Index max_basis = 0;
    std::uint64_t seed = 0x5eed;
};

using LinearOperator = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Lanczos with full reorthogonalization. Ritz values from both ends of the
/// spectrum compete on magnitude, so large negative eigenvalues are found
/// alongside positive ones. Throws NumericalError if the basis cap is hit
/// before convergence.
SymmetricEigenpairs lanczos_largest_magnitude(const LinearOperator& apply, Index m, Index count,
                                              const LanczosOptions& options = {});

}  // namespace manifold
