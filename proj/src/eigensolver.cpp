#include "manifold/eigensolver.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>

namespace manifold {
namespace {

std::vector<Index> order_by_magnitude(const Eigen::VectorXd& values) {
    std::vector<Index> order(static_cast<std::size_t>(values.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        const double ma = std::abs(values(a)), mb = std::abs(values(b));
        if (ma != mb) return ma > mb;
        return values(a) > values(b);
    });
    return order;
}

}  // namespace

void fix_eigenvector_signs(Eigen::MatrixXd& vectors) {
    for (Index k = 0; k < vectors.cols(); ++k) {
        Index pivot = 0;
        for (Index i = 1; i < vectors.rows(); ++i) {
            if (std::abs(vectors(i, k)) > std::abs(vectors(pivot, k))) pivot = i;
        }
        if (vectors(pivot, k) < 0.0) vectors.col(k) = -vectors.col(k);
    }
}

SymmetricEigenpairs dense_largest_magnitude(const Eigen::MatrixXd& a, Index count) {
    if (a.rows() != a.cols()) throw ValidationError("eigensolver needs a square matrix");
    if (count < 1 || count > a.rows()) throw ValidationError("requested eigenpair count out of range");
    if (!a.allFinite()) throw NumericalError("non-finite matrix entries");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
    if (solver.info() != Eigen::Success) throw NumericalError("dense eigensolver failed");
    const auto order = order_by_magnitude(solver.eigenvalues());
    SymmetricEigenpairs out;
    out.values.resize(count);
    out.vectors.resize(a.rows(), count);
    out.spectrum.resize(a.rows());
    for (Index k = 0; k < a.rows(); ++k) out.spectrum(k) = solver.eigenvalues()(order[static_cast<std::size_t>(k)]);
    for (Index k = 0; k < count; ++k) {
        out.values(k) = out.spectrum(k);
        out.vectors.col(k) = solver.eigenvectors().col(order[static_cast<std::size_t>(k)]);
    }
    fix_eigenvector_signs(out.vectors);
    return out;
}

SymmetricEigenpairs lanczos_largest_magnitude(const LinearOperator& apply, Index m, Index count,
                                              const LanczosOptions& options) {
    if (count < 1 || count > m) throw ValidationError("requested eigenpair count out of range");
    const Index cap = options.max_basis > 0 ? std::min(options.max_basis, m)
                                            : std::min(m, std::max<Index>(20 * count, 200));
    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> normal;
    auto random_unit = [&](Index used, const Eigen::MatrixXd& basis) {
        Eigen::VectorXd v(m);
        for (Index i = 0; i < m; ++i) v(i) = normal(rng);
        for (int pass = 0; pass < 2; ++pass) {
            if (used > 0) v -= basis.leftCols(used) * (basis.leftCols(used).transpose() * v);
        }
        return Eigen::VectorXd(v / v.norm());
    };

    Eigen::MatrixXd basis(m, cap);
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(cap), beta = Eigen::VectorXd::Zero(cap);
    basis.col(0) = random_unit(0, basis);

    Eigen::VectorXd theta;
    Eigen::MatrixXd ritz;
    std::vector<Index> selected;
    for (Index j = 0; j < cap; ++j) {
        Eigen::VectorXd w = apply(basis.col(j));
        if (w.size() != m || !w.allFinite()) throw NumericalError("operator returned a bad vector");
        alpha(j) = basis.col(j).dot(w);
        w -= alpha(j) * basis.col(j);
        if (j > 0) w -= beta(j - 1) * basis.col(j - 1);
        for (int pass = 0; pass < 2; ++pass) w -= basis.leftCols(j + 1) * (basis.leftCols(j + 1).transpose() * w);
        beta(j) = w.norm();

        const Index k = j + 1;
        Eigen::MatrixXd t = Eigen::MatrixXd::Zero(k, k);
        t.diagonal() = alpha.head(k);
        if (k > 1) {
            t.diagonal(1) = beta.head(k - 1);
            t.diagonal(-1) = beta.head(k - 1);
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> small(t);
        theta = small.eigenvalues();
        ritz = small.eigenvectors();
        const double scale = std::max(theta.cwiseAbs().maxCoeff(), 1e-300);
        const bool breakdown = beta(j) <= 1e-12 * scale;

        if (k >= count) {
            const auto order = order_by_magnitude(theta);
            selected.assign(order.begin(), order.begin() + count);
            bool converged = true;
            for (Index i : selected) {
                if (std::abs(beta(j) * ritz(k - 1, i)) > options.tolerance * scale) converged = false;
            }
            if (converged) {
                Eigen::MatrixXd vectors = basis.leftCols(k) * ritz;
                SymmetricEigenpairs out;
                out.values.resize(count);
                out.vectors.resize(m, count);
                for (Index c = 0; c < count; ++c) {
                    out.values(c) = theta(selected[static_cast<std::size_t>(c)]);
                    out.vectors.col(c) = vectors.col(selected[static_cast<std::size_t>(c)]).normalized();
                }
                fix_eigenvector_signs(out.vectors);
                return out;
            }
        }
        if (j + 1 == cap) break;
        if (breakdown) {
            beta(j) = 0.0;
            basis.col(j + 1) = random_unit(j + 1, basis);
        } else {
            basis.col(j + 1) = w / beta(j);
        }
    }
    throw NumericalError("Lanczos did not converge within " + std::to_string(cap) + " basis vectors");
}

}  // namespace manifold
