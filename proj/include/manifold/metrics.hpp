#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "manifold/core.hpp"

namespace manifold {

enum class DistanceKind : std::uint32_t {
    Bhattacharyya = 0,
    Geodesic = 1,
    SymmetricKL = 2,
    Hellinger = 3,
    SquaredEuclidean = 4,
};

std::string_view to_string(DistanceKind kind);
/// Accepts the CLI spellings (bhat, geo, skl, hell, euclid) and the enum names.
DistanceKind parse_distance_kind(std::string_view name);

namespace detail {

template <typename A, typename B>
void check_same_shape(const Eigen::MatrixBase<A>& pu, const Eigen::MatrixBase<B>& pv) {
    if (pu.rows() != pv.rows() || pu.cols() != pv.cols()) {
        throw ValidationError("shape mismatch: " + std::to_string(pu.rows()) + "x" + std::to_string(pu.cols()) +
                              " vs " + std::to_string(pv.rows()) + "x" + std::to_string(pv.cols()));
    }
}

/// Per-sample angle between sqrt-probability vectors a and b, computed as
/// 2 atan2(|a - b|, |a + b|). Equal to arccos(<a, b>) on the unit sphere but
/// exact at zero separation, where arccos loses half the significant digits.
template <typename Scalar>
Scalar half_angle(Scalar diff_sq, Scalar sum_sq) {
    return Scalar(2) * std::atan2(std::sqrt(diff_sq), std::sqrt(sum_sq));
}

}  // namespace detail

/// Bhattacharyya coefficient of each row: sum_c sqrt(p_u(c) p_v(c)).
template <typename A, typename B>
Eigen::Matrix<typename A::Scalar, Eigen::Dynamic, 1> bhattacharyya_coefficients(const Eigen::MatrixBase<A>& pu,
                                                                                const Eigen::MatrixBase<B>& pv) {
    using Scalar = typename A::Scalar;
    detail::check_same_shape(pu, pv);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(pu.rows());
    for (Index n = 0; n < pu.rows(); ++n) {
        Scalar bc = 0;
        for (Index c = 0; c < pu.cols(); ++c) bc += std::sqrt(pu(n, c)) * std::sqrt(pv(n, c));
        out(n) = bc;
    }
    return out;
}

/// Per-sample Bhattacharyya distance, -N^-1 sum_n log sum_c sqrt(p_u p_v).
template <typename A, typename B>
typename A::Scalar bhattacharyya(const Eigen::MatrixBase<A>& pu, const Eigen::MatrixBase<B>& pv) {
    using Scalar = typename A::Scalar;
    detail::check_same_shape(pu, pv);
    Scalar acc = 0;
    for (Index n = 0; n < pu.rows(); ++n) {
        Scalar bc = 0;
        for (Index c = 0; c < pu.cols(); ++c) bc += std::sqrt(pu(n, c)) * std::sqrt(pv(n, c));
        acc -= std::log(std::clamp(bc, Scalar(kProbabilityFloor), Scalar(1)));
    }
    return acc / Scalar(pu.rows());
}

/// Mean over samples of the great-circle half angle between sqrt-probability
/// vectors; each term lies in [0, pi/2].
template <typename A, typename B>
typename A::Scalar geodesic_distance(const Eigen::MatrixBase<A>& pu, const Eigen::MatrixBase<B>& pv) {
    using Scalar = typename A::Scalar;
    detail::check_same_shape(pu, pv);
    Scalar acc = 0;
    for (Index n = 0; n < pu.rows(); ++n) {
        Scalar diff = 0, sum = 0;
        for (Index c = 0; c < pu.cols(); ++c) {
            const Scalar a = std::sqrt(pu(n, c)), b = std::sqrt(pv(n, c));
            diff += (a - b) * (a - b);
            sum += (a + b) * (a + b);
        }
        acc += detail::half_angle(diff, sum);
    }
    return acc / Scalar(pu.rows());
}

/// Symmetrized KL divergence per sample, probabilities floored at kProbabilityFloor.
template <typename A, typename B>
typename A::Scalar symmetric_kl(const Eigen::MatrixBase<A>& pu, const Eigen::MatrixBase<B>& pv) {
    using Scalar = typename A::Scalar;
    detail::check_same_shape(pu, pv);
    const Scalar floor = Scalar(kProbabilityFloor);
    Scalar acc = 0;
    for (Index n = 0; n < pu.rows(); ++n) {
        for (Index c = 0; c < pu.cols(); ++c) {
            const Scalar a = pu(n, c), b = pv(n, c);
            acc += (a - b) * (std::log(std::max(a, floor)) - std::log(std::max(b, floor)));
        }
    }
    return std::max(Scalar(0), acc / Scalar(pu.rows()));
}

/// 2 (1 - prod_n BC_n). Not averaged over samples, so it saturates at 2
/// for large N.
template <typename A, typename B>
typename A::Scalar hellinger(const Eigen::MatrixBase<A>& pu, const Eigen::MatrixBase<B>& pv) {
    using Scalar = typename A::Scalar;
    detail::check_same_shape(pu, pv);
    Scalar prod = 1;
    for (Index n = 0; n < pu.rows(); ++n) {
        Scalar bc = 0;
        for (Index c = 0; c < pu.cols(); ++c) bc += std::sqrt(pu(n, c)) * std::sqrt(pv(n, c));
        prod *= std::min(bc, Scalar(1));
    }
    return Scalar(2) * (Scalar(1) - prod);
}

template <typename A, typename B>
typename A::Scalar squared_euclidean(const Eigen::MatrixBase<A>& pu, const Eigen::MatrixBase<B>& pv) {
    detail::check_same_shape(pu, pv);
    return (pu - pv).squaredNorm() / typename A::Scalar(pu.rows());
}

double bhattacharyya(const PredictionTensor& u, const PredictionTensor& v);
double geodesic_distance(const PredictionTensor& u, const PredictionTensor& v);
double symmetric_kl(const PredictionTensor& u, const PredictionTensor& v);
double hellinger(const PredictionTensor& u, const PredictionTensor& v);
double squared_euclidean(const PredictionTensor& u, const PredictionTensor& v);
double distance(DistanceKind kind, const PredictionTensor& u, const PredictionTensor& v);

/// (d_B(w, truth), half the mean cross-entropy of w on the labels).
std::pair<double, double> cross_entropy_half_check(const PredictionTensor& w, const LabelVector& truth);

/// Symmetric m x m matrix of pairwise distances between models.
struct DistanceMatrix {
    DistanceKind kind = DistanceKind::Bhattacharyya;
    Eigen::MatrixXd entries;
    std::vector<std::string> ids;

    Index size() const { return entries.rows(); }
    /// Zero diagonal, symmetry within 1e-12, finite and non-negative.
    void validate() const;
};

/// Largest m held fully in memory; larger problems must stream through a DMX1 file.
inline constexpr Index kMaxInMemoryModels = 65536;

struct PairwiseOptions {
    Index chunk = 64;
    std::optional<std::filesystem::path> cache_path;
    unsigned threads = 1;
    /// Called after each completed row block with (rows done, m).
    std::function<void(Index, Index)> on_block;
};

/// Pairwise distances computed in row blocks of `chunk` rows. With a cache
/// path the strict upper triangle is spilled to a DMX1 file after each block
/// and a partially written file is resumed. Entries do not depend on the
/// thread count.
DistanceMatrix pairwise_matrix(std::span<const PredictionTensor> models, DistanceKind kind,
                               const PairwiseOptions& options = {});

/// Streams the full matrix into a DMX1 file without holding it in memory.
void pairwise_to_file(std::span<const PredictionTensor> models, DistanceKind kind, const PairwiseOptions& options);

/// Distances from one model to every model in the list.
Eigen::VectorXd distances_to(const PredictionTensor& w, std::span<const PredictionTensor> models, DistanceKind kind);

/// Optional class-reduction hook: maps each row through a random C x C' row-stochastic
/// matrix (Dirichlet(1) rows) drawn from `seed`.
std::vector<PredictionTensor> random_class_projection(std::span<const PredictionTensor> models, Index target_classes,
                                                      std::uint64_t seed);

}  // namespace manifold
