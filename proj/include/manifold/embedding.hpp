#pragma once

#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "manifold/core.hpp"
#include "manifold/eigensolver.hpp"
#include "manifold/metrics.hpp"

namespace manifold {

/// Largest m solved with the dense eigensolver; bigger problems use Lanczos.
inline constexpr Index kDenseEigenLimit = 4096;

/// Default Gaussian width in progress for kernel averages.
inline constexpr double kDefaultProgressSigma = 0.05;

/// Eigen-embedding of a centered distance matrix in R^{p, m-p}.
///
/// `coords` reproduces the distances through the signed norm
///     |X_u - X_v|^2 = sum_k signature_k (X_uk - X_vk)^2
/// exactly when every dimension is kept. `basis` is the orthonormal
/// eigenvector matrix of the (weight-symmetrized) centered matrix; together
/// with `row_means`, `grand_mean` and `weights` it is enough to place new
/// models by triangulation.
struct MinkowskiEmbedding {
    Eigen::MatrixXd coords;
    Eigen::VectorXd eigenvalues;
    Eigen::VectorXi signature;
    Eigen::MatrixXd basis;
    Eigen::VectorXd row_means;
    double grand_mean = 0.0;
    /// Normalized multiplicities; 1/m each for a plain embedding.
    Eigen::VectorXd weights;
    /// Full spectrum when it was computed densely (empty otherwise).
    Eigen::VectorXd spectrum;
    /// Sum of squared eigenvalues over the full spectrum.
    double spectrum_energy = 0.0;
    DistanceKind source_kind = DistanceKind::Bhattacharyya;
    std::vector<std::string> ids;

    Index size() const { return coords.rows(); }
    Index dims() const { return coords.cols(); }
};

struct EmbeddingOptions {
    Index dense_limit = kDenseEigenLimit;
    LanczosOptions lanczos;
};

/// Centers D (W = -L D L / 2 with L = I - 11^T/m), keeps the `dims`
/// eigenpairs of largest magnitude and sets X = U sqrt|Lambda|.
MinkowskiEmbedding inpca(const DistanceMatrix& d, Index dims, const EmbeddingOptions& options = {});

/// Weighted variant: centering by normalized multiplicities, eigenproblem of
/// W diag(mu) solved through diag(sqrt mu) W diag(sqrt mu), eigenvectors
/// rescaled to unit mu-norm. Integer multiplicities reproduce the embedding
/// of the matrix with repeated rows. Eigenvalues are reported on the scale
/// of the unweighted problem (m times those of W diag(mu)).
MinkowskiEmbedding weighted_inpca(const DistanceMatrix& d, const Eigen::VectorXd& multiplicities, Index dims,
                                  const EmbeddingOptions& options = {});

/// Out-of-core InPCA over a complete DMX1 file using Lanczos with a
/// streamed matrix-vector product.
MinkowskiEmbedding inpca_from_file(const std::filesystem::path& dmx, Index dims, const LanczosOptions& options = {});

/// 1 - sqrt(sum_{k > d} Lambda_k^2 / sum_k Lambda_k^2). d may exceed the kept
/// dimensions when the full spectrum is known.
double explained_stress(const MinkowskiEmbedding& e, Index d);

/// Signed squared Minkowski norm of a - b.
double minkowski_interval(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b,
                          const Eigen::VectorXi& signature);

/// 1 - sum_ij |D_ij - |X_i - X_j|^2| / sum_ij D_ij.
double explained_pairwise_distances(const DistanceMatrix& d, const Eigen::MatrixXd& coords,
                                    const Eigen::VectorXi& signature);

/// Places a new model from its distances to the m embedded models.
/// Coordinate k is sign(Lambda_k) |Lambda_k|^{-1/2} sum_u W_new,u U_uk; the
/// sign factor makes re-projecting a member return its own coordinates.
Eigen::RowVectorXd project_new(const MinkowskiEmbedding& e, const Eigen::Ref<const Eigen::VectorXd>& new_distances);

/// Rows of new distances (one new model per row).
Eigen::MatrixXd project_new_rows(const MinkowskiEmbedding& e, const Eigen::Ref<const Eigen::MatrixXd>& new_distances);

/// Embeds the train models, then places test model w using test-test
/// distances for the first term and train-only row means for the centering
/// term. Train and test lists are index-aligned (same weights).
std::pair<MinkowskiEmbedding, Eigen::MatrixXd> joint_train_test_embed(std::span<const PredictionTensor> train,
                                                                      std::span<const PredictionTensor> test,
                                                                      DistanceKind kind, Index dims);

struct AlignmentResult {
    Eigen::MatrixXd rotation;
    Eigen::RowVectorXd translation;
    double rmsd = 0.0;
    /// b mapped onto a: b * rotation + translation.
    Eigen::MatrixXd aligned;
};

/// Kabsch-Umeyama: optimal translation and orthogonal map (rotations and
/// reflections, no scaling) taking b onto a.
AlignmentResult align_embeddings(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct ProgressModel {
    PredictionTensor model;
    double progress = 0.0;
};

/// Gaussian-in-progress weighted arithmetic average of models.
PredictionTensor progress_kernel_average(std::span<const ProgressModel> models, double s,
                                         double sigma = kDefaultProgressSigma);

/// Four-anchor InPCA (ignorance, truth and two kernel averages) with every
/// model placed by project_new.
std::pair<MinkowskiEmbedding, Eigen::MatrixXd> basis_embedding(std::span<const PredictionTensor> anchors,
                                                               std::span<const PredictionTensor> all_models,
                                                               DistanceKind kind = DistanceKind::Bhattacharyya);

}  // namespace manifold
