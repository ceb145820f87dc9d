#include "manifold/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SVD>

#include "manifold/dmx.hpp"

namespace manifold {
namespace {

// Eigenvalues this small relative to the largest are numerical zeros: their
// coordinates are set to 0 and projection skips them (dividing by sqrt|L|
// would only amplify rounding noise).
constexpr double kNullEigenvalue = 1e-13;

// Everything needed to center new distance rows consistently.
struct Centering {
    Eigen::VectorXd weights;  // normalized, sums to 1
    Eigen::VectorXd row_means;
    double grand_mean = 0.0;
};

Centering make_centering(const Eigen::VectorXd& weights, Eigen::VectorXd weighted_row_sums) {
    Centering c;
    c.weights = weights;
    c.row_means = std::move(weighted_row_sums);
    c.grand_mean = weights.dot(c.row_means);
    return c;
}

// S = diag(sqrt mu) W diag(sqrt mu) with W = -(D - r 1^T - 1 r^T + g)/2.
Eigen::MatrixXd symmetrized_centered(const Eigen::MatrixXd& d, const Centering& c) {
    const Index m = d.rows();
    const Eigen::VectorXd root = c.weights.cwiseSqrt();
    Eigen::MatrixXd s(m, m);
    for (Index v = 0; v < m; ++v) {
        for (Index u = 0; u < m; ++u) {
            s(u, v) = -0.5 * (d(u, v) - c.row_means(u) - c.row_means(v) + c.grand_mean) * root(u) * root(v);
        }
    }
    return s;
}

// Builds the embedding from eigenpairs (values, z) of S.
MinkowskiEmbedding assemble(const SymmetricEigenpairs& pairs, Index dims, const Centering& c, double energy_s) {
    const Index m = c.weights.size();
    const double scale = double(m);
    MinkowskiEmbedding e;
    e.weights = c.weights;
    e.row_means = c.row_means;
    e.grand_mean = c.grand_mean;
    e.basis = pairs.vectors.leftCols(dims);
    e.eigenvalues = scale * pairs.values.head(dims);
    e.signature.resize(dims);
    e.coords.resize(m, dims);
    const double largest = std::max(pairs.values.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    const Eigen::VectorXd inv_root = c.weights.cwiseSqrt().cwiseInverse();
    for (Index k = 0; k < dims; ++k) {
        const double lambda = pairs.values(k);
        e.signature(k) = lambda < 0.0 ? -1 : 1;
        if (std::abs(lambda) <= kNullEigenvalue * largest) {
            e.coords.col(k).setZero();
        } else {
            e.coords.col(k) = e.basis.col(k).cwiseProduct(inv_root) * std::sqrt(std::abs(lambda));
        }
    }
    if (pairs.spectrum.size() > 0) {
        e.spectrum = scale * pairs.spectrum;
        e.spectrum_energy = e.spectrum.squaredNorm();
    } else {
        e.spectrum_energy = scale * scale * energy_s;
    }
    return e;
}

Eigen::VectorXd normalized_weights(const Eigen::VectorXd& multiplicities) {
    for (Index i = 0; i < multiplicities.size(); ++i) {
        if (!(multiplicities(i) > 0.0) || !std::isfinite(multiplicities(i))) {
            throw ValidationError("multiplicities must be positive and finite");
        }
    }
    return multiplicities / multiplicities.sum();
}

void check_dims(Index dims, Index m) {
    if (m < 1) throw ValidationError("cannot embed an empty distance matrix");
    if (dims < 1 || dims > m) {
        throw ValidationError("dims must be in [1, " + std::to_string(m) + "], got " + std::to_string(dims));
    }
}

MinkowskiEmbedding embed(const DistanceMatrix& d, const Eigen::VectorXd& weights, Index dims,
                         const EmbeddingOptions& options) {
    d.validate();
    const Index m = d.size();
    check_dims(dims, m);
    const Centering c = make_centering(weights, d.entries * weights);
    MinkowskiEmbedding e;
    if (m <= options.dense_limit) {
        e = assemble(dense_largest_magnitude(symmetrized_centered(d.entries, c), dims), dims, c, 0.0);
    } else {
        const Eigen::VectorXd root = c.weights.cwiseSqrt();
        const LinearOperator apply = [&](const Eigen::VectorXd& x) {
            const Eigen::VectorXd y = root.cwiseProduct(x);
            const double total = y.sum();
            const double projected = c.row_means.dot(y);
            Eigen::VectorXd w = d.entries * y - c.row_means * total;
            w.array() += c.grand_mean * total - projected;
            return Eigen::VectorXd(-0.5 * root.cwiseProduct(w));
        };
        const SymmetricEigenpairs pairs =
            lanczos_largest_magnitude(apply, m, std::min(m, dims + 8), options.lanczos);
        double energy = 0.0;
        for (Index v = 0; v < m; ++v) {
            for (Index u = 0; u < m; ++u) {
                const double w = -0.5 * (d.entries(u, v) - c.row_means(u) - c.row_means(v) + c.grand_mean);
                energy += c.weights(u) * c.weights(v) * w * w;
            }
        }
        e = assemble(pairs, dims, c, energy);
    }
    e.source_kind = d.kind;
    e.ids = d.ids;
    return e;
}

// X_k = sign(L_k) |L_k|^-1/2 sum_u W_u sqrt(mu_u) z_uk for one centered row.
Eigen::RowVectorXd project_centered(const MinkowskiEmbedding& e, const Eigen::VectorXd& centered) {
    const Eigen::VectorXd scaled = centered.cwiseProduct(e.weights.cwiseSqrt());
    const double largest = std::max(e.eigenvalues.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    const double m = double(e.weights.size());
    Eigen::RowVectorXd out(e.dims());
    for (Index k = 0; k < e.dims(); ++k) {
        const double lambda = e.eigenvalues(k) / m;
        if (std::abs(e.eigenvalues(k)) <= kNullEigenvalue * largest) {
            out(k) = 0.0;
            continue;
        }
        out(k) = (lambda < 0.0 ? -1.0 : 1.0) * scaled.dot(e.basis.col(k)) / std::sqrt(std::abs(lambda));
    }
    return out;
}

}  // namespace

MinkowskiEmbedding inpca(const DistanceMatrix& d, Index dims, const EmbeddingOptions& options) {
    const Index m = d.size();
    if (m < 1) throw ValidationError("cannot embed an empty distance matrix");
    return embed(d, Eigen::VectorXd::Constant(m, 1.0 / double(m)), dims, options);
}

MinkowskiEmbedding weighted_inpca(const DistanceMatrix& d, const Eigen::VectorXd& multiplicities, Index dims,
                                  const EmbeddingOptions& options) {
    if (multiplicities.size() != d.size()) throw ValidationError("one multiplicity per model is required");
    return embed(d, normalized_weights(multiplicities), dims, options);
}

MinkowskiEmbedding inpca_from_file(const std::filesystem::path& dmx, Index dims, const LanczosOptions& options) {
    const io::DmxHeader header = io::read_dmx_header(dmx);
    if (header.rows_completed != header.m) throw ValidationError(dmx.string() + " is incomplete");
    const auto m = static_cast<Index>(header.m);
    check_dims(dims, m);
    const Eigen::VectorXd weights = Eigen::VectorXd::Constant(m, 1.0 / double(m));
    const Centering c = make_centering(weights, io::dmx_multiply(dmx, weights));

    const double inv_m = 1.0 / double(m);
    const LinearOperator apply = [&](const Eigen::VectorXd& x) {
        // With uniform weights S = W / m.
        const double total = x.sum();
        const double projected = c.row_means.dot(x);
        Eigen::VectorXd w = io::dmx_multiply(dmx, x) - c.row_means * total;
        w.array() += c.grand_mean * total - projected;
        return Eigen::VectorXd(-0.5 * inv_m * w);
    };
    const SymmetricEigenpairs pairs = lanczos_largest_magnitude(apply, m, std::min(m, dims + 8), options);

    // |S|_F^2 in one pass: diagonal terms plus twice the strict upper part.
    double energy = 0.0;
    for (Index u = 0; u < m; ++u) {
        const double w = -0.5 * (-2.0 * c.row_means(u) + c.grand_mean);
        energy += w * w;
    }
    io::dmx_visit_rows(dmx, [&](Index i, const Eigen::Ref<const Eigen::VectorXd>& upper) {
        for (Index k = 0; k < upper.size(); ++k) {
            const Index j = i + 1 + k;
            const double w = -0.5 * (upper(k) - c.row_means(i) - c.row_means(j) + c.grand_mean);
            energy += 2.0 * w * w;
        }
    });
    MinkowskiEmbedding e = assemble(pairs, dims, c, energy * inv_m * inv_m);
    e.source_kind = header.kind;
    for (Index i = 0; i < m; ++i) e.ids.push_back(std::to_string(i));
    return e;
}

double explained_stress(const MinkowskiEmbedding& e, Index d) {
    const Index available = e.spectrum.size() > 0 ? e.spectrum.size() : e.dims();
    if (d < 0 || d > available) throw ValidationError("explained_stress: d out of range");
    if (e.spectrum_energy <= 0.0) return 1.0;
    double tail = 0.0;
    if (e.spectrum.size() > 0) {
        tail = e.spectrum.tail(e.spectrum.size() - d).squaredNorm();
    } else {
        tail = std::max(0.0, e.spectrum_energy - e.eigenvalues.head(d).squaredNorm());
    }
    return 1.0 - std::sqrt(std::clamp(tail / e.spectrum_energy, 0.0, 1.0));
}

double minkowski_interval(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b,
                          const Eigen::VectorXi& signature) {
    if (a.size() != b.size() || a.size() > signature.size()) throw ValidationError("coordinate dimension mismatch");
    double out = 0.0;
    for (Index k = 0; k < a.size(); ++k) {
        const double diff = a(k) - b(k);
        out += signature(k) * diff * diff;
    }
    return out;
}

double explained_pairwise_distances(const DistanceMatrix& d, const Eigen::MatrixXd& coords,
                                    const Eigen::VectorXi& signature) {
    if (coords.rows() != d.size()) throw ValidationError("coordinate rows do not match the distance matrix");
    if (coords.cols() > signature.size()) throw ValidationError("signature shorter than coordinate dimension");
    double residual = 0.0, total = 0.0;
    for (Index i = 0; i < d.size(); ++i) {
        for (Index j = 0; j < d.size(); ++j) {
            if (i == j) continue;
            residual += std::abs(d.entries(i, j) - minkowski_interval(coords.row(i), coords.row(j), signature));
            total += d.entries(i, j);
        }
    }
    if (total <= 0.0) throw ValidationError("explained pairwise distances undefined for an all-zero matrix");
    return 1.0 - residual / total;
}

Eigen::RowVectorXd project_new(const MinkowskiEmbedding& e, const Eigen::Ref<const Eigen::VectorXd>& new_distances) {
    if (new_distances.size() != e.size()) {
        throw ValidationError("expected " + std::to_string(e.size()) + " distances, got " +
                              std::to_string(new_distances.size()));
    }
    const double own_mean = e.weights.dot(new_distances);
    Eigen::VectorXd centered = -0.5 * (new_distances - e.row_means);
    centered.array() -= -0.5 * (own_mean - e.grand_mean);
    return project_centered(e, centered);
}

Eigen::MatrixXd project_new_rows(const MinkowskiEmbedding& e, const Eigen::Ref<const Eigen::MatrixXd>& new_distances) {
    Eigen::MatrixXd out(new_distances.rows(), e.dims());
    for (Index w = 0; w < new_distances.rows(); ++w) out.row(w) = project_new(e, new_distances.row(w).transpose());
    return out;
}

std::pair<MinkowskiEmbedding, Eigen::MatrixXd> joint_train_test_embed(std::span<const PredictionTensor> train,
                                                                      std::span<const PredictionTensor> test,
                                                                      DistanceKind kind, Index dims) {
    if (train.size() != test.size()) {
        throw ValidationError("joint embedding needs equal train and test counts (" + std::to_string(train.size()) +
                              " vs " + std::to_string(test.size()) + ")");
    }
    const MinkowskiEmbedding e = inpca(pairwise_matrix(train, kind), dims);
    const DistanceMatrix test_d = pairwise_matrix(test, kind);
    const Index m = e.size();
    Eigen::MatrixXd coords(m, e.dims());
    for (Index w = 0; w < m; ++w) {
        // Test-test distances, centered with the train row means.
        Eigen::VectorXd centered = -0.5 * (test_d.entries.row(w).transpose() - e.row_means);
        centered.array() += 0.5 * (e.row_means(w) - e.grand_mean);
        coords.row(w) = project_centered(e, centered);
    }
    return {e, coords};
}

AlignmentResult align_embeddings(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ValidationError("alignment needs equal shapes");
    if (a.rows() < 1) throw ValidationError("alignment needs at least one point");
    const Eigen::RowVectorXd mean_a = a.colwise().mean(), mean_b = b.colwise().mean();
    const Eigen::MatrixXd ac = a.rowwise() - mean_a, bc = b.rowwise() - mean_b;
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(bc.transpose() * ac, Eigen::ComputeFullU | Eigen::ComputeFullV);
    AlignmentResult out;
    out.rotation = svd.matrixU() * svd.matrixV().transpose();
    out.translation = mean_a - mean_b * out.rotation;
    out.aligned = (b * out.rotation).rowwise() + out.translation;
    out.rmsd = std::sqrt((out.aligned - a).rowwise().squaredNorm().mean());
    return out;
}

PredictionTensor progress_kernel_average(std::span<const ProgressModel> models, double s, double sigma) {
    if (models.empty()) throw ValidationError("kernel average needs at least one model");
    if (!(sigma > 0.0)) throw ValidationError("sigma must be positive");
    std::vector<double> logw;
    for (const auto& pm : models) {
        if (!pm.model.same_shape(models.front().model)) throw ValidationError("kernel average shape mismatch");
        const double z = (pm.progress - s) / sigma;
        logw.push_back(-0.5 * z * z);
    }
    const double top = *std::max_element(logw.begin(), logw.end());
    double norm = 0.0;
    for (double& l : logw) norm += (l = std::exp(l - top));
    ProbabilityMatrix<double> sum =
        ProbabilityMatrix<double>::Zero(models.front().model.n_samples(), models.front().model.n_classes());
    for (std::size_t i = 0; i < models.size(); ++i) sum += (logw[i] / norm) * models[i].model.probs();
    return PredictionTensor::normalized(std::move(sum), "kernel@" + std::to_string(s));
}

std::pair<MinkowskiEmbedding, Eigen::MatrixXd> basis_embedding(std::span<const PredictionTensor> anchors,
                                                               std::span<const PredictionTensor> all_models,
                                                               DistanceKind kind) {
    if (anchors.size() != 4) throw ValidationError("basis embedding needs exactly 4 anchors");
    const DistanceMatrix d = pairwise_matrix(anchors, kind);
    for (Index i = 0; i < 4; ++i) {
        for (Index j = i + 1; j < 4; ++j) {
            if (d.entries(i, j) < 1e-12) {
                throw ValidationError("degenerate anchors: " + std::to_string(i) + " and " + std::to_string(j) +
                                      " coincide");
            }
        }
    }
    MinkowskiEmbedding e = inpca(d, 3);
    Eigen::MatrixXd coords(static_cast<Index>(all_models.size()), e.dims());
    for (std::size_t w = 0; w < all_models.size(); ++w) {
        coords.row(static_cast<Index>(w)) = project_new(e, distances_to(all_models[w], anchors, kind));
    }
    return {std::move(e), coords};
}

}  // namespace manifold
