#include "manifold/metrics.hpp"

#include <atomic>
#include <random>
#include <thread>

#include "manifold/dmx.hpp"

namespace manifold {

namespace {

// Pre-transformed models so each pair costs one pass over N x C. Models are
// stored column-major so the per-class products vectorize over samples.
// Every double-precision distance in the library goes through this class,
// which keeps pairwise matrices bit-identical to single-pair calls.
class PairKernel {
public:
    static constexpr Index kLogGroup = 8;

    explicit PairKernel(DistanceKind kind) : kind_(kind) {}

    PairKernel(std::span<const PredictionTensor> models, DistanceKind kind) : kind_(kind) {
        prepared_.reserve(models.size());
        for (const auto& m : models) add(m);
    }

    void add(const PredictionTensor& m) {
        if (!prepared_.empty() && (prepared_.front().rows() != m.n_samples() || prepared_.front().cols() != m.n_classes())) {
            throw ValidationError("shape mismatch: " + std::to_string(prepared_.front().rows()) + "x" +
                                  std::to_string(prepared_.front().cols()) + " vs " + std::to_string(m.n_samples()) +
                                  "x" + std::to_string(m.n_classes()));
        }
        switch (kind_) {
            case DistanceKind::Bhattacharyya:
            case DistanceKind::Geodesic:
            case DistanceKind::Hellinger: prepared_.emplace_back(m.probs().cwiseSqrt()); break;
            case DistanceKind::SymmetricKL:
            case DistanceKind::SquaredEuclidean: prepared_.emplace_back(m.probs()); break;
        }
        if (kind_ == DistanceKind::SymmetricKL) {
            logs_.emplace_back(m.probs().cwiseMax(kProbabilityFloor).array().log().matrix());
        }
    }

    double operator()(std::size_t i, std::size_t j) const {
        if (i == j) return 0.0;
        const auto& a = prepared_[i];
        const auto& b = prepared_[j];
        const Index rows = a.rows(), cols = a.cols();
        switch (kind_) {
            case DistanceKind::Bhattacharyya: {
                Eigen::ArrayXd& bc = coefficients(a, b);
                bc = bc.max(kProbabilityFloor).min(1.0);
                // One log per product of kLogGroup clamped coefficients;
                // the product stays above 1e-12^8, far from underflow.
                const Index groups = rows / kLogGroup;
                Eigen::Map<Eigen::ArrayXXd> grid(bc.data(), groups, kLogGroup);
                Eigen::ArrayXd prod = grid.col(0);
                for (Index g = 1; g < kLogGroup; ++g) prod *= grid.col(g);
                prod = prod.log();
                double acc = 0;
                for (Index k = 0; k < groups; ++k) acc -= prod(k);
                for (Index n = groups * kLogGroup; n < rows; ++n) acc -= std::log(bc(n));
                return acc / double(rows);
            }
            case DistanceKind::Hellinger: {
                const Eigen::ArrayXd& bc = coefficients(a, b);
                double prod = 1;
                for (Index n = 0; n < rows; ++n) prod *= std::min(bc(n), 1.0);
                return 2.0 * (1.0 - prod);
            }
            case DistanceKind::Geodesic: {
                double acc = 0;
                for (Index n = 0; n < rows; ++n) {
                    double diff = 0, sum = 0;
                    for (Index c = 0; c < cols; ++c) {
                        diff += (a(n, c) - b(n, c)) * (a(n, c) - b(n, c));
                        sum += (a(n, c) + b(n, c)) * (a(n, c) + b(n, c));
                    }
                    acc += detail::half_angle(diff, sum);
                }
                return acc / double(rows);
            }
            case DistanceKind::SymmetricKL: {
                const auto& la = logs_[i];
                const auto& lb = logs_[j];
                double acc = 0;
                for (Index n = 0; n < rows; ++n) {
                    for (Index c = 0; c < cols; ++c) acc += (a(n, c) - b(n, c)) * (la(n, c) - lb(n, c));
                }
                return std::max(0.0, acc / double(rows));
            }
            case DistanceKind::SquaredEuclidean: {
                double acc = 0;
                for (Index n = 0; n < rows; ++n) {
                    for (Index c = 0; c < cols; ++c) acc += (a(n, c) - b(n, c)) * (a(n, c) - b(n, c));
                }
                return acc / double(rows);
            }
        }
        return 0.0;
    }

private:
    // Per-sample Bhattacharyya coefficients in a per-thread buffer.
    static Eigen::ArrayXd& coefficients(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
        thread_local Eigen::ArrayXd bc;
        bc = a.col(0).array() * b.col(0).array();
        for (Index c = 1; c < a.cols(); ++c) bc += a.col(c).array() * b.col(c).array();
        return bc;
    }

    DistanceKind kind_;
    std::vector<Eigen::MatrixXd> prepared_;
    std::vector<Eigen::MatrixXd> logs_;
};

double pair_distance(DistanceKind kind, const PredictionTensor& u, const PredictionTensor& v) {
    PairKernel kernel(kind);
    kernel.add(u);
    kernel.add(v);
    return kernel(0, 1);
}

}  // namespace

std::string_view to_string(DistanceKind kind) {
    switch (kind) {
        case DistanceKind::Bhattacharyya: return "bhat";
        case DistanceKind::Geodesic: return "geo";
        case DistanceKind::SymmetricKL: return "skl";
        case DistanceKind::Hellinger: return "hell";
        case DistanceKind::SquaredEuclidean: return "euclid";
    }
    return "unknown";
}

DistanceKind parse_distance_kind(std::string_view name) {
    if (name == "bhat" || name == "Bhattacharyya") return DistanceKind::Bhattacharyya;
    if (name == "geo" || name == "Geodesic") return DistanceKind::Geodesic;
    if (name == "skl" || name == "SymmetricKL") return DistanceKind::SymmetricKL;
    if (name == "hell" || name == "Hellinger") return DistanceKind::Hellinger;
    if (name == "euclid" || name == "SquaredEuclidean") return DistanceKind::SquaredEuclidean;
    throw ValidationError("unknown distance kind '" + std::string(name) + "'");
}

double bhattacharyya(const PredictionTensor& u, const PredictionTensor& v) {
    return pair_distance(DistanceKind::Bhattacharyya, u, v);
}
double geodesic_distance(const PredictionTensor& u, const PredictionTensor& v) {
    return pair_distance(DistanceKind::Geodesic, u, v);
}
double symmetric_kl(const PredictionTensor& u, const PredictionTensor& v) {
    return pair_distance(DistanceKind::SymmetricKL, u, v);
}
double hellinger(const PredictionTensor& u, const PredictionTensor& v) {
    return pair_distance(DistanceKind::Hellinger, u, v);
}
double squared_euclidean(const PredictionTensor& u, const PredictionTensor& v) {
    return pair_distance(DistanceKind::SquaredEuclidean, u, v);
}

double distance(DistanceKind kind, const PredictionTensor& u, const PredictionTensor& v) {
    switch (kind) {
        case DistanceKind::Bhattacharyya: return bhattacharyya(u, v);
        case DistanceKind::Geodesic: return geodesic_distance(u, v);
        case DistanceKind::SymmetricKL: return symmetric_kl(u, v);
        case DistanceKind::Hellinger: return hellinger(u, v);
        case DistanceKind::SquaredEuclidean: return squared_euclidean(u, v);
    }
    throw ValidationError("unknown distance kind");
}

std::pair<double, double> cross_entropy_half_check(const PredictionTensor& w, const LabelVector& truth) {
    if (truth.size() != w.n_samples()) throw ValidationError("label count does not match N");
    const PredictionTensor target = materialize_special(Truth{truth}, w.n_samples(), w.n_classes());
    double ce = 0;
    for (Index n = 0; n < w.n_samples(); ++n) {
        // d_B floors the coefficient sqrt(p) at kProbabilityFloor, i.e. p at its square.
        ce -= std::log(std::max(w.probs()(n, truth[n]), kProbabilityFloor * kProbabilityFloor));
    }
    return {bhattacharyya(w, target), 0.5 * ce / double(w.n_samples())};
}

void DistanceMatrix::validate() const {
    if (entries.rows() != entries.cols()) throw ValidationError("distance matrix is not square");
    if (!ids.empty() && static_cast<Index>(ids.size()) != entries.rows()) {
        throw ValidationError("distance matrix id count does not match its size");
    }
    for (Index i = 0; i < entries.rows(); ++i) {
        if (entries(i, i) != 0.0) throw ValidationError("distance matrix has a non-zero diagonal");
        for (Index j = 0; j < entries.cols(); ++j) {
            const double d = entries(i, j);
            if (!std::isfinite(d)) throw NumericalError("non-finite distance entry");
            if (d < 0.0) throw ValidationError("negative distance entry");
            if (std::abs(d - entries(j, i)) > 1e-12) throw ValidationError("distance matrix is not symmetric");
        }
    }
}

namespace {

// Fills rows [first, first + block.rows()) of the upper triangle (j > i) into
// `block`; the lower part of each block row is left untouched.
void compute_block(const PairKernel& kernel, Index first, Index m, unsigned threads, Eigen::MatrixXd& block) {
    const Index rows = block.rows();
    std::atomic<Index> next{0};
    auto worker = [&] {
        for (Index r = next++; r < rows; r = next++) {
            const Index i = first + r;
            for (Index j = i + 1; j < m; ++j) {
                block(r, j) = std::max(0.0, kernel(static_cast<std::size_t>(i), static_cast<std::size_t>(j)));
            }
        }
    };
    threads = std::max(1u, threads);
    if (threads == 1 || rows == 1) {
        worker();
        return;
    }
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < std::min<unsigned>(threads, static_cast<unsigned>(rows)); ++t) pool.emplace_back(worker);
}

std::vector<std::string> model_ids(std::span<const PredictionTensor> models) {
    std::vector<std::string> ids;
    ids.reserve(models.size());
    for (std::size_t i = 0; i < models.size(); ++i) {
        ids.push_back(models[i].model_id().empty() ? std::to_string(i) : models[i].model_id());
    }
    return ids;
}

}  // namespace

DistanceMatrix pairwise_matrix(std::span<const PredictionTensor> models, DistanceKind kind,
                               const PairwiseOptions& options) {
    if (options.chunk < 1) throw ValidationError("chunk must be >= 1");
    const Index m = static_cast<Index>(models.size());
    if (m > kMaxInMemoryModels) {
        throw ValidationError("m = " + std::to_string(m) + " exceeds the in-memory limit; use pairwise_to_file");
    }
    const PairKernel kernel(models, kind);

    DistanceMatrix out;
    out.kind = kind;
    out.ids = model_ids(models);
    out.entries = Eigen::MatrixXd::Zero(m, m);

    std::optional<io::DmxWriter> writer;
    Index start = 0;
    if (options.cache_path) {
        writer.emplace(*options.cache_path, kind, static_cast<std::uint64_t>(m));
        start = static_cast<Index>(writer->rows_completed());
        if (start > 0) {
            const DistanceMatrix partial = io::load_distance_matrix(*options.cache_path, false);
            out.entries.topRows(start) = partial.entries.topRows(start);
        }
    }
    for (Index first = start; first < m; first += options.chunk) {
        const Index rows = std::min(options.chunk, m - first);
        Eigen::MatrixXd block = Eigen::MatrixXd::Zero(rows, m);
        compute_block(kernel, first, m, options.threads, block);
        out.entries.middleRows(first, rows) = block;
        if (writer) writer->append_rows(block);
        if (options.on_block) options.on_block(first + rows, m);
    }
    out.entries.triangularView<Eigen::StrictlyLower>() = out.entries.transpose();
    out.entries.diagonal().setZero();
    return out;
}

void pairwise_to_file(std::span<const PredictionTensor> models, DistanceKind kind, const PairwiseOptions& options) {
    if (!options.cache_path) throw ValidationError("pairwise_to_file needs an output path");
    if (options.chunk < 1) throw ValidationError("chunk must be >= 1");
    const Index m = static_cast<Index>(models.size());
    const PairKernel kernel(models, kind);
    io::DmxWriter writer(*options.cache_path, kind, static_cast<std::uint64_t>(m));
    for (Index first = static_cast<Index>(writer.rows_completed()); first < m; first += options.chunk) {
        const Index rows = std::min(options.chunk, m - first);
        Eigen::MatrixXd block = Eigen::MatrixXd::Zero(rows, m);
        compute_block(kernel, first, m, options.threads, block);
        writer.append_rows(block);
        if (options.on_block) options.on_block(first + rows, m);
    }
}

Eigen::VectorXd distances_to(const PredictionTensor& w, std::span<const PredictionTensor> models, DistanceKind kind) {
    Eigen::VectorXd out(static_cast<Index>(models.size()));
    for (std::size_t u = 0; u < models.size(); ++u) {
        if (!w.same_shape(models[u])) throw ValidationError("shape mismatch against model " + std::to_string(u));
        out(static_cast<Index>(u)) = std::max(0.0, distance(kind, w, models[u]));
    }
    return out;
}

std::vector<PredictionTensor> random_class_projection(std::span<const PredictionTensor> models, Index target_classes,
                                                      std::uint64_t seed) {
    if (models.empty()) return {};
    if (target_classes < 2) throw ValidationError("class projection needs at least 2 target classes");
    const Index classes = models.front().n_classes();
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> expo(1.0);
    Eigen::MatrixXd mix(classes, target_classes);
    for (Index c = 0; c < classes; ++c) {
        for (Index k = 0; k < target_classes; ++k) mix(c, k) = expo(rng);
        mix.row(c) /= mix.row(c).sum();
    }
    std::vector<PredictionTensor> out;
    out.reserve(models.size());
    for (const auto& m : models) {
        if (m.n_classes() != classes) throw ValidationError("class projection needs a shared C");
        out.push_back(PredictionTensor::normalized(m.probs() * mix, m.model_id()));
    }
    return out;
}

}  // namespace manifold
