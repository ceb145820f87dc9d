#include "manifold/centroids.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "manifold/geometry.hpp"
#include "manifold/metrics.hpp"

namespace manifold {
namespace {

using Row = Eigen::RowVectorXd;

double floored(double p) { return std::max(p, kProbabilityFloor); }

void check_members(std::span<const PredictionTensor> models) {
    if (models.empty()) throw ValidationError("centroid of an empty set");
    for (const auto& m : models) {
        if (!m.same_shape(models.front())) throw ValidationError("centroid members differ in shape");
    }
}

Row bhattacharyya_step(std::span<const PredictionTensor> models, Index n, const Row& c) {
    const Index classes = c.size();
    Row acc = Row::Zero(classes);
    for (const auto& m : models) {
        const auto p = m.probs().row(n);
        double bc = 0.0;
        for (Index k = 0; k < classes; ++k) bc += std::sqrt(p(k) * c(k));
        bc = std::max(bc, kProbabilityFloor);
        for (Index k = 0; k < classes; ++k) acc(k) += std::sqrt(p(k)) / bc;
    }
    Row next = acc.array().square();
    return next / next.sum();
}

Row bhattacharyya_row(std::span<const PredictionTensor> models, Index n, Index classes,
                      const CentroidOptions& options) {
    Row c = Row::Constant(classes, 1.0 / double(classes));
    for (int it = 0; it < options.max_iterations; ++it) {
        Row next = bhattacharyya_step(models, n, c);
        const double change = (next - c).cwiseAbs().sum();
        c = std::move(next);
        if (change <= options.tolerance) break;
    }
    return c;
}

// Simplex Jeffreys centroid of one row: q_k = a_k / W(e^(1-l) a_k / g_k),
// with the multiplier l found by safeguarded Newton so that sum q = 1.
Row jeffreys_row(const Row& am, const Row& log_gm) {
    const Index classes = am.size();
    Row q(classes);
    auto evaluate = [&](double l, double& slope) {
        double total = 0.0;
        slope = 0.0;
        for (Index k = 0; k < classes; ++k) {
            // a/g can be enormous; work with the log of the Lambert argument.
            const double log_x = 1.0 - l + std::log(am(k)) - log_gm(k);
            const double w = lambert_w0(std::exp(std::min(log_x, 700.0)));
            q(k) = am(k) / w;
            total += q(k);
            slope += q(k) / (1.0 + w);
        }
        return total - 1.0;
    };
    double lo = -1.0, hi = 1.0, slope = 0.0;
    // sum q(l) is increasing in l.
    while (evaluate(lo, slope) > 0.0) lo *= 2.0;
    while (evaluate(hi, slope) < 0.0) hi *= 2.0;
    double l = 0.0;
    for (int it = 0; it < 200; ++it) {
        const double h = evaluate(l, slope);
        if (std::abs(h) <= 1e-15) break;
        (h > 0.0 ? hi : lo) = l;
        double next = l - h / slope;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (next == l) break;
        l = next;
    }
    evaluate(l, slope);
    return q / q.sum();
}

}  // namespace

std::string_view to_string(CentroidKind kind) {
    switch (kind) {
        case CentroidKind::Arithmetic: return "arithmetic";
        case CentroidKind::SqrtArithmetic: return "sqrt_arithmetic";
        case CentroidKind::Geometric: return "geometric";
        case CentroidKind::Harmonic: return "harmonic";
        case CentroidKind::Bhattacharyya: return "bhattacharyya";
        case CentroidKind::Jeffreys: return "jeffreys";
    }
    return "unknown";
}

CentroidKind parse_centroid_kind(std::string_view name) {
    for (CentroidKind k : kAllCentroidKinds) {
        if (to_string(k) == name) return k;
    }
    if (name == "am") return CentroidKind::Arithmetic;
    if (name == "gm") return CentroidKind::Geometric;
    if (name == "hm") return CentroidKind::Harmonic;
    throw ValidationError("unknown centroid kind '" + std::string(name) + "'");
}

double lambert_w0(double x) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ValidationError("lambert_w0 needs a finite x >= 0");
    if (x == 0.0) return 0.0;
    double w = std::log1p(x);
    for (int it = 0; it < 100; ++it) {
        const double ew = std::exp(w);
        const double f = w * ew - x;
        const double step = f / (ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0));
        w -= step;
        if (std::abs(step) <= 1e-12 * (1.0 + std::abs(w))) break;
    }
    return w;
}

PredictionTensor centroid(std::span<const PredictionTensor> models, CentroidKind kind,
                          const CentroidOptions& options) {
    check_members(models);
    const Index n_samples = models.front().n_samples(), classes = models.front().n_classes();
    const double count = double(models.size());
    ProbabilityMatrix<double> out(n_samples, classes);
    for (Index n = 0; n < n_samples; ++n) {
        Row am = Row::Zero(classes), sqrt_mean = Row::Zero(classes), log_mean = Row::Zero(classes),
            inv_mean = Row::Zero(classes);
        for (const auto& m : models) {
            for (Index k = 0; k < classes; ++k) {
                const double p = m.probs()(n, k);
                am(k) += p / count;
                sqrt_mean(k) += std::sqrt(p) / count;
                log_mean(k) += std::log(floored(p)) / count;
                inv_mean(k) += 1.0 / floored(p) / count;
            }
        }
        Row row;
        switch (kind) {
            case CentroidKind::Arithmetic: row = am; break;
            case CentroidKind::SqrtArithmetic: row = sqrt_mean.array().square(); break;
            case CentroidKind::Geometric: row = log_mean.array().exp(); break;
            case CentroidKind::Harmonic: row = inv_mean.cwiseInverse(); break;
            case CentroidKind::Bhattacharyya: row = bhattacharyya_row(models, n, classes, options); break;
            case CentroidKind::Jeffreys: row = jeffreys_row(am.cwiseMax(kProbabilityFloor), log_mean); break;
        }
        out.row(n) = row / row.sum();
    }
    return PredictionTensor(std::move(out), std::string(to_string(kind)));
}

PredictionTensor bhattacharyya_centroid_step(std::span<const PredictionTensor> models,
                                             const PredictionTensor& current) {
    check_members(models);
    if (!current.same_shape(models.front())) throw ValidationError("centroid candidate shape mismatch");
    ProbabilityMatrix<double> out(current.n_samples(), current.n_classes());
    for (Index n = 0; n < current.n_samples(); ++n) out.row(n) = bhattacharyya_step(models, n, current.probs().row(n));
    return PredictionTensor(std::move(out));
}

double centroid_divergence(const PredictionTensor& member, const PredictionTensor& candidate, CentroidKind kind) {
    if (!member.same_shape(candidate)) throw ValidationError("centroid divergence shape mismatch");
    const auto& p = member.probs();
    const auto& q = candidate.probs();
    double acc = 0.0;
    switch (kind) {
        case CentroidKind::Arithmetic: return squared_euclidean(member, candidate);
        case CentroidKind::Bhattacharyya: return bhattacharyya(member, candidate);
        case CentroidKind::Jeffreys: return symmetric_kl(member, candidate);
        case CentroidKind::SqrtArithmetic:
            acc = (p.cwiseSqrt() - q.cwiseSqrt()).squaredNorm();
            break;
        case CentroidKind::Geometric:
            for (Index n = 0; n < p.rows(); ++n) {
                for (Index k = 0; k < p.cols(); ++k) {
                    if (q(n, k) > 0.0) acc += q(n, k) * (std::log(q(n, k)) - std::log(floored(p(n, k))));
                }
            }
            break;
        case CentroidKind::Harmonic:
            for (Index n = 0; n < p.rows(); ++n) {
                for (Index k = 0; k < p.cols(); ++k) {
                    const double diff = q(n, k) - p(n, k);
                    acc += diff * diff / floored(p(n, k));
                }
            }
            break;
    }
    return acc / double(p.rows());
}

double centroid_objective(std::span<const PredictionTensor> models, const PredictionTensor& candidate,
                          CentroidKind kind) {
    check_members(models);
    double total = 0.0;
    for (const auto& m : models) total += centroid_divergence(m, candidate, kind);
    return total / double(models.size());
}

std::vector<EnsembleRow> ensemble_report(std::span<const PredictionTensor> group, const LabelVector& truth) {
    check_members(group);
    const Index classes = group.front().n_classes();
    truth.check_classes(classes);
    if (truth.size() != group.front().n_samples()) throw ValidationError("label count does not match N");
    const PredictionTensor target = one_hot(truth, classes);
    const Geodesic reference = reference_geodesic(truth, classes);
    std::vector<EnsembleRow> rows;
    for (CentroidKind kind : kAllCentroidKinds) {
        const PredictionTensor c = centroid(group, kind);
        rows.push_back({kind, error_rate(c, truth), bhattacharyya(c, target), progress(c, reference)});
    }
    return rows;
}

std::string ensemble_report_csv(const std::vector<EnsembleRow>& rows) {
    std::ostringstream out;
    out.precision(17);
    out << "kind,error,d_B,progress\n";
    for (const auto& r : rows) out << to_string(r.kind) << ',' << r.error << ',' << r.distance_to_truth << ',' << r.progress << '\n';
    return out.str();
}

}  // namespace manifold
