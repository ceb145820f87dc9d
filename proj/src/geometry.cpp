#include "manifold/geometry.hpp"

namespace manifold {

Geodesic::Geodesic(PredictionTensor start, PredictionTensor end) : start_(std::move(start)), end_(std::move(end)) {
    if (!start_.same_shape(end_)) throw ValidationError("geodesic endpoints have different shapes");
    sqrt_start_ = start_.probs().cwiseSqrt();
    sqrt_end_ = end_.probs().cwiseSqrt();
    half_angles_.resize(start_.n_samples());
    for (Index n = 0; n < start_.n_samples(); ++n) {
        const double diff = (sqrt_start_.row(n) - sqrt_end_.row(n)).squaredNorm();
        const double sum = (sqrt_start_.row(n) + sqrt_end_.row(n)).squaredNorm();
        half_angles_(n) = detail::half_angle(diff, sum);
    }
}

bool Geodesic::degenerate() const { return half_angles_.maxCoeff() < kDegenerateArc; }

ProbabilityMatrix<double> Geodesic::probabilities(double alpha) const {
    if (alpha == 0.0) return start_.probs();
    if (alpha == 1.0) return end_.probs();
    ProbabilityMatrix<double> out(sqrt_start_.rows(), sqrt_start_.cols());
    for (Index n = 0; n < out.rows(); ++n) {
        const double theta = half_angles_(n);
        double a, b;
        if (theta < kDegenerateArc) {
            a = 1.0 - alpha;
            b = alpha;
        } else {
            const double s = std::sin(theta);
            a = std::sin((1.0 - alpha) * theta) / s;
            b = std::sin(alpha * theta) / s;
        }
        out.row(n) = (a * sqrt_start_.row(n) + b * sqrt_end_.row(n)).array().square().matrix();
        out.row(n) /= out.row(n).sum();
    }
    return out;
}

PredictionTensor geodesic_point(const Geodesic& g, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
    if (alpha == 0.0) return g.start();
    if (alpha == 1.0) return g.end();
    return PredictionTensor(g.probabilities(alpha));
}

ScalarMinimum minimize_on_interval(const std::function<double(double)>& f, double lo, double hi, double tolerance,
                                   int max_iterations) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < max_iterations && (b - a) > tolerance; ++it) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    ScalarMinimum best{fc <= fd ? c : d, std::min(fc, fd)};
    for (double edge : {lo, hi}) {
        const double fe = f(edge);
        if (fe <= best.value) best = {edge, fe};
    }
    return best;
}

double progress(const PredictionTensor& w, const Geodesic& reference) {
    if (!w.same_shape(reference.start())) throw ValidationError("model and geodesic have different shapes");
    if (reference.degenerate()) throw ValidationError("degenerate geodesic: start and truth coincide");
    return minimize_on_interval(
               [&](double alpha) { return geodesic_distance(w.probs(), reference.probabilities(alpha)); }, 0.0, 1.0)
        .x;
}

double progress(const PredictionTensor& w, const PredictionTensor& start, const PredictionTensor& truth) {
    return progress(w, Geodesic(start, truth));
}

Geodesic reference_geodesic(const LabelVector& truth, Index n_classes) {
    return Geodesic(ignorance(truth.size(), n_classes), materialize_special(Truth{truth}, truth.size(), n_classes));
}

double progress(const PredictionTensor& w, const LabelVector& truth) {
    return progress(w, reference_geodesic(truth, w.n_classes()));
}

namespace {

double kind_distance(DistanceKind kind, const ProbabilityMatrix<double>& a, const ProbabilityMatrix<double>& b) {
    switch (kind) {
        case DistanceKind::Bhattacharyya: return bhattacharyya(a, b);
        case DistanceKind::Geodesic: return geodesic_distance(a, b);
        case DistanceKind::SymmetricKL: return symmetric_kl(a, b);
        case DistanceKind::Hellinger: return hellinger(a, b);
        case DistanceKind::SquaredEuclidean: return squared_euclidean(a, b);
    }
    throw ValidationError("unknown distance kind");
}

}  // namespace

double distance_to_geodesic(const PredictionTensor& w, const Geodesic& g, DistanceKind kind) {
    if (!w.same_shape(g.start())) throw ValidationError("model and geodesic have different shapes");
    return minimize_on_interval([&](double alpha) { return kind_distance(kind, w.probs(), g.probabilities(alpha)); },
                                0.0, 1.0)
        .value;
}

double min_geodesic_distance_to_point(const Geodesic& g, const PredictionTensor& x, DistanceKind kind) {
    if (!x.same_shape(g.start())) throw ValidationError("model and geodesic have different shapes");
    return minimize_on_interval([&](double alpha) { return kind_distance(kind, g.probabilities(alpha), x.probs()); },
                                0.0, 1.0)
        .value;
}

ProgressBound progress_error_bound(double error_rate, Index n_classes) {
    if (!(error_rate >= 0.0 && error_rate <= 1.0)) throw ValidationError("error rate must lie in [0, 1]");
    if (n_classes < 2) throw ValidationError("need C >= 2");
    return error_rate < 1.0 - 1.0 / std::sqrt(double(n_classes)) ? ProgressBound::AtTruthProjection
                                                                  : ProgressBound::Interior;
}

}  // namespace manifold
