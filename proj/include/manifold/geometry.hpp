#pragma once

#include <cmath>
#include <functional>

#include "manifold/core.hpp"
#include "manifold/metrics.hpp"

namespace manifold {

/// Per-sample arcs below this half angle are treated as a single point.
inline constexpr double kDegenerateArc = 1e-9;

/// Great-circle path between two models on the product of (C-1)-spheres,
/// in square-root coordinates.
class Geodesic {
public:
    Geodesic(PredictionTensor start, PredictionTensor end);

    const PredictionTensor& start() const { return start_; }
    const PredictionTensor& end() const { return end_; }
    /// d_G^n for each sample, in [0, pi/2].
    const Eigen::VectorXd& half_angles() const { return half_angles_; }
    /// True when every per-sample arc is degenerate.
    bool degenerate() const;

    /// Row-normalized probabilities at `alpha`, without tensor validation.
    ProbabilityMatrix<double> probabilities(double alpha) const;

private:
    PredictionTensor start_, end_;
    ProbabilityMatrix<double> sqrt_start_, sqrt_end_;
    Eigen::VectorXd half_angles_;
};

/// Point at interpolation parameter alpha in [0, 1]; the endpoints are
/// returned exactly.
PredictionTensor geodesic_point(const Geodesic& g, double alpha);

struct ScalarMinimum {
    double x = 0.0;
    double value = 0.0;
};

/// Golden-section search on [lo, hi], with both endpoints also considered.
/// Assumes unimodality; stops when the bracket is narrower than `tolerance`.
ScalarMinimum minimize_on_interval(const std::function<double(double)>& f, double lo, double hi,
                                   double tolerance = 1e-6, int max_iterations = 200);

/// argmin over alpha of d_G(w, P^alpha) along the geodesic start -> truth.
double progress(const PredictionTensor& w, const PredictionTensor& start, const PredictionTensor& truth);
double progress(const PredictionTensor& w, const Geodesic& reference);
/// Progress against the ignorance -> truth geodesic.
double progress(const PredictionTensor& w, const LabelVector& truth);

/// The ignorance -> truth geodesic for a label vector.
Geodesic reference_geodesic(const LabelVector& truth, Index n_classes);

/// min over alpha of d(w, P^alpha).
double distance_to_geodesic(const PredictionTensor& w, const Geodesic& g, DistanceKind kind);

/// min over alpha of d(P^alpha, x).
double min_geodesic_distance_to_point(const Geodesic& g, const PredictionTensor& x, DistanceKind kind);

enum class ProgressBound { AtTruthProjection, Interior };

/// Whether a confident model with this error rate is guaranteed to project
/// onto the truth end of the ignorance -> truth geodesic: error < 1 - C^-1/2.
ProgressBound progress_error_bound(double error_rate, Index n_classes);

}  // namespace manifold
