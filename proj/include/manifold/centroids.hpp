#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "manifold/core.hpp"

namespace manifold {

enum class CentroidKind { Arithmetic, SqrtArithmetic, Geometric, Harmonic, Bhattacharyya, Jeffreys };

inline constexpr CentroidKind kAllCentroidKinds[] = {CentroidKind::Arithmetic, CentroidKind::SqrtArithmetic,
                                                     CentroidKind::Geometric,  CentroidKind::Harmonic,
                                                     CentroidKind::Bhattacharyya, CentroidKind::Jeffreys};

std::string_view to_string(CentroidKind kind);
CentroidKind parse_centroid_kind(std::string_view name);

/// Principal branch W_0 on [0, inf), Halley iteration from log(1 + x).
double lambert_w0(double x);

struct CentroidOptions {
    int max_iterations = 1000;
    /// L1 change per row at which the Bhattacharyya fixed point stops.
    double tolerance = 1e-12;
};

/// Row-wise centroid on the simplex.
///
///   Arithmetic      mean p
///   SqrtArithmetic  (mean sqrt p)^2, renormalized
///   Geometric       exp(mean log p), renormalized
///   Harmonic        1 / mean(1/p), renormalized
///   Bhattacharyya   fixed point c <- (sum_i sqrt p_i / BC_i(c))^2, renormalized
///   Jeffreys        AM / W(e^(1-l) AM/GM) with l chosen so the row sums to 1
///
/// Probabilities are floored at kProbabilityFloor before logs and reciprocals.
PredictionTensor centroid(std::span<const PredictionTensor> models, CentroidKind kind,
                          const CentroidOptions& options = {});

/// One application of the Bhattacharyya fixed-point map to `current`.
PredictionTensor bhattacharyya_centroid_step(std::span<const PredictionTensor> models,
                                             const PredictionTensor& current);

/// Per-sample divergence from member p to candidate q whose simplex
/// minimizer (summed over members) is the centroid of that kind:
/// |p - q|^2, |sqrt p - sqrt q|^2, KL(q || p), chi^2(q || p) = sum (q-p)^2/p,
/// d_B and symmetric KL.
double centroid_divergence(const PredictionTensor& member, const PredictionTensor& candidate, CentroidKind kind);

/// Mean divergence from the members to the candidate.
double centroid_objective(std::span<const PredictionTensor> models, const PredictionTensor& candidate,
                          CentroidKind kind);

struct EnsembleRow {
    CentroidKind kind;
    double error = 0.0;
    double distance_to_truth = 0.0;
    double progress = 0.0;
};

std::vector<EnsembleRow> ensemble_report(std::span<const PredictionTensor> group, const LabelVector& truth);

/// CSV with header kind,error,d_B,progress.
std::string ensemble_report_csv(const std::vector<EnsembleRow>& rows);

}  // namespace manifold
