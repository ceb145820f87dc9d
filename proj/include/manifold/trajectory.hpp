#pragma once

#include <span>
#include <vector>

#include "manifold/core.hpp"
#include "manifold/geometry.hpp"
#include "manifold/metrics.hpp"

namespace manifold {

/// Default number of uniform progress grid points.
inline constexpr Index kDefaultGridPoints = 50;

/// A trajectory sampled at uniformly spaced progress values.
struct ResampledTrajectory {
    Eigen::VectorXd grid;
    std::vector<PredictionTensor> points;
    ConfigTag config;

    Index size() const { return grid.size(); }
    double s_min() const { return grid(0); }
    double s_max() const { return grid(grid.size() - 1); }
};

/// Running maximum; makes a progress sequence usable as a curve parameter.
std::vector<double> monotonize_progress(std::vector<double> progress);

/// Fills each checkpoint's progress against `reference` (normally the
/// ignorance -> truth geodesic), monotonized by running maximum.
Trajectory index_by_progress(Trajectory t, const Geodesic& reference);
Trajectory index_by_progress(Trajectory t, const LabelVector& truth);

/// Samples k points uniformly in [s_first, s_last]. Each point is the
/// geodesic interpolant between its bracketing checkpoints; when several
/// checkpoints share a progress value the latest one brackets.
ResampledTrajectory resample(const Trajectory& t, Index k = kDefaultGridPoints);

/// Same, on an explicit progress range inside the trajectory's own.
ResampledTrajectory resample(const Trajectory& t, Index k, double s_lo, double s_hi);

/// Mean of d_B(a(s), b(s)) over the common progress range, by the trapezoid
/// rule. Differing grids are first re-interpolated onto a shared grid over
/// the intersection of the two ranges.
double trajectory_distance(const ResampledTrajectory& a, const ResampledTrajectory& b,
                           DistanceKind kind = DistanceKind::Bhattacharyya);

/// Pointwise arithmetic mean of probabilities.
ResampledTrajectory mean_trajectory(std::span<const ResampledTrajectory> group);

struct TubeWidth {
    /// members x grid points: d_B(member(s), mean(s)).
    Eigen::MatrixXd distances;
    Eigen::VectorXd median() const;
};

TubeWidth tube_width(std::span<const ResampledTrajectory> group);

/// distance_to_geodesic at every grid point.
Eigen::VectorXd geodesic_profile(const ResampledTrajectory& t, const Geodesic& g,
                                 DistanceKind kind = DistanceKind::Bhattacharyya);

/// d_traj between every pair; ids are taken from `ids` when given.
DistanceMatrix trajectory_distance_matrix(std::span<const ResampledTrajectory> trajectories,
                                          DistanceKind kind = DistanceKind::Bhattacharyya,
                                          std::vector<std::string> ids = {});

enum class GroupAveraging {
    /// d_traj per member pair, then averaged per group pair.
    MeanOfDistances,
    /// d_traj between the groups' mean trajectories.
    DistanceOfMeans,
};

/// Group-level trajectory distances, e.g. configurations averaged over
/// seeds. `group_of[i]` is the group index of trajectory i.
DistanceMatrix group_distance_matrix(std::span<const ResampledTrajectory> trajectories,
                                     const std::vector<Index>& group_of, GroupAveraging order,
                                     std::vector<std::string> group_ids = {},
                                     DistanceKind kind = DistanceKind::Bhattacharyya);

}  // namespace manifold
