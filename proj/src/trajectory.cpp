#include "manifold/trajectory.hpp"

#include <algorithm>

namespace manifold {
namespace {

constexpr double kGridMatch = 1e-12;

// Point at progress s on the curve through (progress[k], points[k]).
// `progress` is non-decreasing; ties resolve to the latest point.
PredictionTensor interpolate_at(const std::vector<double>& progress, std::span<const PredictionTensor> points,
                                double s) {
    const auto upper = std::upper_bound(progress.begin(), progress.end(), s);
    if (upper == progress.begin()) return points.front();
    const auto j = static_cast<std::size_t>(std::distance(progress.begin(), upper) - 1);
    if (j + 1 >= progress.size()) return points.back();
    const double alpha = (s - progress[j]) / (progress[j + 1] - progress[j]);
    if (alpha <= 0.0) return points[j];
    return geodesic_point(Geodesic(points[j], points[j + 1]), std::min(alpha, 1.0));
}

Eigen::VectorXd uniform_grid(Index k, double lo, double hi) {
    Eigen::VectorXd grid(k);
    for (Index i = 0; i < k; ++i) grid(i) = lo + (hi - lo) * double(i) / double(k - 1);
    grid(k - 1) = hi;
    return grid;
}

bool same_grid(const ResampledTrajectory& a, const ResampledTrajectory& b) {
    return a.size() == b.size() && (a.grid - b.grid).cwiseAbs().maxCoeff() <= kGridMatch;
}

ResampledTrajectory regrid(const ResampledTrajectory& t, Index k, double lo, double hi) {
    const std::vector<double> progress(t.grid.data(), t.grid.data() + t.grid.size());
    ResampledTrajectory out;
    out.grid = uniform_grid(k, lo, hi);
    out.config = t.config;
    out.points.reserve(static_cast<std::size_t>(k));
    for (Index i = 0; i < k; ++i) out.points.push_back(interpolate_at(progress, t.points, out.grid(i)));
    return out;
}

void check_group(std::span<const ResampledTrajectory> group) {
    if (group.empty()) throw ValidationError("empty trajectory group");
    for (const auto& t : group) {
        if (!same_grid(t, group.front())) throw ValidationError("trajectory group has mismatched progress grids");
    }
}

}  // namespace

std::vector<double> monotonize_progress(std::vector<double> progress) {
    for (std::size_t k = 1; k < progress.size(); ++k) progress[k] = std::max(progress[k], progress[k - 1]);
    return progress;
}

Trajectory index_by_progress(Trajectory t, const Geodesic& reference) {
    if (t.size() < 2) throw ValidationError("progress indexing needs at least 2 checkpoints");
    t.validate();
    std::vector<double> raw;
    raw.reserve(t.checkpoints.size());
    for (const auto& cp : t.checkpoints) raw.push_back(progress(cp.tensor, reference));
    const auto effective = monotonize_progress(std::move(raw));
    for (std::size_t k = 0; k < t.checkpoints.size(); ++k) t.checkpoints[k].progress = effective[k];
    return t;
}

Trajectory index_by_progress(Trajectory t, const LabelVector& truth) {
    if (t.checkpoints.empty()) throw ValidationError("progress indexing needs at least 2 checkpoints");
    const Geodesic reference = reference_geodesic(truth, t.n_classes());
    return index_by_progress(std::move(t), reference);
}

ResampledTrajectory resample(const Trajectory& t, Index k, double s_lo, double s_hi) {
    if (t.size() < 2) throw ValidationError("resampling needs at least 2 checkpoints");
    if (!t.indexed()) throw ValidationError("trajectory is not progress-indexed");
    if (k < 2) throw ValidationError("resampling needs k >= 2");
    std::vector<double> progress;
    std::vector<PredictionTensor> points;
    for (const auto& cp : t.checkpoints) {
        progress.push_back(*cp.progress);
        points.push_back(cp.tensor);
    }
    if (!std::is_sorted(progress.begin(), progress.end())) {
        throw ValidationError("checkpoint progress must be non-decreasing; see monotonize_progress");
    }
    if (!(s_hi > s_lo)) throw ValidationError("trajectory has an empty progress range");
    if (s_lo < progress.front() - kGridMatch || s_hi > progress.back() + kGridMatch) {
        throw ValidationError("requested progress range lies outside the trajectory");
    }
    ResampledTrajectory out;
    out.grid = uniform_grid(k, s_lo, s_hi);
    out.config = t.config;
    out.points.reserve(static_cast<std::size_t>(k));
    for (Index i = 0; i < k; ++i) out.points.push_back(interpolate_at(progress, points, out.grid(i)));
    return out;
}

ResampledTrajectory resample(const Trajectory& t, Index k) {
    if (t.size() < 2) throw ValidationError("resampling needs at least 2 checkpoints");
    if (!t.indexed()) throw ValidationError("trajectory is not progress-indexed");
    return resample(t, k, *t.checkpoints.front().progress, *t.checkpoints.back().progress);
}

double trajectory_distance(const ResampledTrajectory& a, const ResampledTrajectory& b, DistanceKind kind) {
    if (a.size() < 2 || b.size() < 2) throw ValidationError("resampled trajectories need at least 2 points");
    if (!same_grid(a, b)) {
        const double lo = std::max(a.s_min(), b.s_min());
        const double hi = std::min(a.s_max(), b.s_max());
        if (!(hi > lo)) throw ValidationError("trajectories share no progress range");
        const Index k = std::max(a.size(), b.size());
        return trajectory_distance(regrid(a, k, lo, hi), regrid(b, k, lo, hi), kind);
    }
    const Index k = a.size();
    Eigen::VectorXd values(k);
    for (Index i = 0; i < k; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        values(i) = std::max(0.0, distance(kind, a.points[idx], b.points[idx]));
    }
    double integral = 0.0;
    for (Index i = 0; i + 1 < k; ++i) integral += 0.5 * (values(i) + values(i + 1)) * (a.grid(i + 1) - a.grid(i));
    return integral / (a.s_max() - a.s_min());
}

ResampledTrajectory mean_trajectory(std::span<const ResampledTrajectory> group) {
    check_group(group);
    const auto& first = group.front();
    ResampledTrajectory out;
    out.grid = first.grid;
    out.config = first.config;
    for (Index i = 0; i < first.size(); ++i) {
        const auto idx = static_cast<std::size_t>(i);
        ProbabilityMatrix<double> sum = ProbabilityMatrix<double>::Zero(first.points[idx].n_samples(),
                                                                        first.points[idx].n_classes());
        for (const auto& t : group) {
            if (!t.points[idx].same_shape(first.points[idx])) throw ValidationError("trajectory shapes differ");
            sum += t.points[idx].probs();
        }
        out.points.push_back(PredictionTensor::normalized(sum / double(group.size())));
    }
    return out;
}

Eigen::VectorXd TubeWidth::median() const {
    Eigen::VectorXd out(distances.cols());
    for (Index s = 0; s < distances.cols(); ++s) {
        std::vector<double> col(distances.col(s).data(), distances.col(s).data() + distances.rows());
        std::sort(col.begin(), col.end());
        const std::size_t n = col.size();
        out(s) = n % 2 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
    }
    return out;
}

TubeWidth tube_width(std::span<const ResampledTrajectory> group) {
    const ResampledTrajectory mean = mean_trajectory(group);
    TubeWidth out;
    out.distances.resize(static_cast<Index>(group.size()), mean.size());
    for (std::size_t u = 0; u < group.size(); ++u) {
        for (Index s = 0; s < mean.size(); ++s) {
            const auto idx = static_cast<std::size_t>(s);
            out.distances(static_cast<Index>(u), s) = bhattacharyya(group[u].points[idx], mean.points[idx]);
        }
    }
    return out;
}

Eigen::VectorXd geodesic_profile(const ResampledTrajectory& t, const Geodesic& g, DistanceKind kind) {
    Eigen::VectorXd out(t.size());
    for (Index s = 0; s < t.size(); ++s) {
        out(s) = distance_to_geodesic(t.points[static_cast<std::size_t>(s)], g, kind);
    }
    return out;
}

DistanceMatrix trajectory_distance_matrix(std::span<const ResampledTrajectory> trajectories, DistanceKind kind,
                                          std::vector<std::string> ids) {
    const auto m = static_cast<Index>(trajectories.size());
    DistanceMatrix out;
    out.kind = kind;
    out.entries = Eigen::MatrixXd::Zero(m, m);
    for (Index i = 0; i < m; ++i) {
        for (Index j = i + 1; j < m; ++j) {
            out.entries(i, j) = out.entries(j, i) =
                trajectory_distance(trajectories[static_cast<std::size_t>(i)], trajectories[static_cast<std::size_t>(j)],
                                    kind);
        }
    }
    if (ids.empty()) {
        for (Index i = 0; i < m; ++i) ids.push_back(std::to_string(i));
    }
    if (static_cast<Index>(ids.size()) != m) throw ValidationError("id count does not match trajectory count");
    out.ids = std::move(ids);
    return out;
}

DistanceMatrix group_distance_matrix(std::span<const ResampledTrajectory> trajectories,
                                     const std::vector<Index>& group_of, GroupAveraging order,
                                     std::vector<std::string> group_ids, DistanceKind kind) {
    if (group_of.size() != trajectories.size()) throw ValidationError("group assignment length mismatch");
    if (trajectories.empty()) return DistanceMatrix{kind, Eigen::MatrixXd(0, 0), {}};
    const Index groups = *std::max_element(group_of.begin(), group_of.end()) + 1;
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(groups));
    for (std::size_t i = 0; i < group_of.size(); ++i) {
        if (group_of[i] < 0) throw ValidationError("negative group index");
        members[static_cast<std::size_t>(group_of[i])].push_back(i);
    }
    for (const auto& g : members) {
        if (g.empty()) throw ValidationError("group indices must be contiguous");
    }
    if (group_ids.empty()) {
        for (Index g = 0; g < groups; ++g) group_ids.push_back(std::to_string(g));
    }

    if (order == GroupAveraging::MeanOfDistances) {
        const DistanceMatrix full = trajectory_distance_matrix(trajectories, kind);
        DistanceMatrix out{kind, Eigen::MatrixXd::Zero(groups, groups), std::move(group_ids)};
        for (Index g = 0; g < groups; ++g) {
            for (Index h = g + 1; h < groups; ++h) {
                double total = 0.0;
                for (auto i : members[static_cast<std::size_t>(g)]) {
                    for (auto j : members[static_cast<std::size_t>(h)]) {
                        total += full.entries(static_cast<Index>(i), static_cast<Index>(j));
                    }
                }
                out.entries(g, h) = out.entries(h, g) =
                    total / double(members[static_cast<std::size_t>(g)].size() * members[static_cast<std::size_t>(h)].size());
            }
        }
        return out;
    }

    std::vector<ResampledTrajectory> means;
    for (const auto& g : members) {
        double lo = -1.0, hi = 2.0;
        Index k = 2;
        for (auto i : g) {
            lo = std::max(lo, trajectories[i].s_min());
            hi = std::min(hi, trajectories[i].s_max());
            k = std::max(k, trajectories[i].size());
        }
        if (!(hi > lo)) throw ValidationError("group members share no progress range");
        std::vector<ResampledTrajectory> aligned;
        for (auto i : g) aligned.push_back(regrid(trajectories[i], k, lo, hi));
        means.push_back(mean_trajectory(aligned));
    }
    return trajectory_distance_matrix(means, kind, std::move(group_ids));
}

}  // namespace manifold
