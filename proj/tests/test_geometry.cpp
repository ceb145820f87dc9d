#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "manifold/geometry.hpp"
#include "support.hpp"

using namespace manifold;
using support::rows;

namespace {

// Direct slerp of one row in square-root coordinates, written independently of Geodesic.
Eigen::RowVectorXd slerp_row(const Eigen::RowVectorXd& u, const Eigen::RowVectorXd& v, double alpha) {
    const Eigen::RowVectorXd a = u.cwiseSqrt(), b = v.cwiseSqrt();
    const double theta = std::acos(std::min(1.0, a.dot(b)));
    if (theta < 1e-12) return u;
    const Eigen::RowVectorXd r = (std::sin((1 - alpha) * theta) * a + std::sin(alpha * theta) * b) / std::sin(theta);
    const Eigen::RowVectorXd p = r.cwiseAbs2();
    return p / p.sum();
}

double grid_minimum(const std::function<double(double)>& f, int points) {
    double best = f(0.0);
    for (int i = 1; i <= points; ++i) best = std::min(best, f(double(i) / points));
    return best;
}

}  // namespace

TEST_CASE("geodesic endpoints are exact") {
    std::mt19937_64 rng(1);
    const auto u = support::random_model(6, 4, rng), v = support::random_model(6, 4, rng);
    const Geodesic g(u, v);
    CHECK(geodesic_point(g, 0.0).probs() == u.probs());
    CHECK(geodesic_point(g, 1.0).probs() == v.probs());
    CHECK_THROWS_AS(geodesic_point(g, -0.1), ValidationError);
    CHECK_THROWS_AS(geodesic_point(g, 1.1), ValidationError);
}

TEST_CASE("geodesic midpoint of uniform and a corner") {
    const Geodesic g(rows({{0.5, 0.5}}), rows({{1.0, 0.0}}));
    const auto mid = geodesic_point(g, 0.5);
    const double c = std::cos(std::numbers::pi / 8), s = std::sin(std::numbers::pi / 8);
    CHECK(mid.probs()(0, 0) == doctest::Approx(c * c).epsilon(1e-13));
    CHECK(mid.probs()(0, 1) == doctest::Approx(s * s).epsilon(1e-13));
    CHECK(mid.probs()(0, 0) == doctest::Approx(0.8535534).epsilon(1e-7));
    CHECK(mid.probs()(0, 1) == doctest::Approx(0.1464466).epsilon(1e-7));
    CHECK(g.half_angles()(0) == doctest::Approx(std::numbers::pi / 4).epsilon(1e-14));
}

TEST_CASE("coinciding samples stay fixed along the geodesic") {
    const auto u = rows({{0.2, 0.3, 0.5}, {0.6, 0.2, 0.2}});
    const auto v = rows({{0.2, 0.3, 0.5}, {0.1, 0.1, 0.8}});
    const Geodesic g(u, v);
    CHECK_FALSE(g.degenerate());
    for (double alpha : {0.1, 0.5, 0.9}) {
        const auto p = geodesic_point(g, alpha);
        CHECK((p.probs().row(0) - u.probs().row(0)).cwiseAbs().maxCoeff() <= 1e-15);
    }
    CHECK(Geodesic(u, u).degenerate());
}

TEST_CASE("geodesic points match a direct slerp") {
    std::mt19937_64 rng(2);
    const auto u = support::random_model(5, 3, rng), v = support::random_model(5, 3, rng);
    const Geodesic g(u, v);
    for (double alpha : {0.13, 0.5, 0.77}) {
        const auto p = geodesic_point(g, alpha);
        for (Index n = 0; n < 5; ++n) {
            const Eigen::RowVectorXd expected = slerp_row(u.probs().row(n), v.probs().row(n), alpha);
            CHECK((p.probs().row(n) - expected).cwiseAbs().maxCoeff() <= 1e-12);
        }
    }
}

TEST_CASE("midpoint equidistance and additivity") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        const auto u = support::random_model(10, 5, rng, 0.3), v = support::random_model(10, 5, rng, 0.3);
        const Geodesic g(u, v);
        const auto mid = geodesic_point(g, 0.5);
        CHECK(std::abs(geodesic_distance(u, mid) - geodesic_distance(mid, v)) <= 1e-10);
        const double total = geodesic_distance(u, v);
        for (auto [a, b] : {std::pair{0.1, 0.4}, {0.25, 0.9}, {0.0, 1.0}}) {
            CHECK(std::abs(geodesic_distance(geodesic_point(g, a), geodesic_point(g, b)) - (b - a) * total) <= 1e-10);
        }
    }
}

TEST_CASE("progress of points on the reference geodesic") {
    std::mt19937_64 rng(4);
    const auto labels = support::random_labels(40, 10, rng);
    const Geodesic ref = reference_geodesic(labels, 10);
    CHECK(progress(geodesic_point(ref, 0.37), ref) == doctest::Approx(0.37).epsilon(1e-5));
    for (int i = 0; i <= 10; ++i) {
        const double alpha = 0.1 * i;
        CHECK(std::abs(progress(geodesic_point(ref, alpha), ref) - alpha) <= 1e-5);
    }
    CHECK(progress(ignorance(40, 10), labels) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(progress(one_hot(labels, 10), labels) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("confident models below the error bound project onto the truth") {
    std::mt19937_64 rng(5);
    const Index n = 100, c = 10;
    const auto labels = support::random_labels(n, c, rng);
    for (double err : {0.0, 0.2, 0.5, 0.68}) {
        std::vector<int> wrong = labels.zero_based();
        const Index flips = Index(std::lround(err * n));
        for (Index i = 0; i < flips; ++i) wrong[std::size_t(i)] = (wrong[std::size_t(i)] + 1) % int(c);
        const auto w = one_hot(LabelVector::from_zero_based(wrong), c);
        CHECK(error_rate(w, labels) == doctest::Approx(double(flips) / n));
        CHECK(progress_error_bound(error_rate(w, labels), c) == ProgressBound::AtTruthProjection);
        CHECK(progress(w, labels) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("error bound classification") {
    CHECK(progress_error_bound(0.2, 10) == ProgressBound::AtTruthProjection);
    CHECK(progress_error_bound(0.9, 10) == ProgressBound::Interior);
    CHECK(progress_error_bound(1.0 - 1.0 / std::sqrt(10.0), 10) == ProgressBound::Interior);
    CHECK(progress_error_bound(0.6837, 10) == ProgressBound::AtTruthProjection);
    CHECK(progress_error_bound(0.6838, 10) == ProgressBound::Interior);
}

TEST_CASE("progress rejects a degenerate reference") {
    const auto p = ignorance(3, 4);
    CHECK_THROWS_AS(progress(p, p, p), ValidationError);
}

TEST_CASE("distance to geodesic matches a dense grid") {
    std::mt19937_64 rng(6);
    const auto u = support::random_model(2, 3, rng), v = support::random_model(2, 3, rng);
    const auto w = support::random_model(2, 3, rng);
    const Geodesic g(u, v);
    for (DistanceKind kind : {DistanceKind::Bhattacharyya, DistanceKind::Geodesic}) {
        const double solved = distance_to_geodesic(w, g, kind);
        const double grid = grid_minimum([&](double a) { return distance(kind, w, geodesic_point(g, a)); }, 100000);
        CHECK(std::abs(solved - grid) <= 1e-6);
        const double coarse = grid_minimum([&](double a) { return distance(kind, w, geodesic_point(g, a)); }, 1000);
        CHECK(coarse >= solved - 1e-6);
    }
    CHECK(distance_to_geodesic(geodesic_point(g, 0.42), g, DistanceKind::Bhattacharyya) <= 1e-8);
    CHECK(distance_to_geodesic(u, g, DistanceKind::Bhattacharyya) <= 1e-8);
}

TEST_CASE("distance from a geodesic to a point") {
    std::mt19937_64 rng(7);
    const auto u = support::random_model(4, 2, rng), v = support::random_model(4, 2, rng);
    const auto x = support::random_model(4, 2, rng);
    const Geodesic g(u, v);
    const double solved = min_geodesic_distance_to_point(g, x, DistanceKind::Bhattacharyya);
    const double grid = grid_minimum([&](double a) { return bhattacharyya(geodesic_point(g, a), x); }, 100000);
    CHECK(std::abs(solved - grid) <= 1e-6);
    CHECK(min_geodesic_distance_to_point(g, u, DistanceKind::Bhattacharyya) <= 1e-8);
}

TEST_CASE("a corner-to-truth geodesic keeps away from ignorance") {
    // Labels agree with the truth on exactly N/C samples.
    const Index n = 100, c = 10;
    std::vector<int> truth(n), corner(n);
    for (Index i = 0; i < n; ++i) {
        truth[std::size_t(i)] = int(i % c);
        corner[std::size_t(i)] = i < n / c ? truth[std::size_t(i)] : int((i + 1) % c);
    }
    const auto p_truth = one_hot(LabelVector::from_zero_based(truth), c);
    const auto p_corner = one_hot(LabelVector::from_zero_based(corner), c);
    const Geodesic g(p_corner, p_truth);
    const double d = min_geodesic_distance_to_point(g, ignorance(n, c), DistanceKind::Bhattacharyya);
    const double bound = std::log(10.0) / 20 + 9 * std::log(5.0) / 20;
    CHECK(bound == doctest::Approx(0.8394).epsilon(1e-4));
    // Hand value: at alpha = 1/2 every disagreeing row has mass 1/2 on two classes.
    const double at_midpoint = 0.1 * 0.5 * std::log(10.0) + 0.9 * -std::log(2 * std::sqrt(0.05));
    CHECK(d <= at_midpoint + 1e-9);
    CHECK(d >= bound - 1e-3);
}
