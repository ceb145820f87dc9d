#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "manifold/centroids.hpp"
#include "manifold/geometry.hpp"
#include "manifold/metrics.hpp"
#include "support.hpp"

using namespace manifold;
using support::rows;

namespace {

double grid_minimum(std::span<const PredictionTensor> models, CentroidKind kind, int points) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 1; i < points; ++i) {
        const double q = double(i) / points;
        best = std::min(best, centroid_objective(models, rows({{q, 1 - q}}), kind));
    }
    return best;
}

}  // namespace

TEST_CASE("Lambert W on the principal branch") {
    CHECK(lambert_w0(0.0) == 0.0);
    CHECK(lambert_w0(1.0) == doctest::Approx(0.5671432904097838).epsilon(1e-15));
    CHECK(lambert_w0(std::numbers::e) == doctest::Approx(1.0).epsilon(1e-15));
    for (double x : {0.01, 0.5, 3.0, 40.0, 1e6}) {
        const double w = lambert_w0(x);
        CHECK(w * std::exp(w) == doctest::Approx(x).epsilon(1e-12));
    }
}

TEST_CASE("arithmetic and harmonic centroids of a pair") {
    const std::vector<PredictionTensor> pair{rows({{0.2, 0.8}}), rows({{0.6, 0.4}})};
    const auto am = centroid(pair, CentroidKind::Arithmetic);
    CHECK(am.probs()(0, 0) == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(am.probs()(0, 1) == doctest::Approx(0.6).epsilon(1e-15));
    // Per-class harmonic means 0.3 and 0.5333..., renormalized.
    const double h0 = 2.0 / (1 / 0.2 + 1 / 0.6), h1 = 2.0 / (1 / 0.8 + 1 / 0.4);
    CHECK(h0 == doctest::Approx(0.3));
    const auto hm = centroid(pair, CentroidKind::Harmonic);
    CHECK(hm.probs()(0, 0) == doctest::Approx(h0 / (h0 + h1)).epsilon(1e-14));
    CHECK(hm.probs()(0, 0) == doctest::Approx(0.36).epsilon(1e-12));
    CHECK(hm.probs()(0, 1) == doctest::Approx(0.64).epsilon(1e-12));
    const auto gm = centroid(pair, CentroidKind::Geometric);
    const double g0 = std::sqrt(0.2 * 0.6), g1 = std::sqrt(0.8 * 0.4);
    CHECK(gm.probs()(0, 0) == doctest::Approx(g0 / (g0 + g1)).epsilon(1e-14));
    const auto sq = centroid(pair, CentroidKind::SqrtArithmetic);
    const double s0 = std::pow(0.5 * (std::sqrt(0.2) + std::sqrt(0.6)), 2), s1 = std::pow(0.5 * (std::sqrt(0.8) + std::sqrt(0.4)), 2);
    CHECK(sq.probs()(0, 0) == doctest::Approx(s0 / (s0 + s1)).epsilon(1e-14));
}

TEST_CASE("every centroid of identical inputs is that input") {
    std::mt19937_64 rng(1);
    const auto p = support::random_model(6, 4, rng);
    const std::vector<PredictionTensor> same{p, p, p};
    for (CentroidKind kind : kAllCentroidKinds) {
        CAPTURE(to_string(kind));
        CHECK((centroid(same, kind).probs() - p.probs()).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK(std::abs(centroid_objective(std::vector<PredictionTensor>{p}, p, kind)) <= 1e-12);
    }
}

TEST_CASE("centroids minimize their objective on a C=2 grid") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 3; ++trial) {
        const std::vector<PredictionTensor> pair{support::random_model(1, 2, rng), support::random_model(1, 2, rng)};
        for (CentroidKind kind : kAllCentroidKinds) {
            CAPTURE(to_string(kind));
            const double at_centroid = centroid_objective(pair, centroid(pair, kind), kind);
            CHECK(at_centroid <= grid_minimum(pair, kind, 10000) + 1e-8);
        }
    }
}

TEST_CASE("centroids lie on the simplex and ignore member order") {
    std::mt19937_64 rng(3);
    std::vector<PredictionTensor> models;
    for (int i = 0; i < 5; ++i) models.push_back(support::random_model(8, 5, rng, 0.2));
    std::vector<PredictionTensor> shuffled{models[3], models[0], models[4], models[2], models[1]};
    for (CentroidKind kind : kAllCentroidKinds) {
        CAPTURE(to_string(kind));
        const auto c = centroid(models, kind);
        CHECK((c.probs().rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
        CHECK(c.probs().minCoeff() >= 0.0);
        CHECK((centroid(shuffled, kind).probs() - c.probs()).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("the Bhattacharyya centroid is a fixed point") {
    std::mt19937_64 rng(4);
    std::vector<PredictionTensor> models;
    for (int i = 0; i < 4; ++i) models.push_back(support::random_model(10, 3, rng));
    const auto c = centroid(models, CentroidKind::Bhattacharyya);
    const auto next = bhattacharyya_centroid_step(models, c);
    CHECK((next.probs() - c.probs()).rowwise().lpNorm<1>().maxCoeff() <= 1e-10);
    // Objective agrees with the mean Bhattacharyya distance.
    double mean = 0.0;
    for (const auto& m : models) mean += bhattacharyya(m, c);
    CHECK(centroid_objective(models, c, CentroidKind::Bhattacharyya) == doctest::Approx(mean / 4).epsilon(1e-12));
}

TEST_CASE("empty input is rejected") {
    CHECK_THROWS_AS(centroid(std::vector<PredictionTensor>{}, CentroidKind::Arithmetic), ValidationError);
    std::mt19937_64 rng(5);
    const std::vector<PredictionTensor> mixed{support::random_model(2, 3, rng), support::random_model(3, 3, rng)};
    CHECK_THROWS_AS(centroid(mixed, CentroidKind::Harmonic), ValidationError);
}

TEST_CASE("ensemble of one perfect model") {
    const auto labels = LabelVector::from_one_based({1, 3, 2});
    const std::vector<PredictionTensor> group{one_hot(labels, 3)};
    const auto report = ensemble_report(group, labels);
    CHECK(report.size() == std::size(kAllCentroidKinds));
    for (const auto& row : report) {
        CHECK(row.error == 0.0);
        CHECK(row.progress == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("ensemble of two complementary models") {
    // Labels 1,2,1,2. A (confidence 0.9) is right on samples 0,1; B (0.7) on samples 1,2.
    const auto labels = LabelVector::from_one_based({1, 2, 1, 2});
    const auto a = rows({{0.9, 0.1}, {0.1, 0.9}, {0.1, 0.9}, {0.9, 0.1}});
    const auto b = rows({{0.3, 0.7}, {0.3, 0.7}, {0.7, 0.3}, {0.7, 0.3}});
    CHECK(error_rate(a, labels) == 0.5);
    CHECK(error_rate(b, labels) == 0.5);
    const std::vector<PredictionTensor> group{a, b};
    const auto report = ensemble_report(group, labels);
    // Averages (0.6,0.4), (0.2,0.8), (0.4,0.6), (0.8,0.2): right on samples 0 and 1.
    const auto am = std::find_if(report.begin(), report.end(), [](const auto& r) { return r.kind == CentroidKind::Arithmetic; });
    REQUIRE(am != report.end());
    CHECK(am->error == 0.5);
    const PredictionTensor avg(rows({{0.6, 0.4}, {0.2, 0.8}, {0.4, 0.6}, {0.8, 0.2}}));
    CHECK(am->distance_to_truth == doctest::Approx(bhattacharyya(avg, one_hot(labels, 2))).epsilon(1e-12));
    CHECK(am->progress == doctest::Approx(progress(avg, labels)).epsilon(1e-9));
}

TEST_CASE("ensemble CSV") {
    const auto labels = LabelVector::from_one_based({1, 2});
    const std::vector<PredictionTensor> group{rows({{0.8, 0.2}, {0.3, 0.7}})};
    const std::string csv = ensemble_report_csv(ensemble_report(group, labels));
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "kind,error,d_B,progress");
    int count = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++count;
        CHECK(std::count(line.begin(), line.end(), ',') == 3);
    }
    CHECK(count == int(std::size(kAllCentroidKinds)));
}

TEST_CASE("centroid kind names round trip") {
    for (CentroidKind kind : kAllCentroidKinds) CHECK(parse_centroid_kind(to_string(kind)) == kind);
    CHECK_THROWS_AS(parse_centroid_kind("median"), ValidationError);
}
