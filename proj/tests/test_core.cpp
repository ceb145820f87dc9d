#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <fstream>

#include "manifold/io.hpp"
#include "support.hpp"

using namespace manifold;
namespace fs = std::filesystem;

namespace {

// Hand-rolled PRED1 writer so the loader is checked against the format, not against save_predictions.
void write_raw_pred(const fs::path& path, std::uint64_t n, std::uint32_t c, const std::vector<std::vector<float>>& checkpoints,
                    const std::vector<std::uint64_t>& steps) {
    std::ofstream out(path, std::ios::binary);
    out.write("PRD1", 4);
    const std::uint32_t version = 1, t = std::uint32_t(checkpoints.size());
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&n), 8);
    out.write(reinterpret_cast<const char*>(&c), 4);
    out.write(reinterpret_cast<const char*>(&t), 4);
    for (const auto& cp : checkpoints) out.write(reinterpret_cast<const char*>(cp.data()), std::streamsize(cp.size() * 4));
    for (auto s : steps) out.write(reinterpret_cast<const char*>(&s), 8);
}

Trajectory random_trajectory(Index t, Index n, Index c, std::mt19937_64& rng) {
    Trajectory traj;
    for (Index k = 0; k < t; ++k) traj.checkpoints.push_back({support::random_model(n, c, rng), 10 * k, 0.5 * double(k), {}});
    return traj;
}

}  // namespace

TEST_CASE("ignorance rows are uniform") {
    const PredictionTensor p = materialize_special(Ignorance{}, 2, 4);
    CHECK(p.n_samples() == 2);
    CHECK(p.n_classes() == 4);
    CHECK((p.probs().array() == 0.25).all());
}

TEST_CASE("truth is one-hot on 1-based labels") {
    const auto labels = LabelVector::from_one_based({2, 1});
    const PredictionTensor p = materialize_special(Truth{labels}, 2, 3);
    Eigen::MatrixXd expected(2, 3);
    expected << 0, 1, 0, 1, 0, 0;
    CHECK(p.probs() == expected);
    CHECK(error_rate(p, labels) == 0.0);
    CHECK(labels.one_based() == std::vector<int>{2, 1});
}

TEST_CASE("labels outside 1..C are rejected") {
    const auto labels = LabelVector::from_one_based({5});
    CHECK_THROWS_AS(materialize_special(Truth{labels}, 1, 3), ValidationError);
    CHECK_THROWS_AS(LabelVector::from_one_based({0}), ValidationError);
    CHECK_THROWS_AS(materialize_special(Corner{LabelVector::from_one_based({1, 2})}, 3, 3), ValidationError);
}

TEST_CASE("prediction tensor invariants") {
    ProbabilityMatrix<double> bad(1, 2);
    bad << 0.5, 0.4;
    CHECK_THROWS_AS(PredictionTensor{bad}, ValidationError);
    bad << 1.2, -0.2;
    CHECK_THROWS_AS(PredictionTensor{bad}, ValidationError);
    CHECK_THROWS_AS(PredictionTensor(ProbabilityMatrix<double>(0, 3)), ValidationError);
    CHECK_THROWS_AS(PredictionTensor(ProbabilityMatrix<double>::Ones(2, 1)), ValidationError);
    bad << 2.0, 6.0;
    CHECK(PredictionTensor::normalized(bad).probs()(0, 1) == doctest::Approx(0.75));
}

TEST_CASE("argmax ties go to the lowest class") {
    const PredictionTensor p0 = ignorance(4, 3);
    CHECK(error_rate(p0, LabelVector::from_one_based({1, 1, 1, 1})) == 0.0);
    CHECK(error_rate(p0, LabelVector::from_one_based({1, 2, 3, 2})) == 0.75);
}

TEST_CASE("trajectory validation") {
    std::mt19937_64 rng(3);
    Trajectory t = random_trajectory(3, 4, 2, rng);
    CHECK_NOTHROW(t.validate());
    t.checkpoints[2].step = t.checkpoints[1].step;
    CHECK_THROWS_AS(t.validate(), ValidationError);
    t.checkpoints[2].step = 100;
    t.checkpoints[1].tensor = support::random_model(5, 2, rng);
    CHECK_THROWS_AS(t.validate(), ValidationError);
    CHECK_THROWS_AS(Trajectory{}.validate(), ValidationError);
}

TEST_CASE("PRED1 round trip is bit exact at float32") {
    support::TempDir dir;
    std::mt19937_64 rng(11);
    Trajectory t = random_trajectory(3, 10, 5, rng);
    t.config.architecture = "mlp-8";
    t.config.optimizer = "sgd";
    t.config.batch_size = 16;
    t.config.seed = 4;
    const fs::path path = dir.path / "run.pred";
    io::save_predictions({t}, path);
    const auto loaded = io::load_predictions(path);
    REQUIRE(loaded.size() == 1);
    REQUIRE(loaded[0].size() == 3);
    CHECK(loaded[0].config == t.config);
    for (Index k = 0; k < 3; ++k) {
        const auto& cp = loaded[0].checkpoints[std::size_t(k)];
        CHECK(cp.step == 10 * k);
        CHECK(cp.epoch == 0.5 * double(k));
        const ProbabilityMatrix<float> expected = t.checkpoints[std::size_t(k)].tensor.probs().cast<float>();
        const ProbabilityMatrix<float> got = cp.tensor.probs().cast<float>();
        CHECK(std::memcmp(expected.data(), got.data(), sizeof(float) * std::size_t(expected.size())) == 0);
    }
}

TEST_CASE("PRED1 holds several records") {
    support::TempDir dir;
    std::mt19937_64 rng(12);
    const fs::path path = dir.path / "two.pred";
    io::save_predictions({random_trajectory(2, 3, 2, rng), random_trajectory(4, 5, 3, rng)}, path);
    const auto loaded = io::load_predictions(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[1].n_samples() == 5);
    CHECK(loaded[1].size() == 4);
}

TEST_CASE("empty container round trips to an empty list") {
    support::TempDir dir;
    const fs::path path = dir.path / "empty.pred";
    io::save_predictions({}, path);
    CHECK(fs::file_size(path) == 0);
    CHECK(io::load_predictions(path).empty());
}

TEST_CASE("loader repairs small row-sum errors and rejects large ones") {
    support::TempDir dir;
    const fs::path near = dir.path / "near.pred", far = dir.path / "far.pred";
    write_raw_pred(near, 1, 2, {{0.50005f, 0.5f}}, {0});
    const auto loaded = io::load_predictions(near);
    CHECK(loaded[0].checkpoints[0].tensor.probs().sum() == doctest::Approx(1.0).epsilon(1e-12));
    write_raw_pred(far, 1, 2, {{0.5f, 0.4f}}, {0});
    CHECK_THROWS_AS(io::load_predictions(far), ValidationError);
}

TEST_CASE("loader rejects malformed files") {
    support::TempDir dir;
    const fs::path nan = dir.path / "nan.pred", magic = dir.path / "magic.pred", cut = dir.path / "cut.pred";
    write_raw_pred(nan, 1, 2, {{std::nanf(""), 1.0f}}, {0});
    CHECK_THROWS_AS(io::load_predictions(nan), ValidationError);
    std::ofstream(magic, std::ios::binary) << "XXXXjunkjunkjunk";
    CHECK_THROWS_AS(io::load_predictions(magic), ValidationError);
    write_raw_pred(cut, 2, 2, {{0.5f, 0.5f, 0.5f, 0.5f}}, {0});
    fs::resize_file(cut, fs::file_size(cut) - 3);
    CHECK_THROWS_AS(io::load_predictions(cut), IoError);
    CHECK_THROWS_AS(io::load_predictions(dir.path / "missing.pred"), IoError);
}

TEST_CASE("saving to an unwritable path fails with an I/O error") {
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(io::save_predictions({random_trajectory(1, 2, 2, rng)}, "/nonexistent-dir/x/run.pred"), IoError);
}

TEST_CASE("labels files") {
    support::TempDir dir;
    const auto train = LabelVector::from_one_based({1, 3, 2}), test = LabelVector::from_one_based({2});
    io::save_labels({{"train", train}, {"test", test}}, dir.path / "labels.json");
    CHECK(io::load_labels(dir.path / "labels.json", "train").zero_based() == train.zero_based());
    CHECK(io::load_labels(dir.path / "labels.json", "test").zero_based() == test.zero_based());
    CHECK_THROWS_AS(io::load_labels(dir.path / "labels.json"), ValidationError);
}
