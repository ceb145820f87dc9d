#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "manifold/metrics.hpp"
#include "manifold/synth.hpp"
#include "support.hpp"

using namespace manifold;
using namespace manifold::synth;

namespace {

GaussianDatasetSpec small_spec(double c, std::uint64_t seed = 1) {
    GaussianDatasetSpec s;
    s.n_train = 200;
    s.n_test = 50;
    s.input_dim = 20;
    s.sloppiness = c;
    s.seed = seed;
    return s;
}

OptimizerSpec sgd(double lr, Index batch, Index epochs) {
    OptimizerSpec o;
    o.learning_rate = lr;
    o.batch_size = batch;
    o.epochs = epochs;
    return o;
}

TrainOptions seeded(std::uint64_t seed) {
    TrainOptions o;
    o.seed = seed;
    return o;
}

}  // namespace

TEST_CASE("covariance spectrum") {
    GaussianDatasetSpec s;
    s.input_dim = 200;
    s.sloppiness = 0.001;
    const Eigen::VectorXd slight = covariance_spectrum(s);
    CHECK(slight(0) == doctest::Approx(50 * 0.001 * std::exp(-0.001)).epsilon(1e-14));
    CHECK(slight(0) / slight(199) == doctest::Approx(std::exp(0.199)).epsilon(1e-12));
    CHECK(slight(0) / slight(199) == doctest::Approx(1.2202).epsilon(1e-4));

    s.sloppiness = 0.5;
    const Eigen::VectorXd steep = covariance_spectrum(s);
    CHECK(steep(0) == doctest::Approx(25 * std::exp(-0.5)).epsilon(1e-14));
    CHECK(steep.minCoeff() >= kMinEigenvalue);
    CHECK(steep(199) == kMinEigenvalue);

    s.sloppiness = 0.0;
    CHECK((covariance_spectrum(s).array() == 1.0).all());
}

TEST_CASE("sample covariance follows the spectrum") {
    GaussianDatasetSpec s = small_spec(0.3);
    s.n_train = 20000;
    const Dataset data = sample_dataset(s);
    const Eigen::VectorXd lambda = covariance_spectrum(s);
    const Eigen::VectorXd var = data.train_inputs.colwise().squaredNorm().transpose() / double(s.n_train);
    for (Index i = 0; i < 5; ++i) CHECK(var(i) == doctest::Approx(lambda(i)).epsilon(0.05));
    CHECK(std::abs(data.train_inputs.col(0).mean()) <= 5 * std::sqrt(lambda(0) / s.n_train));
}

TEST_CASE("datasets are deterministic under the seed") {
    const Dataset a = sample_dataset(small_spec(0.5, 9)), b = sample_dataset(small_spec(0.5, 9));
    CHECK(a.train_inputs == b.train_inputs);
    CHECK(a.test_inputs == b.test_inputs);
    CHECK(sample_dataset(small_spec(0.5, 10)).train_inputs != a.train_inputs);
    GaussianDatasetSpec bad = small_spec(0.5);
    bad.input_dim = 0;
    CHECK_THROWS_AS(sample_dataset(bad), ValidationError);
}

TEST_CASE("forward pass of a hand-built network") {
    // 2 inputs -> 2 ReLU units (identity) -> 3 logits.
    Mlp<double> net;
    net.weights.push_back(Eigen::Matrix<double, 2, 2, Eigen::RowMajor>::Identity());
    net.biases.push_back(Eigen::RowVector2d(0.0, 0.0));
    Mlp<double>::Matrix last(2, 3);
    last << 1, 0, -1, 0, 1, -1;
    net.weights.push_back(last);
    net.biases.push_back(Eigen::RowVector3d(0.0, 0.0, 0.5));
    Mlp<double>::Matrix x(3, 2);
    x << 2, 1, -1, 3, -2, -1;
    // Hidden: (2,1), (0,3), (0,0). Logits: (2,1,-2.5), (0,3,-2.5), (0,0,0.5).
    const auto logits = forward(net, x);
    CHECK(logits(0, 0) == 2.0);
    CHECK(logits(0, 2) == -2.5);
    CHECK(logits(1, 1) == 3.0);
    CHECK(logits(2, 2) == 0.5);
    const auto p = predict(net, x);
    CHECK(error_rate(p, LabelVector::from_zero_based({0, 1, 2})) == 0.0);
}

TEST_CASE("teacher labels") {
    const Dataset data = sample_dataset(small_spec(0.001));
    const MlpSpec teacher{{20, 50, 5}, Init::TeacherGaussian};
    const auto a = label_with_teacher(data.train_inputs, teacher, 3);
    CHECK(a.zero_based() == label_with_teacher(data.train_inputs, teacher, 3).zero_based());
    CHECK_NOTHROW(a.check_classes(5));
    std::vector<int> counts(5, 0);
    for (int y : a.zero_based()) ++counts[std::size_t(y)];
    CHECK(std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; }) >= 2);
    CHECK_THROWS_AS(label_with_teacher(data.train_inputs, MlpSpec{{7, 5}}, 3), ValidationError);
}

TEST_CASE("random labels") {
    const auto a = random_labels(1000, 5, 4);
    CHECK(a.zero_based() == random_labels(1000, 5, 4).zero_based());
    CHECK_NOTHROW(a.check_classes(5));
    std::vector<int> counts(5, 0);
    for (int y : a.zero_based()) ++counts[std::size_t(y)];
    for (int c : counts) CHECK(c > 150);
}

TEST_CASE("gradient check on a width-8 network") {
    std::mt19937_64 rng(5);
    for (const std::vector<Index>& widths : {std::vector<Index>{6, 8, 3}, std::vector<Index>{6, 8, 8, 3}}) {
        const Mlp<double> net = init_mlp<double>(MlpSpec{widths}, rng);
        std::normal_distribution<double> normal;
        Eigen::MatrixXd x(16, 6);
        for (Index i = 0; i < x.size(); ++i) x(i) = normal(rng);
        std::vector<int> y(16);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = int(i % 3);
        const GradientCheck check = gradient_check(net, x, y);
        CHECK(check.parameters == net.parameter_count());
        CHECK(check.max_relative_error <= 1e-4);
    }
}

TEST_CASE("default schedule") {
    const auto s = default_schedule(1000, 20);
    CHECK(s.size() == 20);
    CHECK(s.front() == 0);
    CHECK(s.back() == 1000);
    CHECK(std::adjacent_find(s.begin(), s.end(), [](auto a, auto b) { return a >= b; }) == s.end());
    CHECK(s[1] == 1);
    CHECK(s[2] == 2);
    CHECK(s[3] == 3);
    const auto tiny = default_schedule(4, 70);
    CHECK(tiny == std::vector<std::int64_t>{0, 1, 2, 3, 4});
    CHECK(default_schedule(0, 5) == std::vector<std::int64_t>{0});
    CHECK_THROWS_AS(default_schedule(10, 1), ValidationError);
}

TEST_CASE("a separable toy problem is learned") {
    Dataset data;
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    data.train_inputs.resize(40, 2);
    data.test_inputs.resize(10, 2);
    std::vector<int> ytrain, ytest;
    auto fill = [&](Eigen::MatrixXd& x, std::vector<int>& y) {
        for (Index i = 0; i < x.rows(); ++i) {
            x(i, 0) = u(rng);
            x(i, 1) = u(rng);
            if (std::abs(x(i, 0)) < 0.1) x(i, 0) += x(i, 0) < 0 ? -0.2 : 0.2;
            y.push_back(x(i, 0) > 0);
        }
    };
    fill(data.train_inputs, ytrain);
    fill(data.test_inputs, ytest);
    const auto result = train(data, LabelVector::from_zero_based(ytrain), LabelVector::from_zero_based(ytest),
                              MlpSpec{{2, 8, 2}}, sgd(0.5, 10, 200), seeded(1));
    CHECK_FALSE(result.diverged);
    CHECK(result.final_train_error == 0.0);
    CHECK(result.train.checkpoints.back().step == 800);
}

TEST_CASE("training is deterministic and records both splits") {
    const Dataset data = sample_dataset(small_spec(0.001));
    const MlpSpec teacher{{20, 16, 3}, Init::TeacherGaussian};
    const auto ytr = label_with_teacher(data.train_inputs, teacher, 2), yte = label_with_teacher(data.test_inputs, teacher, 2);
    OptimizerSpec opt = sgd(0.2, 20, 5);
    opt.method = Method::Nesterov;
    opt.weight_decay = 1e-4;
    opt.max_checkpoints = 8;
    const auto a = train(data, ytr, yte, MlpSpec{{20, 16, 3}}, opt, seeded(11));
    const auto b = train(data, ytr, yte, MlpSpec{{20, 16, 3}}, opt, seeded(11));
    REQUIRE(a.train.size() == 8);
    REQUIRE(a.test.size() == 8);
    CHECK(a.test.n_samples() == 50);
    for (std::size_t k = 0; k < 8; ++k) {
        CHECK(a.train.checkpoints[k].tensor.probs() == b.train.checkpoints[k].tensor.probs());
        CHECK(a.test.checkpoints[k].step == a.train.checkpoints[k].step);
    }
    CHECK_NOTHROW(a.train.validate());
    CHECK(a.train.config.optimizer == "nesterov");
    const auto c = train(data, ytr, yte, MlpSpec{{20, 16, 3}}, opt, seeded(12));
    CHECK(c.train.checkpoints.back().tensor.probs() != a.train.checkpoints.back().tensor.probs());
}

TEST_CASE("a zero learning rate leaves the model at its initialization") {
    const Dataset data = sample_dataset(small_spec(0.001));
    const auto y = random_labels(200, 3, 1), yt = random_labels(50, 3, 2);
    OptimizerSpec opt = sgd(0.0, 50, 3);
    const auto r = train(data, y, yt, MlpSpec{{20, 8, 3}}, opt, seeded(3));
    for (const auto& cp : r.train.checkpoints) CHECK(cp.tensor.probs() == r.train.checkpoints.front().tensor.probs());
}

TEST_CASE("one tiny step barely moves the predictions") {
    const Dataset data = sample_dataset(small_spec(0.001));
    const auto y = random_labels(200, 3, 1), yt = random_labels(50, 3, 2);
    OptimizerSpec opt = sgd(1e-6, 200, 1);
    opt.checkpoint_schedule = {0, 1};
    const auto r = train(data, y, yt, MlpSpec{{20, 8, 3}}, opt, seeded(3));
    REQUIRE(r.train.size() == 2);
    CHECK(bhattacharyya(r.train.checkpoints[0].tensor, r.train.checkpoints[1].tensor) <= 1e-6);
}

TEST_CASE("divergence truncates and flags the run") {
    GaussianDatasetSpec s = small_spec(0.5);
    const Dataset data = sample_dataset(s);
    const auto y = random_labels(200, 3, 1), yt = random_labels(50, 3, 2);
    const auto r = train(data, y, yt, MlpSpec{{20, 64, 3}}, sgd(1e4, 20, 20), seeded(4));
    CHECK(r.diverged);
    CHECK(r.train.size() >= 1);
    CHECK(r.steps_completed < 200);
    CHECK_NOTHROW(r.train.validate());
}

TEST_CASE("invalid optimizer settings") {
    const Dataset data = sample_dataset(small_spec(0.001));
    const auto y = random_labels(200, 3, 1), yt = random_labels(50, 3, 2);
    OptimizerSpec opt = sgd(0.1, 20, 2);
    opt.checkpoint_schedule = {0, 5, 5};
    CHECK_THROWS_AS(train(data, y, yt, MlpSpec{{20, 8, 3}}, opt, TrainOptions{}), ValidationError);
    CHECK_THROWS_AS(train(data, y, yt, MlpSpec{{20, 8, 3}}, sgd(-1.0, 20, 2), TrainOptions{}), ValidationError);
    CHECK_THROWS_AS(train(data, y, yt, MlpSpec{{19, 8, 3}}, sgd(0.1, 20, 2), TrainOptions{}), ValidationError);
}

TEST_CASE("default initialization starts near ignorance") {
    GaussianDatasetSpec s;
    s.n_train = 500;
    s.n_test = 10;
    s.input_dim = 200;
    s.seed = 2;
    for (double c : {0.0, 0.001, 0.5}) {
        CAPTURE(c);
        s.sloppiness = c;
        const Dataset data = sample_dataset(s);
        std::mt19937_64 rng(7);
        const auto net = init_mlp<float>(MlpSpec{{200, 512, 5}}, rng);
        CHECK(bhattacharyya(predict(net, data.train_inputs), ignorance(500, 5)) <= 0.1);
    }
}

TEST_CASE("corner initialization starts near a simplex corner") {
    GaussianDatasetSpec s;
    s.n_train = 500;
    s.n_test = 10;
    s.input_dim = 200;
    s.seed = 3;
    const Dataset data = sample_dataset(s);
    std::mt19937_64 rng(8);
    const auto net = init_mlp<float>(MlpSpec{{200, 256, 5}, Init::CornerGaussian}, rng);
    const PredictionTensor p = predict(net, data.train_inputs);
    const Index confident = (p.probs().rowwise().maxCoeff().array() >= 0.9).count();
    CHECK(confident > 250);
}

TEST_CASE("corner experiment shape") {
    const Dataset data = sample_dataset(small_spec(0.001));
    const MlpSpec teacher{{20, 16, 3}, Init::TeacherGaussian};
    const auto ytr = label_with_teacher(data.train_inputs, teacher, 2), yte = label_with_teacher(data.test_inputs, teacher, 2);
    OptimizerSpec opt = sgd(0.1, 50, 2);
    opt.max_checkpoints = 5;
    const auto runs = corner_experiment(data, ytr, yte, MlpSpec{{20, 16, 3}}, opt, 1, 1, 9);
    REQUIRE(runs.size() == 1);
    CHECK(runs[0].stage1.train.size() >= 2);
    CHECK(runs[0].stage2.train.size() >= 2);
    // Stage 2 resumes where stage 1 ended.
    CHECK(runs[0].stage2.train.checkpoints.front().tensor.probs() == runs[0].stage1.train.checkpoints.back().tensor.probs());

    // A separate stage-2 optimizer; lr 0 freezes the stage-1 endpoint.
    OptimizerSpec frozen = opt;
    frozen.learning_rate = 0.0;
    const auto held = corner_experiment(data, ytr, yte, MlpSpec{{20, 16, 3}}, opt, 1, 1, 9, frozen);
    CHECK(held[0].stage1.train.checkpoints.back().tensor.probs() == runs[0].stage1.train.checkpoints.back().tensor.probs());
    for (const auto& cp : held[0].stage2.train.checkpoints) {
        CHECK(cp.tensor.probs() == held[0].stage1.train.checkpoints.back().tensor.probs());
    }
}

TEST_CASE("method names") {
    CHECK(parse_method("sgd") == Method::Sgd);
    CHECK(parse_method("nesterov") == Method::Nesterov);
    CHECK_THROWS_AS(parse_method("adam"), ValidationError);
    CHECK(MlpSpec{{200, 512, 512, 5}}.architecture() == "mlp-512x512");
}
