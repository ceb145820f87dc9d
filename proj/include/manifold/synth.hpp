#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "manifold/core.hpp"

namespace manifold::synth {

/// Sloppiness at or below this is the isotropic case (identity covariance).
inline constexpr double kIsotropicSloppiness = 1e-12;
/// Covariance eigenvalues are clamped here to keep samples out of denormals.
inline constexpr double kMinEigenvalue = 1e-30;
/// A batch loss above this (or non-finite) counts as divergence.
inline constexpr double kDivergenceLoss = 1e4;
inline constexpr double kNesterovMomentum = 0.9;
inline constexpr int kMaxCheckpoints = 70;

struct GaussianDatasetSpec {
    Index n_train = 5000;
    Index n_test = 1000;
    Index input_dim = 200;
    double sloppiness = 0.0;
    std::uint64_t seed = 0;
};

/// lambda_i = 50 c exp(-c i) for i = 1..d (clamped below at kMinEigenvalue),
/// or all ones when c is effectively zero.
Eigen::VectorXd covariance_spectrum(const GaussianDatasetSpec& spec);

struct Dataset {
    Eigen::MatrixXd train_inputs;  // n_train x d
    Eigen::MatrixXd test_inputs;   // n_test x d
    GaussianDatasetSpec spec;
};

/// Zero-mean Gaussian samples with diagonal covariance.
Dataset sample_dataset(const GaussianDatasetSpec& spec);

enum class Init {
    /// Uniform on [-fan_in^-1/2, fan_in^-1/2] for weights and biases.
    Default,
    /// Standard normal weights and biases, no fan-in scaling.
    CornerGaussian,
    /// Standard normal weights, zero biases (used for teachers).
    TeacherGaussian,
};

struct MlpSpec {
    /// Input width, hidden widths, output width C.
    std::vector<Index> layer_widths;
    Init init = Init::Default;

    Index inputs() const { return layer_widths.front(); }
    Index outputs() const { return layer_widths.back(); }
    /// e.g. "mlp-512x512".
    std::string architecture() const;
};

/// Fully connected ReLU network; the last layer is linear.
template <typename Scalar>
struct Mlp {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

    std::vector<Matrix> weights;  // fan_in x fan_out
    std::vector<RowVector> biases;

    std::size_t layers() const { return weights.size(); }
    Index parameter_count() const;

    template <typename Other>
    Mlp<Other> cast() const {
        Mlp<Other> out;
        for (const auto& w : weights) out.weights.push_back(w.template cast<Other>());
        for (const auto& b : biases) out.biases.push_back(b.template cast<Other>());
        return out;
    }
};

template <typename Scalar>
Mlp<Scalar> init_mlp(const MlpSpec& spec, std::mt19937_64& rng);

/// Logits for each row of `inputs`.
template <typename Scalar>
typename Mlp<Scalar>::Matrix forward(const Mlp<Scalar>& net, const typename Mlp<Scalar>::Matrix& inputs);

/// Mean cross-entropy from log-softmax and its gradient (same layout as the net).
template <typename Scalar>
Scalar loss_and_gradient(const Mlp<Scalar>& net, const typename Mlp<Scalar>::Matrix& inputs,
                         const std::vector<int>& labels, Mlp<Scalar>& gradient);

template <typename Scalar>
Scalar cross_entropy(const Mlp<Scalar>& net, const typename Mlp<Scalar>::Matrix& inputs,
                     const std::vector<int>& labels);

/// Row-wise softmax of logits, evaluated in double.
PredictionTensor softmax_predictions(const Eigen::MatrixXd& logits, std::string model_id = {});

template <typename Scalar>
PredictionTensor predict(const Mlp<Scalar>& net, const Eigen::MatrixXd& inputs, std::string model_id = {});

struct GradientCheck {
    double max_relative_error = 0.0;
    Index parameters = 0;
};

/// Analytic gradient against central differences with step h, in double.
GradientCheck gradient_check(const Mlp<double>& net, const Eigen::MatrixXd& inputs, const std::vector<int>& labels,
                             double h = 1e-5);

/// argmax of a teacher network's logits.
LabelVector label_with_teacher(const Eigen::MatrixXd& inputs, const MlpSpec& teacher, std::uint64_t seed);

/// Uniform random labels in {0..C-1}.
LabelVector random_labels(Index n, Index n_classes, std::uint64_t seed);

enum class Method { Sgd, Nesterov };

struct OptimizerSpec {
    Method method = Method::Sgd;
    Index batch_size = 200;
    double learning_rate = 0.1;
    double weight_decay = 0.0;
    Index epochs = 10;
    /// Steps (update counts) at which to record; empty means default_schedule.
    std::vector<std::int64_t> checkpoint_schedule;
    Index max_checkpoints = kMaxCheckpoints;
};

std::string_view to_string(Method m);
Method parse_method(std::string_view name);

/// Up to `max_points` distinct steps in [0, total_steps], geometrically
/// spaced so that early training is sampled densely (0, 1, 2, 3, ...).
/// Always contains 0 and total_steps.
std::vector<std::int64_t> default_schedule(std::int64_t total_steps, Index max_points = kMaxCheckpoints);

struct TrainResult {
    Trajectory train;
    Trajectory test;
    bool diverged = false;
    std::int64_t steps_completed = 0;
    double final_train_error = 1.0;
    double final_test_error = 1.0;
    Mlp<float> weights;
};

struct TrainOptions {
    std::uint64_t seed = 0;
    /// Start from these weights instead of a fresh initialization.
    std::optional<Mlp<float>> initial_weights;
    /// Prefix for checkpoint model ids.
    std::string id_prefix = "run";
    /// Called with (train checkpoint, test checkpoint) as they are recorded.
    std::function<void(const Checkpoint&, const Checkpoint&)> on_checkpoint;
};

/// Mini-batch training with per-epoch shuffling (sampling without
/// replacement), recording softmax outputs on both splits at scheduled steps.
/// A diverging run stops early with `diverged` set and the checkpoints
/// recorded so far.
TrainResult train(const Dataset& data, const LabelVector& train_labels, const LabelVector& test_labels,
                  const MlpSpec& student, const OptimizerSpec& opt, const TrainOptions& options);

struct CornerRun {
    Index corner = 0;
    std::uint64_t seed = 0;
    TrainResult stage1;
    TrainResult stage2;
};

/// Stage 1 trains each student toward a random-label task (one per corner);
/// stage 2 resumes from the stage-1 weights toward the real labels, with
/// `stage2_opt` when given and `opt` otherwise.
std::vector<CornerRun> corner_experiment(const Dataset& data, const LabelVector& train_labels,
                                         const LabelVector& test_labels, const MlpSpec& student,
                                         const OptimizerSpec& opt, Index n_corners, Index seeds_per_corner,
                                         std::uint64_t seed, const std::optional<OptimizerSpec>& stage2_opt = {});

/// ConfigTag describing one run.
ConfigTag make_config(const MlpSpec& student, const OptimizerSpec& opt, std::uint64_t seed);

}  // namespace manifold::synth
