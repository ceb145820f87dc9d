#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace manifold {

using Index = Eigen::Index;

/// Floor applied to probabilities (and Bhattacharyya coefficients) before
/// logs and reciprocals.
inline constexpr double kProbabilityFloor = 1e-12;

/// Maximum absolute deviation of a row sum from 1 for a valid tensor.
inline constexpr double kRowSumTolerance = 1e-6;

/// Rows off by more than kRowSumTolerance but at most this much are
/// renormalized on load; anything worse is rejected.
inline constexpr double kRowSumRepair = 1e-4;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input: shapes, labels, preconditions. CLI exit code 2.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Non-finite values, failed convergence, diverged training. CLI exit code 3.
class NumericalError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

template <typename Scalar>
using ProbabilityMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Predictions of one model: an N x C row-stochastic matrix.
///
/// Instances are immutable; the constructor validates range and row sums.
template <typename Scalar>
class BasicPredictionTensor {
public:
    using Matrix = ProbabilityMatrix<Scalar>;

    BasicPredictionTensor() = default;

    explicit BasicPredictionTensor(Matrix probs, std::string model_id = {})
        : probs_(std::move(probs)), model_id_(std::move(model_id)) {
        validate();
    }

    /// Divides each row by its sum before validating. Rows must be
    /// non-negative with a positive sum.
    static BasicPredictionTensor normalized(Matrix probs, std::string model_id = {}) {
        for (Index n = 0; n < probs.rows(); ++n) {
            const Scalar total = probs.row(n).sum();
            if (!(total > Scalar(0)) || !std::isfinite(static_cast<double>(total))) {
                throw ValidationError("cannot normalize row " + std::to_string(n) +
                                      ": non-positive or non-finite sum");
            }
            probs.row(n) /= total;
        }
        return BasicPredictionTensor(std::move(probs), std::move(model_id));
    }

    Index n_samples() const { return probs_.rows(); }
    Index n_classes() const { return probs_.cols(); }
    const Matrix& probs() const { return probs_; }
    const std::string& model_id() const { return model_id_; }

    BasicPredictionTensor with_id(std::string id) const {
        BasicPredictionTensor copy = *this;
        copy.model_id_ = std::move(id);
        return copy;
    }

    template <typename Other>
    BasicPredictionTensor<Other> cast() const {
        return BasicPredictionTensor<Other>::normalized(probs_.template cast<Other>(), model_id_);
    }

    bool same_shape(const BasicPredictionTensor& other) const {
        return n_samples() == other.n_samples() && n_classes() == other.n_classes();
    }

private:
    void validate() const {
        if (probs_.rows() < 1) throw ValidationError("prediction tensor needs N >= 1");
        if (probs_.cols() < 2) throw ValidationError("prediction tensor needs C >= 2");
        for (Index n = 0; n < probs_.rows(); ++n) {
            Scalar total = 0;
            for (Index c = 0; c < probs_.cols(); ++c) {
                const Scalar p = probs_(n, c);
                if (!(p >= Scalar(0) && p <= Scalar(1))) {
                    throw ValidationError("probability out of [0,1] at (" + std::to_string(n) +
                                          "," + std::to_string(c) + ")");
                }
                total += p;
            }
            if (std::abs(static_cast<double>(total) - 1.0) > kRowSumTolerance) {
                throw ValidationError("row " + std::to_string(n) + " sums to " +
                                      std::to_string(static_cast<double>(total)));
            }
        }
    }

    Matrix probs_;
    std::string model_id_;
};

using PredictionTensor = BasicPredictionTensor<double>;
using PredictionTensorF = BasicPredictionTensor<float>;

/// Ground-truth labels. Stored 0-based; the 1-based form is what files and
/// the CLI expose.
class LabelVector {
public:
    LabelVector() = default;

    static LabelVector from_zero_based(std::vector<int> labels);
    static LabelVector from_one_based(const std::vector<int>& labels);

    Index size() const { return static_cast<Index>(labels_.size()); }
    int operator[](Index n) const { return labels_[static_cast<std::size_t>(n)]; }
    const std::vector<int>& zero_based() const { return labels_; }
    std::vector<int> one_based() const;

    /// Throws ValidationError unless every label is in {0..n_classes-1}.
    void check_classes(Index n_classes) const;

private:
    std::vector<int> labels_;
};

struct Ignorance {};
struct Truth {
    LabelVector labels;
};
/// A one-hot model on some other labelling (e.g. a random-label task).
struct Corner {
    LabelVector labels;
};

using SpecialPoint = std::variant<Ignorance, Truth, Corner>;

PredictionTensor materialize_special(const SpecialPoint& kind, Index n_samples, Index n_classes);

inline PredictionTensor ignorance(Index n_samples, Index n_classes) {
    return materialize_special(Ignorance{}, n_samples, n_classes);
}

PredictionTensor one_hot(const LabelVector& labels, Index n_classes);

struct ConfigTag {
    std::string architecture;
    std::string optimizer;
    std::int64_t batch_size = 0;
    double learning_rate = 0.0;
    double weight_decay = 0.0;
    std::string augmentation = "none";
    std::int64_t seed = 0;

    bool operator==(const ConfigTag&) const = default;
};

struct Checkpoint {
    PredictionTensor tensor;
    std::int64_t step = 0;
    double epoch = 0.0;
    std::optional<double> progress;
};

/// Ordered checkpoints of one training run.
///
/// Invariants checked by validate(): shared N and C, strictly increasing
/// non-negative steps, at least one checkpoint. Operations that need a
/// curve (progress indexing, resampling) additionally require two.
struct Trajectory {
    std::vector<Checkpoint> checkpoints;
    ConfigTag config;

    Index size() const { return static_cast<Index>(checkpoints.size()); }
    Index n_samples() const { return checkpoints.front().tensor.n_samples(); }
    Index n_classes() const { return checkpoints.front().tensor.n_classes(); }
    bool indexed() const;

    void validate() const;
};

/// Fraction of rows whose argmax (lowest index on ties) differs from the label.
double error_rate(const PredictionTensor& model, const LabelVector& truth);

Index argmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& row);

}  // namespace manifold
