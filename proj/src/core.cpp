#include "manifold/core.hpp"

namespace manifold {

LabelVector LabelVector::from_zero_based(std::vector<int> labels) {
    for (int y : labels) {
        if (y < 0) throw ValidationError("invalid label " + std::to_string(y + 1));
    }
    LabelVector out;
    out.labels_ = std::move(labels);
    return out;
}

LabelVector LabelVector::from_one_based(const std::vector<int>& labels) {
    std::vector<int> shifted;
    shifted.reserve(labels.size());
    for (int y : labels) {
        if (y < 1) throw ValidationError("invalid label " + std::to_string(y));
        shifted.push_back(y - 1);
    }
    return from_zero_based(std::move(shifted));
}

std::vector<int> LabelVector::one_based() const {
    std::vector<int> out(labels_);
    for (int& y : out) ++y;
    return out;
}

void LabelVector::check_classes(Index n_classes) const {
    for (int y : labels_) {
        if (y < 0 || y >= n_classes) {
            throw ValidationError("invalid label " + std::to_string(y + 1) + " for C=" +
                                  std::to_string(n_classes));
        }
    }
}

PredictionTensor one_hot(const LabelVector& labels, Index n_classes) {
    labels.check_classes(n_classes);
    PredictionTensor::Matrix probs = PredictionTensor::Matrix::Zero(labels.size(), n_classes);
    for (Index n = 0; n < labels.size(); ++n) probs(n, labels[n]) = 1.0;
    return PredictionTensor(std::move(probs));
}

PredictionTensor materialize_special(const SpecialPoint& kind, Index n_samples, Index n_classes) {
    if (n_samples < 1 || n_classes < 2) {
        throw ValidationError("special points need N >= 1 and C >= 2");
    }
    if (std::holds_alternative<Ignorance>(kind)) {
        return PredictionTensor(
            PredictionTensor::Matrix::Constant(n_samples, n_classes, 1.0 / double(n_classes)),
            "ignorance");
    }
    const LabelVector& labels = std::holds_alternative<Truth>(kind) ? std::get<Truth>(kind).labels
                                                                     : std::get<Corner>(kind).labels;
    if (labels.size() != n_samples) {
        throw ValidationError("label vector has length " + std::to_string(labels.size()) +
                              ", expected " + std::to_string(n_samples));
    }
    return one_hot(labels, n_classes).with_id(std::holds_alternative<Truth>(kind) ? "truth" : "corner");
}

bool Trajectory::indexed() const {
    for (const auto& cp : checkpoints) {
        if (!cp.progress) return false;
    }
    return !checkpoints.empty();
}

void Trajectory::validate() const {
    if (checkpoints.empty()) throw ValidationError("trajectory has no checkpoints");
    const auto& first = checkpoints.front().tensor;
    for (std::size_t k = 0; k < checkpoints.size(); ++k) {
        const auto& cp = checkpoints[k];
        if (!cp.tensor.same_shape(first)) {
            throw ValidationError("checkpoint " + std::to_string(k) + " has a different N or C");
        }
        if (cp.step < 0) throw ValidationError("negative step count");
        if (k > 0 && cp.step <= checkpoints[k - 1].step) {
            throw ValidationError("checkpoint steps must be strictly increasing");
        }
    }
}

Index argmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
    Index best = 0;
    for (Index c = 1; c < row.size(); ++c) {
        if (row(c) > row(best)) best = c;
    }
    return best;
}

double error_rate(const PredictionTensor& model, const LabelVector& truth) {
    if (truth.size() != model.n_samples()) throw ValidationError("label count does not match N");
    truth.check_classes(model.n_classes());
    Index wrong = 0;
    for (Index n = 0; n < model.n_samples(); ++n) {
        if (argmax_row(model.probs().row(n)) != truth[n]) ++wrong;
    }
    return double(wrong) / double(model.n_samples());
}

}  // namespace manifold
