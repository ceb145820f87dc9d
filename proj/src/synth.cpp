#include "manifold/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace manifold::synth {
namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(purpose)};
    return std::mt19937_64(seq);
}

template <typename Scalar>
using Matrix = typename Mlp<Scalar>::Matrix;

template <typename Scalar>
void check_labels(const Mlp<Scalar>& net, const Matrix<Scalar>& inputs, const std::vector<int>& labels) {
    if (static_cast<Index>(labels.size()) != inputs.rows()) throw ValidationError("label count does not match inputs");
    const Index classes = net.weights.back().cols();
    for (int y : labels) {
        if (y < 0 || y >= classes) throw ValidationError("label out of range for the network output");
    }
}

// Forward pass keeping every layer's activations (post-ReLU; last is logits).
template <typename Scalar>
std::vector<Matrix<Scalar>> forward_all(const Mlp<Scalar>& net, const Matrix<Scalar>& inputs) {
    if (inputs.cols() != net.weights.front().rows()) throw ValidationError("input width does not match the network");
    std::vector<Matrix<Scalar>> acts;
    acts.reserve(net.layers());
    const Matrix<Scalar>* x = &inputs;
    for (std::size_t l = 0; l < net.layers(); ++l) {
        Matrix<Scalar> z = (*x) * net.weights[l];
        z.rowwise() += net.biases[l];
        if (l + 1 < net.layers()) z = z.cwiseMax(Scalar(0));
        acts.push_back(std::move(z));
        x = &acts.back();
    }
    return acts;
}

// Row-wise log-softmax.
template <typename Scalar>
Matrix<Scalar> log_softmax(const Matrix<Scalar>& logits) {
    Matrix<Scalar> out(logits.rows(), logits.cols());
    for (Index n = 0; n < logits.rows(); ++n) {
        const Scalar top = logits.row(n).maxCoeff();
        const Scalar lse = top + std::log((logits.row(n).array() - top).exp().sum());
        out.row(n) = logits.row(n).array() - lse;
    }
    return out;
}

template <typename Scalar>
Matrix<Scalar> gather_rows(const Matrix<Scalar>& source, const std::vector<Index>& rows) {
    Matrix<Scalar> out(static_cast<Index>(rows.size()), source.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = source.row(rows[i]);
    return out;
}

template <typename Scalar>
void zero_like(const Mlp<Scalar>& net, Mlp<Scalar>& out) {
    out.weights.resize(net.layers());
    out.biases.resize(net.layers());
    for (std::size_t l = 0; l < net.layers(); ++l) {
        out.weights[l].setZero(net.weights[l].rows(), net.weights[l].cols());
        out.biases[l].setZero(net.biases[l].cols());
    }
}

// Every parameter in a fixed order (weights then bias, layer by layer).
template <typename Scalar, typename F>
void for_each_parameter(Mlp<Scalar>& net, F&& f) {
    for (std::size_t l = 0; l < net.layers(); ++l) {
        for (Index i = 0; i < net.weights[l].size(); ++i) f(net.weights[l].data()[i]);
        for (Index i = 0; i < net.biases[l].size(); ++i) f(net.biases[l].data()[i]);
    }
}

double error_of(const PredictionTensor& p, const LabelVector& labels) { return error_rate(p, labels); }

}  // namespace

Eigen::VectorXd covariance_spectrum(const GaussianDatasetSpec& spec) {
    if (spec.input_dim < 1) throw ValidationError("input_dim must be at least 1");
    if (!(spec.sloppiness >= 0.0)) throw ValidationError("sloppiness must be non-negative");
    Eigen::VectorXd lambda(spec.input_dim);
    for (Index i = 0; i < spec.input_dim; ++i) {
        const double c = spec.sloppiness;
        lambda(i) = c <= kIsotropicSloppiness ? 1.0 : std::max(50.0 * c * std::exp(-c * double(i + 1)), kMinEigenvalue);
    }
    return lambda;
}

Dataset sample_dataset(const GaussianDatasetSpec& spec) {
    if (spec.n_train < 1 || spec.n_test < 0) throw ValidationError("dataset sizes must be positive");
    const Eigen::VectorXd scale = covariance_spectrum(spec).cwiseSqrt();
    auto rng = stream(spec.seed, 0xda7a);
    std::normal_distribution<double> normal;
    auto draw = [&](Index rows) {
        Eigen::MatrixXd x(rows, spec.input_dim);
        for (Index n = 0; n < rows; ++n) {
            for (Index i = 0; i < spec.input_dim; ++i) x(n, i) = scale(i) * normal(rng);
        }
        return x;
    };
    Dataset d;
    d.spec = spec;
    d.train_inputs = draw(spec.n_train);
    d.test_inputs = draw(spec.n_test);
    return d;
}

std::string MlpSpec::architecture() const {
    std::ostringstream out;
    out << "mlp";
    for (std::size_t l = 1; l + 1 < layer_widths.size(); ++l) out << (l == 1 ? "-" : "x") << layer_widths[l];
    return out.str();
}

template <typename Scalar>
Index Mlp<Scalar>::parameter_count() const {
    Index total = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) total += weights[l].size() + biases[l].size();
    return total;
}

template <typename Scalar>
Mlp<Scalar> init_mlp(const MlpSpec& spec, std::mt19937_64& rng) {
    if (spec.layer_widths.size() < 2) throw ValidationError("an MLP needs input and output widths");
    for (Index w : spec.layer_widths) {
        if (w < 1) throw ValidationError("layer widths must be positive");
    }
    Mlp<Scalar> net;
    std::normal_distribution<double> normal;
    for (std::size_t l = 0; l + 1 < spec.layer_widths.size(); ++l) {
        const Index fan_in = spec.layer_widths[l], fan_out = spec.layer_widths[l + 1];
        const double bound = 1.0 / std::sqrt(double(fan_in));
        std::uniform_real_distribution<double> uniform(-bound, bound);
        auto sample = [&](bool bias) -> Scalar {
            switch (spec.init) {
                case Init::Default: return Scalar(uniform(rng));
                case Init::CornerGaussian: return Scalar(normal(rng));
                case Init::TeacherGaussian: return bias ? Scalar(0) : Scalar(normal(rng));
            }
            return Scalar(0);
        };
        Matrix<Scalar> w(fan_in, fan_out);
        for (Index i = 0; i < w.size(); ++i) w.data()[i] = sample(false);
        typename Mlp<Scalar>::RowVector b(fan_out);
        for (Index i = 0; i < b.size(); ++i) b(i) = sample(true);
        net.weights.push_back(std::move(w));
        net.biases.push_back(std::move(b));
    }
    return net;
}

template <typename Scalar>
Matrix<Scalar> forward(const Mlp<Scalar>& net, const Matrix<Scalar>& inputs) {
    return forward_all(net, inputs).back();
}

template <typename Scalar>
Scalar cross_entropy(const Mlp<Scalar>& net, const Matrix<Scalar>& inputs, const std::vector<int>& labels) {
    check_labels(net, inputs, labels);
    const Matrix<Scalar> logp = log_softmax<Scalar>(forward(net, inputs));
    Scalar loss = 0;
    for (Index n = 0; n < logp.rows(); ++n) loss -= logp(n, labels[static_cast<std::size_t>(n)]);
    return loss / Scalar(logp.rows());
}

template <typename Scalar>
Scalar loss_and_gradient(const Mlp<Scalar>& net, const Matrix<Scalar>& inputs, const std::vector<int>& labels,
                         Mlp<Scalar>& gradient) {
    check_labels(net, inputs, labels);
    const auto acts = forward_all(net, inputs);
    const Matrix<Scalar> logp = log_softmax<Scalar>(acts.back());
    const Index batch = inputs.rows();
    Scalar loss = 0;
    for (Index n = 0; n < batch; ++n) loss -= logp(n, labels[static_cast<std::size_t>(n)]);
    loss /= Scalar(batch);

    // d loss / d logits = (softmax - onehot) / B.
    Matrix<Scalar> delta = logp.array().exp();
    for (Index n = 0; n < batch; ++n) delta(n, labels[static_cast<std::size_t>(n)]) -= Scalar(1);
    delta /= Scalar(batch);

    zero_like(net, gradient);
    for (std::size_t l = net.layers(); l-- > 0;) {
        const Matrix<Scalar>& below = l == 0 ? inputs : acts[l - 1];
        gradient.weights[l].noalias() = below.transpose() * delta;
        gradient.biases[l] = delta.colwise().sum();
        if (l == 0) break;
        Matrix<Scalar> up = delta * net.weights[l].transpose();
        delta = (acts[l - 1].array() > Scalar(0)).select(up, Scalar(0));
    }
    return loss;
}

PredictionTensor softmax_predictions(const Eigen::MatrixXd& logits, std::string model_id) {
    if (!logits.allFinite()) throw NumericalError("non-finite logits");
    ProbabilityMatrix<double> p(logits.rows(), logits.cols());
    for (Index n = 0; n < logits.rows(); ++n) {
        const double top = logits.row(n).maxCoeff();
        p.row(n) = (logits.row(n).array() - top).exp();
        p.row(n) /= p.row(n).sum();
    }
    return PredictionTensor(std::move(p), std::move(model_id));
}

template <typename Scalar>
PredictionTensor predict(const Mlp<Scalar>& net, const Eigen::MatrixXd& inputs, std::string model_id) {
    const Matrix<Scalar> x = inputs.cast<Scalar>();
    return softmax_predictions(forward(net, x).template cast<double>(), std::move(model_id));
}

GradientCheck gradient_check(const Mlp<double>& net, const Eigen::MatrixXd& inputs, const std::vector<int>& labels,
                             double h) {
    const Matrix<double> x = inputs;
    Mlp<double> analytic;
    loss_and_gradient(net, x, labels, analytic);
    std::vector<double> expected;
    for_each_parameter(analytic, [&](double& g) { expected.push_back(g); });

    Mlp<double> probe = net;
    GradientCheck out;
    std::size_t k = 0;
    for_each_parameter(probe, [&](double& p) {
        const double saved = p;
        p = saved + h;
        const double plus = cross_entropy(probe, x, labels);
        p = saved - h;
        const double minus = cross_entropy(probe, x, labels);
        p = saved;
        const double numeric = (plus - minus) / (2.0 * h);
        const double a = expected[k++];
        // Gradients below 1e-6 are compared on an absolute 1e-6 scale.
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
        out.max_relative_error = std::max(out.max_relative_error, rel);
    });
    out.parameters = static_cast<Index>(k);
    return out;
}

LabelVector label_with_teacher(const Eigen::MatrixXd& inputs, const MlpSpec& teacher, std::uint64_t seed) {
    if (teacher.inputs() != inputs.cols()) throw ValidationError("teacher input width does not match data");
    auto rng = stream(seed, 0x7eac);
    const Mlp<double> net = init_mlp<double>(teacher, rng);
    const Matrix<double> logits = forward(net, Matrix<double>(inputs));
    std::vector<int> labels(static_cast<std::size_t>(inputs.rows()));
    for (Index n = 0; n < logits.rows(); ++n) labels[static_cast<std::size_t>(n)] = static_cast<int>(argmax_row(logits.row(n)));
    return LabelVector::from_zero_based(std::move(labels));
}

LabelVector random_labels(Index n, Index n_classes, std::uint64_t seed) {
    if (n_classes < 2) throw ValidationError("random labels need C >= 2");
    auto rng = stream(seed, 0x1abe);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(n_classes) - 1);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int& y : labels) y = pick(rng);
    return LabelVector::from_zero_based(std::move(labels));
}

std::string_view to_string(Method m) { return m == Method::Sgd ? "sgd" : "nesterov"; }

Method parse_method(std::string_view name) {
    if (name == "sgd") return Method::Sgd;
    if (name == "nesterov") return Method::Nesterov;
    throw ValidationError("unknown optimizer '" + std::string(name) + "'");
}

std::vector<std::int64_t> default_schedule(std::int64_t total_steps, Index max_points) {
    if (total_steps < 0) throw ValidationError("total steps must be non-negative");
    if (max_points < 2) throw ValidationError("a schedule needs at least 2 points");
    const auto target = static_cast<std::size_t>(std::min<std::int64_t>(max_points, total_steps + 1));
    std::vector<std::int64_t> steps;
    // Grow the number of geometric nodes until rounding leaves enough distinct steps.
    for (Index nodes = std::max<Index>(static_cast<Index>(target) - 1, 2);; ++nodes) {
        steps.assign({0, total_steps});
        for (Index k = 0; k < nodes; ++k) {
            const double s = std::pow(double(std::max<std::int64_t>(total_steps, 1)), double(k) / double(nodes - 1));
            steps.push_back(std::min<std::int64_t>(std::llround(s), total_steps));
        }
        std::sort(steps.begin(), steps.end());
        steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
        if (steps.size() >= target || nodes > 4 * max_points + total_steps) break;
    }
    while (steps.size() > target) steps.erase(steps.end() - 2);
    return steps;
}

ConfigTag make_config(const MlpSpec& student, const OptimizerSpec& opt, std::uint64_t seed) {
    ConfigTag c;
    c.architecture = student.architecture();
    c.optimizer = std::string(to_string(opt.method));
    c.batch_size = opt.batch_size;
    c.learning_rate = opt.learning_rate;
    c.weight_decay = opt.weight_decay;
    c.seed = static_cast<std::int64_t>(seed);
    return c;
}

TrainResult train(const Dataset& data, const LabelVector& train_labels, const LabelVector& test_labels,
                  const MlpSpec& student, const OptimizerSpec& opt, const TrainOptions& options) {
    using M = Matrix<float>;
    const Index n = data.train_inputs.rows();
    if (student.inputs() != data.train_inputs.cols()) throw ValidationError("student input width does not match data");
    if (train_labels.size() != n || test_labels.size() != data.test_inputs.rows()) {
        throw ValidationError("label counts do not match the dataset");
    }
    train_labels.check_classes(student.outputs());
    test_labels.check_classes(student.outputs());
    if (opt.batch_size < 1) throw ValidationError("batch size must be positive");
    if (!(opt.learning_rate >= 0.0)) throw ValidationError("learning rate must be non-negative");
    if (opt.epochs < 0) throw ValidationError("epochs must be non-negative");

    const Index steps_per_epoch = (n + opt.batch_size - 1) / opt.batch_size;
    const std::int64_t total_steps = std::int64_t(opt.epochs) * steps_per_epoch;
    std::vector<std::int64_t> schedule =
        opt.checkpoint_schedule.empty() ? default_schedule(total_steps, opt.max_checkpoints) : opt.checkpoint_schedule;
    if (!std::is_sorted(schedule.begin(), schedule.end()) ||
        std::adjacent_find(schedule.begin(), schedule.end()) != schedule.end()) {
        throw ValidationError("checkpoint schedule must be strictly increasing");
    }

    auto init_rng = stream(options.seed, 0x1417);
    auto order_rng = stream(options.seed, 0x0bd7);
    TrainResult result;
    Mlp<float> net = options.initial_weights ? *options.initial_weights : init_mlp<float>(student, init_rng);
    const ConfigTag config = make_config(student, opt, options.seed);
    result.train.config = result.test.config = config;

    const M train_x = data.train_inputs.cast<float>();
    const std::vector<int>& labels = train_labels.zero_based();

    std::size_t next_checkpoint = 0;
    auto record = [&](std::int64_t step) {
        const std::string suffix = "@" + std::to_string(step);
        PredictionTensor ptrain, ptest;
        try {
            ptrain = predict(net, data.train_inputs, options.id_prefix + "/train" + suffix);
            ptest = predict(net, data.test_inputs, options.id_prefix + "/test" + suffix);
        } catch (const NumericalError&) {
            return false;
        }
        const double epoch = double(step) / double(steps_per_epoch);
        result.train.checkpoints.push_back({std::move(ptrain), step, epoch, std::nullopt});
        result.test.checkpoints.push_back({std::move(ptest), step, epoch, std::nullopt});
        if (options.on_checkpoint) options.on_checkpoint(result.train.checkpoints.back(), result.test.checkpoints.back());
        return true;
    };
    auto maybe_record = [&](std::int64_t step) {
        while (next_checkpoint < schedule.size() && schedule[next_checkpoint] < step) ++next_checkpoint;
        if (next_checkpoint < schedule.size() && schedule[next_checkpoint] == step) {
            ++next_checkpoint;
            return record(step);
        }
        return true;
    };

    Mlp<float> grad, velocity;
    zero_like(net, velocity);
    const float lr = float(opt.learning_rate), wd = float(opt.weight_decay), mu = float(kNesterovMomentum);
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});

    std::int64_t step = 0;
    bool ok = maybe_record(0);
    for (Index epoch = 0; ok && epoch < opt.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), order_rng);
        for (Index start = 0; ok && start < n; start += opt.batch_size) {
            const Index stop = std::min(n, start + opt.batch_size);
            std::vector<Index> rows(order.begin() + start, order.begin() + stop);
            std::vector<int> batch_labels;
            for (Index r : rows) batch_labels.push_back(labels[static_cast<std::size_t>(r)]);
            const float loss = loss_and_gradient(net, gather_rows<float>(train_x, rows), batch_labels, grad);
            if (!std::isfinite(loss) || loss > kDivergenceLoss) {
                ok = false;
                break;
            }
            for (std::size_t l = 0; l < net.layers(); ++l) {
                grad.weights[l] += wd * net.weights[l];
                grad.biases[l] += wd * net.biases[l];
                if (opt.method == Method::Sgd) {
                    net.weights[l] -= lr * grad.weights[l];
                    net.biases[l] -= lr * grad.biases[l];
                } else {
                    velocity.weights[l] = mu * velocity.weights[l] - lr * grad.weights[l];
                    velocity.biases[l] = mu * velocity.biases[l] - lr * grad.biases[l];
                    net.weights[l] += mu * velocity.weights[l] - lr * grad.weights[l];
                    net.biases[l] += mu * velocity.biases[l] - lr * grad.biases[l];
                }
            }
            ++step;
            ok = maybe_record(step);
        }
    }
    result.diverged = !ok;
    result.steps_completed = step;
    if (!result.train.checkpoints.empty()) {
        result.final_train_error = error_of(result.train.checkpoints.back().tensor, train_labels);
        result.final_test_error = error_of(result.test.checkpoints.back().tensor, test_labels);
    }
    result.weights = std::move(net);
    return result;
}

std::vector<CornerRun> corner_experiment(const Dataset& data, const LabelVector& train_labels,
                                         const LabelVector& test_labels, const MlpSpec& student,
                                         const OptimizerSpec& opt, Index n_corners, Index seeds_per_corner,
                                         std::uint64_t seed, const std::optional<OptimizerSpec>& stage2_opt) {
    if (n_corners < 1 || seeds_per_corner < 1) throw ValidationError("need at least one corner and one seed");
    std::vector<CornerRun> runs;
    for (Index k = 0; k < n_corners; ++k) {
        const std::uint64_t corner_seed = seed * 1000003ULL + std::uint64_t(k);
        const LabelVector corner_train = random_labels(data.train_inputs.rows(), student.outputs(), corner_seed);
        const LabelVector corner_test = random_labels(data.test_inputs.rows(), student.outputs(), corner_seed + 7919);
        for (Index s = 0; s < seeds_per_corner; ++s) {
            CornerRun run;
            run.corner = k;
            run.seed = corner_seed * 131ULL + std::uint64_t(s);
            TrainOptions first;
            first.seed = run.seed;
            first.id_prefix = "corner" + std::to_string(k) + "-s" + std::to_string(s) + "-stage1";
            run.stage1 = train(data, corner_train, corner_test, student, opt, first);
            if (run.stage1.diverged) throw NumericalError("stage-1 training diverged for corner " + std::to_string(k));
            TrainOptions second;
            second.seed = run.seed + 1;
            second.initial_weights = run.stage1.weights;
            second.id_prefix = "corner" + std::to_string(k) + "-s" + std::to_string(s) + "-stage2";
            run.stage2 = train(data, train_labels, test_labels, student, stage2_opt.value_or(opt), second);
            runs.push_back(std::move(run));
        }
    }
    return runs;
}

template struct Mlp<float>;
template struct Mlp<double>;
template Mlp<float> init_mlp<float>(const MlpSpec&, std::mt19937_64&);
template Mlp<double> init_mlp<double>(const MlpSpec&, std::mt19937_64&);
template Matrix<float> forward<float>(const Mlp<float>&, const Matrix<float>&);
template Matrix<double> forward<double>(const Mlp<double>&, const Matrix<double>&);
template float loss_and_gradient<float>(const Mlp<float>&, const Matrix<float>&, const std::vector<int>&, Mlp<float>&);
template double loss_and_gradient<double>(const Mlp<double>&, const Matrix<double>&, const std::vector<int>&,
                                          Mlp<double>&);
template float cross_entropy<float>(const Mlp<float>&, const Matrix<float>&, const std::vector<int>&);
template double cross_entropy<double>(const Mlp<double>&, const Matrix<double>&, const std::vector<int>&);
template PredictionTensor predict<float>(const Mlp<float>&, const Eigen::MatrixXd&, std::string);
template PredictionTensor predict<double>(const Mlp<double>&, const Eigen::MatrixXd&, std::string);

}  // namespace manifold::synth
