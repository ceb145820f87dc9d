#include "manifold/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "manifold/centroids.hpp"
#include "manifold/dmx.hpp"
#include "manifold/embedding.hpp"
#include "manifold/geometry.hpp"
#include "manifold/io.hpp"
#include "manifold/trajectory.hpp"

#ifndef MANIFOLD_PRESET_DIR
#define MANIFOLD_PRESET_DIR "presets"
#endif

namespace manifold::cli {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return text.str();
}

template <typename T>
T get_value(const json& j, const char* key, const std::string& origin) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(origin + ": bad value for '" + key + "': " + e.what());
    }
}

template <typename T>
T required(const json& j, const char* key, const std::string& origin) {
    if (!j.contains(key)) throw ValidationError(origin + ": missing key '" + key + "'");
    return get_value<T>(j, key, origin);
}

template <typename T>
T optional_value(const json& j, const char* key, T fallback, const std::string& origin) {
    return j.contains(key) ? get_value<T>(j, key, origin) : fallback;
}

void require(bool ok, const std::string& origin, const std::string& what) {
    if (!ok) throw ValidationError(origin + ": " + what);
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t kFnvBasis = 0xcbf29ce484222325ULL;

std::string hex(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
}

/// Digest of the probabilities, so cached matrices follow the data rather than the names.
std::string content_digest(std::span<const PredictionTensor> models) {
    std::uint64_t h = kFnvBasis;
    for (const auto& m : models) h = fnv1a(h, m.probs().data(), sizeof(double) * std::size_t(m.probs().size()));
    return hex(h);
}

std::string format_number(double v) {
    std::ostringstream s;
    s << v;
    return s.str();
}

json stress_table(const MinkowskiEmbedding& e) {
    json out = json::object();
    const Index available = e.spectrum.size() > 0 ? e.spectrum.size() : e.dims();
    for (Index d : kStressDims) {
        if (d <= available) out[std::to_string(d)] = explained_stress(e, d);
    }
    return out;
}

void print_stress(std::ostream& out, const std::string& label, const json& table) {
    for (Index d : kStressDims) {
        const std::string key = std::to_string(d);
        if (table.contains(key)) out << label << " top-" << key << ": " << table[key].get<double>() << "\n";
    }
}

}  // namespace

json to_json(const RunManifest& m) {
    return json{{"command", m.command},
                {"inputs", m.inputs},
                {"parameters", m.parameters},
                {"tool_version", m.tool_version},
                {"wall_time", m.wall_time}};
}

fs::path run_manifest_path(const fs::path& output) {
    if (fs::is_directory(output)) return output / "run.json";
    return output.string() + ".run.json";
}

void write_run_manifest(const RunManifest& m, const fs::path& output) {
    io::write_text_atomic(run_manifest_path(output), to_json(m).dump(2) + "\n");
}

json parse_json(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, column = 1;
        const std::size_t end = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
        for (std::size_t i = 0; i < end; ++i) {
            if (text[i] == '\n') {
                ++line;
                column = 1;
            } else {
                ++column;
            }
        }
        throw ValidationError(origin + ": invalid JSON at line " + std::to_string(line) + ", column " +
                              std::to_string(column) + ": " + e.what());
    }
}

Index SynthPreset::config_count() const {
    return Index(depths.size() * optimizers.size() * batch_sizes.size() * weight_decays.size());
}

SynthPreset parse_preset(const std::string& text, const std::string& origin) {
    const json doc = parse_json(text, origin);
    require(doc.is_object(), origin, "a preset must be a JSON object");
    SynthPreset p;
    p.name = optional_value<std::string>(doc, "name", "", origin);
    p.classes = required<Index>(doc, "classes", origin);
    p.seed = optional_value<std::uint64_t>(doc, "seed", 0, origin);

    const json dataset = required<json>(doc, "dataset", origin);
    p.dataset.n_train = required<Index>(dataset, "n_train", origin);
    p.dataset.n_test = required<Index>(dataset, "n_test", origin);
    p.dataset.input_dim = required<Index>(dataset, "input_dim", origin);
    p.dataset.sloppiness = optional_value<double>(dataset, "sloppiness", 0.0, origin);

    if (doc.contains("teacher")) {
        p.teacher_hidden = optional_value<std::vector<Index>>(doc.at("teacher"), "hidden", p.teacher_hidden, origin);
    }
    const json student = required<json>(doc, "student", origin);
    p.width = required<Index>(student, "width", origin);
    p.depths = optional_value<std::vector<Index>>(student, "depths", p.depths, origin);
    const auto init = optional_value<std::string>(student, "init", "default", origin);
    if (init == "default") {
        p.init = synth::Init::Default;
    } else if (init == "corner") {
        p.init = synth::Init::CornerGaussian;
    } else {
        throw ValidationError(origin + ": unknown init '" + init + "' (default, corner)");
    }

    p.optimizers.clear();
    const json optimizers = required<json>(doc, "optimizers", origin);
    require(optimizers.is_array(), origin, "'optimizers' must be an array");
    for (const auto& o : optimizers) {
        OptimizerChoice choice;
        try {
            choice.method = synth::parse_method(required<std::string>(o, "method", origin));
        } catch (const ValidationError& e) {
            throw ValidationError(origin + ": " + e.what());
        }
        choice.learning_rate = required<double>(o, "learning_rate", origin);
        p.optimizers.push_back(choice);
    }
    p.batch_sizes = optional_value<std::vector<Index>>(doc, "batch_sizes", p.batch_sizes, origin);
    p.weight_decays = optional_value<std::vector<double>>(doc, "weight_decays", p.weight_decays, origin);
    p.epochs = required<Index>(doc, "epochs", origin);
    p.max_checkpoints = optional_value<Index>(doc, "max_checkpoints", p.max_checkpoints, origin);
    p.seeds = optional_value<Index>(doc, "seeds", p.seeds, origin);

    require(p.classes >= 2, origin, "classes must be at least 2");
    require(p.dataset.n_train >= 1 && p.dataset.n_test >= 1 && p.dataset.input_dim >= 1, origin,
            "dataset sizes must be positive");
    require(p.dataset.sloppiness >= 0.0, origin, "sloppiness must be non-negative");
    require(p.width >= 1, origin, "width must be positive");
    require(!p.depths.empty() && !p.optimizers.empty() && !p.batch_sizes.empty() && !p.weight_decays.empty(), origin,
            "depths, optimizers, batch_sizes and weight_decays must be non-empty");
    for (Index d : p.depths) require(d >= 0, origin, "depths must be non-negative");
    for (Index h : p.teacher_hidden) require(h >= 1, origin, "teacher widths must be positive");
    for (const auto& o : p.optimizers) require(o.learning_rate > 0.0, origin, "learning rates must be positive");
    for (Index b : p.batch_sizes) require(b >= 1 && b <= p.dataset.n_train, origin, "batch sizes must lie in [1, n_train]");
    for (double w : p.weight_decays) require(w >= 0.0, origin, "weight decays must be non-negative");
    require(p.epochs >= 1, origin, "epochs must be positive");
    require(p.max_checkpoints >= 2 && p.max_checkpoints <= synth::kMaxCheckpoints, origin,
            "max_checkpoints must lie in [2, " + std::to_string(synth::kMaxCheckpoints) + "]");
    require(p.seeds >= 1, origin, "seeds must be positive");
    return p;
}

json preset_json(const SynthPreset& p) {
    json optimizers = json::array();
    for (const auto& o : p.optimizers) {
        optimizers.push_back({{"method", synth::to_string(o.method)}, {"learning_rate", o.learning_rate}});
    }
    return json{{"name", p.name},
                {"classes", p.classes},
                {"seed", p.seed},
                {"dataset",
                 {{"n_train", p.dataset.n_train},
                  {"n_test", p.dataset.n_test},
                  {"input_dim", p.dataset.input_dim},
                  {"sloppiness", p.dataset.sloppiness}}},
                {"teacher", {{"hidden", p.teacher_hidden}}},
                {"student",
                 {{"width", p.width},
                  {"depths", p.depths},
                  {"init", p.init == synth::Init::CornerGaussian ? "corner" : "default"}}},
                {"optimizers", optimizers},
                {"batch_sizes", p.batch_sizes},
                {"weight_decays", p.weight_decays},
                {"epochs", p.epochs},
                {"max_checkpoints", p.max_checkpoints},
                {"seeds", p.seeds}};
}

fs::path preset_directory() {
    if (const char* dir = std::getenv("MANIFOLD_PRESET_DIR"); dir && *dir) return dir;
    return MANIFOLD_PRESET_DIR;
}

SynthPreset load_preset(const std::string& name_or_path) {
    fs::path path = name_or_path;
    if (!fs::exists(path)) {
        path = preset_directory() / (name_or_path + ".json");
        if (!fs::exists(path)) {
            throw ValidationError("no preset file or bundled preset named '" + name_or_path + "'");
        }
    }
    return parse_preset(read_text(path), path.string());
}

std::vector<SynthRun> synthesize(const SynthPreset& preset, const fs::path& out_dir, unsigned threads) {
    using namespace synth;
    fs::create_directories(out_dir);

    GaussianDatasetSpec spec = preset.dataset;
    spec.seed = preset.seed;
    const Dataset data = sample_dataset(spec);
    MlpSpec teacher{{spec.input_dim}, Init::TeacherGaussian};
    for (Index h : preset.teacher_hidden) teacher.layer_widths.push_back(h);
    teacher.layer_widths.push_back(preset.classes);
    const LabelVector train_labels = label_with_teacher(data.train_inputs, teacher, preset.seed);
    const LabelVector test_labels = label_with_teacher(data.test_inputs, teacher, preset.seed);
    io::save_labels({{"train", train_labels}, {"test", test_labels}}, out_dir / kLabelsFile);

    struct Job {
        MlpSpec student;
        OptimizerSpec opt;
        Index depth = 0;
        SynthRun run;
    };
    std::vector<Job> jobs;
    Index config = 0;
    for (Index depth : preset.depths) {
        for (const auto& o : preset.optimizers) {
            for (Index batch : preset.batch_sizes) {
                for (double decay : preset.weight_decays) {
                    for (Index s = 0; s < preset.seeds; ++s) {
                        Job job;
                        job.depth = depth;
                        job.student.layer_widths = {spec.input_dim};
                        for (Index l = 0; l < depth; ++l) job.student.layer_widths.push_back(preset.width);
                        job.student.layer_widths.push_back(preset.classes);
                        job.student.init = preset.init;
                        job.opt.method = o.method;
                        job.opt.learning_rate = o.learning_rate;
                        job.opt.batch_size = batch;
                        job.opt.weight_decay = decay;
                        job.opt.epochs = preset.epochs;
                        job.opt.max_checkpoints = preset.max_checkpoints;
                        job.run.config = config;
                        job.run.seed = preset.seed * 1000 + std::uint64_t(s);
                        job.run.file = out_dir / ("d" + std::to_string(depth) + "-" + std::string(to_string(o.method)) +
                                                  "-bs" + std::to_string(batch) + "-wd" + format_number(decay) +
                                                  "-s" + std::to_string(s) + ".pred");
                        jobs.push_back(std::move(job));
                    }
                    ++config;
                }
            }
        }
    }

    std::vector<std::exception_ptr> failures(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            try {
                Job& job = jobs[i];
                TrainOptions options;
                options.seed = job.run.seed;
                options.id_prefix = job.run.file.stem().string();
                TrainResult result = train(data, train_labels, test_labels, job.student, job.opt, options);
                job.run.diverged = result.diverged;
                job.run.final_train_error = result.final_train_error;
                job.run.final_test_error = result.final_test_error;
                io::save_predictions({result.train, result.test}, job.run.file);
            } catch (...) {
                failures[i] = std::current_exception();
            }
        }
    };
    {
        const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(jobs.size(), 1));
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(worker);
        worker();
    }
    for (const auto& f : failures) {
        if (f) std::rethrow_exception(f);
    }

    std::vector<SynthRun> runs;
    json index_runs = json::array();
    for (const auto& job : jobs) {
        runs.push_back(job.run);
        index_runs.push_back({{"file", job.run.file.filename().string()},
                              {"config", job.run.config},
                              {"seed", job.run.seed},
                              {"depth", job.depth},
                              {"diverged", job.run.diverged},
                              {"final_train_error", job.run.final_train_error},
                              {"final_test_error", job.run.final_test_error}});
    }
    const json index{{"preset", preset_json(preset)}, {"labels", kLabelsFile}, {"runs", index_runs}};
    io::write_text_atomic(out_dir / kCorpusIndex, index.dump(2) + "\n");
    return runs;
}

Corpus load_corpus(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw ValidationError("corpus directory " + dir.string() + " does not exist");
    const fs::path index_path = dir / kCorpusIndex;
    if (!fs::exists(index_path)) throw ValidationError("partial corpus: " + index_path.string() + " is missing");
    const json index = parse_json(read_text(index_path), index_path.string());
    const fs::path labels = dir / optional_value<std::string>(index, "labels", kLabelsFile, index_path.string());
    if (!fs::exists(labels)) throw ValidationError("partial corpus: labels file " + labels.string() + " is missing");

    Corpus corpus;
    corpus.preset = index.value("preset", json::object());
    corpus.train_labels = io::load_labels(labels, "train");
    corpus.test_labels = io::load_labels(labels, "test");
    for (const auto& entry : required<json>(index, "runs", index_path.string())) {
        const fs::path file = dir / required<std::string>(entry, "file", index_path.string());
        if (!fs::exists(file)) throw ValidationError("partial corpus: " + file.string() + " is missing");
        auto records = io::load_predictions(file);
        if (records.size() != 2) {
            throw ValidationError("partial corpus: " + file.string() + " holds " + std::to_string(records.size()) +
                                  " records, expected train and test");
        }
        CorpusRun run;
        run.name = file.stem().string();
        run.config = required<Index>(entry, "config", index_path.string());
        run.seed = required<std::uint64_t>(entry, "seed", index_path.string());
        run.train = std::move(records[0]);
        run.test = std::move(records[1]);
        if (run.train.n_samples() != corpus.train_labels.size() || run.test.n_samples() != corpus.test_labels.size()) {
            throw ValidationError("corpus run " + run.name + " does not match the label counts");
        }
        corpus.runs.push_back(std::move(run));
    }
    if (corpus.runs.empty()) throw ValidationError("corpus " + dir.string() + " has no runs");
    return corpus;
}

double r_squared(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ValidationError("r_squared needs two equal series of length >= 2");
    const Eigen::Map<const Eigen::ArrayXd> a(x.data(), Index(x.size())), b(y.data(), Index(y.size()));
    const Eigen::ArrayXd da = a - a.mean(), db = b - b.mean();
    const double sxx = da.square().sum(), syy = db.square().sum(), sxy = (da * db).sum();
    if (syy == 0.0) return 1.0;
    if (sxx == 0.0) return 0.0;
    return sxy * sxy / (sxx * syy);
}

fs::path cache_file(const fs::path& dir, const std::vector<std::string>& keys, DistanceKind kind) {
    std::uint64_t h = kFnvBasis;
    const std::string_view k = to_string(kind);
    h = fnv1a(h, k.data(), k.size());
    for (const auto& key : keys) {
        h = fnv1a(h, key.data(), key.size());
        h = fnv1a(h, "\n", 1);
    }
    return dir / ("pairwise-" + hex(h) + ".dmx");
}

namespace {

struct SplitEmbedding {
    DistanceMatrix distances;
    MinkowskiEmbedding embedding;
    std::vector<PredictionTensor> models;
    std::vector<double> progress;
};

SplitEmbedding embed_split(const Corpus& corpus, bool train_split, const ReportOptions& options) {
    SplitEmbedding out;
    const LabelVector& labels = train_split ? corpus.train_labels : corpus.test_labels;
    const Geodesic reference = reference_geodesic(labels, corpus.runs.front().train.n_classes());
    for (const auto& run : corpus.runs) {
        for (const auto& cp : (train_split ? run.train : run.test).checkpoints) {
            out.models.push_back(cp.tensor);
            out.progress.push_back(progress(cp.tensor, reference));
        }
    }
    PairwiseOptions pairwise;
    pairwise.chunk = options.chunk;
    pairwise.threads = options.threads;
    if (!options.cache_dir.empty()) {
        fs::create_directories(options.cache_dir);
        pairwise.cache_path = cache_file(options.cache_dir, {train_split ? "train" : "test", content_digest(out.models)},
                                         options.kind);
    }
    out.distances = pairwise_matrix(out.models, options.kind, pairwise);
    const Index m = out.distances.size();
    out.embedding = inpca(out.distances, std::min<Index>(m, std::max<Index>(options.dims, 3)));
    return out;
}

json embedding_summary(const SplitEmbedding& s) {
    const auto& e = s.embedding;
    return json{{"models", e.size()},
                {"dims", e.dims()},
                {"explained_stress", stress_table(e)},
                {"eigenvalues", std::vector<double>(e.eigenvalues.data(), e.eigenvalues.data() + e.eigenvalues.size())},
                {"signature", std::vector<int>(e.signature.data(), e.signature.data() + e.signature.size())}};
}

}  // namespace

json analyze_corpus(const Corpus& corpus, const ReportOptions& options) {
    const Index classes = corpus.runs.front().train.n_classes();
    json report;
    report["preset"] = corpus.preset;
    report["kind"] = to_string(options.kind);

    json runs = json::array();
    Index converged = 0;
    std::vector<double> progress_values, error_values;
    const Geodesic train_reference = reference_geodesic(corpus.train_labels, classes);
    for (const auto& run : corpus.runs) {
        const double train_error = error_rate(run.train.checkpoints.back().tensor, corpus.train_labels);
        const double test_error = error_rate(run.test.checkpoints.back().tensor, corpus.test_labels);
        converged += train_error <= kConvergedError;
        runs.push_back({{"name", run.name},
                        {"config", run.config},
                        {"seed", run.seed},
                        {"checkpoints", run.train.size()},
                        {"final_train_error", train_error},
                        {"final_test_error", test_error}});
        for (const auto& cp : run.train.checkpoints) {
            progress_values.push_back(progress(cp.tensor, train_reference));
            error_values.push_back(error_rate(cp.tensor, corpus.train_labels));
        }
    }
    report["runs"] = runs;
    report["converged"] = converged;
    report["converged_fraction"] = double(converged) / double(corpus.runs.size());
    report["progress_error_r2"] = r_squared(progress_values, error_values);

    // Train embedding, plus the four-anchor basis placed against it.
    {
        const SplitEmbedding train = embed_split(corpus, true, options);
        json summary = embedding_summary(train);
        const Index full3 = std::min<Index>(3, train.embedding.dims());
        summary["explained_pairwise_distances_3d"] = explained_pairwise_distances(
            train.distances, train.embedding.coords.leftCols(full3), train.embedding.signature.head(full3));
        report["train_embedding"] = summary;

        std::vector<ProgressModel> weighted;
        for (std::size_t i = 0; i < train.models.size(); ++i) weighted.push_back({train.models[i], train.progress[i]});
        constexpr double s1 = 1.0 / 3.0, s2 = 2.0 / 3.0;
        const std::vector<PredictionTensor> anchors{ignorance(train.models.front().n_samples(), classes),
                                                    one_hot(corpus.train_labels, classes),
                                                    progress_kernel_average(weighted, s1, options.sigma),
                                                    progress_kernel_average(weighted, s2, options.sigma)};
        const auto [basis, placed] = basis_embedding(anchors, train.models, options.kind);
        report["basis"] = {{"s1", s1},
                           {"s2", s2},
                           {"sigma", options.sigma},
                           {"signature", std::vector<int>(basis.signature.data(),
                                                          basis.signature.data() + basis.signature.size())},
                           {"explained_pairwise_distances_3d",
                            explained_pairwise_distances(train.distances, placed, basis.signature)}};
    }
    if (options.test_embedding) report["test_embedding"] = embedding_summary(embed_split(corpus, false, options));

    // Ensembles of the final test predictions of each seed group.
    std::map<Index, std::vector<PredictionTensor>> groups;
    for (const auto& run : corpus.runs) groups[run.config].push_back(run.test.checkpoints.back().tensor);
    json group_rows = json::array();
    Index harmonic_wins = 0, group_count = 0;
    for (const auto& [config, finals] : groups) {
        if (finals.size() < 2) continue;
        json errors = json::object();
        double am = 0.0, hm = 0.0;
        for (const auto& row : ensemble_report(finals, corpus.test_labels)) {
            errors[std::string(to_string(row.kind))] = {{"error", row.error}, {"d_B", row.distance_to_truth},
                                                       {"progress", row.progress}};
            if (row.kind == CentroidKind::Arithmetic) am = row.error;
            if (row.kind == CentroidKind::Harmonic) hm = row.error;
        }
        harmonic_wins += hm <= am;
        ++group_count;
        group_rows.push_back({{"config", config}, {"members", finals.size()}, {"centroids", errors}});
    }
    report["ensembles"] = {{"groups", group_rows},
                           {"group_count", group_count},
                           {"harmonic_not_worse", harmonic_wins},
                           {"harmonic_not_worse_fraction",
                            group_count > 0 ? double(harmonic_wins) / double(group_count) : 0.0}};

    // Progress-indexed trajectory distances and their dendrogram.
    std::vector<ResampledTrajectory> resampled;
    std::vector<std::string> ids;
    json skipped = json::array();
    for (const auto& run : corpus.runs) {
        if (run.train.size() < 2) {
            skipped.push_back(run.name);
            continue;
        }
        resampled.push_back(resample(index_by_progress(run.train, train_reference), options.grid));
        ids.push_back(run.name);
    }
    json trajectories{{"grid", options.grid}, {"linkage", to_string(options.linkage)}, {"skipped", skipped}};
    if (resampled.size() >= 2) {
        const DistanceMatrix d = trajectory_distance_matrix(resampled, options.kind, ids);
        const Dendrogram tree = hierarchical_cluster(d, options.linkage);
        trajectories["dendrogram"] = json::parse(dendrogram_json(tree));
        trajectories["newick"] = dendrogram_newick(tree);
    }
    report["trajectories"] = trajectories;
    return report;
}

namespace {

struct Common {
    std::string kind = "bhat";
    Index chunk = 64;
    unsigned threads = 1;
    std::vector<int> records;
};

std::vector<Trajectory> select_records(const fs::path& file, const std::vector<int>& records,
                                       std::vector<int>* kept = nullptr) {
    auto all = io::load_predictions(file);
    std::vector<Trajectory> out;
    for (std::size_t r = 0; r < all.size(); ++r) {
        if (!records.empty() && std::find(records.begin(), records.end(), int(r)) == records.end()) continue;
        out.push_back(std::move(all[r]));
        if (kept) kept->push_back(int(r));
    }
    for (int r : records) {
        if (r < 0 || std::size_t(r) >= all.size()) {
            throw ValidationError(file.string() + " has no record " + std::to_string(r));
        }
    }
    return out;
}

/// Labels for record r: a shared "labels" entry, otherwise "train" for
/// record 0 and "test" for record 1.
LabelVector labels_for_record(const fs::path& labels_file, int record) {
    const json doc = parse_json(read_text(labels_file), labels_file.string());
    if (doc.contains("labels")) return io::load_labels(labels_file, "labels");
    if (record == 0 && doc.contains("train")) return io::load_labels(labels_file, "train");
    if (record == 1 && doc.contains("test")) return io::load_labels(labels_file, "test");
    throw ValidationError("missing truth labels for record " + std::to_string(record) + " in " + labels_file.string());
}

void write_ids(const fs::path& path, const std::vector<std::string>& ids) {
    std::string text;
    for (const auto& id : ids) text += id + "\n";
    io::write_text_atomic(path, text);
}

std::vector<std::string> read_ids(const fs::path& path, Index expected) {
    std::vector<std::string> ids;
    if (fs::exists(path)) {
        std::istringstream in(read_text(path));
        for (std::string line; std::getline(in, line);) ids.push_back(line);
    }
    if (Index(ids.size()) != expected) {
        ids.clear();
        for (Index i = 0; i < expected; ++i) ids.push_back(std::to_string(i));
    }
    return ids;
}

fs::path ids_path(const fs::path& dmx) { return dmx.string() + ".ids"; }

std::vector<std::string> path_strings(const std::vector<fs::path>& paths) {
    std::vector<std::string> out;
    for (const auto& p : paths) out.push_back(p.string());
    return out;
}

fs::path cache_dir_from_env() {
    const char* dir = std::getenv("MANIFOLD_CACHE_DIR");
    return dir && *dir ? fs::path(dir) : fs::path();
}

int cmd_synth(const std::string& preset_name, const fs::path& out_dir, const std::optional<std::uint64_t>& seed,
              unsigned threads, std::ostream& out) {
    const auto start = Clock::now();
    SynthPreset preset = load_preset(preset_name);
    if (seed) preset.seed = *seed;
    const auto runs = synthesize(preset, out_dir, threads);
    Index converged = 0, diverged = 0;
    for (const auto& r : runs) {
        converged += r.final_train_error <= kConvergedError;
        diverged += r.diverged;
    }
    out << "wrote " << runs.size() << " runs (" << preset.config_count() << " configs x " << preset.seeds
        << " seeds) to " << out_dir.string() << "\n";
    out << "train error <= " << kConvergedError << ": " << converged << "/" << runs.size() << ", diverged: " << diverged
        << "\n";
    RunManifest m{"synth", {preset_name}, {{"preset", preset_json(preset)}, {"threads", threads}}};
    m.wall_time = seconds_since(start);
    write_run_manifest(m, out_dir);
    return 0;
}

int cmd_distances(const std::vector<fs::path>& inputs, const Common& c, fs::path out_path, std::ostream& out) {
    const auto start = Clock::now();
    const DistanceKind kind = parse_distance_kind(c.kind);
    std::vector<PredictionTensor> models;
    std::vector<std::string> ids;
    for (const auto& file : inputs) {
        for (const auto& t : select_records(file, c.records)) {
            for (const auto& cp : t.checkpoints) {
                if (!models.empty() && !cp.tensor.same_shape(models.front())) {
                    throw ValidationError("inputs mix shapes: " + cp.tensor.model_id() + " is " +
                                          std::to_string(cp.tensor.n_samples()) + "x" +
                                          std::to_string(cp.tensor.n_classes()) + ", expected " +
                                          std::to_string(models.front().n_samples()) + "x" +
                                          std::to_string(models.front().n_classes()));
                }
                models.push_back(cp.tensor);
                ids.push_back(cp.tensor.model_id());
            }
        }
    }
    if (models.size() < 2) throw ValidationError("need at least two checkpoints to compare");
    if (out_path.empty()) {
        const fs::path cache = cache_dir_from_env();
        if (cache.empty()) throw ValidationError("no --out given and MANIFOLD_CACHE_DIR is unset");
        fs::create_directories(cache);
        out_path = cache_file(cache, {content_digest(models)}, kind);
    }
    PairwiseOptions options;
    options.chunk = c.chunk;
    options.threads = c.threads;
    options.cache_path = out_path;
    pairwise_to_file(models, kind, options);
    write_ids(ids_path(out_path), ids);
    out << "wrote " << models.size() << "x" << models.size() << " " << to_string(kind) << " distances to "
        << out_path.string() << "\n";
    RunManifest m{"distances", path_strings(inputs),
                  {{"kind", to_string(kind)}, {"chunk", c.chunk}, {"threads", c.threads}, {"records", c.records},
                   {"models", models.size()}}};
    m.wall_time = seconds_since(start);
    write_run_manifest(m, out_path);
    return 0;
}

int cmd_embed(const fs::path& dmx, Index dims, const fs::path& weights_file, fs::path prefix, std::ostream& out) {
    const auto start = Clock::now();
    const auto header = io::read_dmx_header(dmx);
    const Index m = Index(header.m);
    if (dims < 1) throw ValidationError("--dims must be positive");
    if (dims > m) throw ValidationError("--dims " + std::to_string(dims) + " exceeds the " + std::to_string(m) + " models");
    if (prefix.empty()) prefix = fs::path(dmx).replace_extension("");

    MinkowskiEmbedding e;
    if (!weights_file.empty()) {
        const json doc = parse_json(read_text(weights_file), weights_file.string());
        const auto w = (doc.is_object() ? required<std::vector<double>>(doc, "weights", weights_file.string())
                                        : doc.get<std::vector<double>>());
        if (Index(w.size()) != m) throw ValidationError("weights file has " + std::to_string(w.size()) +
                                                        " entries for " + std::to_string(m) + " models");
        e = weighted_inpca(io::load_distance_matrix(dmx), Eigen::Map<const Eigen::VectorXd>(w.data(), m), dims);
    } else if (m > kDenseEigenLimit) {
        e = inpca_from_file(dmx, dims);
    } else {
        e = inpca(io::load_distance_matrix(dmx), dims);
    }
    const auto ids = read_ids(ids_path(dmx), m);

    std::ostringstream csv;
    csv.precision(17);
    csv << "id";
    for (Index k = 0; k < e.dims(); ++k) csv << ",x" << (k + 1);
    csv << "\n";
    for (Index i = 0; i < e.size(); ++i) {
        csv << ids[std::size_t(i)];
        for (Index k = 0; k < e.dims(); ++k) csv << ',' << e.coords(i, k);
        csv << "\n";
    }
    const fs::path csv_path = prefix.string() + ".csv", json_path = prefix.string() + ".json";
    io::write_text_atomic(csv_path, csv.str());

    const json stress = stress_table(e);
    const json summary{{"models", m},
                       {"dims", e.dims()},
                       {"kind", to_string(header.kind)},
                       {"weighted", !weights_file.empty()},
                       {"eigenvalues", std::vector<double>(e.eigenvalues.data(), e.eigenvalues.data() + e.dims())},
                       {"signature", std::vector<int>(e.signature.data(), e.signature.data() + e.dims())},
                       {"spectrum_energy", e.spectrum_energy},
                       {"explained_stress", stress}};
    io::write_text_atomic(json_path, summary.dump(2) + "\n");
    print_stress(out, "explained stress", stress);
    out << "wrote " << csv_path.string() << " and " << json_path.string() << "\n";

    RunManifest manifest{"embed", {dmx.string()}, {{"dims", dims}, {"weights", weights_file.string()}}};
    manifest.wall_time = seconds_since(start);
    write_run_manifest(manifest, csv_path);
    return 0;
}

int cmd_progress(const std::vector<fs::path>& inputs, const Common& c, const fs::path& labels_file, fs::path out_path,
                 std::ostream& out) {
    const auto start = Clock::now();
    if (labels_file.empty()) throw ValidationError("missing truth labels: pass --labels");
    std::ostringstream csv;
    csv.precision(17);
    csv << "model_id,step,progress,error,d_B\n";
    std::vector<double> s, errors, transformed;
    for (const auto& file : inputs) {
        std::vector<int> kept;
        const auto trajectories = select_records(file, c.records, &kept);
        for (std::size_t r = 0; r < trajectories.size(); ++r) {
            const auto& t = trajectories[r];
            const LabelVector labels = labels_for_record(labels_file, kept[r]);
            if (labels.size() != t.n_samples()) {
                throw ValidationError("labels for record " + std::to_string(kept[r]) + " of " + file.string() +
                                      " do not match N");
            }
            const Index classes = t.n_classes();
            const Geodesic reference = reference_geodesic(labels, classes);
            const PredictionTensor truth = one_hot(labels, classes);
            const double theta = std::acos(1.0 / std::sqrt(double(classes)));
            for (const auto& cp : t.checkpoints) {
                const double p = progress(cp.tensor, reference);
                const double err = error_rate(cp.tensor, labels);
                const double db = bhattacharyya(cp.tensor, truth);
                csv << cp.tensor.model_id() << ',' << cp.step << ',' << p << ',' << err << ',' << db << "\n";
                s.push_back(p);
                errors.push_back(err);
                // Progress a point on the reference geodesic would have at this distance to truth.
                transformed.push_back(1.0 - std::acos(std::exp(-db)) / theta);
            }
        }
    }
    if (out_path.empty()) out_path = "progress.csv";
    io::write_text_atomic(out_path, csv.str());
    json fit = json::object();
    if (s.size() >= 2) {
        fit["r2_progress_error"] = r_squared(s, errors);
        fit["r2_progress_distance"] = r_squared(s, transformed);
        out << "R^2 progress vs error: " << fit["r2_progress_error"].get<double>() << "\n";
        out << "R^2 progress vs d_B to truth: " << fit["r2_progress_distance"].get<double>() << "\n";
    }
    out << "wrote " << s.size() << " rows to " << out_path.string() << "\n";
    RunManifest m{"progress", path_strings(inputs),
                  {{"labels", labels_file.string()}, {"records", c.records}, {"fit", fit}}};
    m.wall_time = seconds_since(start);
    write_run_manifest(m, out_path);
    return 0;
}

int cmd_trajdist(const std::vector<fs::path>& inputs, const Common& c, const fs::path& labels_file, Index grid,
                 const std::string& linkage_name, fs::path prefix, std::ostream& out) {
    const auto start = Clock::now();
    if (labels_file.empty()) throw ValidationError("missing truth labels: pass --labels");
    const DistanceKind kind = parse_distance_kind(c.kind);
    const Linkage linkage = parse_linkage(linkage_name);
    if (grid < 2) throw ValidationError("--grid must be at least 2");
    std::vector<ResampledTrajectory> resampled;
    std::vector<std::string> ids;
    for (const auto& file : inputs) {
        std::vector<int> kept;
        const auto trajectories = select_records(file, c.records, &kept);
        for (std::size_t r = 0; r < trajectories.size(); ++r) {
            const std::string id = file.stem().string() + "#" + std::to_string(kept[r]);
            if (trajectories[r].size() < 2) {
                throw ValidationError("trajectory " + id + " has fewer than 2 checkpoints");
            }
            const LabelVector labels = labels_for_record(labels_file, kept[r]);
            resampled.push_back(resample(index_by_progress(trajectories[r], labels), grid));
            ids.push_back(id);
        }
    }
    if (resampled.size() < 2) throw ValidationError("need at least two trajectories");
    const DistanceMatrix d = trajectory_distance_matrix(resampled, kind, ids);
    const Dendrogram tree = hierarchical_cluster(d, linkage);
    if (prefix.empty()) prefix = "trajectories";
    const fs::path dmx = prefix.string() + ".dmx";
    io::save_distance_matrix(d, dmx);
    write_ids(ids_path(dmx), ids);
    io::write_text_atomic(prefix.string() + ".dendrogram.json", dendrogram_json(tree));
    io::write_text_atomic(prefix.string() + ".nwk", dendrogram_newick(tree) + "\n");
    out << "wrote " << ids.size() << " trajectories to " << dmx.string() << ", " << prefix.string()
        << ".dendrogram.json and " << prefix.string() << ".nwk\n";
    RunManifest m{"trajdist", path_strings(inputs),
                  {{"kind", to_string(kind)}, {"grid", grid}, {"linkage", to_string(linkage)},
                   {"labels", labels_file.string()}, {"records", c.records}}};
    m.wall_time = seconds_since(start);
    write_run_manifest(m, dmx);
    return 0;
}

int cmd_report(const fs::path& corpus_dir, const fs::path& out_dir, const ReportOptions& options, std::ostream& out) {
    const auto start = Clock::now();
    const Corpus corpus = load_corpus(corpus_dir);
    const json report = analyze_corpus(corpus, options);
    fs::create_directories(out_dir);
    const fs::path summary = out_dir / "summary.json";
    io::write_text_atomic(summary, report.dump(2) + "\n");
    out << "runs: " << corpus.runs.size() << ", converged: " << report["converged"].get<Index>() << "\n";
    print_stress(out, "train explained stress", report["train_embedding"]["explained_stress"]);
    const auto& ens = report["ensembles"];
    out << "harmonic <= arithmetic ensemble error in " << ens["harmonic_not_worse"].get<Index>() << "/"
        << ens["group_count"].get<Index>() << " groups\n";
    out << "wrote " << summary.string() << "\n";
    RunManifest m{"report", {corpus_dir.string()},
                  {{"kind", to_string(options.kind)}, {"dims", options.dims}, {"grid", options.grid},
                   {"sigma", options.sigma}, {"linkage", to_string(options.linkage)}, {"threads", options.threads},
                   {"chunk", options.chunk}}};
    m.wall_time = seconds_since(start);
    write_run_manifest(m, out_dir);
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Prediction-space analysis of classifier training trajectories", "manifold"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    Common common;
    std::vector<fs::path> inputs;
    fs::path out_path, labels_file, weights_file, corpus_dir;
    std::string preset, linkage = "average";
    std::uint64_t seed = 0;
    Index dims = 3, grid = kDefaultGridPoints;
    double sigma = kDefaultProgressSigma;
    const std::vector<std::string> kinds{"bhat", "geo", "skl", "hell", "euclid"};

    auto add_kind = [&](CLI::App* cmd) {
        cmd->add_option("--kind", common.kind, "distance kind")->check(CLI::IsMember(kinds))->capture_default_str();
    };
    auto add_threads = [&](CLI::App* cmd) {
        cmd->add_option("--threads", common.threads, "worker threads")->check(CLI::PositiveNumber);
    };
    auto add_records = [&](CLI::App* cmd) {
        cmd->add_option("--record", common.records, "record indices to use (default all)")->check(CLI::NonNegativeNumber);
    };

    auto* synth_cmd = app.add_subcommand("synth", "train a synthetic teacher-student corpus from a preset");
    synth_cmd->add_option("preset", preset, "preset file or bundled preset name")->required();
    synth_cmd->add_option("-o,--out", out_path, "output directory")->required();
    auto* seed_opt = synth_cmd->add_option("--seed", seed, "override the preset seed");
    add_threads(synth_cmd);

    auto* dist_cmd = app.add_subcommand("distances", "pairwise distances over all checkpoints of the inputs");
    dist_cmd->add_option("inputs", inputs, "PRED1 files")->required()->check(CLI::ExistingFile);
    dist_cmd->add_option("-o,--out", out_path, "DMX1 output (default: a file in MANIFOLD_CACHE_DIR)");
    dist_cmd->add_option("--chunk", common.chunk, "rows per block")->check(CLI::PositiveNumber);
    add_kind(dist_cmd);
    add_threads(dist_cmd);
    add_records(dist_cmd);

    auto* embed_cmd = app.add_subcommand("embed", "InPCA embedding of a distance file");
    embed_cmd->add_option("dmx", corpus_dir, "DMX1 file")->required()->check(CLI::ExistingFile);
    embed_cmd->add_option("--dims", dims, "embedding dimensions")->capture_default_str();
    embed_cmd->add_option("--weights", weights_file, "JSON array of multiplicities")->check(CLI::ExistingFile);
    embed_cmd->add_option("-o,--out", out_path, "output prefix for .csv and .json");

    auto* progress_cmd = app.add_subcommand("progress", "per-checkpoint progress, error and distance to truth");
    progress_cmd->add_option("inputs", inputs, "PRED1 files")->required()->check(CLI::ExistingFile);
    progress_cmd->add_option("--labels", labels_file, "labels JSON")->check(CLI::ExistingFile);
    progress_cmd->add_option("-o,--out", out_path, "CSV output")->capture_default_str();
    add_records(progress_cmd);

    auto* traj_cmd = app.add_subcommand("trajdist", "trajectory distances and their dendrogram");
    traj_cmd->add_option("inputs", inputs, "PRED1 files")->required()->check(CLI::ExistingFile);
    traj_cmd->add_option("--labels", labels_file, "labels JSON")->check(CLI::ExistingFile);
    traj_cmd->add_option("--grid", grid, "progress grid points")->capture_default_str();
    traj_cmd->add_option("--linkage", linkage, "single, average or complete")->capture_default_str();
    traj_cmd->add_option("-o,--out", out_path, "output prefix");
    add_kind(traj_cmd);
    add_records(traj_cmd);

    auto* report_cmd = app.add_subcommand("report", "full analysis of a synthetic corpus");
    report_cmd->add_option("corpus", corpus_dir, "directory written by synth")->required();
    report_cmd->add_option("-o,--out", out_path, "output directory")->required();
    report_cmd->add_option("--dims", dims, "embedding dimensions")->capture_default_str();
    report_cmd->add_option("--grid", grid, "progress grid points")->capture_default_str();
    report_cmd->add_option("--sigma", sigma, "kernel width in progress")->capture_default_str();
    report_cmd->add_option("--linkage", linkage, "single, average or complete")->capture_default_str();
    report_cmd->add_option("--chunk", common.chunk, "rows per block")->check(CLI::PositiveNumber);
    add_kind(report_cmd);
    add_threads(report_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 2;
    }

    try {
        if (*synth_cmd) {
            return cmd_synth(preset, out_path, seed_opt->count() ? std::optional(seed) : std::nullopt, common.threads, out);
        }
        if (*dist_cmd) return cmd_distances(inputs, common, out_path, out);
        if (*embed_cmd) return cmd_embed(corpus_dir, dims, weights_file, out_path, out);
        if (*progress_cmd) return cmd_progress(inputs, common, labels_file, out_path, out);
        if (*traj_cmd) return cmd_trajdist(inputs, common, labels_file, grid, linkage, out_path, out);
        if (*report_cmd) {
            ReportOptions options;
            options.kind = parse_distance_kind(common.kind);
            options.dims = dims;
            options.grid = grid;
            options.sigma = sigma;
            options.linkage = parse_linkage(linkage);
            options.threads = common.threads;
            options.chunk = common.chunk;
            options.cache_dir = cache_dir_from_env();
            if (!(sigma > 0.0)) throw ValidationError("--sigma must be positive");
            return cmd_report(corpus_dir, out_path, options, out);
        }
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace manifold::cli
