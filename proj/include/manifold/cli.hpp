#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "manifold/cluster.hpp"
#include "manifold/core.hpp"
#include "manifold/metrics.hpp"
#include "manifold/synth.hpp"

namespace manifold::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Explained stress is printed and reported at these dimensions.
inline constexpr Index kStressDims[] = {1, 3, 10, 25, 50};

/// A model counts as trained once its final train error is at or below this.
inline constexpr double kConvergedError = 0.05;

struct RunManifest {
    std::string command;
    std::vector<std::string> inputs;
    nlohmann::json parameters = nlohmann::json::object();
    std::string tool_version = kToolVersion;
    double wall_time = 0.0;
};

nlohmann::json to_json(const RunManifest& m);

/// `<output>.run.json`, or `<dir>/run.json` for a directory output.
std::filesystem::path run_manifest_path(const std::filesystem::path& output);
void write_run_manifest(const RunManifest& m, const std::filesystem::path& output);

/// Parses JSON text; syntax errors become ValidationError naming `origin`
/// and the line and column.
nlohmann::json parse_json(const std::string& text, const std::string& origin);

struct OptimizerChoice {
    synth::Method method = synth::Method::Sgd;
    double learning_rate = 0.1;
};

/// Grid of student configurations over one teacher-labelled dataset.
/// Configurations are depths x optimizers x batch sizes x weight decays,
/// each trained from `seeds` initializations.
struct SynthPreset {
    std::string name;
    Index classes = 5;
    synth::GaussianDatasetSpec dataset;
    std::vector<Index> teacher_hidden{50};
    Index width = 256;
    std::vector<Index> depths{1};
    synth::Init init = synth::Init::Default;
    std::vector<OptimizerChoice> optimizers{{}};
    std::vector<Index> batch_sizes{200};
    std::vector<double> weight_decays{0.0};
    Index epochs = 10;
    Index max_checkpoints = synth::kMaxCheckpoints;
    Index seeds = 1;
    std::uint64_t seed = 0;

    Index config_count() const;
    Index run_count() const { return config_count() * seeds; }
};

SynthPreset parse_preset(const std::string& text, const std::string& origin = "preset");
nlohmann::json preset_json(const SynthPreset& p);

/// Directory of bundled presets (MANIFOLD_PRESET_DIR overrides the built-in path).
std::filesystem::path preset_directory();

/// A path to a preset file, or the name of a bundled preset.
SynthPreset load_preset(const std::string& name_or_path);

struct SynthRun {
    std::filesystem::path file;
    Index config = 0;
    std::uint64_t seed = 0;
    bool diverged = false;
    double final_train_error = 1.0;
    double final_test_error = 1.0;
};

/// Writes one PRED1 file per run (record 0 train, record 1 test), the
/// labels file and a corpus index. Runs are trained in parallel on
/// `threads` workers; outputs do not depend on the thread count.
std::vector<SynthRun> synthesize(const SynthPreset& preset, const std::filesystem::path& out_dir, unsigned threads = 1);

inline constexpr const char* kCorpusIndex = "corpus.json";
inline constexpr const char* kLabelsFile = "labels.json";

struct CorpusRun {
    std::string name;
    Index config = 0;
    std::uint64_t seed = 0;
    Trajectory train;
    Trajectory test;
};

struct Corpus {
    std::vector<CorpusRun> runs;
    LabelVector train_labels;
    LabelVector test_labels;
    nlohmann::json preset;
};

/// Loads a directory written by synthesize. Missing files, missing records
/// or missing labels are a ValidationError.
Corpus load_corpus(const std::filesystem::path& dir);

struct ReportOptions {
    DistanceKind kind = DistanceKind::Bhattacharyya;
    Index dims = 10;
    Index grid = 50;
    double sigma = 0.05;
    Linkage linkage = Linkage::Average;
    unsigned threads = 1;
    Index chunk = 64;
    /// Spill directory for pairwise matrices (empty: in memory only).
    std::filesystem::path cache_dir;
    /// Also embed test checkpoints.
    bool test_embedding = true;
};

/// The acceptance battery over a synthetic corpus: convergence rate,
/// explained stress of train (and test) embeddings, progress-error fit,
/// ensemble errors per seed group and trajectory clustering.
nlohmann::json analyze_corpus(const Corpus& corpus, const ReportOptions& options);

/// Coefficient of determination of the least-squares line y ~ a + b x.
double r_squared(const std::vector<double>& x, const std::vector<double>& y);

/// Cache file name for a pairwise matrix over the given inputs.
std::filesystem::path cache_file(const std::filesystem::path& dir, const std::vector<std::string>& keys, DistanceKind kind);

/// Entry point of the `manifold` tool. Returns the process exit code:
/// 0 success, 2 validation error, 3 numerical failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace manifold::cli
