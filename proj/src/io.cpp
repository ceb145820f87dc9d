#include "manifold/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little, "PRED1/DMX1 I/O assumes a little-endian host");

namespace manifold {

void to_json(nlohmann::json& j, const ConfigTag& c) {
    j = nlohmann::json{{"architecture", c.architecture}, {"optimizer", c.optimizer},
                       {"batch_size", c.batch_size},     {"learning_rate", c.learning_rate},
                       {"weight_decay", c.weight_decay}, {"augmentation", c.augmentation},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ConfigTag& c) {
    c.architecture = j.value("architecture", std::string{});
    c.optimizer = j.value("optimizer", std::string{});
    c.batch_size = j.value("batch_size", std::int64_t{0});
    c.learning_rate = j.value("learning_rate", 0.0);
    c.weight_decay = j.value("weight_decay", 0.0);
    c.augmentation = j.value("augmentation", std::string{"none"});
    c.seed = j.value("seed", std::int64_t{0});
}

namespace io {
namespace {

template <typename T>
void put(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw IoError("truncated PRED1 record while reading " + what);
    return value;
}

PredictionTensor repair_rows(ProbabilityMatrix<double> probs, std::string id, std::size_t record,
                             std::size_t checkpoint) {
    for (Index n = 0; n < probs.rows(); ++n) {
        for (Index c = 0; c < probs.cols(); ++c) {
            const double p = probs(n, c);
            if (std::isnan(p)) {
                throw ValidationError("NaN probability in record " + std::to_string(record) +
                                      ", checkpoint " + std::to_string(checkpoint));
            }
            if (p < 0.0 || p > 1.0) {
                throw ValidationError("probability out of range in record " + std::to_string(record));
            }
        }
        const double total = probs.row(n).sum();
        if (std::abs(total - 1.0) > kRowSumRepair) {
            throw ValidationError("row " + std::to_string(n) + " of record " + std::to_string(record) +
                                  ", checkpoint " + std::to_string(checkpoint) + " sums to " +
                                  std::to_string(total));
        }
        if (std::abs(total - 1.0) > kRowSumTolerance) probs.row(n) /= total;
    }
    return PredictionTensor(std::move(probs), std::move(id));
}

nlohmann::json read_manifest(const std::filesystem::path& container) {
    const auto side = manifest_path(container);
    if (!std::filesystem::exists(side)) return nullptr;
    std::ifstream in(side);
    try {
        const auto doc = nlohmann::json::parse(in);
        const auto key = container.filename().string();
        if (!doc.contains(key)) return nullptr;
        auto entry = doc.at(key);
        if (entry.is_object()) entry = nlohmann::json::array({entry});
        return entry;
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("bad manifest " + side.string() + ": " + e.what());
    }
}

}  // namespace

std::filesystem::path manifest_path(const std::filesystem::path& container) {
    return container.string() + ".json";
}

std::vector<Trajectory> load_predictions(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const auto manifest = read_manifest(path);
    const std::string stem = path.stem().string();

    std::vector<Trajectory> out;
    while (in.peek() != std::char_traits<char>::eof()) {
        const std::size_t record = out.size();
        char magic[4];
        in.read(magic, 4);
        if (!in || std::memcmp(magic, kPredMagic, 4) != 0) {
            throw ValidationError("bad PRED1 magic in " + path.string() + " record " + std::to_string(record));
        }
        const auto version = get<std::uint32_t>(in, "version");
        if (version != kPredVersion) {
            throw ValidationError("unsupported PRED1 version " + std::to_string(version));
        }
        const auto n = get<std::uint64_t>(in, "N");
        const auto c = get<std::uint32_t>(in, "C");
        const auto t = get<std::uint32_t>(in, "T");
        if (n < 1 || c < 2 || t < 1) {
            throw ValidationError("PRED1 shape mismatch: N=" + std::to_string(n) + " C=" + std::to_string(c) +
                                  " T=" + std::to_string(t));
        }
        const std::size_t block = static_cast<std::size_t>(n) * c;
        std::vector<float> raw(block * t);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
        if (!in) throw IoError("truncated PRED1 probabilities in " + path.string());
        std::vector<std::uint64_t> steps(t);
        in.read(reinterpret_cast<char*>(steps.data()), static_cast<std::streamsize>(t * sizeof(std::uint64_t)));
        if (!in) throw IoError("truncated PRED1 step table in " + path.string());

        Trajectory traj;
        const nlohmann::json* meta = nullptr;
        if (manifest.is_array() && record < manifest.size()) meta = &manifest[record];
        if (meta) traj.config = meta->get<ConfigTag>();
        for (std::uint32_t k = 0; k < t; ++k) {
            Eigen::Map<const ProbabilityMatrix<float>> view(raw.data() + k * block, static_cast<Index>(n),
                                                            static_cast<Index>(c));
            std::string id = stem + "#" + std::to_string(record) + "@" + std::to_string(steps[k]);
            Checkpoint cp{repair_rows(view.cast<double>(), std::move(id), record, k),
                          static_cast<std::int64_t>(steps[k]), 0.0, std::nullopt};
            if (meta && meta->contains("epochs") && k < meta->at("epochs").size()) {
                cp.epoch = meta->at("epochs")[k].get<double>();
            }
            traj.checkpoints.push_back(std::move(cp));
        }
        traj.validate();
        out.push_back(std::move(traj));
    }
    return out;
}

void save_predictions(const std::vector<Trajectory>& trajectories, const std::filesystem::path& path) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + path.string());
        for (const auto& traj : trajectories) {
            traj.validate();
            out.write(kPredMagic, 4);
            put<std::uint32_t>(out, kPredVersion);
            put<std::uint64_t>(out, static_cast<std::uint64_t>(traj.n_samples()));
            put<std::uint32_t>(out, static_cast<std::uint32_t>(traj.n_classes()));
            put<std::uint32_t>(out, static_cast<std::uint32_t>(traj.size()));
            for (const auto& cp : traj.checkpoints) {
                const ProbabilityMatrix<float> f = cp.tensor.probs().cast<float>();
                out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
            }
            for (const auto& cp : traj.checkpoints) put<std::uint64_t>(out, static_cast<std::uint64_t>(cp.step));
        }
        if (!out) throw IoError("write failed for " + path.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());

    nlohmann::json entries = nlohmann::json::array();
    for (const auto& traj : trajectories) {
        nlohmann::json e = traj.config;
        std::vector<double> epochs;
        for (const auto& cp : traj.checkpoints) epochs.push_back(cp.epoch);
        e["epochs"] = epochs;
        entries.push_back(std::move(e));
    }
    nlohmann::json doc;
    doc[path.filename().string()] = std::move(entries);
    write_text_atomic(manifest_path(path), doc.dump(2));
}

LabelVector load_labels(const std::filesystem::path& path, const std::string& split) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open labels file " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("bad labels file " + path.string() + ": " + e.what());
    }
    if (!doc.contains(split)) throw ValidationError("labels file has no '" + split + "' entry");
    return LabelVector::from_one_based(doc.at(split).get<std::vector<int>>());
}

void save_labels(const std::map<std::string, LabelVector>& splits, const std::filesystem::path& path) {
    nlohmann::json doc;
    for (const auto& [name, labels] : splits) doc[name] = labels.one_based();
    write_text_atomic(path, doc.dump());
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoError("cannot write " + path.string());
        out << text;
        if (!out) throw IoError("write failed for " + path.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace io
}  // namespace manifold
