#include "manifold/dmx.hpp"

#include <cstring>
#include <vector>

namespace manifold::io {
namespace {

template <typename T>
void put(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw IoError("truncated DMX1 header");
    return value;
}

DmxHeader parse_header(std::istream& in, const std::filesystem::path& path) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kDmxMagic, 4) != 0) throw ValidationError("bad DMX1 magic in " + path.string());
    const auto version = get<std::uint32_t>(in);
    if (version != kDmxVersion) throw ValidationError("unsupported DMX1 version " + std::to_string(version));
    DmxHeader h;
    const auto code = get<std::uint32_t>(in);
    if (code > static_cast<std::uint32_t>(DistanceKind::SquaredEuclidean)) {
        throw ValidationError("unknown DMX1 kind code " + std::to_string(code));
    }
    h.kind = static_cast<DistanceKind>(code);
    h.m = get<std::uint64_t>(in);
    h.rows_completed = get<std::uint64_t>(in);
    if (h.rows_completed > h.m) throw ValidationError("DMX1 header claims more rows than m");
    return h;
}

}  // namespace

std::streamoff dmx_row_offset(std::uint64_t m, std::uint64_t row) {
    // Rows before `row` hold (m-1) + (m-2) + ... + (m-row) entries.
    const std::uint64_t entries = row * (m - 1) - row * (row - 1) / 2;
    return kDmxHeaderBytes + static_cast<std::streamoff>(entries * sizeof(double));
}

DmxHeader read_dmx_header(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return parse_header(in, path);
}

DmxWriter::DmxWriter(const std::filesystem::path& path, DistanceKind kind, std::uint64_t m) : m_(m) {
    if (std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) {
        const DmxHeader h = read_dmx_header(path);
        if (h.kind != kind || h.m != m) {
            throw ValidationError("cache header mismatch in " + path.string() + ": file has kind " +
                                  std::string(to_string(h.kind)) + ", m=" + std::to_string(h.m) +
                                  "; requested kind " + std::string(to_string(kind)) + ", m=" + std::to_string(m));
        }
        rows_completed_ = h.rows_completed;
        // Anything past the last completed row is an unfinished block.
        std::filesystem::resize_file(path, static_cast<std::uintmax_t>(dmx_row_offset(m, rows_completed_)));
        file_.open(path, std::ios::binary | std::ios::in | std::ios::out);
        file_.seekp(dmx_row_offset(m, rows_completed_));
    } else {
        file_.open(path, std::ios::binary | std::ios::out | std::ios::trunc);
        if (!file_) throw IoError("cannot create " + path.string());
        file_.write(kDmxMagic, 4);
        put<std::uint32_t>(file_, kDmxVersion);
        put<std::uint32_t>(file_, static_cast<std::uint32_t>(kind));
        put<std::uint64_t>(file_, m);
        put<std::uint64_t>(file_, 0);
        file_.flush();
    }
    if (!file_) throw IoError("cannot initialize " + path.string());
}

void DmxWriter::append_rows(const Eigen::Ref<const Eigen::MatrixXd>& block) {
    if (rows_completed_ + static_cast<std::uint64_t>(block.rows()) > m_) throw ValidationError("too many DMX1 rows");
    if (static_cast<std::uint64_t>(block.cols()) != m_) throw ValidationError("DMX1 block has the wrong width");
    file_.seekp(dmx_row_offset(m_, rows_completed_));
    std::vector<double> row;
    for (Index r = 0; r < block.rows(); ++r) {
        const Index i = static_cast<Index>(rows_completed_) + r;
        row.clear();
        for (Index j = i + 1; j < block.cols(); ++j) row.push_back(block(r, j));
        file_.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
    file_.flush();
    rows_completed_ += static_cast<std::uint64_t>(block.rows());
    file_.seekp(20);
    put<std::uint64_t>(file_, rows_completed_);
    file_.flush();
    if (!file_) throw IoError("DMX1 write failed");
}

DistanceMatrix load_distance_matrix(const std::filesystem::path& path, bool require_complete) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const DmxHeader h = parse_header(in, path);
    if (require_complete && h.rows_completed != h.m) {
        throw ValidationError(path.string() + " is incomplete (" + std::to_string(h.rows_completed) + "/" +
                              std::to_string(h.m) + " rows)");
    }
    const auto m = static_cast<Index>(h.m);
    if (m > kMaxInMemoryModels) throw ValidationError("DMX1 matrix too large to load; stream it instead");
    DistanceMatrix out;
    out.kind = h.kind;
    out.entries = Eigen::MatrixXd::Zero(m, m);
    std::vector<double> row;
    for (Index i = 0; i < static_cast<Index>(h.rows_completed); ++i) {
        row.resize(static_cast<std::size_t>(m - 1 - i));
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(double)));
        if (!in) throw IoError("truncated DMX1 data in " + path.string());
        for (Index j = i + 1; j < m; ++j) {
            out.entries(i, j) = row[static_cast<std::size_t>(j - i - 1)];
            out.entries(j, i) = out.entries(i, j);
        }
    }
    for (Index i = 0; i < m; ++i) out.ids.push_back(std::to_string(i));
    return out;
}

void save_distance_matrix(const DistanceMatrix& d, const std::filesystem::path& path) {
    if (std::filesystem::exists(path)) std::filesystem::remove(path);
    DmxWriter writer(path, d.kind, static_cast<std::uint64_t>(d.size()));
    if (d.size() > 0) writer.append_rows(d.entries);
}

void dmx_visit_rows(const std::filesystem::path& path,
                    const std::function<void(Index, const Eigen::Ref<const Eigen::VectorXd>&)>& visit,
                    bool require_complete) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const DmxHeader h = parse_header(in, path);
    if (require_complete && h.rows_completed != h.m) throw ValidationError(path.string() + " is incomplete");
    const auto m = static_cast<Index>(h.m);
    Eigen::VectorXd row;
    for (Index i = 0; i < static_cast<Index>(h.rows_completed); ++i) {
        row.resize(m - 1 - i);
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(double)));
        if (!in) throw IoError("truncated DMX1 data in " + path.string());
        visit(i, row);
    }
}

Eigen::VectorXd dmx_multiply(const std::filesystem::path& path, const Eigen::Ref<const Eigen::VectorXd>& x) {
    const auto m = static_cast<Index>(read_dmx_header(path).m);
    if (x.size() != m) throw ValidationError("vector length does not match DMX1 size");
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
    dmx_visit_rows(path, [&](Index i, const Eigen::Ref<const Eigen::VectorXd>& r) {
        if (r.size() == 0) return;
        y(i) += r.dot(x.tail(r.size()));
        y.tail(r.size()) += x(i) * r;
    });
    return y;
}

}  // namespace manifold::io
