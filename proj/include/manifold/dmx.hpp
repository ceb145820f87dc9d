#pragma once

#include <filesystem>
#include <fstream>
#include <functional>

#include "manifold/metrics.hpp"

namespace manifold::io {

/// DMX1 distance file, little-endian:
///
///   "DMX1" | u32 version=1 | u32 kind code | u64 m | u64 rows completed
///   | for each row i: D(i, j) for j = i+1 .. m-1 as float64
///
/// Rows are appended in blocks and the header's row count is updated after
/// each block is flushed, so an interrupted computation can be resumed.
inline constexpr char kDmxMagic[4] = {'D', 'M', 'X', '1'};
inline constexpr std::uint32_t kDmxVersion = 1;
inline constexpr std::streamoff kDmxHeaderBytes = 28;

struct DmxHeader {
    DistanceKind kind = DistanceKind::Bhattacharyya;
    std::uint64_t m = 0;
    std::uint64_t rows_completed = 0;
};

/// Byte offset of the first stored entry of row i.
std::streamoff dmx_row_offset(std::uint64_t m, std::uint64_t row);

DmxHeader read_dmx_header(const std::filesystem::path& path);

/// Appendable writer. Opening an existing file checks kind and m against
/// the request and resumes after its completed rows.
class DmxWriter {
public:
    DmxWriter(const std::filesystem::path& path, DistanceKind kind, std::uint64_t m);

    std::uint64_t rows_completed() const { return rows_completed_; }
    /// Appends the strict upper part of the next rows; `block` holds
    /// rows [rows_completed, rows_completed + block.rows()) of the full matrix.
    void append_rows(const Eigen::Ref<const Eigen::MatrixXd>& block);

private:
    std::fstream file_;
    std::uint64_t m_;
    std::uint64_t rows_completed_ = 0;
};

/// Reads the completed rows into the full symmetric matrix (unread rows stay zero).
DistanceMatrix load_distance_matrix(const std::filesystem::path& path, bool require_complete = true);
void save_distance_matrix(const DistanceMatrix& d, const std::filesystem::path& path);

/// Calls visit(i, upper) for every completed row, where `upper` holds
/// D(i, i+1 .. m-1).
void dmx_visit_rows(const std::filesystem::path& path,
                    const std::function<void(Index, const Eigen::Ref<const Eigen::VectorXd>&)>& visit,
                    bool require_complete = true);

/// y = D x, streaming the stored upper triangle of a complete file.
Eigen::VectorXd dmx_multiply(const std::filesystem::path& path, const Eigen::Ref<const Eigen::VectorXd>& x);

}  // namespace manifold::io
