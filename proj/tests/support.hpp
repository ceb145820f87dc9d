#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "manifold/core.hpp"

namespace support {

using manifold::Index;
using manifold::PredictionTensor;

/// Dirichlet(alpha) rows.
inline PredictionTensor random_model(Index n, Index c, std::mt19937_64& rng, double alpha = 1.0) {
    std::gamma_distribution<double> gamma(alpha, 1.0);
    manifold::ProbabilityMatrix<double> p(n, c);
    for (Index i = 0; i < n; ++i) {
        for (Index k = 0; k < c; ++k) p(i, k) = gamma(rng) + 1e-300;
    }
    return PredictionTensor::normalized(std::move(p));
}

inline manifold::LabelVector random_labels(Index n, Index c, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick(0, int(c) - 1);
    std::vector<int> y(static_cast<std::size_t>(n));
    for (auto& v : y) v = pick(rng);
    return manifold::LabelVector::from_zero_based(std::move(y));
}

inline PredictionTensor rows(std::initializer_list<std::initializer_list<double>> values) {
    const Index n = Index(values.size()), c = Index(values.begin()->size());
    manifold::ProbabilityMatrix<double> p(n, c);
    Index i = 0;
    for (const auto& row : values) {
        Index k = 0;
        for (double v : row) p(i, k++) = v;
        ++i;
    }
    return PredictionTensor(std::move(p));
}

/// Fresh directory removed on destruction.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        static std::atomic<int> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("manifold-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

}  // namespace support
