#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "manifold/metrics.hpp"

namespace manifold {

enum class Linkage { Single, Average, Complete };

std::string_view to_string(Linkage linkage);
Linkage parse_linkage(std::string_view name);

/// Agglomerative clustering result. Leaves are clusters 0..m-1; the cluster
/// created by merge k has id m + k.
struct Dendrogram {
    struct Merge {
        Index a = 0;
        Index b = 0;
        double height = 0.0;
        Index size = 0;
    };
    std::vector<Merge> merges;
    std::vector<std::string> leaf_ids;
    Linkage linkage = Linkage::Average;

    Index leaves() const { return static_cast<Index>(leaf_ids.size()); }
};

/// Standard agglomerative clustering. At each step the closest pair merges;
/// ties go to the pair whose smallest leaf indices are smallest.
Dendrogram hierarchical_cluster(const DistanceMatrix& d, Linkage linkage = Linkage::Average);

/// Flat clusters from merges with height <= `height`. Cluster numbers are
/// assigned in order of each cluster's smallest leaf.
std::vector<Index> cut(const Dendrogram& d, double height);

std::string dendrogram_json(const Dendrogram& d);
std::string dendrogram_newick(const Dendrogram& d);

}  // namespace manifold
