#include "manifold/cluster.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <tuple>

#include <json.hpp>

namespace manifold {
namespace {

std::string newick_label(std::string s) {
    for (char& ch : s) {
        if (std::string_view("()[]:;,' \t\n").find(ch) != std::string_view::npos) ch = '_';
    }
    return s;
}

}  // namespace

std::string_view to_string(Linkage linkage) {
    switch (linkage) {
        case Linkage::Single: return "single";
        case Linkage::Average: return "average";
        case Linkage::Complete: return "complete";
    }
    return "unknown";
}

Linkage parse_linkage(std::string_view name) {
    if (name == "single") return Linkage::Single;
    if (name == "average") return Linkage::Average;
    if (name == "complete") return Linkage::Complete;
    throw ValidationError("unknown linkage '" + std::string(name) + "'");
}

Dendrogram hierarchical_cluster(const DistanceMatrix& d, Linkage linkage) {
    d.validate();
    const Index m = d.size();
    if (m < 1) throw ValidationError("cannot cluster an empty matrix");
    Dendrogram out;
    out.linkage = linkage;
    out.leaf_ids = d.ids;
    if (out.leaf_ids.empty()) {
        for (Index i = 0; i < m; ++i) out.leaf_ids.push_back(std::to_string(i));
    }

    // Active clusters by slot; slot i starts as leaf i.
    Eigen::MatrixXd dist = d.entries;
    std::vector<Index> id(static_cast<std::size_t>(m)), size(static_cast<std::size_t>(m), 1),
        min_leaf(static_cast<std::size_t>(m));
    std::iota(id.begin(), id.end(), Index{0});
    std::iota(min_leaf.begin(), min_leaf.end(), Index{0});
    std::vector<bool> active(static_cast<std::size_t>(m), true);

    for (Index step = 0; step + 1 < m; ++step) {
        Index best_i = -1, best_j = -1;
        for (Index i = 0; i < m; ++i) {
            if (!active[static_cast<std::size_t>(i)]) continue;
            for (Index j = i + 1; j < m; ++j) {
                if (!active[static_cast<std::size_t>(j)]) continue;
                if (best_i < 0) {
                    best_i = i, best_j = j;
                    continue;
                }
                const auto key = [&](Index a, Index b) {
                    const Index la = min_leaf[static_cast<std::size_t>(a)], lb = min_leaf[static_cast<std::size_t>(b)];
                    return std::tuple(dist(a, b), std::min(la, lb), std::max(la, lb));
                };
                if (key(i, j) < key(best_i, best_j)) best_i = i, best_j = j;
            }
        }
        const auto si = static_cast<std::size_t>(best_i), sj = static_cast<std::size_t>(best_j);
        Index a = id[si], b = id[sj];
        if (min_leaf[sj] < min_leaf[si]) std::swap(a, b);
        out.merges.push_back({a, b, dist(best_i, best_j), size[si] + size[sj]});

        for (Index k = 0; k < m; ++k) {
            if (!active[static_cast<std::size_t>(k)] || k == best_i || k == best_j) continue;
            double merged = 0.0;
            switch (linkage) {
                case Linkage::Single: merged = std::min(dist(best_i, k), dist(best_j, k)); break;
                case Linkage::Complete: merged = std::max(dist(best_i, k), dist(best_j, k)); break;
                case Linkage::Average:
                    merged = (double(size[si]) * dist(best_i, k) + double(size[sj]) * dist(best_j, k)) /
                             double(size[si] + size[sj]);
                    break;
            }
            dist(best_i, k) = dist(k, best_i) = merged;
        }
        active[sj] = false;
        id[si] = m + step;
        size[si] += size[sj];
        min_leaf[si] = std::min(min_leaf[si], min_leaf[sj]);
    }
    return out;
}

std::vector<Index> cut(const Dendrogram& d, double height) {
    const Index m = d.leaves();
    // Union-find over cluster ids 0 .. 2m-2.
    std::vector<Index> parent(static_cast<std::size_t>(std::max<Index>(2 * m - 1, 1)));
    std::iota(parent.begin(), parent.end(), Index{0});
    auto find = [&](Index x) {
        while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)];
        return x;
    };
    for (std::size_t k = 0; k < d.merges.size(); ++k) {
        const auto& mg = d.merges[k];
        const Index node = m + static_cast<Index>(k);
        if (mg.height <= height) {
            parent[static_cast<std::size_t>(find(mg.a))] = node;
            parent[static_cast<std::size_t>(find(mg.b))] = node;
        }
    }
    std::vector<Index> labels(static_cast<std::size_t>(m));
    std::vector<std::pair<Index, Index>> seen;  // root -> label
    for (Index i = 0; i < m; ++i) {
        const Index root = find(i);
        auto it = std::find_if(seen.begin(), seen.end(), [&](const auto& p) { return p.first == root; });
        if (it == seen.end()) {
            seen.emplace_back(root, static_cast<Index>(seen.size()));
            labels[static_cast<std::size_t>(i)] = seen.back().second;
        } else {
            labels[static_cast<std::size_t>(i)] = it->second;
        }
    }
    return labels;
}

std::string dendrogram_json(const Dendrogram& d) {
    nlohmann::json j;
    j["linkage"] = std::string(to_string(d.linkage));
    j["leaf_ids"] = d.leaf_ids;
    j["merges"] = nlohmann::json::array();
    for (const auto& mg : d.merges) {
        j["merges"].push_back({{"a", mg.a}, {"b", mg.b}, {"height", mg.height}, {"size", mg.size}});
    }
    return j.dump(2);
}

std::string dendrogram_newick(const Dendrogram& d) {
    const Index m = d.leaves();
    if (m == 1) return newick_label(d.leaf_ids.front()) + ";";
    auto height_of = [&](Index node) { return node < m ? 0.0 : d.merges[static_cast<std::size_t>(node - m)].height; };
    std::ostringstream out;
    out.precision(12);
    std::function<void(Index)> emit = [&](Index node) {
        if (node < m) {
            out << newick_label(d.leaf_ids[static_cast<std::size_t>(node)]);
            return;
        }
        const auto& mg = d.merges[static_cast<std::size_t>(node - m)];
        out << '(';
        emit(mg.a);
        out << ':' << mg.height - height_of(mg.a) << ',';
        emit(mg.b);
        out << ':' << mg.height - height_of(mg.b) << ')';
    };
    emit(2 * m - 2);
    out << ';';
    return out.str();
}

}  // namespace manifold
