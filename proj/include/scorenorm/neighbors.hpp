#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "geometry.hpp"

namespace scorenorm {

struct Neighbor {
    std::uint32_t index = 0;
    double distance = 0.0;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

namespace detail {
inline bool neighbor_less(const Neighbor& a, const Neighbor& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.index < b.index;
}
}  // namespace detail

// For each reference row, every other reference row sorted by ascending
// distance; ties broken by ascending row index.
struct NeighborTable {
    Metric metric = Metric::cosine;
    std::vector<std::vector<Neighbor>> lists;

    std::size_t size() const { return lists.size(); }
    bool empty() const { return lists.empty(); }
};

inline NeighborTable build_neighbor_table(const EmbeddingMatrix& refs, Metric m) {
    const std::size_t n = refs.rows();
    if (n < 2) throw Error("build_neighbor_table: need at least 2 references, got " +
                           std::to_string(n));

    // The kernels are bitwise symmetric, so each pair is computed once.
    std::vector<double> dist(n * n, 0.0);
    if (m == Metric::cosine) {
        std::vector<double> norms(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto r = refs.row(i);
            norms[i] = std::sqrt(detail::dot(r, r));
            if (norms[i] == 0.0)
                throw Error("build_neighbor_table: zero-norm reference row " +
                            std::to_string(i));
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double d = detail::cosine_from_dot(
                    detail::dot(refs.row(i), refs.row(j)), norms[i], norms[j]);
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
    } else {
        const double dim = static_cast<double>(refs.dim());
        if (refs.dim() == 0) throw Error("build_neighbor_table: zero-dimension rows");
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double d = detail::sq_diff_sum(refs.row(i), refs.row(j)) / dim;
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
    }

    NeighborTable table;
    table.metric = m;
    table.lists.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& list = table.lists[i];
        list.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) list.push_back({static_cast<std::uint32_t>(j), dist[i * n + j]});
        std::sort(list.begin(), list.end(), detail::neighbor_less);
    }
    return table;
}

// Exact k nearest references to q, ascending by (distance, index).
inline std::vector<Neighbor> knn_query(const EmbeddingMatrix& refs, Metric m,
                                       std::span<const double> q, std::size_t k) {
    const std::size_t n = refs.rows();
    if (k < 1 || k > n)
        throw Error("knn_query: k=" + std::to_string(k) + " out of range [1," +
                    std::to_string(n) + "]");
    std::vector<Neighbor> all;
    all.reserve(n);
    for (std::size_t j = 0; j < n; ++j)
        all.push_back({static_cast<std::uint32_t>(j), metric_distance(q, refs.row(j), m)});
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(),
                      detail::neighbor_less);
    all.resize(k);
    return all;
}

}  // namespace scorenorm
