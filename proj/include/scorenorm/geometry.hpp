#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"

namespace scorenorm {

namespace detail {

// Every dot product in the project goes through this routine. The four
// independent accumulators are combined in a fixed order, so any two call
// sites produce bit-identical results for the same operands.
inline double dot(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        a0 += x[i] * y[i];
        a1 += x[i + 1] * y[i + 1];
        a2 += x[i + 2] * y[i + 2];
        a3 += x[i + 3] * y[i + 3];
    }
    for (; i < n; ++i) a0 += x[i] * y[i];
    return (a0 + a1) + (a2 + a3);
}

inline double sq_diff_sum(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const double d0 = x[i] - y[i];
        const double d1 = x[i + 1] - y[i + 1];
        const double d2 = x[i + 2] - y[i + 2];
        const double d3 = x[i + 3] - y[i + 3];
        a0 += d0 * d0;
        a1 += d1 * d1;
        a2 += d2 * d2;
        a3 += d3 * d3;
    }
    for (; i < n; ++i) {
        const double d = x[i] - y[i];
        a0 += d * d;
    }
    return (a0 + a1) + (a2 + a3);
}

inline double cosine_from_dot(double dot_xy, double norm_x, double norm_y) {
    double c = dot_xy / (norm_x * norm_y);
    // Rounding can push |c| a hair past 1; clamp to keep the distance in [0,1].
    if (c > 1.0) c = 1.0;
    if (c < -1.0) c = -1.0;
    return 0.5 * (1.0 - c);
}

inline void check_same_dim(std::span<const double> x, std::span<const double> y,
                           const char* op) {
    if (x.size() != y.size())
        throw Error(std::string(op) + ": dimension mismatch (" + std::to_string(x.size()) +
                    " vs " + std::to_string(y.size()) + ")");
}

}  // namespace detail

inline double squared_norm(std::span<const double> x) { return detail::dot(x, x); }

inline double cosine_distance(std::span<const double> x, std::span<const double> y) {
    detail::check_same_dim(x, y, "cosine_distance");
    const double nx = std::sqrt(detail::dot(x, x));
    const double ny = std::sqrt(detail::dot(y, y));
    if (nx == 0.0) throw Error("cosine_distance: first input has zero norm");
    if (ny == 0.0) throw Error("cosine_distance: second input has zero norm");
    return detail::cosine_from_dot(detail::dot(x, y), nx, ny);
}

// Mean of squared coordinate differences.
inline double sq_euclidean(std::span<const double> x, std::span<const double> y) {
    detail::check_same_dim(x, y, "sq_euclidean");
    if (x.empty()) throw Error("sq_euclidean: empty vectors");
    return detail::sq_diff_sum(x, y) / static_cast<double>(x.size());
}

inline double metric_distance(std::span<const double> x, std::span<const double> y, Metric m) {
    return m == Metric::cosine ? cosine_distance(x, y) : sq_euclidean(x, y);
}

inline EmbeddingMatrix unit_normalize(const EmbeddingMatrix& m) {
    EmbeddingMatrix out(m.rows(), m.dim());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        const double norm = std::sqrt(detail::dot(r, r));
        if (norm == 0.0)
            throw Error("unit_normalize: zero-norm row " + std::to_string(i));
        auto o = out.row_mut(i);
        for (std::size_t j = 0; j < r.size(); ++j) o[j] = r[j] / norm;
    }
    return out;
}

// Row-major |A| x |B| distance matrix; entry (i,j) is the scalar kernel on
// rows A_i, B_j.
inline std::vector<double> pairwise_distances(const EmbeddingMatrix& a,
                                              const EmbeddingMatrix& b, Metric m) {
    if (a.dim() != b.dim())
        throw Error("pairwise_distances: dimension mismatch (" + std::to_string(a.dim()) +
                    " vs " + std::to_string(b.dim()) + ")");
    std::vector<double> out(a.rows() * b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j)
            out[i * b.rows() + j] = metric_distance(a.row(i), b.row(j), m);
    return out;
}

}  // namespace scorenorm
