#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "neighbors.hpp"
#include "rng.hpp"

namespace scorenorm {

namespace detail {

// Raw sum of squared differences (no mean), the classic k-means objective.
inline double sqdist_sum(std::span<const double> x, std::span<const double> y) {
    return sq_diff_sum(x, y);
}

}  // namespace detail

struct KMeansModel {
    EmbeddingMatrix means;
    std::vector<std::uint32_t> assignments;
    double inertia = 0.0;
    int iterations = 0;
    // Objective after each update step; non-increasing.
    std::vector<double> inertia_trace;
};

inline KMeansModel kmeans_fit(const EmbeddingMatrix& points, int k, std::uint64_t seed) {
    const std::size_t n = points.rows();
    if (k < 1) throw Error("kmeans_fit: k must be >= 1");
    if (n < 1) throw Error("kmeans_fit: empty point set");
    const std::size_t d = points.dim();

    KMeansModel model;
    if (static_cast<std::size_t>(k) >= n) {
        model.means = points;
        model.assignments.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            model.assignments[i] = static_cast<std::uint32_t>(i);
        model.inertia = 0.0;
        return model;
    }
    const auto kk = static_cast<std::size_t>(k);

    // k-means++ seeding.
    Rng rng = Rng::derive(seed, "kmeans++");
    std::vector<std::size_t> chosen;
    chosen.push_back(rng.uniform_int(n));
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i)
        d2[i] = detail::sqdist_sum(points.row(i), points.row(chosen[0]));
    while (chosen.size() < kk) {
        double total = 0.0;
        for (double v : d2) total += v;
        std::size_t pick;
        if (total <= 0.0) {
            pick = rng.uniform_int(n);
        } else {
            const double r = rng.uniform01() * total;
            double cum = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                cum += d2[i];
                if (r < cum) {
                    pick = i;
                    break;
                }
            }
        }
        chosen.push_back(pick);
        for (std::size_t i = 0; i < n; ++i)
            d2[i] = std::min(d2[i], detail::sqdist_sum(points.row(i), points.row(pick)));
    }

    EmbeddingMatrix means(kk, d);
    for (std::size_t c = 0; c < kk; ++c) {
        auto src = points.row(chosen[c]);
        auto dst = means.row_mut(c);
        std::copy(src.begin(), src.end(), dst.begin());
    }

    std::vector<std::uint32_t> assign(n, 0);
    bool have_assign = false;
    int iter = 0;
    std::vector<double> trace;
    for (; iter < 300; ++iter) {
        std::vector<std::uint32_t> next(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            std::uint32_t best_c = 0;
            for (std::size_t c = 0; c < kk; ++c) {
                const double v = detail::sqdist_sum(points.row(i), means.row(c));
                if (v < best) {
                    best = v;
                    best_c = static_cast<std::uint32_t>(c);
                }
            }
            next[i] = best_c;
        }
        if (have_assign && next == assign) break;
        assign = next;
        have_assign = true;

        std::vector<double> sums(kk * d, 0.0);
        std::vector<std::size_t> counts(kk, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto r = points.row(i);
            for (std::size_t j = 0; j < d; ++j) sums[assign[i] * d + j] += r[j];
            ++counts[assign[i]];
        }
        std::vector<bool> used(n, false);
        for (std::size_t c = 0; c < kk; ++c) {
            auto dst = means.row_mut(c);
            if (counts[c] > 0) {
                for (std::size_t j = 0; j < d; ++j)
                    dst[j] = sums[c * d + j] / static_cast<double>(counts[c]);
            } else {
                // Re-seed an empty cluster to the point farthest from its
                // current centroid (ties: lowest index).
                double far_v = -1.0;
                std::size_t far_i = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (used[i]) continue;
                    const double v =
                        detail::sqdist_sum(points.row(i), means.row(assign[i]));
                    if (v > far_v) {
                        far_v = v;
                        far_i = i;
                    }
                }
                used[far_i] = true;
                auto src = points.row(far_i);
                std::copy(src.begin(), src.end(), dst.begin());
            }
        }
        double obj = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            obj += detail::sqdist_sum(points.row(i), means.row(assign[i]));
        trace.push_back(obj);
    }

    model.means = std::move(means);
    model.assignments = std::move(assign);
    model.iterations = iter;
    model.inertia_trace = std::move(trace);
    model.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        model.inertia +=
            detail::sqdist_sum(points.row(i), model.means.row(model.assignments[i]));
    return model;
}

// Fitted candidate set for the "source means" method: k-means means of the
// source references plus the raw target references.
struct SourceMeansScorer {
    EmbeddingMatrix candidates;
    Metric metric = Metric::cosine;

    double score(std::span<const double> q) const {
        if (candidates.rows() == 0) throw Error("source_means: empty candidate set");
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < candidates.rows(); ++j)
            best = std::min(best, metric_distance(q, candidates.row(j), metric));
        return best;
    }
};

inline SourceMeansScorer make_source_means_scorer(const EmbeddingMatrix& source_refs,
                                                  const EmbeddingMatrix& target_refs,
                                                  int k, Metric metric,
                                                  std::uint64_t seed) {
    if (source_refs.rows() < 1)
        throw Error("source_means: no source-domain references");
    KMeansModel model = kmeans_fit(source_refs, k, seed);
    SourceMeansScorer scorer;
    scorer.metric = metric;
    scorer.candidates = model.means;
    for (std::size_t i = 0; i < target_refs.rows(); ++i)
        scorer.candidates.append_row(target_refs.row(i));
    return scorer;
}

inline double score_source_means(std::span<const double> q,
                                 const EmbeddingMatrix& source_refs,
                                 const EmbeddingMatrix& target_refs, int k,
                                 Metric metric, std::uint64_t seed) {
    return make_source_means_scorer(source_refs, target_refs, k, metric, seed).score(q);
}

inline void interpolate_row(std::span<const double> p, std::span<const double> q,
                            double lambda, std::span<double> out) {
    for (std::size_t j = 0; j < p.size(); ++j) out[j] = p[j] + lambda * (q[j] - p[j]);
}

inline EmbeddingMatrix smote_oversample(const EmbeddingMatrix& target_refs,
                                        int n_neighbors, std::size_t oversample_to,
                                        Metric metric, std::uint64_t seed) {
    const std::size_t n = target_refs.rows();
    if (n < 2) throw Error("smote_oversample: need at least 2 target references");
    if (n_neighbors < 1 || static_cast<std::size_t>(n_neighbors) > n - 1)
        throw Error("smote_oversample: n_neighbors=" + std::to_string(n_neighbors) +
                    " out of range [1," + std::to_string(n - 1) + "]");

    EmbeddingMatrix out = target_refs;
    if (oversample_to <= n) return out;

    const NeighborTable table = build_neighbor_table(target_refs, metric);
    Rng rng = Rng::derive(seed, "smote");
    std::vector<double> synth(target_refs.dim());
    for (std::size_t s = n; s < oversample_to; ++s) {
        const std::size_t p = rng.uniform_int(n);
        const std::size_t nb = rng.uniform_int(static_cast<std::uint64_t>(n_neighbors));
        const std::size_t q = table.lists[p][nb].index;
        const double lambda = rng.uniform01();
        interpolate_row(target_refs.row(p), target_refs.row(q), lambda, synth);
        out.append_row(synth);
    }
    return out;
}

struct SmoteScorer {
    EmbeddingMatrix refs;
    Metric metric = Metric::cosine;

    double score(std::span<const double> q) const {
        if (refs.rows() == 0) throw Error("smote: empty reference set");
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < refs.rows(); ++j)
            best = std::min(best, metric_distance(q, refs.row(j), metric));
        return best;
    }
};

inline SmoteScorer make_smote_scorer(const EmbeddingMatrix& source_refs,
                                     const EmbeddingMatrix& target_refs, int n_neighbors,
                                     std::size_t oversample_to, Metric metric,
                                     std::uint64_t seed) {
    if (oversample_to == 0) oversample_to = source_refs.rows();
    EmbeddingMatrix augmented =
        smote_oversample(target_refs, n_neighbors, oversample_to, metric, seed);
    SmoteScorer scorer;
    scorer.metric = metric;
    scorer.refs = source_refs;
    for (std::size_t i = 0; i < augmented.rows(); ++i)
        scorer.refs.append_row(augmented.row(i));
    return scorer;
}

struct LofModel {
    EmbeddingMatrix refs;
    Metric metric = Metric::cosine;
    int k = 1;
    std::vector<double> ref_norms;  // cosine only
    std::vector<std::vector<Neighbor>> knn;
    std::vector<double> k_distance;
    std::vector<double> lrd;
    bool lrd_clamped = false;
};

inline LofModel lof_fit(const EmbeddingMatrix& refs, Metric metric, int k) {
    const std::size_t n = refs.rows();
    if (n < 2) throw Error("lof_fit: need at least 2 references");
    if (k < 1 || static_cast<std::size_t>(k) > n - 1)
        throw Error("lof_fit: k=" + std::to_string(k) + " out of range [1," +
                    std::to_string(n - 1) + "]");

    LofModel model;
    model.refs = refs;
    model.metric = metric;
    model.k = k;
    if (metric == Metric::cosine) {
        model.ref_norms.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto r = refs.row(i);
            model.ref_norms[i] = std::sqrt(detail::dot(r, r));
            if (model.ref_norms[i] == 0.0)
                throw Error("lof_fit: zero-norm reference row " + std::to_string(i));
        }
    }

    const NeighborTable table = build_neighbor_table(refs, metric);
    const auto kk = static_cast<std::size_t>(k);
    model.knn.resize(n);
    model.k_distance.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        model.knn[i].assign(table.lists[i].begin(), table.lists[i].begin() + kk);
        model.k_distance[i] = model.knn[i].back().distance;
    }
    model.lrd.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (const auto& nb : model.knn[i])
            sum += std::max(model.k_distance[nb.index], nb.distance);
        double mean = sum / static_cast<double>(k);
        if (mean < 1e-12) {
            mean = 1e-12;
            model.lrd_clamped = true;
        }
        model.lrd[i] = 1.0 / mean;
    }
    return model;
}

inline double lof_score(const LofModel& model, std::span<const double> q) {
    const std::size_t n = model.refs.rows();
    const auto kk = static_cast<std::size_t>(model.k);
    if (q.size() != model.refs.dim()) throw Error("lof_score: dimension mismatch");

    std::vector<Neighbor> all;
    all.reserve(n);
    if (model.metric == Metric::cosine) {
        const double qn = std::sqrt(detail::dot(q, q));
        if (qn == 0.0) throw Error("lof_score: zero-norm query");
        for (std::size_t j = 0; j < n; ++j)
            all.push_back({static_cast<std::uint32_t>(j),
                           detail::cosine_from_dot(detail::dot(q, model.refs.row(j)), qn,
                                                   model.ref_norms[j])});
    } else {
        const double dim = static_cast<double>(model.refs.dim());
        for (std::size_t j = 0; j < n; ++j)
            all.push_back({static_cast<std::uint32_t>(j),
                           detail::sq_diff_sum(q, model.refs.row(j)) / dim});
    }
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(kk),
                      all.end(), detail::neighbor_less);

    double reach_sum = 0.0;
    double lrd_sum = 0.0;
    for (std::size_t t = 0; t < kk; ++t) {
        const auto& nb = all[t];
        reach_sum += std::max(model.k_distance[nb.index], nb.distance);
        lrd_sum += model.lrd[nb.index];
    }
    double mean_reach = reach_sum / static_cast<double>(model.k);
    if (mean_reach < 1e-12) mean_reach = 1e-12;
    const double lrd_q = 1.0 / mean_reach;
    return (lrd_sum / static_cast<double>(model.k)) / lrd_q;
}

inline double lof_score(std::span<const double> q, const EmbeddingMatrix& refs,
                        Metric metric, int k) {
    return lof_score(lof_fit(refs, metric, k), q);
}

// z-standardizes each per-domain score population over the whole test batch
// and combines by min. Batch-dependent by construction.
inline ScoreVector standardize_scores_domainwise(const ScoreVector& vs_source,
                                                 const ScoreVector& vs_target) {
    if (vs_source.size() != vs_target.size())
        throw Error("standardize_scores_domainwise: id mismatch (sizes " +
                    std::to_string(vs_source.size()) + " vs " +
                    std::to_string(vs_target.size()) + ")");
    if (vs_source.empty()) throw Error("standardize_scores_domainwise: empty input");

    std::unordered_map<std::string, double> target_by_id;
    target_by_id.reserve(vs_target.size());
    for (const auto& e : vs_target)
        if (!target_by_id.emplace(e.id, e.score).second)
            throw Error("standardize_scores_domainwise: duplicate id " + e.id);

    const auto stats = [](const ScoreVector& v) {
        double mean = 0.0;
        for (const auto& e : v) mean += e.score;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (const auto& e : v) {
            const double c = e.score - mean;
            var += c * c;
        }
        var /= static_cast<double>(v.size());
        double sd = std::sqrt(var);
        if (sd < 1e-12) sd = 1e-12;
        return std::pair<double, double>{mean, sd};
    };
    const auto [mu_s, sd_s] = stats(vs_source);
    const auto [mu_t, sd_t] = stats(vs_target);

    ScoreVector out;
    out.reserve(vs_source.size());
    std::unordered_set<std::string> seen;
    for (const auto& e : vs_source) {
        if (!seen.insert(e.id).second)
            throw Error("standardize_scores_domainwise: duplicate id " + e.id);
        auto it = target_by_id.find(e.id);
        if (it == target_by_id.end())
            throw Error("standardize_scores_domainwise: id mismatch: " + e.id +
                        " missing from target-side scores");
        const double zs = (e.score - mu_s) / sd_s;
        const double zt = (it->second - mu_t) / sd_t;
        out.push_back({e.id, std::min(zs, zt)});
    }
    return out;
}

}  // namespace scorenorm
