#pragma once

#include <bit>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "baselines.hpp"
#include "neighbors.hpp"

namespace scorenorm {

enum class NormVariant { ratio, difference };

inline std::string_view to_string(NormVariant v) {
    return v == NormVariant::ratio ? "ratio" : "difference";
}

inline NormVariant parse_variant(std::string_view s) {
    if (s == "ratio") return NormVariant::ratio;
    if (s == "difference") return NormVariant::difference;
    throw Error("unknown variant: " + std::string(s));
}

// Per-reference local density constants. Test-sample independent: they are a
// function of (refs, metric, density) only, which is exactly what the
// fingerprint covers.
struct NormalizationConstants {
    std::vector<double> c;
    DensityConfig density;
    Metric metric = Metric::cosine;
    std::uint64_t fingerprint = 0;
};

inline std::uint64_t constants_fingerprint(const EmbeddingMatrix& refs, Metric metric,
                                           const DensityConfig& density) {
    std::uint64_t h = refs.content_digest();
    const std::uint8_t mb = metric == Metric::cosine ? 0 : 1;
    h = fnv1a64(&mb, 1, h);
    const std::uint8_t db = density.kind == DensityKind::knn ? 0 : 1;
    h = fnv1a64(&db, 1, h);
    if (density.kind == DensityKind::knn) {
        const auto k = static_cast<std::uint64_t>(density.k);
        h = fnv1a64(&k, sizeof k, h);
    } else {
        const auto r = std::bit_cast<std::uint64_t>(density.r);
        h = fnv1a64(&r, sizeof r, h);
    }
    return h;
}

struct ReferenceIndex {
    EmbeddingMatrix refs;
    Metric metric = Metric::cosine;
    std::vector<double> ref_norms;  // cosine only
    NeighborTable table;            // built lazily; empty until needed
    std::optional<NormalizationConstants> constants;
};

inline ReferenceIndex build_reference_index(EmbeddingMatrix refs, Metric metric,
                                            bool with_table = false) {
    if (refs.rows() < 1) throw Error("build_reference_index: need at least 1 reference");
    if (refs.dim() < 1) throw Error("build_reference_index: zero-dimension references");
    ReferenceIndex idx;
    idx.refs = std::move(refs);
    idx.metric = metric;
    if (metric == Metric::cosine) {
        idx.ref_norms.resize(idx.refs.rows());
        for (std::size_t i = 0; i < idx.refs.rows(); ++i) {
            auto r = idx.refs.row(i);
            idx.ref_norms[i] = std::sqrt(detail::dot(r, r));
            if (idx.ref_norms[i] == 0.0)
                throw Error("build_reference_index: zero-norm reference row " +
                            std::to_string(i));
        }
    }
    if (with_table && idx.refs.rows() >= 2)
        idx.table = build_neighbor_table(idx.refs, metric);
    return idx;
}

inline const NeighborTable& ensure_table(ReferenceIndex& idx) {
    if (idx.table.empty()) idx.table = build_neighbor_table(idx.refs, idx.metric);
    return idx.table;
}

// knn:  c(y) = sum of distances to the K nearest other references.
// gwrp: c(y) = sum over all |refs|-1 neighbors of distance * r^(k-1),
//       with r^0 = 1 even at r = 0, so gwrp(0) matches knn(K=1) and
//       gwrp(1) matches knn(K=|refs|-1) bit for bit.
inline NormalizationConstants precompute_constants(const EmbeddingMatrix& refs,
                                                   Metric metric,
                                                   const DensityConfig& density,
                                                   const NeighborTable* table = nullptr) {
    const std::size_t n = refs.rows();
    if (density.kind == DensityKind::knn) {
        if (density.k < 1) throw Error("precompute_constants: K must be >= 1");
        if (n < static_cast<std::size_t>(density.k) + 1)
            throw Error("precompute_constants: K=" + std::to_string(density.k) +
                        " requires at least " + std::to_string(density.k + 1) +
                        " references, got " + std::to_string(n));
    } else {
        if (!(density.r >= 0.0 && density.r <= 1.0))
            throw Error("precompute_constants: r must lie in [0,1]");
        if (n < 2) throw Error("precompute_constants: gwrp requires at least 2 references");
    }

    NeighborTable local;
    if (table == nullptr || table->empty()) {
        local = build_neighbor_table(refs, metric);
        table = &local;
    }
    if (table->size() != n || table->metric != metric)
        throw Error("precompute_constants: neighbor table does not match references");

    NormalizationConstants out;
    out.density = density;
    out.metric = metric;
    out.c.resize(n);
    for (std::size_t y = 0; y < n; ++y) {
        const auto& list = table->lists[y];
        double c = 0.0;
        if (density.kind == DensityKind::knn) {
            for (std::size_t k = 0; k < static_cast<std::size_t>(density.k); ++k)
                c += list[k].distance;
        } else {
            double w = 1.0;
            for (const auto& nb : list) {
                c += nb.distance * w;
                w *= density.r;
            }
        }
        out.c[y] = std::max(c, 1e-12);
    }
    out.fingerprint = constants_fingerprint(refs, metric, density);
    return out;
}

inline void attach_constants(ReferenceIndex& idx, NormalizationConstants constants) {
    if (constants.metric != idx.metric)
        throw IntegrityError("attach_constants: constants metric " +
                             std::string(to_string(constants.metric)) +
                             " does not match index metric " +
                             std::string(to_string(idx.metric)));
    if (constants.c.size() != idx.refs.rows())
        throw IntegrityError("attach_constants: " + std::to_string(constants.c.size()) +
                             " constants for " + std::to_string(idx.refs.rows()) +
                             " references");
    const std::uint64_t expect =
        constants_fingerprint(idx.refs, idx.metric, constants.density);
    if (constants.fingerprint != expect)
        throw IntegrityError("attach_constants: stale constants fingerprint");
    idx.constants = std::move(constants);
}

inline void precompute_and_attach(ReferenceIndex& idx, const DensityConfig& density) {
    ensure_table(idx);
    idx.constants = precompute_constants(idx.refs, idx.metric, density, &idx.table);
}

namespace detail {

inline void check_query(std::span<const double> q, const ReferenceIndex& idx) {
    if (q.size() != idx.refs.dim())
        throw Error("scoring: query dimension " + std::to_string(q.size()) +
                    " does not match reference dimension " +
                    std::to_string(idx.refs.dim()));
}

inline double query_norm(std::span<const double> q) {
    const double qn = std::sqrt(dot(q, q));
    if (qn == 0.0) throw Error("cosine scoring: zero-norm query");
    return qn;
}

}  // namespace detail

inline std::pair<double, std::size_t> score_baseline_nn_argmin(
    std::span<const double> q, const ReferenceIndex& idx) {
    detail::check_query(q, idx);
    const std::size_t n = idx.refs.rows();
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = 0;
    if (idx.metric == Metric::cosine) {
        const double qn = detail::query_norm(q);
        for (std::size_t j = 0; j < n; ++j) {
            const double d = detail::cosine_from_dot(detail::dot(q, idx.refs.row(j)), qn,
                                                     idx.ref_norms[j]);
            if (d < best) {
                best = d;
                best_j = j;
            }
        }
    } else {
        const double dim = static_cast<double>(idx.refs.dim());
        for (std::size_t j = 0; j < n; ++j) {
            const double d = detail::sq_diff_sum(q, idx.refs.row(j)) / dim;
            if (d < best) {
                best = d;
                best_j = j;
            }
        }
    }
    return {best, best_j};
}

inline double score_baseline_nn(std::span<const double> q, const ReferenceIndex& idx) {
    return score_baseline_nn_argmin(q, idx).first;
}

inline double score_baseline_knn_mean(std::span<const double> q,
                                      const ReferenceIndex& idx, int k) {
    detail::check_query(q, idx);
    const std::size_t n = idx.refs.rows();
    if (k < 1 || static_cast<std::size_t>(k) > n)
        throw Error("score_baseline_knn_mean: k=" + std::to_string(k) +
                    " out of range [1," + std::to_string(n) + "]");
    std::vector<Neighbor> all;
    all.reserve(n);
    if (idx.metric == Metric::cosine) {
        const double qn = detail::query_norm(q);
        for (std::size_t j = 0; j < n; ++j)
            all.push_back({static_cast<std::uint32_t>(j),
                           detail::cosine_from_dot(detail::dot(q, idx.refs.row(j)), qn,
                                                   idx.ref_norms[j])});
    } else {
        const double dim = static_cast<double>(idx.refs.dim());
        for (std::size_t j = 0; j < n; ++j)
            all.push_back({static_cast<std::uint32_t>(j),
                           detail::sq_diff_sum(q, idx.refs.row(j)) / dim});
    }
    const auto kk = static_cast<std::size_t>(k);
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(kk),
                      all.end(), detail::neighbor_less);
    double sum = 0.0;
    for (std::size_t t = 0; t < kk; ++t) sum += all[t].distance;
    return sum / static_cast<double>(k);
}

inline std::pair<double, std::size_t> score_normalized_argmin(std::span<const double> q,
                                                              const ReferenceIndex& idx,
                                                              NormVariant variant) {
    detail::check_query(q, idx);
    if (!idx.constants)
        throw Error("score_normalized: normalization constants missing from index");
    const auto& c = idx.constants->c;
    if (c.size() != idx.refs.rows())
        throw IntegrityError("score_normalized: stale constants (count mismatch)");

    const std::size_t n = idx.refs.rows();
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = 0;
    if (idx.metric == Metric::cosine) {
        const double qn = detail::query_norm(q);
        for (std::size_t j = 0; j < n; ++j) {
            const double d = detail::cosine_from_dot(detail::dot(q, idx.refs.row(j)), qn,
                                                     idx.ref_norms[j]);
            const double v = variant == NormVariant::ratio ? d / c[j] : d - c[j];
            if (v < best) {
                best = v;
                best_j = j;
            }
        }
    } else {
        const double dim = static_cast<double>(idx.refs.dim());
        for (std::size_t j = 0; j < n; ++j) {
            const double d = detail::sq_diff_sum(q, idx.refs.row(j)) / dim;
            const double v = variant == NormVariant::ratio ? d / c[j] : d - c[j];
            if (v < best) {
                best = v;
                best_j = j;
            }
        }
    }
    return {best, best_j};
}

inline double score_normalized(std::span<const double> q, const ReferenceIndex& idx,
                               NormVariant variant) {
    return score_normalized_argmin(q, idx, variant).first;
}

inline ScoreVector score_batch(const EmbeddingMatrix& tests,
                               const std::vector<std::string>& ids,
                               const ReferenceIndex& idx, const MethodConfig& cfg) {
    if (ids.size() != tests.rows())
        throw Error("score_batch: " + std::to_string(ids.size()) + " ids for " +
                    std::to_string(tests.rows()) + " rows");
    if (tests.rows() > 0 && tests.dim() != idx.refs.dim())
        throw Error("score_batch: dimension mismatch");
    validate_config(cfg);

    ScoreVector out;
    out.reserve(tests.rows());
    switch (cfg.method) {
        case MethodKind::baseline_nn:
            for (std::size_t i = 0; i < tests.rows(); ++i)
                out.push_back({ids[i], score_baseline_nn(tests.row(i), idx)});
            break;
        case MethodKind::baseline_knn_mean:
            for (std::size_t i = 0; i < tests.rows(); ++i)
                out.push_back(
                    {ids[i], score_baseline_knn_mean(tests.row(i), idx, cfg.knn_k)});
            break;
        case MethodKind::norm_ratio:
        case MethodKind::norm_diff: {
            const NormVariant variant = cfg.method == MethodKind::norm_ratio
                                            ? NormVariant::ratio
                                            : NormVariant::difference;
            for (std::size_t i = 0; i < tests.rows(); ++i)
                out.push_back({ids[i], score_normalized(tests.row(i), idx, variant)});
            break;
        }
        case MethodKind::lof: {
            const LofModel model = lof_fit(idx.refs, idx.metric, cfg.lof_k);
            for (std::size_t i = 0; i < tests.rows(); ++i)
                out.push_back({ids[i], lof_score(model, tests.row(i))});
            break;
        }
        default:
            throw Error("score_batch: method " + std::string(to_string(cfg.method)) +
                        " requires dataset-level scoring");
    }
    return out;
}

inline ScoreVector score_batch(const EmbeddingMatrix& tests, const ReferenceIndex& idx,
                               const MethodConfig& cfg) {
    std::vector<std::string> ids(tests.rows());
    for (std::size_t i = 0; i < tests.rows(); ++i) ids[i] = std::to_string(i);
    return score_batch(tests, ids, idx, cfg);
}

inline ScoreVector ensemble_mean(const std::vector<ScoreVector>& vectors) {
    if (vectors.empty()) throw Error("ensemble_mean: no score vectors");
    const auto& first = vectors.front();
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < first.size(); ++i)
        if (!pos.emplace(first[i].id, i).second)
            throw Error("ensemble_mean: duplicate id " + first[i].id);

    std::vector<double> sums(first.size(), 0.0);
    for (const auto& v : vectors) {
        if (v.size() != first.size())
            throw Error("ensemble_mean: score vectors cover different id sets");
        for (const auto& e : v) {
            auto it = pos.find(e.id);
            if (it == pos.end())
                throw Error("ensemble_mean: id " + e.id + " not present in all vectors");
            sums[it->second] += e.score;
        }
    }
    ScoreVector out;
    out.reserve(first.size());
    for (std::size_t i = 0; i < first.size(); ++i)
        out.push_back({first[i].id, sums[i] / static_cast<double>(vectors.size())});
    return out;
}

namespace detail {

inline EmbeddingMatrix gather_rows(const EmbeddingMatrix& m,
                                   const std::vector<std::size_t>& rows) {
    EmbeddingMatrix out(rows.size(), m.dim());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto src = m.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row_mut(i).begin());
    }
    return out;
}

inline void split_train_by_domain(const Dataset& ds,
                                  const std::vector<std::size_t>& train_rows,
                                  const char* method, std::vector<std::size_t>& src,
                                  std::vector<std::size_t>& tgt) {
    for (std::size_t r : train_rows) {
        switch (ds.metas[r].domain) {
            case Domain::source: src.push_back(r); break;
            case Domain::target: tgt.push_back(r); break;
            case Domain::unknown:
                throw Error(std::string(method) + " requires domain labels; train row " +
                            std::to_string(r) + " (" + ds.metas[r].id +
                            ") has domain=unknown");
        }
    }
}

}  // namespace detail

// Scores every test row of the dataset with the configured method, section by
// section (references are the train rows of the same section). Output order
// follows dataset row order. `preloaded` supplies externally cached
// normalization constants keyed by section; fingerprints are re-checked
// against the actual reference rows.
inline ScoreVector score_dataset(
    const Dataset& ds, const MethodConfig& cfg,
    const std::map<std::string, NormalizationConstants>* preloaded = nullptr) {
    validate_config(cfg);
    if (auto violations = validate_dataset(ds); !violations.empty())
        throw Error("score_dataset: invalid dataset: " + violations.front().message);
    if (cfg.method == MethodKind::ensemble_mean)
        throw Error("score_dataset: ensemble_mean combines existing score vectors; "
                    "score each system first");

    std::map<std::string, double> by_id;
    for (const auto& section : ds.sections()) {
        const auto train_rows = ds.rows_of(section, Split::train);
        const auto test_rows = ds.rows_of(section, Split::test);
        if (test_rows.empty()) continue;
        if (train_rows.empty())
            throw Error("score_dataset: section " + section + " has no references");

        const EmbeddingMatrix tests = detail::gather_rows(ds.embeddings, test_rows);
        std::vector<std::string> ids;
        ids.reserve(test_rows.size());
        for (std::size_t r : test_rows) ids.push_back(ds.metas[r].id);

        ScoreVector sv;
        switch (cfg.method) {
            case MethodKind::baseline_nn:
            case MethodKind::baseline_knn_mean:
            case MethodKind::lof: {
                ReferenceIndex idx = build_reference_index(
                    detail::gather_rows(ds.embeddings, train_rows), cfg.metric);
                sv = score_batch(tests, ids, idx, cfg);
                break;
            }
            case MethodKind::norm_ratio:
            case MethodKind::norm_diff: {
                ReferenceIndex idx = build_reference_index(
                    detail::gather_rows(ds.embeddings, train_rows), cfg.metric);
                if (preloaded != nullptr) {
                    auto it = preloaded->find(section);
                    if (it == preloaded->end())
                        throw IntegrityError(
                            "score_dataset: no cached constants for section " + section);
                    attach_constants(idx, it->second);
                } else {
                    precompute_and_attach(idx, cfg.density);
                }
                sv = score_batch(tests, ids, idx, cfg);
                break;
            }
            case MethodKind::source_means: {
                std::vector<std::size_t> src, tgt;
                detail::split_train_by_domain(ds, train_rows, "source_means", src, tgt);
                if (src.empty())
                    throw Error("source_means: section " + section +
                                " has no source-domain references");
                const SourceMeansScorer scorer = make_source_means_scorer(
                    detail::gather_rows(ds.embeddings, src),
                    detail::gather_rows(ds.embeddings, tgt), cfg.kmeans_k, cfg.metric,
                    cfg.seed);
                for (std::size_t i = 0; i < tests.rows(); ++i)
                    sv.push_back({ids[i], scorer.score(tests.row(i))});
                break;
            }
            case MethodKind::smote: {
                std::vector<std::size_t> src, tgt;
                detail::split_train_by_domain(ds, train_rows, "smote", src, tgt);
                const SmoteScorer scorer = make_smote_scorer(
                    detail::gather_rows(ds.embeddings, src),
                    detail::gather_rows(ds.embeddings, tgt), cfg.smote_neighbors,
                    cfg.smote_oversample_to, cfg.metric, cfg.seed);
                for (std::size_t i = 0; i < tests.rows(); ++i)
                    sv.push_back({ids[i], scorer.score(tests.row(i))});
                break;
            }
            case MethodKind::standardization: {
                std::vector<std::size_t> src, tgt;
                detail::split_train_by_domain(ds, train_rows, "standardization", src,
                                              tgt);
                if (src.empty() || tgt.empty())
                    throw Error("standardization: section " + section +
                                " needs references in both domains");
                const ReferenceIndex idx_src = build_reference_index(
                    detail::gather_rows(ds.embeddings, src), cfg.metric);
                const ReferenceIndex idx_tgt = build_reference_index(
                    detail::gather_rows(ds.embeddings, tgt), cfg.metric);
                MethodConfig nn_cfg = cfg;
                nn_cfg.method = MethodKind::baseline_nn;
                const ScoreVector vs_src = score_batch(tests, ids, idx_src, nn_cfg);
                const ScoreVector vs_tgt = score_batch(tests, ids, idx_tgt, nn_cfg);
                sv = standardize_scores_domainwise(vs_src, vs_tgt);
                break;
            }
            default:
                throw Error("score_dataset: unsupported method");
        }
        for (const auto& e : sv) by_id.emplace(e.id, e.score);
    }

    ScoreVector out;
    for (const auto& meta : ds.metas) {
        if (meta.split != Split::test) continue;
        auto it = by_id.find(meta.id);
        if (it == by_id.end())
            throw Error("score_dataset: no score produced for " + meta.id);
        out.push_back({meta.id, it->second});
    }
    return out;
}

}  // namespace scorenorm
