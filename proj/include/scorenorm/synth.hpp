#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "metrics.hpp"
#include "rng.hpp"
#include "scoring.hpp"

namespace scorenorm {

// Synthetic domain-shift benchmark: per section, a dense source cluster and a
// sparse target cluster on the unit sphere, anomalies rotated away from each
// domain mean. Default counts mirror a 990/10 train split with 50/50/50/50
// test cells.
struct SynthConfig {
    std::size_t dim = 16;
    std::size_t sections = 3;
    std::size_t n_src_train = 990;
    std::size_t n_tgt_train = 10;
    std::size_t n_src_test_normal = 50;
    std::size_t n_tgt_test_normal = 50;
    std::size_t n_src_test_anom = 50;
    std::size_t n_tgt_test_anom = 50;
    double source_spread = 0.05;
    double target_spread = 0.20;
    double domain_offset_deg = 25.0;
    double anomaly_offset_deg = 12.0;
    std::uint64_t seed = 1;
};

inline void validate_synth_config(const SynthConfig& cfg) {
    if (cfg.dim < 2) throw Error("synth config: dim must be >= 2");
    if (cfg.sections < 1) throw Error("synth config: sections must be >= 1");
    if (!(cfg.source_spread > 0.0) || !std::isfinite(cfg.source_spread))
        throw Error("synth config: source_spread must be > 0");
    if (!(cfg.target_spread > 0.0) || !std::isfinite(cfg.target_spread))
        throw Error("synth config: target_spread must be > 0");
    if (!(cfg.anomaly_offset_deg > 0.0) || !std::isfinite(cfg.anomaly_offset_deg))
        throw Error("synth config: anomaly_offset_deg must be > 0");
    if (!(cfg.domain_offset_deg >= 0.0) || !std::isfinite(cfg.domain_offset_deg))
        throw Error("synth config: domain_offset_deg must be >= 0");
    const std::size_t train = cfg.n_src_train + cfg.n_tgt_train;
    const std::size_t test = cfg.n_src_test_normal + cfg.n_tgt_test_normal +
                             cfg.n_src_test_anom + cfg.n_tgt_test_anom;
    if (train + test == 0) throw Error("synth config: all per-section counts are zero");
    if (test > 0 && train == 0)
        throw Error("synth config: test samples need train references");
}

namespace detail {

inline std::vector<double> random_gaussian_vec(Rng& rng, std::size_t d) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.gaussian();
    return v;
}

inline std::vector<double> random_unit(Rng& rng, std::size_t d) {
    for (;;) {
        auto v = random_gaussian_vec(rng, d);
        const double norm = std::sqrt(dot(v, v));
        if (norm < 1e-9) continue;
        for (auto& x : v) x /= norm;
        return v;
    }
}

inline std::vector<double> random_unit_orthogonal(Rng& rng,
                                                  std::span<const double> mu) {
    for (;;) {
        auto v = random_gaussian_vec(rng, mu.size());
        const double proj = dot(v, mu);
        for (std::size_t j = 0; j < v.size(); ++j) v[j] -= proj * mu[j];
        const double norm = std::sqrt(dot(v, v));
        if (norm < 1e-9) continue;
        for (auto& x : v) x /= norm;
        return v;
    }
}

inline std::vector<double> rotate_towards(std::span<const double> mu,
                                          std::span<const double> ortho,
                                          double angle_rad) {
    const double c = std::cos(angle_rad);
    const double s = std::sin(angle_rad);
    std::vector<double> out(mu.size());
    for (std::size_t j = 0; j < mu.size(); ++j) out[j] = c * mu[j] + s * ortho[j];
    return out;
}

inline std::string zero_pad(std::size_t v, std::size_t width) {
    std::string s = std::to_string(v);
    while (s.size() < width) s.insert(s.begin(), '0');
    return s;
}

}  // namespace detail

inline Dataset generate_synthetic(const SynthConfig& cfg) {
    validate_synth_config(cfg);
    const double deg = std::numbers::pi / 180.0;

    Dataset ds;
    ds.embeddings = EmbeddingMatrix(0, cfg.dim);
    for (std::size_t s = 0; s < cfg.sections; ++s) {
        const std::string section = "sec" + detail::zero_pad(s, 2);
        Rng rng = Rng::derive(cfg.seed, "section/" + std::to_string(s));

        const auto mu_src = detail::random_unit(rng, cfg.dim);
        const auto mu_tgt = detail::rotate_towards(
            mu_src, detail::random_unit_orthogonal(rng, mu_src),
            cfg.domain_offset_deg * deg);
        const auto mu_anom_src = detail::rotate_towards(
            mu_src, detail::random_unit_orthogonal(rng, mu_src),
            cfg.anomaly_offset_deg * deg);
        const auto mu_anom_tgt = detail::rotate_towards(
            mu_tgt, detail::random_unit_orthogonal(rng, mu_tgt),
            cfg.anomaly_offset_deg * deg);

        struct Cell {
            std::size_t count;
            const std::vector<double>* mu;
            double spread;
            Domain domain;
            Split split;
            Condition condition;
        };
        const Cell cells[] = {
            {cfg.n_src_train, &mu_src, cfg.source_spread, Domain::source, Split::train,
             Condition::normal},
            {cfg.n_tgt_train, &mu_tgt, cfg.target_spread, Domain::target, Split::train,
             Condition::normal},
            {cfg.n_src_test_normal, &mu_src, cfg.source_spread, Domain::source,
             Split::test, Condition::normal},
            {cfg.n_tgt_test_normal, &mu_tgt, cfg.target_spread, Domain::target,
             Split::test, Condition::normal},
            {cfg.n_src_test_anom, &mu_anom_src, cfg.source_spread, Domain::source,
             Split::test, Condition::anomaly},
            {cfg.n_tgt_test_anom, &mu_anom_tgt, cfg.target_spread, Domain::target,
             Split::test, Condition::anomaly},
        };

        std::vector<double> sample(cfg.dim);
        for (const auto& cell : cells) {
            for (std::size_t i = 0; i < cell.count; ++i) {
                for (;;) {
                    for (std::size_t j = 0; j < cfg.dim; ++j)
                        sample[j] = (*cell.mu)[j] + cell.spread * rng.gaussian();
                    const double norm = std::sqrt(detail::dot(sample, sample));
                    if (norm < 1e-9) continue;
                    for (auto& x : sample) x /= norm;
                    break;
                }
                ds.embeddings.append_row(sample);
                SampleMeta meta;
                meta.section = section;
                meta.domain = cell.domain;
                meta.split = cell.split;
                meta.condition = cell.condition;
                meta.id = section + "_" + std::string(to_string(cell.split)) + "_" +
                          std::string(to_string(cell.domain)) + "_" +
                          std::string(to_string(cell.condition)) + "_" +
                          detail::zero_pad(i, 4);
                ds.metas.push_back(std::move(meta));
            }
        }
    }
    return ds;
}

// Median distance to the nearest other row; the density-mismatch measure.
inline double median_nn_distance(const EmbeddingMatrix& rows, Metric metric) {
    if (rows.rows() < 2) throw Error("median_nn_distance: need at least 2 rows");
    const NeighborTable table = build_neighbor_table(rows, metric);
    std::vector<double> nn(rows.rows());
    for (std::size_t i = 0; i < rows.rows(); ++i) nn[i] = table.lists[i][0].distance;
    std::sort(nn.begin(), nn.end());
    const std::size_t n = nn.size();
    return n % 2 == 1 ? nn[n / 2] : 0.5 * (nn[n / 2 - 1] + nn[n / 2]);
}

struct SweepRow {
    double value = 0.0;
    double aggregate_value = 0.0;
    std::optional<double> auc_source;
    std::optional<double> auc_target;
};

// One full scoring + evaluation run per grid value, against the same dataset.
inline std::vector<SweepRow> run_sweep(const Dataset& ds, NormVariant variant,
                                       DensityKind param,
                                       const std::vector<double>& values, Metric metric,
                                       double p = 0.1,
                                       AggMode mode = AggMode::harmonic) {
    if (values.empty()) throw Error("run_sweep: empty grid");
    std::vector<SweepRow> rows;
    rows.reserve(values.size());
    for (const double v : values) {
        MethodConfig cfg;
        cfg.method = variant == NormVariant::ratio ? MethodKind::norm_ratio
                                                   : MethodKind::norm_diff;
        cfg.metric = metric;
        if (param == DensityKind::knn) {
            if (!(v >= 1.0) || std::floor(v) != v)
                throw Error("run_sweep: K grid values must be positive integers");
            cfg.density = {DensityKind::knn, static_cast<int>(v), 0.0};
        } else {
            cfg.density = {DensityKind::gwrp, 1, v};
        }
        const ScoreVector scores = score_dataset(ds, cfg);
        const EvaluationReport report = evaluate(ds, scores, p, mode);

        SweepRow row;
        row.value = v;
        row.aggregate_value = report.aggregate_value;
        std::vector<double> src, tgt;
        for (const auto& sec : report.sections) {
            if (sec.auc_source) src.push_back(*sec.auc_source);
            if (sec.auc_target) tgt.push_back(*sec.auc_target);
        }
        if (!src.empty()) row.auc_source = aggregate(src, mode);
        if (!tgt.empty()) row.auc_target = aggregate(tgt, mode);
        rows.push_back(row);
    }
    return rows;
}

}  // namespace scorenorm
