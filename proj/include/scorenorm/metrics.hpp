#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "core.hpp"

namespace scorenorm {

// Mann-Whitney AUC by pairwise counting; tied pairs count 0.5. All partial
// sums are multiples of 0.5, so the numerator is exact in floating point.
inline double auc(const std::vector<double>& scores, const std::vector<bool>& is_anomaly) {
    if (scores.size() != is_anomaly.size())
        throw Error("auc: scores and labels differ in length");
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < scores.size(); ++i)
        (is_anomaly[i] ? pos : neg).push_back(scores[i]);
    if (pos.empty() || neg.empty())
        throw Error("auc: need at least one normal and one anomalous sample");
    double wins = 0.0;
    for (double a : pos)
        for (double n : neg) {
            if (a > n)
                wins += 1.0;
            else if (a == n)
                wins += 0.5;
        }
    return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

struct PaucResult {
    double standardized = 0.0;
    double raw = 0.0;
};

namespace detail {

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

// ROC by descending score; tied scores advance TPR and FPR jointly.
inline std::vector<RocPoint> roc_points(const std::vector<double>& scores,
                                        const std::vector<bool>& is_anomaly) {
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    std::size_t total_pos = 0, total_neg = 0;
    for (bool a : is_anomaly) (a ? total_pos : total_neg)++;

    std::vector<RocPoint> points;
    points.push_back({0.0, 0.0});
    std::size_t tp = 0, fp = 0, i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            if (is_anomaly[order[j]])
                ++tp;
            else
                ++fp;
            ++j;
        }
        points.push_back({static_cast<double>(fp) / static_cast<double>(total_neg),
                          static_cast<double>(tp) / static_cast<double>(total_pos)});
        i = j;
    }
    return points;
}

}  // namespace detail

// McClish-standardized partial AUC over FPR in [0, p]:
// 0.5 * (1 + (A_raw - A_min)/(A_max - A_min)), A_max = p, A_min = p^2/2.
// The raw trapezoidal integral is kept alongside.
inline PaucResult pauc_full(const std::vector<double>& scores,
                            const std::vector<bool>& is_anomaly, double p = 0.1) {
    if (!(p > 0.0 && p <= 1.0)) throw Error("pauc: p must lie in (0,1]");
    if (p == 1.0) {
        const double a = auc(scores, is_anomaly);
        return {a, a};
    }
    const auto points = detail::roc_points(scores, is_anomaly);
    double area = 0.0;
    for (std::size_t s = 1; s < points.size(); ++s) {
        const auto& lo = points[s - 1];
        const auto& hi = points[s];
        if (hi.fpr <= p) {
            area += (hi.fpr - lo.fpr) * 0.5 * (lo.tpr + hi.tpr);
        } else {
            if (lo.fpr < p) {
                const double t = lo.tpr + (hi.tpr - lo.tpr) * (p - lo.fpr) /
                                              (hi.fpr - lo.fpr);
                area += (p - lo.fpr) * 0.5 * (lo.tpr + t);
            }
            break;
        }
    }
    const double a_min = p * p / 2.0;
    const double a_max = p;
    return {0.5 * (1.0 + (area - a_min) / (a_max - a_min)), area};
}

inline double pauc(const std::vector<double>& scores, const std::vector<bool>& is_anomaly,
                   double p = 0.1) {
    return pauc_full(scores, is_anomaly, p).standardized;
}

// AUC over one domain's normal test samples against all anomalous test
// samples; absent (nullopt) when either side is empty.
inline std::optional<double> domain_conditioned_auc(
    const std::vector<double>& scores, const std::vector<Domain>& domains,
    const std::vector<Condition>& conditions, Domain which) {
    if (scores.size() != domains.size() || scores.size() != conditions.size())
        throw Error("domain_conditioned_auc: input lengths differ");
    std::vector<double> filtered;
    std::vector<bool> labels;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (conditions[i] == Condition::unknown)
            throw Error("domain_conditioned_auc: sample " + std::to_string(i) +
                        " has unknown condition");
        if (conditions[i] == Condition::anomaly) {
            filtered.push_back(scores[i]);
            labels.push_back(true);
        } else if (domains[i] == which) {
            filtered.push_back(scores[i]);
            labels.push_back(false);
        }
    }
    const bool has_normal = std::find(labels.begin(), labels.end(), false) != labels.end();
    const bool has_anomaly = std::find(labels.begin(), labels.end(), true) != labels.end();
    if (!has_normal || !has_anomaly) return std::nullopt;
    return auc(filtered, labels);
}

enum class AggMode { harmonic, arithmetic };

inline std::string_view to_string(AggMode m) {
    return m == AggMode::harmonic ? "harmonic" : "arithmetic";
}

inline AggMode parse_agg_mode(std::string_view s) {
    if (s == "harmonic") return AggMode::harmonic;
    if (s == "arithmetic") return AggMode::arithmetic;
    throw Error("unknown aggregation mode: " + std::string(s));
}

inline double aggregate(const std::vector<double>& values, AggMode mode) {
    if (values.empty()) throw Error("aggregate: empty value list");
    if (mode == AggMode::harmonic) {
        double inv_sum = 0.0;
        for (double v : values) {
            if (v <= 0.0)
                throw Error("aggregate: harmonic mean requires strictly positive values");
            inv_sum += 1.0 / v;
        }
        return static_cast<double>(values.size()) / inv_sum;
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

struct SectionCounts {
    std::size_t source_normal = 0;
    std::size_t target_normal = 0;
    std::size_t unknown_normal = 0;
    std::size_t source_anomaly = 0;
    std::size_t target_anomaly = 0;
    std::size_t unknown_anomaly = 0;

    friend bool operator==(const SectionCounts&, const SectionCounts&) = default;
};

struct SectionResult {
    std::string section;
    std::optional<double> auc_source;
    std::optional<double> auc_target;
    std::optional<double> auc;
    std::optional<double> pauc;
    std::optional<double> pauc_raw;
    SectionCounts counts;
};

struct EvaluationReport {
    std::vector<SectionResult> sections;  // sorted by section id
    double aggregate_value = 0.0;
    AggMode mode = AggMode::harmonic;
    double p = 0.1;
    std::string aggregate_definition;
    std::uint64_t method_fingerprint = 0;
};

namespace detail {

// Order-independent digest of the evaluated (id, score) pairs.
inline std::uint64_t scores_fingerprint(ScoreVector entries) {
    std::sort(entries.begin(), entries.end(),
              [](const ScoreEntry& a, const ScoreEntry& b) { return a.id < b.id; });
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& e : entries) {
        h = fnv1a64(e.id, h);
        const unsigned char zero = 0;
        h = fnv1a64(&zero, 1, h);
        const auto bits = std::bit_cast<std::uint64_t>(e.score);
        h = fnv1a64(&bits, sizeof bits, h);
    }
    return h;
}

}  // namespace detail

inline EvaluationReport evaluate(const std::vector<SampleMeta>& metas,
                                 const ScoreVector& scores, double p = 0.1,
                                 AggMode mode = AggMode::harmonic) {
    if (!(p > 0.0 && p <= 1.0)) throw Error("evaluate: p must lie in (0,1]");

    std::unordered_map<std::string, double> by_id;
    by_id.reserve(scores.size());
    for (const auto& e : scores)
        if (!by_id.emplace(e.id, e.score).second)
            throw Error("evaluate: duplicate score id " + e.id);

    struct SectionData {
        std::vector<double> scores;
        std::vector<Domain> domains;
        std::vector<Condition> conditions;
    };
    std::map<std::string, SectionData> per_section;
    std::vector<std::string> missing;
    ScoreVector covered;
    bool any_test = false;
    for (const auto& meta : metas) {
        if (meta.split != Split::test) continue;
        any_test = true;
        auto it = by_id.find(meta.id);
        if (it == by_id.end()) {
            missing.push_back(meta.id);
            continue;
        }
        if (meta.condition == Condition::unknown)
            throw Error("evaluate: test sample " + meta.id +
                        " has unknown condition; evaluation requires labels");
        auto& sec = per_section[meta.section];
        sec.scores.push_back(it->second);
        sec.domains.push_back(meta.domain);
        sec.conditions.push_back(meta.condition);
        covered.push_back({meta.id, it->second});
    }
    if (!any_test) throw Error("evaluate: dataset has no test rows");
    if (!missing.empty()) {
        std::string msg = "evaluate: coverage gap, no scores for:";
        for (const auto& id : missing) msg += " " + id;
        throw IntegrityError(msg);
    }

    EvaluationReport report;
    report.mode = mode;
    report.p = p;
    report.method_fingerprint = detail::scores_fingerprint(std::move(covered));
    report.aggregate_definition =
        mode == AggMode::harmonic
            ? "harmonic mean over per-section {auc_source, auc_target, pauc}"
            : "arithmetic mean over per-section {auc, pauc}";

    std::vector<double> agg_values;
    for (auto& [section, data] : per_section) {
        SectionResult res;
        res.section = section;
        for (std::size_t i = 0; i < data.scores.size(); ++i) {
            const bool anom = data.conditions[i] == Condition::anomaly;
            switch (data.domains[i]) {
                case Domain::source:
                    (anom ? res.counts.source_anomaly : res.counts.source_normal)++;
                    break;
                case Domain::target:
                    (anom ? res.counts.target_anomaly : res.counts.target_normal)++;
                    break;
                case Domain::unknown:
                    (anom ? res.counts.unknown_anomaly : res.counts.unknown_normal)++;
                    break;
            }
        }
        std::vector<bool> labels(data.scores.size());
        bool has_normal = false, has_anomaly = false;
        for (std::size_t i = 0; i < data.scores.size(); ++i) {
            labels[i] = data.conditions[i] == Condition::anomaly;
            (labels[i] ? has_anomaly : has_normal) = true;
        }
        if (has_normal && has_anomaly) {
            res.auc = auc(data.scores, labels);
            const PaucResult pr = pauc_full(data.scores, labels, p);
            res.pauc = pr.standardized;
            res.pauc_raw = pr.raw;
        }
        res.auc_source =
            domain_conditioned_auc(data.scores, data.domains, data.conditions,
                                   Domain::source);
        res.auc_target =
            domain_conditioned_auc(data.scores, data.domains, data.conditions,
                                   Domain::target);

        if (mode == AggMode::harmonic) {
            if (res.auc_source) agg_values.push_back(*res.auc_source);
            if (res.auc_target) agg_values.push_back(*res.auc_target);
            if (res.pauc) agg_values.push_back(*res.pauc);
        } else {
            if (res.auc) agg_values.push_back(*res.auc);
            if (res.pauc) agg_values.push_back(*res.pauc);
        }
        report.sections.push_back(std::move(res));
    }
    report.aggregate_value = aggregate(agg_values, mode);
    return report;
}

inline EvaluationReport evaluate(const Dataset& ds, const ScoreVector& scores,
                                 double p = 0.1, AggMode mode = AggMode::harmonic) {
    return evaluate(ds.metas, scores, p, mode);
}

}  // namespace scorenorm
