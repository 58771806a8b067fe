#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

namespace scorenorm {

inline constexpr std::string_view tool_version = "0.1.0";

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Data-integrity failures (stale fingerprints, score/manifest coverage gaps).
// The CLI maps these to a distinct exit code.
struct IntegrityError : Error {
    using Error::Error;
};

enum class Metric { cosine, squared_euclidean };
enum class Domain { source, target, unknown };
enum class Split { train, test };
enum class Condition { normal, anomaly, unknown };

inline std::string_view to_string(Metric m) {
    switch (m) {
        case Metric::cosine: return "cosine";
        case Metric::squared_euclidean: return "squared_euclidean";
    }
    throw Error("invalid metric value");
}

inline std::string_view to_string(Domain d) {
    switch (d) {
        case Domain::source: return "source";
        case Domain::target: return "target";
        case Domain::unknown: return "unknown";
    }
    throw Error("invalid domain value");
}

inline std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::test: return "test";
    }
    throw Error("invalid split value");
}

inline std::string_view to_string(Condition c) {
    switch (c) {
        case Condition::normal: return "normal";
        case Condition::anomaly: return "anomaly";
        case Condition::unknown: return "unknown";
    }
    throw Error("invalid condition value");
}

inline Metric parse_metric(std::string_view s) {
    if (s == "cosine") return Metric::cosine;
    if (s == "squared_euclidean") return Metric::squared_euclidean;
    throw Error("unknown metric: " + std::string(s));
}

inline Domain parse_domain(std::string_view s) {
    if (s == "source") return Domain::source;
    if (s == "target") return Domain::target;
    if (s == "unknown") return Domain::unknown;
    throw Error("unknown domain: " + std::string(s));
}

inline Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw Error("unknown split: " + std::string(s));
}

inline Condition parse_condition(std::string_view s) {
    if (s == "normal") return Condition::normal;
    if (s == "anomaly") return Condition::anomaly;
    if (s == "unknown") return Condition::unknown;
    throw Error("unknown condition: " + std::string(s));
}

// FNV-1a, used for content digests and seed derivation.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), h);
}

// Without this overload a chained call on a string literal would prefer the
// raw-memory overload above and read the seed as a byte count.
inline std::uint64_t fnv1a64(const char* s, std::uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a64(std::string_view(s), h);
}

// Row-major n x d matrix of doubles. Construction checks shape consistency
// only; finiteness is a dataset-level validation concern so that injected
// defects can be reported instead of rejected.
class EmbeddingMatrix {
public:
    EmbeddingMatrix() = default;

    EmbeddingMatrix(std::size_t n, std::size_t d) : n_(n), d_(d), data_(n * d, 0.0) {}

    EmbeddingMatrix(std::size_t n, std::size_t d, std::vector<double> data)
        : n_(n), d_(d), data_(std::move(data)) {
        if (data_.size() != n_ * d_)
            throw Error("EmbeddingMatrix: data size " + std::to_string(data_.size()) +
                        " does not match " + std::to_string(n_) + "x" + std::to_string(d_));
    }

    std::size_t rows() const { return n_; }
    std::size_t dim() const { return d_; }
    bool empty() const { return n_ == 0; }

    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * d_, d_};
    }
    std::span<double> row_mut(std::size_t i) {
        return {data_.data() + i * d_, d_};
    }

    double operator()(std::size_t i, std::size_t j) const { return data_[i * d_ + j]; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * d_ + j]; }

    const std::vector<double>& data() const { return data_; }

    void append_row(std::span<const double> r) {
        if (n_ == 0 && d_ == 0) d_ = r.size();
        if (r.size() != d_)
            throw Error("EmbeddingMatrix::append_row: dimension mismatch");
        data_.insert(data_.end(), r.begin(), r.end());
        ++n_;
    }

    std::uint64_t content_digest() const {
        std::uint64_t h = fnv1a64(&n_, sizeof n_);
        h = fnv1a64(&d_, sizeof d_, h);
        if (!data_.empty()) h = fnv1a64(data_.data(), data_.size() * sizeof(double), h);
        return h;
    }

    friend bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
        return a.n_ == b.n_ && a.d_ == b.d_ && a.data_ == b.data_;
    }

private:
    std::size_t n_ = 0;
    std::size_t d_ = 0;
    std::vector<double> data_;
};

struct SampleMeta {
    std::string id;
    std::string section;
    Domain domain = Domain::unknown;
    Split split = Split::train;
    Condition condition = Condition::unknown;

    friend bool operator==(const SampleMeta&, const SampleMeta&) = default;
};

struct Dataset {
    EmbeddingMatrix embeddings;
    std::vector<SampleMeta> metas;

    // Sorted unique section names.
    std::vector<std::string> sections() const {
        std::vector<std::string> out;
        for (const auto& m : metas)
            if (std::find(out.begin(), out.end(), m.section) == out.end())
                out.push_back(m.section);
        std::sort(out.begin(), out.end());
        return out;
    }

    std::vector<std::size_t> rows_of(const std::string& section, Split split) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < metas.size(); ++i)
            if (metas[i].section == section && metas[i].split == split) out.push_back(i);
        return out;
    }

    std::vector<std::size_t> test_rows() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < metas.size(); ++i)
            if (metas[i].split == Split::test) out.push_back(i);
        return out;
    }
};

struct Violation {
    // -1 for dataset-level violations, otherwise the offending row.
    std::int64_t row = -1;
    std::string message;
};

inline std::vector<Violation> validate_dataset(const Dataset& ds) {
    std::vector<Violation> out;
    const auto& m = ds.embeddings;
    if (m.rows() < 1 || m.dim() < 1)
        out.push_back({-1, "embedding matrix must be at least 1x1, got " +
                               std::to_string(m.rows()) + "x" + std::to_string(m.dim())});
    if (ds.metas.size() != m.rows())
        out.push_back({-1, "manifest has " + std::to_string(ds.metas.size()) +
                               " entries for " + std::to_string(m.rows()) + " embedding rows"});

    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (!std::isfinite(r[j])) {
                out.push_back({static_cast<std::int64_t>(i),
                               "non-finite value at row " + std::to_string(i) + " column " +
                                   std::to_string(j)});
                break;
            }
        }
    }

    std::unordered_set<std::string> seen_ids;
    std::unordered_set<std::string> train_sections;
    for (std::size_t i = 0; i < ds.metas.size(); ++i) {
        const auto& meta = ds.metas[i];
        if (!seen_ids.insert(meta.id).second)
            out.push_back({static_cast<std::int64_t>(i), "duplicate sample id: " + meta.id});
        if (meta.split == Split::train && meta.condition != Condition::normal)
            out.push_back({static_cast<std::int64_t>(i),
                           "train sample " + meta.id + " has condition=" +
                               std::string(to_string(meta.condition))});
        if (meta.split == Split::train) train_sections.insert(meta.section);
    }
    for (std::size_t i = 0; i < ds.metas.size(); ++i) {
        const auto& meta = ds.metas[i];
        if (meta.split == Split::test && !train_sections.contains(meta.section))
            out.push_back({static_cast<std::int64_t>(i),
                           "test section " + meta.section + " has no train rows"});
    }
    return out;
}

enum class MethodKind {
    baseline_nn,
    baseline_knn_mean,
    source_means,
    smote,
    lof,
    standardization,
    norm_ratio,
    norm_diff,
    ensemble_mean,
};

inline std::string_view to_string(MethodKind k) {
    switch (k) {
        case MethodKind::baseline_nn: return "baseline_nn";
        case MethodKind::baseline_knn_mean: return "baseline_knn_mean";
        case MethodKind::source_means: return "source_means";
        case MethodKind::smote: return "smote";
        case MethodKind::lof: return "lof";
        case MethodKind::standardization: return "standardization";
        case MethodKind::norm_ratio: return "norm_ratio";
        case MethodKind::norm_diff: return "norm_diff";
        case MethodKind::ensemble_mean: return "ensemble_mean";
    }
    throw Error("invalid method value");
}

inline MethodKind parse_method(std::string_view s) {
    if (s == "baseline_nn") return MethodKind::baseline_nn;
    if (s == "baseline_knn_mean") return MethodKind::baseline_knn_mean;
    if (s == "source_means") return MethodKind::source_means;
    if (s == "smote") return MethodKind::smote;
    if (s == "lof") return MethodKind::lof;
    if (s == "standardization") return MethodKind::standardization;
    if (s == "norm_ratio") return MethodKind::norm_ratio;
    if (s == "norm_diff") return MethodKind::norm_diff;
    if (s == "ensemble_mean") return MethodKind::ensemble_mean;
    throw Error("unknown method: " + std::string(s));
}

enum class DensityKind { knn, gwrp };

inline std::string_view to_string(DensityKind k) {
    switch (k) {
        case DensityKind::knn: return "knn";
        case DensityKind::gwrp: return "gwrp";
    }
    throw Error("invalid density value");
}

inline DensityKind parse_density(std::string_view s) {
    if (s == "knn") return DensityKind::knn;
    if (s == "gwrp") return DensityKind::gwrp;
    throw Error("unknown density: " + std::string(s));
}

struct DensityConfig {
    DensityKind kind = DensityKind::knn;
    int k = 1;        // knn only
    double r = 0.0;   // gwrp only

    friend bool operator==(const DensityConfig&, const DensityConfig&) = default;
};

struct MethodConfig {
    MethodKind method = MethodKind::baseline_nn;
    Metric metric = Metric::cosine;
    DensityConfig density;   // norm_ratio / norm_diff
    int knn_k = 1;           // baseline_knn_mean
    int kmeans_k = 16;       // source_means
    int smote_neighbors = 4; // smote
    // smote: 0 means "match the source reference count"
    std::size_t smote_oversample_to = 0;
    int lof_k = 1;           // lof
    std::uint64_t seed = 1;  // source_means, smote
};

inline void validate_config(const MethodConfig& cfg) {
    switch (cfg.method) {
        case MethodKind::norm_ratio:
        case MethodKind::norm_diff:
            if (cfg.density.kind == DensityKind::knn && cfg.density.k < 1)
                throw Error("density K must be >= 1");
            if (cfg.density.kind == DensityKind::gwrp &&
                !(cfg.density.r >= 0.0 && cfg.density.r <= 1.0))
                throw Error("density r must lie in [0,1]");
            break;
        case MethodKind::baseline_knn_mean:
            if (cfg.knn_k < 1) throw Error("knn_k must be >= 1");
            break;
        case MethodKind::source_means:
            if (cfg.kmeans_k < 1) throw Error("kmeans_k must be >= 1");
            break;
        case MethodKind::smote:
            if (cfg.smote_neighbors < 1) throw Error("smote_neighbors must be >= 1");
            break;
        case MethodKind::lof:
            if (cfg.lof_k < 1) throw Error("lof_k must be >= 1");
            break;
        default:
            break;
    }
}

struct ScoreEntry {
    std::string id;
    double score = 0.0;

    friend bool operator==(const ScoreEntry&, const ScoreEntry&) = default;
};

using ScoreVector = std::vector<ScoreEntry>;

}  // namespace scorenorm
