// Command-line front end: synth / precompute / score / evaluate / sweep / hist.
// Exit codes: 0 success, 2 usage or configuration error, 3 data-integrity
// error (stale fingerprints, score coverage gaps).

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scorenorm/io.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

scorenorm::SynthConfig parse_synth_config_file(const fs::path& path) {
    ordered_json j;
    try {
        j = ordered_json::parse(scorenorm::detail::read_file_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw scorenorm::Error("synth config: parse error: " + std::string(e.what()));
    }
    if (!j.is_object()) throw scorenorm::Error("synth config: expected a JSON object");
    scorenorm::SynthConfig cfg;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "dim")
                cfg.dim = value.get<std::size_t>();
            else if (key == "sections")
                cfg.sections = value.get<std::size_t>();
            else if (key == "n_src_train")
                cfg.n_src_train = value.get<std::size_t>();
            else if (key == "n_tgt_train")
                cfg.n_tgt_train = value.get<std::size_t>();
            else if (key == "n_src_test_normal")
                cfg.n_src_test_normal = value.get<std::size_t>();
            else if (key == "n_tgt_test_normal")
                cfg.n_tgt_test_normal = value.get<std::size_t>();
            else if (key == "n_src_test_anom")
                cfg.n_src_test_anom = value.get<std::size_t>();
            else if (key == "n_tgt_test_anom")
                cfg.n_tgt_test_anom = value.get<std::size_t>();
            else if (key == "source_spread")
                cfg.source_spread = value.get<double>();
            else if (key == "target_spread")
                cfg.target_spread = value.get<double>();
            else if (key == "domain_offset_deg")
                cfg.domain_offset_deg = value.get<double>();
            else if (key == "anomaly_offset_deg")
                cfg.anomaly_offset_deg = value.get<double>();
            else if (key == "seed")
                cfg.seed = value.get<std::uint64_t>();
            else
                throw scorenorm::Error("synth config: unknown key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw scorenorm::Error("synth config: bad value: " + std::string(e.what()));
    }
    return cfg;
}

ordered_json synth_config_json(const scorenorm::SynthConfig& cfg) {
    ordered_json j;
    j["dim"] = cfg.dim;
    j["sections"] = cfg.sections;
    j["n_src_train"] = cfg.n_src_train;
    j["n_tgt_train"] = cfg.n_tgt_train;
    j["n_src_test_normal"] = cfg.n_src_test_normal;
    j["n_tgt_test_normal"] = cfg.n_tgt_test_normal;
    j["n_src_test_anom"] = cfg.n_src_test_anom;
    j["n_tgt_test_anom"] = cfg.n_tgt_test_anom;
    j["source_spread"] = cfg.source_spread;
    j["target_spread"] = cfg.target_spread;
    j["domain_offset_deg"] = cfg.domain_offset_deg;
    j["anomaly_offset_deg"] = cfg.anomaly_offset_deg;
    j["seed"] = cfg.seed;
    return j;
}

// refs/test may be the same file (one dataset) or two files whose rows are
// concatenated as [refs; test]; the manifest always describes the combined
// row space, with refs rows marked train and test rows marked test.
scorenorm::Dataset assemble_dataset(const std::string& refs_path,
                                    const std::string& test_path,
                                    const std::string& manifest_path) {
    scorenorm::Dataset ds;
    if (refs_path == test_path) {
        ds = scorenorm::load_dataset(refs_path, manifest_path);
    } else {
        scorenorm::EmbeddingMatrix refs = scorenorm::read_npy(refs_path);
        const scorenorm::EmbeddingMatrix tests = scorenorm::read_npy(test_path);
        if (refs.dim() != tests.dim())
            throw scorenorm::Error("dataset assembly: reference dimension " +
                                   std::to_string(refs.dim()) +
                                   " does not match test dimension " +
                                   std::to_string(tests.dim()));
        const std::size_t n_refs = refs.rows();
        for (std::size_t i = 0; i < tests.rows(); ++i) refs.append_row(tests.row(i));
        ds.embeddings = std::move(refs);
        ds.metas = scorenorm::read_manifest(manifest_path);
        if (ds.metas.size() != ds.embeddings.rows())
            throw scorenorm::Error(
                "dataset assembly: manifest has " + std::to_string(ds.metas.size()) +
                " rows for " + std::to_string(ds.embeddings.rows()) +
                " combined embedding rows");
        for (std::size_t i = 0; i < ds.metas.size(); ++i) {
            const bool should_be_train = i < n_refs;
            const bool is_train = ds.metas[i].split == scorenorm::Split::train;
            if (should_be_train != is_train)
                throw scorenorm::Error(
                    "dataset assembly: row " + std::to_string(i) + " (" + ds.metas[i].id +
                    ") is in the " + (should_be_train ? "reference" : "test") +
                    " file but the manifest marks it " +
                    std::string(to_string(ds.metas[i].split)));
        }
    }
    if (auto violations = scorenorm::validate_dataset(ds); !violations.empty()) {
        std::string msg = "invalid dataset:";
        std::size_t shown = 0;
        for (const auto& v : violations) {
            msg += "\n  " + v.message;
            if (++shown == 5) break;
        }
        if (violations.size() > shown)
            msg += "\n  (+" + std::to_string(violations.size() - shown) + " more)";
        throw scorenorm::Error(msg);
    }
    return ds;
}

struct SynthArgs {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
};

int run_synth(const SynthArgs& args) {
    scorenorm::SynthConfig cfg;
    scorenorm::RunManifest rm;
    rm.subcommand = "synth";
    if (!args.config_path.empty()) {
        cfg = parse_synth_config_file(args.config_path);
        rm.inputs[args.config_path] = scorenorm::file_digest(args.config_path);
    }
    if (args.seed) cfg.seed = *args.seed;
    scorenorm::validate_synth_config(cfg);

    const scorenorm::Dataset ds = scorenorm::generate_synthetic(cfg);
    fs::create_directories(args.out_dir);
    const fs::path out(args.out_dir);
    scorenorm::write_npy(ds.embeddings, out / "embeddings.npy");
    scorenorm::write_manifest(ds.metas, out / "manifest.json");

    rm.seed = cfg.seed;
    rm.config = synth_config_json(cfg);
    scorenorm::write_run_manifest(rm, out / "run_manifest.json");

    std::cout << "generated " << ds.embeddings.rows() << " rows x " << ds.embeddings.dim()
              << " dims across " << cfg.sections << " sections -> " << args.out_dir
              << "\n";
    return 0;
}

struct PrecomputeArgs {
    std::string refs_path;
    std::string manifest_path;
    std::string metric = "cosine";
    std::string density = "knn";
    int k = 1;
    double r = 0.0;
    std::string out_path;
};

int run_precompute(const PrecomputeArgs& args) {
    const scorenorm::Dataset ds =
        assemble_dataset(args.refs_path, args.refs_path, args.manifest_path);
    scorenorm::ConstantsCache cache;
    cache.metric = scorenorm::parse_metric(args.metric);
    cache.density.kind = scorenorm::parse_density(args.density);
    cache.density.k = args.k;
    cache.density.r = args.r;

    for (const auto& section : ds.sections()) {
        const auto train_rows = ds.rows_of(section, scorenorm::Split::train);
        if (train_rows.empty()) continue;
        const scorenorm::EmbeddingMatrix refs =
            scorenorm::detail::gather_rows(ds.embeddings, train_rows);
        cache.by_section[section] =
            scorenorm::precompute_constants(refs, cache.metric, cache.density);
    }
    if (cache.by_section.empty())
        throw scorenorm::Error("precompute: no sections with references");
    scorenorm::write_constants_cache(cache, args.out_path);

    scorenorm::RunManifest rm;
    rm.subcommand = "precompute";
    rm.config["metric"] = args.metric;
    rm.config["density"] = args.density;
    if (cache.density.kind == scorenorm::DensityKind::knn)
        rm.config["k"] = args.k;
    else
        rm.config["r"] = args.r;
    rm.inputs[args.refs_path] = scorenorm::file_digest(args.refs_path);
    rm.inputs[args.manifest_path] = scorenorm::file_digest(args.manifest_path);
    scorenorm::write_run_manifest(rm, args.out_path + ".run.json");

    std::cout << "precomputed constants for " << cache.by_section.size()
              << " sections -> " << args.out_path << "\n";
    return 0;
}

struct ScoreArgs {
    std::string refs_path;
    std::string test_path;
    std::string manifest_path;
    std::string out_path;
    std::string method;
    std::string metric = "cosine";
    std::string density = "knn";
    int k = 1;
    double r = 0.0;
    int kmeans_k = 16;
    int smote_neighbors = 4;
    std::size_t oversample_to = 0;
    std::uint64_t seed = 1;
    std::string constants_path;
    bool allow_batch_dependent = false;
    bool single_sample = false;
};

scorenorm::MethodConfig build_method_config(const ScoreArgs& args) {
    scorenorm::MethodConfig cfg;
    cfg.method = scorenorm::parse_method(args.method);
    cfg.metric = scorenorm::parse_metric(args.metric);
    cfg.density.kind = scorenorm::parse_density(args.density);
    cfg.density.k = args.k;
    cfg.density.r = args.r;
    cfg.knn_k = args.k;
    cfg.lof_k = args.k;
    cfg.kmeans_k = args.kmeans_k;
    cfg.smote_neighbors = args.smote_neighbors;
    cfg.smote_oversample_to = args.oversample_to;
    cfg.seed = args.seed;
    scorenorm::validate_config(cfg);
    return cfg;
}

scorenorm::ScoreVector score_single_sample(
    const scorenorm::Dataset& ds, const scorenorm::MethodConfig& cfg,
    const std::map<std::string, scorenorm::NormalizationConstants>* preloaded) {
    scorenorm::ScoreVector out;
    std::vector<std::size_t> train_rows;
    for (std::size_t i = 0; i < ds.metas.size(); ++i)
        if (ds.metas[i].split == scorenorm::Split::train) train_rows.push_back(i);
    for (std::size_t i = 0; i < ds.metas.size(); ++i) {
        if (ds.metas[i].split != scorenorm::Split::test) continue;
        scorenorm::Dataset sub;
        sub.embeddings = scorenorm::EmbeddingMatrix(0, ds.embeddings.dim());
        for (std::size_t r : train_rows) {
            sub.embeddings.append_row(ds.embeddings.row(r));
            sub.metas.push_back(ds.metas[r]);
        }
        sub.embeddings.append_row(ds.embeddings.row(i));
        sub.metas.push_back(ds.metas[i]);
        scorenorm::ScoreVector sv = scorenorm::score_dataset(sub, cfg, preloaded);
        out.push_back(sv.front());
    }
    return out;
}

int run_score(const ScoreArgs& args) {
    const scorenorm::MethodConfig cfg = build_method_config(args);
    if (cfg.method == scorenorm::MethodKind::ensemble_mean)
        throw scorenorm::Error(
            "ensemble_mean combines already-written score files; score each system "
            "separately and average the vectors in code");
    if (cfg.method == scorenorm::MethodKind::standardization) {
        if (!args.allow_batch_dependent)
            throw scorenorm::Error(
                "standardization scores depend on the whole test batch; pass "
                "--allow-batch-dependent to acknowledge");
        if (args.single_sample)
            throw scorenorm::Error(
                "standardization cannot score single samples (batch-dependent method)");
    }

    const scorenorm::Dataset ds =
        assemble_dataset(args.refs_path, args.test_path, args.manifest_path);

    std::optional<scorenorm::ConstantsCache> cache;
    const std::map<std::string, scorenorm::NormalizationConstants>* preloaded = nullptr;
    if (!args.constants_path.empty()) {
        if (cfg.method != scorenorm::MethodKind::norm_ratio &&
            cfg.method != scorenorm::MethodKind::norm_diff)
            throw scorenorm::Error("--constants only applies to norm_ratio/norm_diff");
        cache = scorenorm::read_constants_cache(args.constants_path);
        if (cache->metric != cfg.metric || !(cache->density == cfg.density))
            throw scorenorm::Error(
                "constants cache was computed for a different metric/density "
                "configuration");
        preloaded = &cache->by_section;
    }

    const scorenorm::ScoreVector scores = args.single_sample
                                              ? score_single_sample(ds, cfg, preloaded)
                                              : scorenorm::score_dataset(ds, cfg, preloaded);
    scorenorm::write_scores(scores, args.out_path);

    scorenorm::RunManifest rm;
    rm.subcommand = "score";
    rm.seed = args.seed;
    rm.config["method"] = args.method;
    rm.config["metric"] = args.metric;
    rm.config["density"] = args.density;
    rm.config["k"] = args.k;
    rm.config["r"] = args.r;
    rm.config["kmeans_k"] = args.kmeans_k;
    rm.config["smote_neighbors"] = args.smote_neighbors;
    rm.config["oversample_to"] = args.oversample_to;
    rm.config["single_sample"] = args.single_sample;
    rm.config["allow_batch_dependent"] = args.allow_batch_dependent;
    rm.inputs[args.refs_path] = scorenorm::file_digest(args.refs_path);
    rm.inputs[args.test_path] = scorenorm::file_digest(args.test_path);
    rm.inputs[args.manifest_path] = scorenorm::file_digest(args.manifest_path);
    if (!args.constants_path.empty()) {
        rm.config["constants"] = args.constants_path;
        rm.inputs[args.constants_path] = scorenorm::file_digest(args.constants_path);
    }
    scorenorm::write_run_manifest(rm, args.out_path + ".run.json");

    std::cout << "scored " << scores.size() << " test rows with " << args.method
              << " -> " << args.out_path << "\n";
    return 0;
}

struct EvaluateArgs {
    std::string scores_path;
    std::string manifest_path;
    double p = 0.1;
    std::string agg = "harmonic";
    std::string out_path;
};

int run_evaluate(const EvaluateArgs& args) {
    const std::vector<scorenorm::SampleMeta> metas =
        scorenorm::read_manifest(args.manifest_path);
    const scorenorm::ScoreVector scores = scorenorm::read_scores(args.scores_path);
    const scorenorm::EvaluationReport report =
        scorenorm::evaluate(metas, scores, args.p, scorenorm::parse_agg_mode(args.agg));
    scorenorm::write_report(report, args.out_path);

    scorenorm::RunManifest rm;
    rm.subcommand = "evaluate";
    rm.config["p"] = args.p;
    rm.config["agg"] = args.agg;
    rm.inputs[args.scores_path] = scorenorm::file_digest(args.scores_path);
    rm.inputs[args.manifest_path] = scorenorm::file_digest(args.manifest_path);
    scorenorm::write_run_manifest(rm, args.out_path + ".run.json");

    std::cout << "aggregate (" << args.agg << "): "
              << scorenorm::format_double(report.aggregate_value) << "\n";
    for (const auto& sec : report.sections) {
        std::cout << "  " << sec.section;
        const auto cell = [](const std::optional<double>& v) {
            return v ? scorenorm::format_double(*v) : std::string("absent");
        };
        std::cout << "  auc_source=" << cell(sec.auc_source)
                  << "  auc_target=" << cell(sec.auc_target)
                  << "  auc=" << cell(sec.auc) << "  pauc=" << cell(sec.pauc) << "\n";
    }
    return 0;
}

struct SweepArgs {
    std::string refs_path;
    std::string test_path;
    std::string manifest_path;
    std::string param;
    std::string values;
    std::string variant = "ratio";
    std::string metric = "cosine";
    double p = 0.1;
    std::string agg = "harmonic";
    std::string out_path;
};

int run_sweep_cmd(const SweepArgs& args) {
    if (args.param != "k" && args.param != "r")
        throw scorenorm::Error("sweep: --param must be 'k' or 'r'");
    std::vector<double> values;
    std::size_t start = 0;
    while (start <= args.values.size()) {
        std::size_t comma = args.values.find(',', start);
        const std::string part = args.values.substr(
            start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!part.empty()) values.push_back(scorenorm::parse_double(part));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (values.empty()) throw scorenorm::Error("sweep: empty grid");

    const scorenorm::Dataset ds =
        assemble_dataset(args.refs_path, args.test_path, args.manifest_path);
    const std::vector<scorenorm::SweepRow> rows = scorenorm::run_sweep(
        ds, scorenorm::parse_variant(args.variant),
        args.param == "k" ? scorenorm::DensityKind::knn : scorenorm::DensityKind::gwrp,
        values, scorenorm::parse_metric(args.metric), args.p,
        scorenorm::parse_agg_mode(args.agg));
    scorenorm::write_sweep_table(rows, args.param, args.out_path);

    scorenorm::RunManifest rm;
    rm.subcommand = "sweep";
    rm.config["param"] = args.param;
    rm.config["values"] = args.values;
    rm.config["variant"] = args.variant;
    rm.config["metric"] = args.metric;
    rm.config["p"] = args.p;
    rm.config["agg"] = args.agg;
    rm.inputs[args.refs_path] = scorenorm::file_digest(args.refs_path);
    rm.inputs[args.test_path] = scorenorm::file_digest(args.test_path);
    rm.inputs[args.manifest_path] = scorenorm::file_digest(args.manifest_path);
    scorenorm::write_run_manifest(rm, args.out_path + ".run.json");

    std::cout << "swept " << rows.size() << " grid points over " << args.param << " -> "
              << args.out_path << "\n";
    return 0;
}

struct HistArgs {
    std::string scores_path;
    int bins = 20;
    std::string out_path;
    std::string manifest_path;
};

int run_hist(const HistArgs& args) {
    const scorenorm::ScoreVector scores = scorenorm::read_scores(args.scores_path);
    std::optional<std::map<std::string, std::string>> groups;
    if (!args.manifest_path.empty()) {
        groups.emplace();
        for (const auto& meta : scorenorm::read_manifest(args.manifest_path)) {
            if (meta.split != scorenorm::Split::test) continue;
            (*groups)[meta.id] = std::string(to_string(meta.domain)) + "_" +
                                 std::string(to_string(meta.condition));
        }
    }
    scorenorm::write_histogram(scores, args.bins, args.out_path,
                               groups ? &*groups : nullptr);

    scorenorm::RunManifest rm;
    rm.subcommand = "hist";
    rm.config["bins"] = args.bins;
    rm.inputs[args.scores_path] = scorenorm::file_digest(args.scores_path);
    if (!args.manifest_path.empty())
        rm.inputs[args.manifest_path] = scorenorm::file_digest(args.manifest_path);
    scorenorm::write_run_manifest(rm, args.out_path + ".run.json");

    std::cout << "histogram of " << scores.size() << " scores (" << args.bins
              << " bins) -> " << args.out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"embedding-based anomaly scoring with local-density normalization"};
    app.require_subcommand(1);

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "generate the synthetic benchmark");
    synth->add_option("--config", synth_args.config_path,
                      "JSON config (defaults used when omitted)");
    synth->add_option("--out", synth_args.out_dir, "output directory")->required();
    std::uint64_t synth_seed = 0;
    auto* synth_seed_opt =
        synth->add_option("--seed", synth_seed, "override the config seed");

    PrecomputeArgs pre_args;
    auto* pre = app.add_subcommand("precompute",
                                   "precompute per-section normalization constants");
    pre->add_option("--refs", pre_args.refs_path, "reference embeddings (.npy)")
        ->required();
    pre->add_option("--manifest", pre_args.manifest_path, "manifest JSON")->required();
    pre->add_option("--metric", pre_args.metric, "cosine | squared_euclidean");
    pre->add_option("--density", pre_args.density, "knn | gwrp");
    pre->add_option("--k", pre_args.k, "knn density K");
    pre->add_option("--r", pre_args.r, "gwrp density r");
    pre->add_option("--out", pre_args.out_path, "constants cache path")->required();

    ScoreArgs score_args;
    auto* score = app.add_subcommand("score", "score test samples against references");
    score->add_option("--refs", score_args.refs_path, "reference embeddings (.npy)")
        ->required();
    score->add_option("--test", score_args.test_path, "test embeddings (.npy)")
        ->required();
    score->add_option("--manifest", score_args.manifest_path, "manifest JSON")
        ->required();
    score->add_option("--method", score_args.method,
                      "baseline_nn | baseline_knn_mean | source_means | smote | lof | "
                      "standardization | norm_ratio | norm_diff")
        ->required();
    score->add_option("--metric", score_args.metric, "cosine | squared_euclidean");
    score->add_option("--density", score_args.density, "knn | gwrp");
    score->add_option("--k", score_args.k,
                      "K (knn density, knn-mean neighbors, or LOF k)");
    score->add_option("--r", score_args.r, "gwrp density r");
    score->add_option("--kmeans-k", score_args.kmeans_k, "source_means cluster count");
    score->add_option("--smote-neighbors", score_args.smote_neighbors,
                      "smote neighbor count");
    score->add_option("--oversample-to", score_args.oversample_to,
                      "smote target count (0 = match source count)");
    score->add_option("--seed", score_args.seed, "seed for seeded methods");
    score->add_option("--constants", score_args.constants_path,
                      "precomputed constants cache");
    score->add_flag("--allow-batch-dependent", score_args.allow_batch_dependent,
                    "acknowledge batch-dependent methods");
    score->add_flag("--single-sample", score_args.single_sample,
                    "score each test row in an isolated call");
    score->add_option("--out", score_args.out_path, "scores CSV path")->required();

    EvaluateArgs eval_args;
    auto* eval = app.add_subcommand("evaluate", "compute the evaluation report");
    eval->add_option("--scores", eval_args.scores_path, "scores CSV")->required();
    eval->add_option("--manifest", eval_args.manifest_path, "manifest JSON")->required();
    eval->add_option("--p", eval_args.p, "pAUC false-positive-rate cap");
    eval->add_option("--agg", eval_args.agg, "harmonic | arithmetic");
    eval->add_option("--out", eval_args.out_path, "report JSON path")->required();

    SweepArgs sweep_args;
    auto* sweep = app.add_subcommand("sweep", "evaluate a hyperparameter grid");
    sweep->add_option("--refs", sweep_args.refs_path, "reference embeddings (.npy)")
        ->required();
    sweep->add_option("--test", sweep_args.test_path, "test embeddings (.npy)")
        ->required();
    sweep->add_option("--manifest", sweep_args.manifest_path, "manifest JSON")
        ->required();
    sweep->add_option("--param", sweep_args.param, "k | r")->required();
    sweep->add_option("--values", sweep_args.values, "comma-separated grid values")
        ->required();
    sweep->add_option("--variant", sweep_args.variant, "ratio | difference");
    sweep->add_option("--metric", sweep_args.metric, "cosine | squared_euclidean");
    sweep->add_option("--p", sweep_args.p, "pAUC false-positive-rate cap");
    sweep->add_option("--agg", sweep_args.agg, "harmonic | arithmetic");
    sweep->add_option("--out", sweep_args.out_path, "sweep CSV path")->required();

    HistArgs hist_args;
    auto* hist = app.add_subcommand("hist", "bin scores into a histogram CSV");
    hist->add_option("--scores", hist_args.scores_path, "scores CSV")->required();
    hist->add_option("--bins", hist_args.bins, "bin count");
    hist->add_option("--manifest", hist_args.manifest_path,
                     "group bins by (domain, condition) from this manifest");
    hist->add_option("--out", hist_args.out_path, "histogram CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 2;
    }

    try {
        if (*synth) {
            if (!synth_seed_opt->empty()) synth_args.seed = synth_seed;
            return run_synth(synth_args);
        }
        if (*pre) return run_precompute(pre_args);
        if (*score) return run_score(score_args);
        if (*eval) return run_evaluate(eval_args);
        if (*sweep) return run_sweep_cmd(sweep_args);
        if (*hist) return run_hist(hist_args);
    } catch (const scorenorm::IntegrityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
