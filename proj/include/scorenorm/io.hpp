#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "metrics.hpp"
#include "neighbors.hpp"
#include "scoring.hpp"
#include "synth.hpp"

namespace scorenorm {

// ---------------------------------------------------------------------------
// number formatting

// Shortest decimal that round-trips to the same 64-bit float.
inline std::string format_double(double v) {
    if (!std::isfinite(v)) throw Error("format_double: non-finite value");
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    if (res.ec != std::errc()) throw Error("format_double: conversion failed");
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw Error("invalid number: '" + std::string(s) + "'");
    return v;
}

inline std::string hex_u64(std::uint64_t v) {
    char buf[16];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, 16);
    std::string s(buf, res.ptr);
    return std::string(16 - s.size(), '0') + s;
}

inline std::uint64_t parse_hex_u64(std::string_view s) {
    if (s.size() != 16) throw Error("invalid 16-digit hex value: '" + std::string(s) + "'");
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v, 16);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw Error("invalid 16-digit hex value: '" + std::string(s) + "'");
    return v;
}

// ---------------------------------------------------------------------------
// raw file helpers

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (in.bad()) throw Error("read failed: " + path.string());
    return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path,
                             const void* data, std::size_t len) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
    if (!out) throw Error("write failed: " + path.string());
}

inline void write_file_text(const std::filesystem::path& path, const std::string& text) {
    write_file_bytes(path, text.data(), text.size());
}

inline std::string read_file_text(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

}  // namespace detail

inline std::uint64_t file_digest(const std::filesystem::path& path) {
    const auto bytes = detail::read_file_bytes(path);
    return fnv1a64(bytes.data(), bytes.size());
}

// ---------------------------------------------------------------------------
// NPY (v1.0 subset: little-endian '<f4'/'<f8', C order, rank 2)

enum class NpyDtype { f4, f8 };

struct NpyHeader {
    int version_major = 1;
    int version_minor = 0;
    NpyDtype dtype = NpyDtype::f8;
    bool fortran_order = false;
    std::size_t n = 0;
    std::size_t d = 0;
};

namespace detail {

// Parses the python-literal header dict, accepting any key order.
inline NpyHeader parse_npy_dict(const std::string& dict) {
    NpyHeader h;
    std::size_t i = 0;
    const auto skip_ws = [&] {
        while (i < dict.size() && (dict[i] == ' ' || dict[i] == '\t' || dict[i] == '\n'))
            ++i;
    };
    const auto fail = [&](const std::string& why) -> void {
        throw Error("npy: malformed header (" + why + ")");
    };

    skip_ws();
    if (i >= dict.size() || dict[i] != '{') fail("missing '{'");
    ++i;
    bool saw_descr = false, saw_order = false, saw_shape = false;
    for (;;) {
        skip_ws();
        if (i < dict.size() && dict[i] == ',') {
            ++i;
            continue;
        }
        if (i < dict.size() && dict[i] == '}') break;
        if (i >= dict.size() || dict[i] != '\'') fail("expected quoted key");
        const std::size_t kend = dict.find('\'', i + 1);
        if (kend == std::string::npos) fail("unterminated key");
        const std::string key = dict.substr(i + 1, kend - i - 1);
        i = kend + 1;
        skip_ws();
        if (i >= dict.size() || dict[i] != ':') fail("missing ':'");
        ++i;
        skip_ws();

        if (key == "descr") {
            if (i >= dict.size() || dict[i] != '\'') fail("descr must be a string");
            const std::size_t vend = dict.find('\'', i + 1);
            if (vend == std::string::npos) fail("unterminated descr");
            const std::string v = dict.substr(i + 1, vend - i - 1);
            i = vend + 1;
            if (v == "<f8")
                h.dtype = NpyDtype::f8;
            else if (v == "<f4")
                h.dtype = NpyDtype::f4;
            else
                throw Error("npy: unsupported dtype '" + v + "'");
            saw_descr = true;
        } else if (key == "fortran_order") {
            if (dict.compare(i, 5, "False") == 0) {
                h.fortran_order = false;
                i += 5;
            } else if (dict.compare(i, 4, "True") == 0) {
                h.fortran_order = true;
                i += 4;
            } else {
                fail("fortran_order must be True or False");
            }
            saw_order = true;
        } else if (key == "shape") {
            if (i >= dict.size() || dict[i] != '(') fail("shape must be a tuple");
            const std::size_t tend = dict.find(')', i);
            if (tend == std::string::npos) fail("unterminated shape tuple");
            std::string tuple = dict.substr(i + 1, tend - i - 1);
            i = tend + 1;
            std::vector<std::size_t> dims;
            std::size_t start = 0;
            while (start <= tuple.size()) {
                std::size_t comma = tuple.find(',', start);
                std::string part = tuple.substr(
                    start, comma == std::string::npos ? std::string::npos : comma - start);
                std::string trimmed;
                for (char c : part)
                    if (c != ' ' && c != '\t') trimmed += c;
                if (!trimmed.empty()) {
                    std::size_t value = 0;
                    const auto res = std::from_chars(
                        trimmed.data(), trimmed.data() + trimmed.size(), value);
                    if (res.ec != std::errc() ||
                        res.ptr != trimmed.data() + trimmed.size())
                        fail("bad shape entry '" + trimmed + "'");
                    dims.push_back(value);
                }
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
            if (dims.size() != 2)
                throw Error("npy: unsupported rank " + std::to_string(dims.size()) +
                            " (rank-2 only)");
            h.n = dims[0];
            h.d = dims[1];
            saw_shape = true;
        } else {
            fail("unknown key '" + key + "'");
        }
    }
    if (!saw_descr || !saw_order || !saw_shape) fail("missing required key");
    return h;
}

}  // namespace detail

inline void write_npy(const EmbeddingMatrix& m, const std::filesystem::path& path,
                      NpyDtype dtype = NpyDtype::f8) {
    if (m.rows() < 1 || m.dim() < 1) throw Error("write_npy: empty matrix");
    std::string dict = "{'descr': '";
    dict += dtype == NpyDtype::f8 ? "<f8" : "<f4";
    dict += "', 'fortran_order': False, 'shape': (";
    dict += std::to_string(m.rows());
    dict += ", ";
    dict += std::to_string(m.dim());
    dict += "), }";

    // magic(6) + version(2) + header_len(2) + dict + padding + '\n',
    // padded so the total is a multiple of 64.
    std::size_t total = 10 + dict.size() + 1;
    const std::size_t padding = (64 - total % 64) % 64;
    total += padding;
    const std::size_t header_len = dict.size() + padding + 1;
    if (header_len > 0xffff) throw Error("write_npy: header too large");

    std::string out;
    out.reserve(total + m.rows() * m.dim() * (dtype == NpyDtype::f8 ? 8 : 4));
    out += "\x93NUMPY";
    out += '\x01';
    out += '\x00';
    out += static_cast<char>(header_len & 0xff);
    out += static_cast<char>((header_len >> 8) & 0xff);
    out += dict;
    out.append(padding, ' ');
    out += '\n';

    if (dtype == NpyDtype::f8) {
        const auto& data = m.data();
        out.append(reinterpret_cast<const char*>(data.data()), data.size() * 8);
    } else {
        for (double v : m.data()) {
            const float f = static_cast<float>(v);
            char bytes[4];
            std::memcpy(bytes, &f, 4);
            out.append(bytes, 4);
        }
    }
    detail::write_file_bytes(path, out.data(), out.size());
}

inline EmbeddingMatrix read_npy(const std::filesystem::path& path) {
    const auto bytes = detail::read_file_bytes(path);
    if (bytes.size() < 10) throw Error("npy: truncated header");
    static const unsigned char magic[6] = {0x93, 'N', 'U', 'M', 'P', 'Y'};
    if (std::memcmp(bytes.data(), magic, 6) != 0) throw Error("npy: bad magic");
    const int major = bytes[6], minor = bytes[7];
    if (major != 1 || minor != 0)
        throw Error("npy: unsupported version " + std::to_string(major) + "." +
                    std::to_string(minor));
    const std::size_t header_len = bytes[8] | (static_cast<std::size_t>(bytes[9]) << 8);
    if (10 + header_len > bytes.size()) throw Error("npy: truncated header");
    if ((10 + header_len) % 64 != 0) throw Error("npy: malformed header (padding)");
    if (bytes[10 + header_len - 1] != '\n')
        throw Error("npy: malformed header (missing trailing newline)");
    const std::string dict(bytes.begin() + 10, bytes.begin() + 10 + header_len);

    NpyHeader h = detail::parse_npy_dict(dict);
    if (h.fortran_order) throw Error("npy: unsupported layout (fortran_order=True)");
    if (h.n < 1 || h.d < 1) throw Error("npy: empty array");

    const std::size_t item = h.dtype == NpyDtype::f8 ? 8 : 4;
    const std::size_t payload = bytes.size() - 10 - header_len;
    const std::size_t expect = h.n * h.d * item;
    if (payload < expect) throw Error("npy: truncated payload");
    if (payload > expect) throw Error("npy: oversized payload");

    const unsigned char* p = bytes.data() + 10 + header_len;
    std::vector<double> data(h.n * h.d);
    if (h.dtype == NpyDtype::f8) {
        std::memcpy(data.data(), p, expect);
    } else {
        for (std::size_t i = 0; i < data.size(); ++i) {
            float f;
            std::memcpy(&f, p + i * 4, 4);
            data[i] = static_cast<double>(f);
        }
    }
    return EmbeddingMatrix(h.n, h.d, std::move(data));
}

// ---------------------------------------------------------------------------
// manifest (JSON array of {id,row,section,domain,split,condition})

inline void write_manifest(const std::vector<SampleMeta>& metas,
                           const std::filesystem::path& path) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < metas.size(); ++i) {
        const auto& m = metas[i];
        nlohmann::ordered_json rec;
        rec["id"] = m.id;
        rec["row"] = i;
        rec["section"] = m.section;
        rec["domain"] = std::string(to_string(m.domain));
        rec["split"] = std::string(to_string(m.split));
        rec["condition"] = std::string(to_string(m.condition));
        arr.push_back(std::move(rec));
    }
    detail::write_file_text(path, arr.dump(2) + "\n");
}

inline std::vector<SampleMeta> read_manifest(const std::filesystem::path& path) {
    nlohmann::ordered_json arr;
    try {
        arr = nlohmann::ordered_json::parse(detail::read_file_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error("manifest: parse error: " + std::string(e.what()));
    }
    if (!arr.is_array()) throw Error("manifest: top-level value must be an array");
    const std::size_t n = arr.size();
    std::vector<SampleMeta> metas(n);
    std::vector<bool> filled(n, false);
    std::unordered_set<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& rec = arr[i];
        if (!rec.is_object()) throw Error("manifest: entry " + std::to_string(i) +
                                          " is not an object");
        for (const char* key : {"id", "row", "section", "domain", "split", "condition"})
            if (!rec.contains(key))
                throw Error("manifest: entry " + std::to_string(i) + " missing field '" +
                            key + "'");
        if (!rec["row"].is_number_unsigned())
            throw Error("manifest: entry " + std::to_string(i) +
                        " row must be a non-negative integer");
        const std::size_t row = rec["row"].get<std::size_t>();
        if (row >= n)
            throw Error("manifest: row " + std::to_string(row) + " out of range 0.." +
                        std::to_string(n - 1));
        if (filled[row]) throw Error("manifest: duplicate row " + std::to_string(row));
        SampleMeta m;
        try {
            m.id = rec["id"].get<std::string>();
            m.section = rec["section"].get<std::string>();
            m.domain = parse_domain(rec["domain"].get<std::string>());
            m.split = parse_split(rec["split"].get<std::string>());
            m.condition = parse_condition(rec["condition"].get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw Error("manifest: entry " + std::to_string(i) + ": " + e.what());
        } catch (const Error& e) {
            throw Error("manifest: entry " + std::to_string(i) + ": " + e.what());
        }
        if (!ids.insert(m.id).second) throw Error("manifest: duplicate id " + m.id);
        metas[row] = std::move(m);
        filled[row] = true;
    }
    return metas;
}

inline Dataset load_dataset(const std::filesystem::path& embeddings_path,
                            const std::filesystem::path& manifest_path) {
    Dataset ds;
    ds.embeddings = read_npy(embeddings_path);
    ds.metas = read_manifest(manifest_path);
    if (ds.metas.size() != ds.embeddings.rows())
        throw Error("dataset assembly: manifest has " + std::to_string(ds.metas.size()) +
                    " rows for " + std::to_string(ds.embeddings.rows()) +
                    " embedding rows");
    return ds;
}

// ---------------------------------------------------------------------------
// scores CSV

inline void write_scores(const ScoreVector& scores, const std::filesystem::path& path) {
    std::string out = "id,score\n";
    std::unordered_set<std::string> seen;
    for (const auto& e : scores) {
        if (e.id.empty() || e.id.find_first_of(",\n\r") != std::string::npos)
            throw Error("write_scores: id '" + e.id + "' is empty or contains a separator");
        if (!seen.insert(e.id).second) throw Error("write_scores: duplicate id " + e.id);
        if (!std::isfinite(e.score))
            throw Error("write_scores: non-finite score for id " + e.id);
        out += e.id;
        out += ',';
        out += format_double(e.score);
        out += '\n';
    }
    detail::write_file_text(path, out);
}

inline ScoreVector read_scores(const std::filesystem::path& path) {
    const std::string text = detail::read_file_text(path);
    if (text.empty()) throw Error("scores: empty file");
    ScoreVector out;
    std::unordered_set<std::string> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ++line_no;
        pos = end + 1;
        if (line_no == 1) {
            if (line != "id,score")
                throw Error("scores: line 1: expected header 'id,score', got '" + line +
                            "'");
            continue;
        }
        if (line.empty()) {
            if (pos <= text.size()) continue;
            break;
        }
        const std::size_t comma = line.find(',');
        if (comma == std::string::npos || comma == 0 || comma + 1 >= line.size())
            throw Error("scores: line " + std::to_string(line_no) + ": malformed row '" +
                        line + "'");
        std::string id = line.substr(0, comma);
        double value;
        try {
            value = parse_double(std::string_view(line).substr(comma + 1));
        } catch (const Error& e) {
            throw Error("scores: line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!seen.insert(id).second)
            throw Error("scores: line " + std::to_string(line_no) + ": duplicate id " +
                        id);
        out.push_back({std::move(id), value});
    }
    return out;
}

// ---------------------------------------------------------------------------
// evaluation report JSON

inline nlohmann::ordered_json report_to_json(const EvaluationReport& report) {
    const auto opt = [](const std::optional<double>& v) -> nlohmann::ordered_json {
        if (v) return *v;
        return nullptr;
    };
    nlohmann::ordered_json j;
    j["tool"] = "scorenorm";
    j["version"] = std::string(tool_version);
    j["p"] = report.p;
    j["aggregation"] = std::string(to_string(report.mode));
    j["aggregate"] = report.aggregate_value;
    j["aggregate_definition"] = report.aggregate_definition;
    j["method_fingerprint"] = hex_u64(report.method_fingerprint);
    j["sections"] = nlohmann::ordered_json::array();
    for (const auto& sec : report.sections) {
        nlohmann::ordered_json s;
        s["section"] = sec.section;
        s["auc_source"] = opt(sec.auc_source);
        s["auc_target"] = opt(sec.auc_target);
        s["auc"] = opt(sec.auc);
        s["pauc"] = opt(sec.pauc);
        s["pauc_raw"] = opt(sec.pauc_raw);
        nlohmann::ordered_json counts;
        counts["source_normal"] = sec.counts.source_normal;
        counts["target_normal"] = sec.counts.target_normal;
        counts["unknown_normal"] = sec.counts.unknown_normal;
        counts["source_anomaly"] = sec.counts.source_anomaly;
        counts["target_anomaly"] = sec.counts.target_anomaly;
        counts["unknown_anomaly"] = sec.counts.unknown_anomaly;
        s["counts"] = std::move(counts);
        j["sections"].push_back(std::move(s));
    }
    return j;
}

inline void write_report(const EvaluationReport& report,
                         const std::filesystem::path& path) {
    detail::write_file_text(path, report_to_json(report).dump(2) + "\n");
}

inline EvaluationReport read_report(const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(detail::read_file_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error("report: parse error: " + std::string(e.what()));
    }
    const auto opt = [](const nlohmann::ordered_json& v) -> std::optional<double> {
        if (v.is_null()) return std::nullopt;
        return v.get<double>();
    };
    EvaluationReport report;
    try {
        report.p = j.at("p").get<double>();
        report.mode = parse_agg_mode(j.at("aggregation").get<std::string>());
        report.aggregate_value = j.at("aggregate").get<double>();
        report.aggregate_definition = j.at("aggregate_definition").get<std::string>();
        report.method_fingerprint = parse_hex_u64(j.at("method_fingerprint").get<std::string>());
        for (const auto& s : j.at("sections")) {
            SectionResult sec;
            sec.section = s.at("section").get<std::string>();
            sec.auc_source = opt(s.at("auc_source"));
            sec.auc_target = opt(s.at("auc_target"));
            sec.auc = opt(s.at("auc"));
            sec.pauc = opt(s.at("pauc"));
            sec.pauc_raw = opt(s.at("pauc_raw"));
            const auto& counts = s.at("counts");
            sec.counts.source_normal = counts.at("source_normal").get<std::size_t>();
            sec.counts.target_normal = counts.at("target_normal").get<std::size_t>();
            sec.counts.unknown_normal = counts.at("unknown_normal").get<std::size_t>();
            sec.counts.source_anomaly = counts.at("source_anomaly").get<std::size_t>();
            sec.counts.target_anomaly = counts.at("target_anomaly").get<std::size_t>();
            sec.counts.unknown_anomaly = counts.at("unknown_anomaly").get<std::size_t>();
            report.sections.push_back(std::move(sec));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error("report: missing or mistyped field: " + std::string(e.what()));
    }
    return report;
}

// ---------------------------------------------------------------------------
// sweep table CSV

inline void write_sweep_table(const std::vector<SweepRow>& rows,
                              const std::string& param_name,
                              const std::filesystem::path& path) {
    if (param_name.empty() || param_name.find_first_of(",\n\r") != std::string::npos)
        throw Error("write_sweep_table: bad parameter name");
    std::string out = "param,value,aggregate,auc_source,auc_target\n";
    for (const auto& row : rows) {
        out += param_name;
        out += ',';
        out += format_double(row.value);
        out += ',';
        out += format_double(row.aggregate_value);
        out += ',';
        if (row.auc_source) out += format_double(*row.auc_source);
        out += ',';
        if (row.auc_target) out += format_double(*row.auc_target);
        out += '\n';
    }
    detail::write_file_text(path, out);
}

// ---------------------------------------------------------------------------
// histogram CSV (shared bin edges across groups)

inline void write_histogram(const ScoreVector& scores, int bins,
                            const std::filesystem::path& path,
                            const std::map<std::string, std::string>* group_by_id =
                                nullptr) {
    if (bins < 1) throw Error("write_histogram: bins must be >= 1");
    if (scores.empty()) throw Error("write_histogram: no scores");

    double lo = scores.front().score, hi = scores.front().score;
    for (const auto& e : scores) {
        if (!std::isfinite(e.score))
            throw Error("write_histogram: non-finite score for id " + e.id);
        lo = std::min(lo, e.score);
        hi = std::max(hi, e.score);
    }
    const double width = (hi - lo) / static_cast<double>(bins);

    std::map<std::string, std::vector<std::size_t>> counts;
    for (const auto& e : scores) {
        std::string group = "all";
        if (group_by_id != nullptr) {
            auto it = group_by_id->find(e.id);
            if (it == group_by_id->end())
                throw Error("write_histogram: no group for id " + e.id);
            group = it->second;
        }
        auto& vec = counts[group];
        if (vec.empty()) vec.assign(static_cast<std::size_t>(bins), 0);
        std::size_t bin = 0;
        if (width > 0.0) {
            bin = static_cast<std::size_t>((e.score - lo) / width);
            if (bin >= static_cast<std::size_t>(bins))
                bin = static_cast<std::size_t>(bins) - 1;
        }
        ++vec[bin];
    }

    std::string out = "group,bin,lo,hi,count\n";
    for (const auto& [group, vec] : counts) {
        if (group.find_first_of(",\n\r") != std::string::npos)
            throw Error("write_histogram: group label contains a separator");
        for (std::size_t b = 0; b < vec.size(); ++b) {
            const double bin_lo = lo + static_cast<double>(b) * width;
            const double bin_hi =
                b + 1 == vec.size() ? hi : lo + static_cast<double>(b + 1) * width;
            out += group;
            out += ',';
            out += std::to_string(b);
            out += ',';
            out += format_double(bin_lo);
            out += ',';
            out += format_double(bin_hi);
            out += ',';
            out += std::to_string(vec[b]);
            out += '\n';
        }
    }
    detail::write_file_text(path, out);
}

// ---------------------------------------------------------------------------
// constants cache (text)

struct ConstantsCache {
    Metric metric = Metric::cosine;
    DensityConfig density;
    std::map<std::string, NormalizationConstants> by_section;
};

inline void write_constants_cache(const ConstantsCache& cache,
                                  const std::filesystem::path& path) {
    std::string out = "scorenorm-constants v1\n";
    out += "metric " + std::string(to_string(cache.metric)) + "\n";
    out += "density " + std::string(to_string(cache.density.kind)) + "\n";
    if (cache.density.kind == DensityKind::knn)
        out += "k " + std::to_string(cache.density.k) + "\n";
    else
        out += "r " + format_double(cache.density.r) + "\n";
    out += "sections " + std::to_string(cache.by_section.size()) + "\n\n";
    for (const auto& [section, constants] : cache.by_section) {
        if (section.empty() || section.find_first_of(" \n\r") != std::string::npos)
            throw Error("write_constants_cache: bad section name '" + section + "'");
        out += "section " + section + " fingerprint " + hex_u64(constants.fingerprint) +
               " count " + std::to_string(constants.c.size()) + "\n";
        for (std::size_t i = 0; i < constants.c.size(); ++i)
            out += std::to_string(i) + " " + format_double(constants.c[i]) + "\n";
    }
    detail::write_file_text(path, out);
}

inline ConstantsCache read_constants_cache(const std::filesystem::path& path) {
    const std::string text = detail::read_file_text(path);
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    const auto next_line = [&](bool allow_blank) -> bool {
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() && allow_blank) continue;
            return true;
        }
        return false;
    };
    const auto fail = [&](const std::string& why) -> void {
        throw Error("constants cache: line " + std::to_string(line_no) + ": " + why);
    };

    ConstantsCache cache;
    if (!next_line(false) || line != "scorenorm-constants v1")
        throw Error("constants cache: bad file signature");
    if (!next_line(false) || line.rfind("metric ", 0) != 0) fail("expected 'metric'");
    cache.metric = parse_metric(line.substr(7));
    if (!next_line(false) || line.rfind("density ", 0) != 0) fail("expected 'density'");
    cache.density.kind = parse_density(line.substr(8));
    if (cache.density.kind == DensityKind::knn) {
        if (!next_line(false) || line.rfind("k ", 0) != 0) fail("expected 'k'");
        cache.density.k = static_cast<int>(parse_double(line.substr(2)));
        if (cache.density.k < 1) fail("k must be >= 1");
    } else {
        if (!next_line(false) || line.rfind("r ", 0) != 0) fail("expected 'r'");
        cache.density.r = parse_double(line.substr(2));
    }
    if (!next_line(false) || line.rfind("sections ", 0) != 0) fail("expected 'sections'");
    const std::size_t n_sections = static_cast<std::size_t>(parse_double(line.substr(9)));

    for (std::size_t s = 0; s < n_sections; ++s) {
        if (!next_line(true)) fail("missing section block");
        std::istringstream head(line);
        std::string word, section, fp_word, fingerprint_hex, count_word;
        std::size_t count = 0;
        head >> word >> section >> fp_word >> fingerprint_hex >> count_word >> count;
        if (word != "section" || fp_word != "fingerprint" || count_word != "count" ||
            section.empty() || head.fail())
            fail("malformed section header '" + line + "'");
        NormalizationConstants constants;
        constants.metric = cache.metric;
        constants.density = cache.density;
        constants.fingerprint = parse_hex_u64(fingerprint_hex);
        constants.c.resize(count);
        for (std::size_t i = 0; i < count; ++i) {
            if (!next_line(false)) fail("missing constant row");
            const std::size_t space = line.find(' ');
            if (space == std::string::npos) fail("malformed constant row '" + line + "'");
            std::size_t row = 0;
            const auto res =
                std::from_chars(line.data(), line.data() + space, row);
            if (res.ec != std::errc() || res.ptr != line.data() + space || row != i)
                fail("constant rows must be consecutive from 0");
            try {
                constants.c[i] = parse_double(std::string_view(line).substr(space + 1));
            } catch (const Error& e) {
                fail(e.what());
            }
        }
        if (!cache.by_section.emplace(section, std::move(constants)).second)
            fail("duplicate section " + section);
    }
    if (next_line(true)) fail("trailing content");
    return cache;
}

// ---------------------------------------------------------------------------
// neighbor table cache (binary)

inline std::uint64_t neighbor_fingerprint(const EmbeddingMatrix& refs, Metric metric) {
    std::uint64_t h = refs.content_digest();
    const std::uint8_t mb = metric == Metric::cosine ? 0 : 1;
    return fnv1a64(&mb, 1, h);
}

struct NeighborCache {
    NeighborTable table;
    std::uint64_t fingerprint = 0;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
}

inline void put_u64(std::string& out, std::uint64_t v) {
    char b[8];
    std::memcpy(b, &v, 8);
    out.append(b, 8);
}

}  // namespace detail

inline void write_neighbor_cache(const NeighborTable& table, std::uint64_t fingerprint,
                                 const std::filesystem::path& path) {
    const std::size_t n = table.size();
    if (n < 2) throw Error("write_neighbor_cache: empty table");
    std::string out = "SNNTBL01";
    out += static_cast<char>(table.metric == Metric::cosine ? 0 : 1);
    out.append(7, '\0');
    detail::put_u64(out, fingerprint);
    detail::put_u64(out, static_cast<std::uint64_t>(n));
    for (const auto& list : table.lists) {
        if (list.size() != n - 1)
            throw Error("write_neighbor_cache: malformed table");
        for (const auto& nb : list) {
            detail::put_u32(out, nb.index);
            detail::put_u64(out, std::bit_cast<std::uint64_t>(nb.distance));
        }
    }
    detail::write_file_bytes(path, out.data(), out.size());
}

inline NeighborCache read_neighbor_cache(const std::filesystem::path& path) {
    const auto bytes = detail::read_file_bytes(path);
    if (bytes.size() < 32) throw Error("neighbor cache: truncated header");
    if (std::memcmp(bytes.data(), "SNNTBL01", 8) != 0)
        throw Error("neighbor cache: bad magic");
    const std::uint8_t metric_byte = bytes[8];
    if (metric_byte > 1) throw Error("neighbor cache: bad metric byte");
    std::uint64_t fingerprint = 0, n = 0;
    std::memcpy(&fingerprint, bytes.data() + 16, 8);
    std::memcpy(&n, bytes.data() + 24, 8);
    if (n < 2) throw Error("neighbor cache: bad row count");
    const std::size_t expect = 32 + n * (n - 1) * 12;
    if (bytes.size() < expect) throw Error("neighbor cache: truncated payload");
    if (bytes.size() > expect) throw Error("neighbor cache: oversized payload");

    NeighborCache cache;
    cache.fingerprint = fingerprint;
    cache.table.metric = metric_byte == 0 ? Metric::cosine : Metric::squared_euclidean;
    cache.table.lists.resize(n);
    const unsigned char* p = bytes.data() + 32;
    for (std::uint64_t i = 0; i < n; ++i) {
        auto& list = cache.table.lists[i];
        list.resize(n - 1);
        for (std::uint64_t j = 0; j + 1 < n; ++j) {
            std::uint32_t index;
            std::uint64_t dist_bits;
            std::memcpy(&index, p, 4);
            std::memcpy(&dist_bits, p + 4, 8);
            p += 12;
            if (index >= n || index == i)
                throw Error("neighbor cache: invalid neighbor index");
            list[j] = {index, std::bit_cast<double>(dist_bits)};
        }
    }
    return cache;
}

// ---------------------------------------------------------------------------
// run manifest

struct RunManifest {
    std::string subcommand;
    std::uint64_t seed = 0;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    // path -> content digest; sorted by path on write
    std::map<std::string, std::uint64_t> inputs;
};

inline void write_run_manifest(const RunManifest& rm, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["tool"] = "scorenorm";
    j["version"] = std::string(tool_version);
    j["subcommand"] = rm.subcommand;
    j["seed"] = rm.seed;
    j["config"] = rm.config;
    nlohmann::ordered_json inputs = nlohmann::ordered_json::object();
    for (const auto& [p, digest] : rm.inputs) inputs[p] = hex_u64(digest);
    j["inputs"] = std::move(inputs);
    detail::write_file_text(path, j.dump(2) + "\n");
}

}  // namespace scorenorm
