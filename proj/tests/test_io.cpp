#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>

#include "scorenorm/io.hpp"
#include "scorenorm/rng.hpp"

using namespace scorenorm;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case, removed on destruction.
struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("scorenorm_io_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    fs::path operator/(const std::string& name) const { return path / name; }
};

std::vector<unsigned char> slurp(const fs::path& p) {
    return scorenorm::detail::read_file_bytes(p);
}

void spit(const fs::path& p, const std::vector<unsigned char>& bytes) {
    scorenorm::detail::write_file_bytes(p, bytes.data(), bytes.size());
}

// Minimal NPY v1.0 writer for crafting malformed headers.
std::vector<unsigned char> raw_npy(const std::string& dict,
                                   const std::vector<double>& payload,
                                   bool pad_to_64 = true) {
    std::string header = dict;
    std::size_t hlen = header.size();
    if (pad_to_64) {
        while ((10 + hlen) % 64 != 0) ++hlen;
        header.resize(hlen, ' ');
        header.back() = '\n';
    }
    std::vector<unsigned char> out;
    const char magic[] = "\x93NUMPY\x01\x00";
    out.insert(out.end(), magic, magic + 8);
    out.push_back(static_cast<unsigned char>(hlen & 0xff));
    out.push_back(static_cast<unsigned char>(hlen >> 8));
    out.insert(out.end(), header.begin(), header.end());
    const auto* bytes = reinterpret_cast<const unsigned char*>(payload.data());
    out.insert(out.end(), bytes, bytes + payload.size() * sizeof(double));
    return out;
}

}  // namespace

TEST_CASE("number formatting", "[io]") {
    SECTION("shortest round-trip decimals") {
        for (double v : {0.1, 1.0, -2.5, 1e-300, 123456.789, -0.0}) {
            CHECK(parse_double(format_double(v)) == v);
        }
        CHECK(format_double(1.0) == "1");
        CHECK(format_double(0.1) == "0.1");
        CHECK_THROWS_AS(format_double(std::numeric_limits<double>::infinity()), Error);
        CHECK_THROWS_AS(format_double(std::numeric_limits<double>::quiet_NaN()), Error);
    }

    SECTION("parse_double consumes the whole token") {
        CHECK(parse_double("2.5") == 2.5);
        CHECK(parse_double("-1e3") == -1000.0);
        CHECK_THROWS_AS(parse_double(""), Error);
        CHECK_THROWS_AS(parse_double("abc"), Error);
        CHECK_THROWS_AS(parse_double("1.5x"), Error);
        CHECK_THROWS_AS(parse_double("1e999"), Error);
    }

    SECTION("hex round trip") {
        CHECK(hex_u64(0) == "0000000000000000");
        CHECK(hex_u64(0xdeadbeefull) == "00000000deadbeef");
        CHECK(parse_hex_u64(hex_u64(0x123456789abcdef0ull)) == 0x123456789abcdef0ull);
        CHECK_THROWS_AS(parse_hex_u64("abc"), Error);
        CHECK_THROWS_AS(parse_hex_u64("000000000000000g"), Error);
    }
}

TEST_CASE("npy round trips", "[io][npy]") {
    TempDir dir;
    Rng rng(17);
    EmbeddingMatrix m(5, 3);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 3; ++j) m(i, j) = rng.gaussian() * 1e3;
    m(0, 0) = -0.0;
    m(1, 1) = 5e-324;  // smallest denormal
    m(2, 2) = 1.7976931348623157e308;

    SECTION("f8 is bit-identical") {
        write_npy(m, dir / "a.npy");
        const EmbeddingMatrix back = read_npy(dir / "a.npy");
        REQUIRE(back.rows() == m.rows());
        REQUIRE(back.dim() == m.dim());
        CHECK(back == m);
        CHECK(std::signbit(back(0, 0)));
    }

    SECTION("f4 widens exactly to the float-cast values") {
        write_npy(m, dir / "b.npy", NpyDtype::f4);
        const EmbeddingMatrix back = read_npy(dir / "b.npy");
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                CHECK(back(i, j) == static_cast<double>(static_cast<float>(m(i, j))));
    }

    SECTION("writer is byte-deterministic") {
        write_npy(m, dir / "c.npy");
        write_npy(m, dir / "d.npy");
        CHECK(slurp(dir / "c.npy") == slurp(dir / "d.npy"));
    }

    SECTION("header is 64-byte aligned and v1.0") {
        write_npy(m, dir / "e.npy");
        const auto bytes = slurp(dir / "e.npy");
        REQUIRE(bytes.size() > 10);
        CHECK(bytes[6] == 1);
        CHECK(bytes[7] == 0);
        const std::size_t hlen = bytes[8] | (bytes[9] << 8);
        CHECK((10 + hlen) % 64 == 0);
        CHECK(bytes[10 + hlen - 1] == '\n');
    }

    SECTION("empty matrices are rejected") {
        CHECK_THROWS_AS(write_npy(EmbeddingMatrix(), dir / "x.npy"), Error);
    }
}

TEST_CASE("npy reader validation", "[io][npy]") {
    TempDir dir;
    const EmbeddingMatrix m(2, 2, {1.0, 2.0, 3.0, 4.0});
    write_npy(m, dir / "good.npy");
    const auto good = slurp(dir / "good.npy");

    SECTION("bad magic") {
        auto bytes = good;
        bytes[0] = 'X';
        spit(dir / "bad.npy", bytes);
        CHECK_THROWS_WITH(read_npy(dir / "bad.npy"), "npy: bad magic");
    }

    SECTION("unsupported version") {
        auto bytes = good;
        bytes[6] = 2;
        spit(dir / "bad.npy", bytes);
        CHECK_THROWS_WITH(read_npy(dir / "bad.npy"), "npy: unsupported version 2.0");
    }

    SECTION("truncated header") {
        std::vector<unsigned char> bytes(good.begin(), good.begin() + 6);
        spit(dir / "bad.npy", bytes);
        CHECK_THROWS_WITH(read_npy(dir / "bad.npy"), "npy: truncated header");
    }

    SECTION("misaligned header") {
        const auto bytes = raw_npy(
            "{'descr': '<f8', 'fortran_order': False, 'shape': (2, 2), }\n",
            {1.0, 2.0, 3.0, 4.0}, /*pad_to_64=*/false);
        spit(dir / "bad.npy", bytes);
        CHECK_THROWS_WITH(read_npy(dir / "bad.npy"), "npy: malformed header (padding)");
    }

    SECTION("missing trailing newline") {
        auto bytes = good;
        const std::size_t hlen = bytes[8] | (bytes[9] << 8);
        bytes[10 + hlen - 1] = ' ';
        spit(dir / "bad.npy", bytes);
        CHECK_THROWS_AS(read_npy(dir / "bad.npy"), Error);
    }

    SECTION("fortran order") {
        const auto bytes = raw_npy(
            "{'descr': '<f8', 'fortran_order': True, 'shape': (2, 2), }",
            {1.0, 2.0, 3.0, 4.0});
        spit(dir / "bad.npy", bytes);
        CHECK_THROWS_WITH(read_npy(dir / "bad.npy"),
                          "npy: unsupported layout (fortran_order=True)");
    }

    SECTION("unsupported dtype") {
        const auto bytes = raw_npy(
            "{'descr': '<i8', 'fortran_order': False, 'shape': (2, 2), }",
            {1.0, 2.0, 3.0, 4.0});
        spit(dir / "bad.npy", bytes);
        CHECK_THROWS_WITH(read_npy(dir / "bad.npy"), "npy: unsupported dtype '<i8'");
    }

    SECTION("rank-1 arrays are rejected") {
        const auto bytes = raw_npy(
            "{'descr': '<f8', 'fortran_order': False, 'shape': (4,), }",
            {1.0, 2.0, 3.0, 4.0});
        spit(dir / "bad.npy", bytes);
        CHECK_THROWS_WITH(read_npy(dir / "bad.npy"), "npy: unsupported rank 1 (rank-2 only)");
    }

    SECTION("payload size must match the shape exactly") {
        auto shorter = good;
        shorter.resize(shorter.size() - 8);
        spit(dir / "short.npy", shorter);
        CHECK_THROWS_WITH(read_npy(dir / "short.npy"), "npy: truncated payload");

        auto longer = good;
        longer.insert(longer.end(), 8, 0);
        spit(dir / "long.npy", longer);
        CHECK_THROWS_WITH(read_npy(dir / "long.npy"), "npy: oversized payload");
    }

    SECTION("key order in the dict does not matter") {
        const auto bytes = raw_npy(
            "{'fortran_order': False, 'shape': (2, 2), 'descr': '<f8', }",
            {1.0, 2.0, 3.0, 4.0});
        spit(dir / "ok.npy", bytes);
        CHECK(read_npy(dir / "ok.npy") == m);
    }
}

TEST_CASE("manifest round trip", "[io][manifest]") {
    TempDir dir;
    const std::vector<SampleMeta> metas = {
        {"a0", "sec00", Domain::source, Split::train, Condition::normal},
        {"a1", "sec00", Domain::target, Split::test, Condition::anomaly},
        {"a2", "sec01", Domain::unknown, Split::test, Condition::normal},
    };

    SECTION("write then read is value-identical and byte-deterministic") {
        write_manifest(metas, dir / "m.json");
        CHECK(read_manifest(dir / "m.json") == metas);
        write_manifest(metas, dir / "m2.json");
        CHECK(slurp(dir / "m.json") == slurp(dir / "m2.json"));
    }

    SECTION("rows may appear in any order; the result is row-sorted") {
        const std::string shuffled = R"([
  {"id": "a1", "row": 1, "section": "s", "domain": "target", "split": "test", "condition": "anomaly"},
  {"id": "a0", "row": 0, "section": "s", "domain": "source", "split": "train", "condition": "normal"}
])";
        scorenorm::detail::write_file_text(dir / "s.json", shuffled);
        const auto back = read_manifest(dir / "s.json");
        REQUIRE(back.size() == 2);
        CHECK(back[0].id == "a0");
        CHECK(back[1].id == "a1");
    }

    SECTION("reader validation") {
        const auto expect_error = [&](const std::string& body, const std::string& what) {
            scorenorm::detail::write_file_text(dir / "bad.json", body);
            CHECK_THROWS_WITH(read_manifest(dir / "bad.json"),
                              Catch::Matchers::ContainsSubstring(what));
        };
        expect_error("{}", "top-level value must be an array");
        expect_error("[{\"id\": \"x\"}]", "missing field");
        expect_error(
            R"([{"id":"x","row":5,"section":"s","domain":"source","split":"train","condition":"normal"}])",
            "row 5 out of range");
        expect_error(
            R"([{"id":"x","row":0,"section":"s","domain":"source","split":"train","condition":"normal"},
                {"id":"y","row":0,"section":"s","domain":"source","split":"train","condition":"normal"}])",
            "duplicate row 0");
        expect_error(
            R"([{"id":"x","row":0,"section":"s","domain":"left","split":"train","condition":"normal"}])",
            "unknown domain: left");
        expect_error(
            R"([{"id":"x","row":0,"section":"s","domain":"source","split":"train","condition":"normal"},
                {"id":"x","row":1,"section":"s","domain":"source","split":"train","condition":"normal"}])",
            "duplicate id x");
        expect_error("not json", "parse error");
    }

    SECTION("load_dataset checks row agreement") {
        write_manifest(metas, dir / "m.json");
        write_npy(EmbeddingMatrix(2, 2, {1.0, 2.0, 3.0, 4.0}), dir / "e.npy");
        CHECK_THROWS_WITH(load_dataset(dir / "e.npy", dir / "m.json"),
                          "dataset assembly: manifest has 3 rows for 2 embedding rows");
    }
}

TEST_CASE("scores CSV", "[io][scores]") {
    TempDir dir;
    const ScoreVector scores = {{"q1", 0.125}, {"q2", -3.5}, {"q3", 1e-17}};

    SECTION("round trip and determinism") {
        write_scores(scores, dir / "s.csv");
        CHECK(read_scores(dir / "s.csv") == scores);
        write_scores(scores, dir / "s2.csv");
        CHECK(slurp(dir / "s.csv") == slurp(dir / "s2.csv"));
    }

    SECTION("windows line endings are tolerated") {
        scorenorm::detail::write_file_text(dir / "w.csv", "id,score\r\nq1,0.5\r\n");
        const auto back = read_scores(dir / "w.csv");
        REQUIRE(back.size() == 1);
        CHECK(back[0] == ScoreEntry{"q1", 0.5});
    }

    SECTION("writer validation") {
        CHECK_THROWS_AS(write_scores({{"a,b", 1.0}}, dir / "x.csv"), Error);
        CHECK_THROWS_AS(write_scores({{"", 1.0}}, dir / "x.csv"), Error);
        CHECK_THROWS_AS(write_scores({{"a", 1.0}, {"a", 2.0}}, dir / "x.csv"), Error);
        CHECK_THROWS_AS(
            write_scores({{"a", std::numeric_limits<double>::quiet_NaN()}}, dir / "x.csv"),
            Error);
    }

    SECTION("reader validation") {
        const auto expect_error = [&](const std::string& body, const std::string& what) {
            scorenorm::detail::write_file_text(dir / "bad.csv", body);
            CHECK_THROWS_WITH(read_scores(dir / "bad.csv"),
                              Catch::Matchers::ContainsSubstring(what));
        };
        expect_error("", "empty file");
        expect_error("id;score\nq1,1\n", "expected header");
        expect_error("id,score\nq1\n", "malformed row");
        expect_error("id,score\nq1,zzz\n", "invalid number");
        expect_error("id,score\nq1,1\nq1,2\n", "duplicate id q1");
    }
}

TEST_CASE("report round trip", "[io][report]") {
    TempDir dir;
    const std::vector<SampleMeta> metas = {
        {"r0", "s0", Domain::source, Split::train, Condition::normal},
        {"q0", "s0", Domain::source, Split::test, Condition::normal},
        {"q1", "s0", Domain::source, Split::test, Condition::anomaly},
    };
    const ScoreVector scores = {{"q0", 0.2}, {"q1", 0.9}};
    const EvaluationReport report = evaluate(metas, scores, 0.25, AggMode::arithmetic);

    write_report(report, dir / "r.json");
    const EvaluationReport back = read_report(dir / "r.json");

    CHECK(back.p == report.p);
    CHECK(back.mode == report.mode);
    CHECK(back.aggregate_value == report.aggregate_value);
    CHECK(back.aggregate_definition == report.aggregate_definition);
    CHECK(back.method_fingerprint == report.method_fingerprint);
    REQUIRE(back.sections.size() == 1);
    CHECK(back.sections[0].section == "s0");
    CHECK(back.sections[0].auc == report.sections[0].auc);
    CHECK(back.sections[0].pauc == report.sections[0].pauc);
    CHECK(back.sections[0].pauc_raw == report.sections[0].pauc_raw);
    CHECK(back.sections[0].auc_source == report.sections[0].auc_source);
    // No target-domain rows: the optional survives the trip as absent.
    CHECK(!report.sections[0].auc_target.has_value());
    CHECK(!back.sections[0].auc_target.has_value());
    CHECK(back.sections[0].counts == report.sections[0].counts);

    SECTION("writer is byte-deterministic") {
        write_report(report, dir / "r2.json");
        CHECK(slurp(dir / "r.json") == slurp(dir / "r2.json"));
    }

    SECTION("reader rejects missing fields") {
        scorenorm::detail::write_file_text(dir / "frag.json", "{\"p\": 0.1}");
        CHECK_THROWS_WITH(read_report(dir / "frag.json"),
                          Catch::Matchers::ContainsSubstring("missing or mistyped"));
    }
}

TEST_CASE("sweep table", "[io][sweep]") {
    TempDir dir;
    std::vector<SweepRow> rows(2);
    rows[0] = {1.0, 0.75, 0.9, 0.6};
    rows[1] = {2.0, 0.8, std::nullopt, std::nullopt};

    write_sweep_table(rows, "k", dir / "t.csv");
    const std::string text = scorenorm::detail::read_file_text(dir / "t.csv");
    CHECK(text ==
          "param,value,aggregate,auc_source,auc_target\n"
          "k,1,0.75,0.9,0.6\n"
          "k,2,0.8,,\n");

    CHECK_THROWS_AS(write_sweep_table(rows, "a,b", dir / "t.csv"), Error);
}

TEST_CASE("histogram", "[io][hist]") {
    TempDir dir;
    const ScoreVector scores = {{"a", 0.0}, {"b", 1.0}, {"c", 2.0}, {"d", 4.0}};

    SECTION("ungrouped") {
        write_histogram(scores, 2, dir / "h.csv");
        CHECK(scorenorm::detail::read_file_text(dir / "h.csv") ==
              "group,bin,lo,hi,count\n"
              "all,0,0,2,2\n"
              "all,1,2,4,2\n");
    }

    SECTION("grouped with shared bin edges") {
        const std::map<std::string, std::string> groups = {
            {"a", "g1"}, {"b", "g1"}, {"c", "g2"}, {"d", "g2"}};
        write_histogram(scores, 2, dir / "h.csv", &groups);
        CHECK(scorenorm::detail::read_file_text(dir / "h.csv") ==
              "group,bin,lo,hi,count\n"
              "g1,0,0,2,2\n"
              "g1,1,2,4,0\n"
              "g2,0,0,2,0\n"
              "g2,1,2,4,2\n");
    }

    SECTION("bin counts conserve the sample count") {
        Rng rng(77);
        ScoreVector random;
        for (int i = 0; i < 137; ++i)
            random.push_back({"s" + std::to_string(i), rng.uniform01() * 10.0 - 3.0});
        write_histogram(random, 9, dir / "h.csv");

        const std::string text = scorenorm::detail::read_file_text(dir / "h.csv");
        std::size_t total = 0, lines = 0, pos = text.find('\n') + 1;
        while (pos < text.size()) {
            const std::size_t eol = text.find('\n', pos);
            const std::string row = text.substr(pos, eol - pos);
            total += std::stoul(row.substr(row.rfind(',') + 1));
            ++lines;
            pos = eol + 1;
        }
        CHECK(lines == 9);
        CHECK(total == 137);
    }

    SECTION("degenerate range lands everything in bin 0") {
        const ScoreVector flat = {{"a", 5.0}, {"b", 5.0}};
        write_histogram(flat, 3, dir / "h.csv");
        const std::string text = scorenorm::detail::read_file_text(dir / "h.csv");
        CHECK(text.find("all,0,5,5,2\n") != std::string::npos);
    }

    SECTION("validation") {
        CHECK_THROWS_AS(write_histogram(scores, 0, dir / "h.csv"), Error);
        CHECK_THROWS_AS(write_histogram({}, 2, dir / "h.csv"), Error);
        const std::map<std::string, std::string> partial = {{"a", "g1"}};
        CHECK_THROWS_WITH(write_histogram(scores, 2, dir / "h.csv", &partial),
                          "write_histogram: no group for id b");
    }
}

TEST_CASE("constants cache round trip", "[io][constants]") {
    TempDir dir;
    const EmbeddingMatrix refs_a(3, 1, {0.0, 1.0, 3.0});
    const EmbeddingMatrix refs_b(4, 1, {0.0, 2.0, 5.0, 9.0});

    ConstantsCache cache;
    cache.metric = Metric::squared_euclidean;
    cache.density = {DensityKind::knn, 2, 0.0};
    cache.by_section["secA"] = precompute_constants(refs_a, cache.metric, cache.density);
    cache.by_section["secB"] = precompute_constants(refs_b, cache.metric, cache.density);

    SECTION("values, fingerprints, and config survive") {
        write_constants_cache(cache, dir / "c.txt");
        const ConstantsCache back = read_constants_cache(dir / "c.txt");
        CHECK(back.metric == cache.metric);
        CHECK(back.density == cache.density);
        REQUIRE(back.by_section.size() == 2);
        CHECK(back.by_section.at("secA").c == cache.by_section.at("secA").c);
        CHECK(back.by_section.at("secA").fingerprint ==
              cache.by_section.at("secA").fingerprint);
        CHECK(back.by_section.at("secB").c == cache.by_section.at("secB").c);

        // Round-tripped constants still attach to the original references.
        ReferenceIndex idx = build_reference_index(refs_a, Metric::squared_euclidean);
        CHECK_NOTHROW(attach_constants(idx, back.by_section.at("secA")));

        write_constants_cache(cache, dir / "c2.txt");
        CHECK(slurp(dir / "c.txt") == slurp(dir / "c2.txt"));
    }

    SECTION("gwrp parameterization round trips r exactly") {
        ConstantsCache g;
        g.metric = Metric::cosine;
        g.density = {DensityKind::gwrp, 1, 0.3};
        g.by_section["s"] = precompute_constants(
            EmbeddingMatrix(3, 2, {1.0, 0.0, 0.0, 1.0, 1.0, 1.0}), g.metric, g.density);
        write_constants_cache(g, dir / "g.txt");
        const ConstantsCache back = read_constants_cache(dir / "g.txt");
        CHECK(back.density.kind == DensityKind::gwrp);
        CHECK(back.density.r == 0.3);
    }

    SECTION("reader validation") {
        const auto expect_error = [&](const std::string& body, const std::string& what) {
            scorenorm::detail::write_file_text(dir / "bad.txt", body);
            CHECK_THROWS_WITH(read_constants_cache(dir / "bad.txt"),
                              Catch::Matchers::ContainsSubstring(what));
        };
        expect_error("garbage\n", "bad file signature");
        expect_error("scorenorm-constants v1\nmetric cosine\ndensity knn\nr 0.5\n",
                     "expected 'k'");
        expect_error(
            "scorenorm-constants v1\nmetric cosine\ndensity knn\nk 1\nsections 1\n\n"
            "section s fingerprint 0000000000000000 count 2\n0 1.5\n5 2.5\n",
            "consecutive");
        expect_error(
            "scorenorm-constants v1\nmetric cosine\ndensity knn\nk 1\nsections 1\n\n"
            "section s fingerprint 0000000000000000 count 1\n0 1.5\nleftover\n",
            "trailing content");
    }
}

TEST_CASE("neighbor cache", "[io][neighbors]") {
    TempDir dir;
    Rng rng(23);
    EmbeddingMatrix refs(6, 3);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 3; ++j) refs(i, j) = rng.gaussian() + 0.2;

    const NeighborTable table = build_neighbor_table(refs, Metric::cosine);
    const std::uint64_t fp = neighbor_fingerprint(refs, Metric::cosine);
    write_neighbor_cache(table, fp, dir / "n.bin");

    SECTION("round trip preserves lists and fingerprint") {
        const NeighborCache cache = read_neighbor_cache(dir / "n.bin");
        CHECK(cache.fingerprint == fp);
        CHECK(cache.table.metric == Metric::cosine);
        REQUIRE(cache.table.size() == table.size());
        for (std::size_t i = 0; i < table.size(); ++i)
            CHECK(cache.table.lists[i] == table.lists[i]);
    }

    SECTION("fingerprint distinguishes metric and content") {
        CHECK(fp != neighbor_fingerprint(refs, Metric::squared_euclidean));
        EmbeddingMatrix other = refs;
        other(0, 0) += 1.0;
        CHECK(fp != neighbor_fingerprint(other, Metric::cosine));
    }

    SECTION("reader validation") {
        auto bytes = slurp(dir / "n.bin");

        auto bad_magic = bytes;
        bad_magic[0] = 'x';
        spit(dir / "bad.bin", bad_magic);
        CHECK_THROWS_WITH(read_neighbor_cache(dir / "bad.bin"), "neighbor cache: bad magic");

        auto bad_metric = bytes;
        bad_metric[8] = 9;
        spit(dir / "bad.bin", bad_metric);
        CHECK_THROWS_WITH(read_neighbor_cache(dir / "bad.bin"),
                          "neighbor cache: bad metric byte");

        auto truncated = bytes;
        truncated.resize(truncated.size() - 1);
        spit(dir / "bad.bin", truncated);
        CHECK_THROWS_WITH(read_neighbor_cache(dir / "bad.bin"),
                          "neighbor cache: truncated payload");

        auto oversized = bytes;
        oversized.push_back(0);
        spit(dir / "bad.bin", oversized);
        CHECK_THROWS_WITH(read_neighbor_cache(dir / "bad.bin"),
                          "neighbor cache: oversized payload");

        auto bad_index = bytes;
        bad_index[32] = 0xff;
        bad_index[33] = 0xff;
        bad_index[34] = 0xff;
        bad_index[35] = 0xff;
        spit(dir / "bad.bin", bad_index);
        CHECK_THROWS_WITH(read_neighbor_cache(dir / "bad.bin"),
                          "neighbor cache: invalid neighbor index");
    }
}

TEST_CASE("run manifest", "[io]") {
    TempDir dir;
    RunManifest rm;
    rm.subcommand = "score";
    rm.seed = 42;
    rm.config["method"] = "baseline_nn";
    rm.inputs["b.npy"] = 0x1234;
    rm.inputs["a.json"] = 0xabcd;

    write_run_manifest(rm, dir / "run.json");
    const auto j =
        nlohmann::ordered_json::parse(scorenorm::detail::read_file_text(dir / "run.json"));
    CHECK(j.at("tool") == "scorenorm");
    CHECK(j.at("version") == std::string(tool_version));
    CHECK(j.at("subcommand") == "score");
    CHECK(j.at("seed") == 42);
    CHECK(j.at("config").at("method") == "baseline_nn");
    CHECK(j.at("inputs").at("a.json") == "000000000000abcd");
    CHECK(j.at("inputs").at("b.npy") == "0000000000001234");
}

TEST_CASE("file helpers", "[io]") {
    TempDir dir;
    scorenorm::detail::write_file_text(dir / "f.txt", "hello");
    CHECK(file_digest(dir / "f.txt") == fnv1a64("hello"));
    CHECK_THROWS_AS(scorenorm::detail::read_file_bytes(dir / "missing.txt"), Error);
}
