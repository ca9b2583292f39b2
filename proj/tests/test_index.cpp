#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "ash/index.hpp"
#include "ash/rng.hpp"

using namespace ash;

namespace {

HashCode bits(const std::vector<int>& b) { return HashCode::from_bits(b); }

HashRecord record(std::uint64_t id, std::uint32_t label, std::vector<float> emb) {
    HashRecord r;
    r.id = id;
    r.label = label;
    std::vector<int> b;
    for (const float v : emb) b.push_back(v > 0.5f ? 1 : 0);
    r.code = bits(b);
    r.embedding = std::move(emb);
    return r;
}

std::vector<HashRecord> random_records(int count, int k, std::uint64_t seed) {
    CounterRng rng(seed);
    std::vector<HashRecord> records;
    records.reserve(count);
    for (int i = 0; i < count; ++i) {
        std::vector<float> emb(static_cast<std::size_t>(k));
        for (auto& v : emb) v = static_cast<float>(rng.next_double());
        records.push_back(record(static_cast<std::uint64_t>(i),
                                 static_cast<std::uint32_t>(rng.next_below(7)), std::move(emb)));
    }
    return records;
}

// Independent exhaustive scan with per-bit Hamming and the same tie rule.
std::vector<std::pair<std::uint64_t, double>> oracle_topk(const std::vector<HashRecord>& records,
                                                          const HashRecord& probe, int k,
                                                          IndexMode mode) {
    std::vector<std::pair<std::uint64_t, double>> all;
    for (const auto& r : records) {
        double d = 0.0;
        if (mode == IndexMode::Hamming) {
            int count = 0;
            for (int b = 0; b < r.code.k(); ++b) {
                if (r.code.bit(b) != probe.code.bit(b)) ++count;
            }
            d = count;
        } else {
            for (std::size_t i = 0; i < r.embedding.size(); ++i) {
                const double diff = static_cast<double>(r.embedding[i]) - probe.embedding[i];
                d += diff * diff;
            }
            d = std::sqrt(d);
        }
        all.emplace_back(r.id, d);
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second < b.second : a.first < b.first;
    });
    all.resize(std::min<std::size_t>(all.size(), static_cast<std::size_t>(k)));
    return all;
}

}  // namespace

TEST_CASE("hamming distance analytic cases") {
    CHECK(hamming_distance(bits({0, 0, 0}), bits({0, 0, 0})) == 0);
    CHECK(hamming_distance(bits({1, 0, 1, 0}), bits({0, 1, 1, 0})) == 2);

    std::vector<int> x(12), nx(12);
    CounterRng rng(5);
    for (int i = 0; i < 12; ++i) {
        x[i] = static_cast<int>(rng.next_below(2));
        nx[i] = 1 - x[i];
    }
    CHECK(hamming_distance(bits(x), bits(nx)) == 12);
    CHECK_THROWS_AS(hamming_distance(bits({1, 0}), bits({1, 0, 1})), ShapeError);
}

TEST_CASE("hash codes pack 64 bits per word with zero padding") {
    std::vector<int> b(70, 0);
    b[0] = b[64] = b[69] = 1;
    const auto code = bits(b);
    REQUIRE(code.words().size() == 2);
    CHECK(code.popcount() == 3);
    CHECK(code.bit(64));
    CHECK_FALSE(code.bit(65));
    // Padding bits beyond k stay zero.
    CHECK((code.words()[1] >> 6) == 0);
}

TEST_CASE("index build validations") {
    auto records = random_records(3, 8, 1);
    CHECK(CodeIndex::build(records, IndexMode::L2).size() == 3);

    CHECK_THROWS_AS(CodeIndex::build({}, IndexMode::L2), DataError);

    auto dup = records;
    dup[2].id = dup[0].id;
    CHECK_THROWS_AS(CodeIndex::build(dup, IndexMode::L2), DataError);

    auto mixed = records;
    mixed[1] = record(9, 0, {0.5f, 0.5f});
    CHECK_THROWS_AS(CodeIndex::build(mixed, IndexMode::L2), ShapeError);
}

TEST_CASE("stored probe is its own nearest neighbor") {
    const auto records = random_records(20, 8, 2);
    const auto index = CodeIndex::build(records, IndexMode::L2);
    const auto results = index.query_topk(records[7].embedding, 5);
    REQUIRE(results.size() == 5);
    CHECK(results[0].first == records[7].id);
    CHECK(results[0].second == 0.0);

    const auto hamming = CodeIndex::build(records, IndexMode::Hamming);
    const auto hres = hamming.query_topk(records[7].code, 1);
    CHECK(hres[0].second == 0.0);
}

TEST_CASE("k larger than the gallery returns the whole gallery") {
    const auto records = random_records(4, 6, 3);
    const auto index = CodeIndex::build(records, IndexMode::L2);
    CHECK(index.query_topk(records[0].embedding, 100).size() == 4);
}

TEST_CASE("probe dimension mismatches are rejected") {
    const auto records = random_records(5, 6, 4);
    const auto index = CodeIndex::build(records, IndexMode::L2);
    CHECK_THROWS_AS(index.query_topk(std::vector<float>(5, 0.f), 3), ShapeError);
    const auto hamming = CodeIndex::build(records, IndexMode::Hamming);
    CHECK_THROWS_AS(hamming.query_topk(HashCode(4), 3), ShapeError);
}

TEST_CASE("query matches the exhaustive linear-scan oracle in both modes") {
    const auto records = random_records(500, 16, 10);
    const auto probes = random_records(50, 16, 11);
    for (const auto mode : {IndexMode::Hamming, IndexMode::L2}) {
        const auto index = CodeIndex::build(records, mode);
        for (const auto& probe : probes) {
            const auto got = index.query_topk(probe, 10);
            const auto want = oracle_topk(records, probe, 10, mode);
            REQUIRE(got.size() == want.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                CHECK(got[i].first == want[i].first);
                CHECK(got[i].second == doctest::Approx(want[i].second).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("distance axioms hold on returned values") {
    CounterRng rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<int> a(16), b(16), c(16);
        for (int i = 0; i < 16; ++i) {
            a[i] = static_cast<int>(rng.next_below(2));
            b[i] = static_cast<int>(rng.next_below(2));
            c[i] = static_cast<int>(rng.next_below(2));
        }
        const auto ca = bits(a), cb = bits(b), cc = bits(c);
        CHECK(hamming_distance(ca, ca) == 0);
        CHECK(hamming_distance(ca, cb) == hamming_distance(cb, ca));
        CHECK(hamming_distance(ca, cc) <=
              hamming_distance(ca, cb) + hamming_distance(cb, cc));
    }
}

TEST_CASE("returned distances never decrease") {
    const auto records = random_records(60, 12, 22);
    for (const auto mode : {IndexMode::Hamming, IndexMode::L2}) {
        const auto index = CodeIndex::build(records, mode);
        const auto probe = random_records(1, 12, 23)[0];
        const auto results = index.query_topk(probe, 60);
        for (std::size_t i = 1; i < results.size(); ++i) {
            CHECK(results[i].second >= results[i - 1].second);
        }
    }
}

TEST_CASE("hamming equals squared euclidean on bit vectors") {
    CounterRng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<int> a(24), b(24);
        std::vector<float> fa(24), fb(24);
        for (int i = 0; i < 24; ++i) {
            a[i] = static_cast<int>(rng.next_below(2));
            b[i] = static_cast<int>(rng.next_below(2));
            fa[i] = static_cast<float>(a[i]);
            fb[i] = static_cast<float>(b[i]);
        }
        const double l2 = l2_distance(fa, fb);
        CHECK(static_cast<double>(hamming_distance(bits(a), bits(b))) ==
              doctest::Approx(l2 * l2).epsilon(1e-9));
    }
}

TEST_CASE("identical probes give identical result lists") {
    const auto records = random_records(100, 12, 41);
    const auto index = CodeIndex::build(records, IndexMode::L2);
    const auto probe = random_records(1, 12, 42)[0];
    CHECK(index.query_topk(probe, 10) == index.query_topk(probe, 10));
}

TEST_CASE("codes file round trip") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "ash_index_tests";
    fs::create_directories(dir);
    const auto path = dir / "codes.ashc";

    const auto records = random_records(25, 12, 51);
    write_codes_file(path, records, 12);
    const auto [k, loaded] = read_codes_file(path);
    CHECK(k == 12);
    REQUIRE(loaded.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(loaded[i].id == records[i].id);
        CHECK(loaded[i].label == records[i].label);
        CHECK(loaded[i].embedding == records[i].embedding);
        CHECK(loaded[i].code == records[i].code);
    }

    // Distinct faults.
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.write("XXXX", 4);
    }
    CHECK_THROWS_AS(read_codes_file(path), FormatError);
    write_codes_file(path, records, 12);
    fs::resize_file(path, fs::file_size(path) - 7);
    try {
        read_codes_file(path);
        FAIL_CHECK("expected truncation fault");
    } catch (const FormatError& e) {
        CHECK(e.fault() == FormatFault::Truncated);
    }
}
