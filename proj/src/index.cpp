#include "ash/index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "binio.hpp"

namespace ash {

CodeIndex CodeIndex::build(std::vector<HashRecord> records, IndexMode mode) {
    if (records.empty()) throw DataError("cannot build an index from zero records");
    CodeIndex index;
    index.mode_ = mode;
    index.k_ = static_cast<int>(records.front().embedding.size());
    if (index.k_ < 1 || records.front().code.k() != index.k_) {
        throw ShapeError("record embeddings and codes must share a positive K");
    }
    index.by_id_.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (static_cast<int>(r.embedding.size()) != index.k_ || r.code.k() != index.k_) {
            throw ShapeError("mixed code lengths in index input");
        }
        if (!index.by_id_.emplace(r.id, i).second) {
            throw DataError("duplicate record id " + std::to_string(r.id));
        }
    }
    index.records_ = std::move(records);
    return index;
}

std::uint32_t CodeIndex::label_of(std::uint64_t id) const {
    const auto it = by_id_.find(id);
    if (it == by_id_.end()) throw DataError("unknown record id " + std::to_string(id));
    return records_[it->second].label;
}

double l2_distance(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) throw ShapeError("embedding lengths differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return std::sqrt(acc);
}

std::vector<std::pair<std::uint64_t, double>> CodeIndex::finish(
    std::vector<std::pair<double, std::uint64_t>>&& scored, int k) const {
    std::sort(scored.begin(), scored.end());
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), scored.size());
    std::vector<std::pair<std::uint64_t, double>> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.emplace_back(scored[i].second, scored[i].first);
    return out;
}

std::vector<std::pair<std::uint64_t, double>> CodeIndex::query_topk(const HashCode& probe,
                                                                    int k) const {
    if (k < 1) throw ContractError("k must be >= 1");
    if (mode_ != IndexMode::Hamming) throw ContractError("index was built in L2 mode");
    if (probe.k() != k_) throw ShapeError("probe code length does not match index K");
    std::vector<std::pair<double, std::uint64_t>> scored;
    scored.reserve(records_.size());
    for (const auto& r : records_) {
        scored.emplace_back(static_cast<double>(hamming_distance(probe, r.code)), r.id);
    }
    return finish(std::move(scored), k);
}

std::vector<std::pair<std::uint64_t, double>> CodeIndex::query_topk(
    const std::vector<float>& probe, int k) const {
    if (k < 1) throw ContractError("k must be >= 1");
    if (mode_ != IndexMode::L2) throw ContractError("index was built in Hamming mode");
    if (static_cast<int>(probe.size()) != k_) {
        throw ShapeError("probe embedding length does not match index K");
    }
    std::vector<std::pair<double, std::uint64_t>> scored;
    scored.reserve(records_.size());
    for (const auto& r : records_) scored.emplace_back(l2_distance(probe, r.embedding), r.id);
    return finish(std::move(scored), k);
}

std::vector<std::pair<std::uint64_t, double>> CodeIndex::query_topk(const HashRecord& probe,
                                                                    int k) const {
    return mode_ == IndexMode::Hamming ? query_topk(probe.code, k)
                                       : query_topk(probe.embedding, k);
}

// ---- codes file ----

namespace {
constexpr char kCodesMagic[4] = {'A', 'S', 'H', 'C'};
}

void write_codes_file(const std::filesystem::path& path, const std::vector<HashRecord>& records,
                      int k) {
    if (k < 1) throw ShapeError("k must be >= 1");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open codes file for writing: " + path.string());
    detail::write_bytes(os, kCodesMagic, 4);
    detail::write_u32(os, kCodesVersion);
    detail::write_u32(os, static_cast<std::uint32_t>(k));
    detail::write_u64(os, records.size());
    const std::size_t words = (static_cast<std::size_t>(k) + 63) / 64;
    for (const auto& r : records) {
        if (static_cast<int>(r.embedding.size()) != k || r.code.k() != k) {
            throw ShapeError("record K does not match codes file K");
        }
        detail::write_u64(os, r.id);
        detail::write_u32(os, r.label);
        for (const float v : r.embedding) detail::write_f32(os, v);
        for (std::size_t w = 0; w < words; ++w) detail::write_u64(os, r.code.words()[w]);
    }
    if (!os) throw IoError("write failed: " + path.string());
}

std::pair<int, std::vector<HashRecord>> read_codes_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open codes file: " + path.string());
    char magic[4];
    detail::read_bytes(is, magic, 4, "magic");
    if (std::memcmp(magic, kCodesMagic, 4) != 0) {
        throw FormatError(FormatFault::BadMagic, "bad magic in " + path.string());
    }
    const auto version = detail::read_u32(is, "version");
    if (version != kCodesVersion) {
        throw FormatError(FormatFault::BadVersion,
                          "unsupported codes file version " + std::to_string(version));
    }
    const int k = static_cast<int>(detail::read_u32(is, "k"));
    if (k < 1) throw FormatError(FormatFault::Mismatch, "codes file has non-positive K");
    const auto count = detail::read_u64(is, "count");
    const std::size_t words = (static_cast<std::size_t>(k) + 63) / 64;

    std::vector<HashRecord> records;
    records.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        HashRecord r;
        r.id = detail::read_u64(is, "record id");
        r.label = detail::read_u32(is, "record label");
        r.embedding.resize(static_cast<std::size_t>(k));
        for (auto& v : r.embedding) v = detail::read_f32(is, "embedding");
        r.code = HashCode(k);
        for (std::size_t w = 0; w < words; ++w) {
            const auto word = detail::read_u64(is, "code words");
            for (int b = 0; b < 64; ++b) {
                const int bit = static_cast<int>(w) * 64 + b;
                if (bit < k && ((word >> b) & 1ull)) r.code.set_bit(bit, true);
            }
        }
        records.push_back(std::move(r));
    }
    return {k, std::move(records)};
}

}  // namespace ash
