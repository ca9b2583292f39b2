#pragma once

#include <cstdint>
#include <filesystem>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ash/hashcode.hpp"

namespace ash {

struct HashRecord {
    std::uint64_t id;
    std::uint32_t label;
    std::vector<float> embedding;  // K continuous code values
    HashCode code;                 // K binarized bits
};

enum class IndexMode { Hamming, L2 };

// Exhaustive-scan gallery index over fixed-K records. Immutable after build;
// safe for concurrent queries.
class CodeIndex {
public:
    static CodeIndex build(std::vector<HashRecord> records, IndexMode mode);

    std::size_t size() const { return records_.size(); }
    int k() const { return k_; }
    IndexMode mode() const { return mode_; }
    const std::vector<HashRecord>& records() const { return records_; }
    std::uint32_t label_of(std::uint64_t id) const;
    bool contains(std::uint64_t id) const { return by_id_.count(id) > 0; }

    // min(k, size) nearest records by ascending distance, distance ties broken
    // by ascending id. Hamming mode uses the packed codes, L2 the embeddings.
    std::vector<std::pair<std::uint64_t, double>> query_topk(const HashCode& probe, int k) const;
    std::vector<std::pair<std::uint64_t, double>> query_topk(const std::vector<float>& probe,
                                                             int k) const;
    std::vector<std::pair<std::uint64_t, double>> query_topk(const HashRecord& probe,
                                                             int k) const;

private:
    std::vector<HashRecord> records_;
    std::unordered_map<std::uint64_t, std::size_t> by_id_;
    int k_ = 0;
    IndexMode mode_ = IndexMode::L2;

    std::vector<std::pair<std::uint64_t, double>> finish(std::vector<std::pair<double, std::uint64_t>>&& scored,
                                                         int k) const;
};

double l2_distance(const std::vector<float>& a, const std::vector<float>& b);

// Codes file: "ASHC" | version u32 | K u32 | count u64 | per record:
// id u64, label u32, K f32 embeddings, ceil(K/64) u64 packed bit words.
inline constexpr std::uint32_t kCodesVersion = 1;

void write_codes_file(const std::filesystem::path& path, const std::vector<HashRecord>& records,
                      int k);
std::pair<int, std::vector<HashRecord>> read_codes_file(const std::filesystem::path& path);

}  // namespace ash
