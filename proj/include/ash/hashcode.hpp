#pragma once

#include <bit>
#include <cstdint>
#include <vector>

#include "ash/errors.hpp"

namespace ash {

// K-bit binary code packed 64 bits per word; padding bits stay zero.
class HashCode {
public:
    HashCode() = default;
    explicit HashCode(int k) : k_(k), words_((k + 63) / 64, 0) {
        if (k < 1) throw ShapeError("hash code needs at least one bit");
    }

    static HashCode from_bits(const std::vector<int>& bits) {
        HashCode code(static_cast<int>(bits.size()));
        for (std::size_t i = 0; i < bits.size(); ++i) {
            if (bits[i]) code.words_[i >> 6] |= 1ull << (i & 63);
        }
        return code;
    }

    int k() const { return k_; }

    bool bit(int i) const {
        if (i < 0 || i >= k_) throw ContractError("hash code bit index out of range");
        return (words_[i >> 6] >> (i & 63)) & 1ull;
    }

    void set_bit(int i, bool v) {
        if (i < 0 || i >= k_) throw ContractError("hash code bit index out of range");
        const std::uint64_t mask = 1ull << (i & 63);
        if (v) {
            words_[i >> 6] |= mask;
        } else {
            words_[i >> 6] &= ~mask;
        }
    }

    int popcount() const {
        int n = 0;
        for (const auto w : words_) n += std::popcount(w);
        return n;
    }

    const std::vector<std::uint64_t>& words() const { return words_; }

    bool operator==(const HashCode&) const = default;

private:
    int k_ = 0;
    std::vector<std::uint64_t> words_;
};

// Number of differing bits, via packed-word XOR + popcount.
inline int hamming_distance(const HashCode& a, const HashCode& b) {
    if (a.k() != b.k()) throw ShapeError("hamming distance needs equal-length codes");
    int n = 0;
    for (std::size_t i = 0; i < a.words().size(); ++i) {
        n += std::popcount(a.words()[i] ^ b.words()[i]);
    }
    return n;
}

}  // namespace ash
