#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "ash/errors.hpp"

namespace ash::detail {

// Little-endian primitives for the binary file formats.

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void write_u8(std::ostream& os, std::uint8_t v) { write_bytes(os, &v, 1); }

inline void write_u16(std::ostream& os, std::uint16_t v) {
    const std::uint8_t b[2] = {std::uint8_t(v), std::uint8_t(v >> 8)};
    write_bytes(os, b, 2);
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
    const std::uint8_t b[4] = {std::uint8_t(v), std::uint8_t(v >> 8), std::uint8_t(v >> 16),
                               std::uint8_t(v >> 24)};
    write_bytes(os, b, 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
    write_u32(os, static_cast<std::uint32_t>(v));
    write_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline void write_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(os, bits);
}

inline void read_bytes(std::istream& is, void* p, std::size_t n, const char* what) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n) {
        throw FormatError(FormatFault::Truncated,
                          std::string("file truncated while reading ") + what);
    }
}

inline std::uint8_t read_u8(std::istream& is, const char* what) {
    std::uint8_t v;
    read_bytes(is, &v, 1, what);
    return v;
}

inline std::uint16_t read_u16(std::istream& is, const char* what) {
    std::uint8_t b[2];
    read_bytes(is, b, 2, what);
    return std::uint16_t(b[0]) | std::uint16_t(b[1]) << 8;
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
    std::uint8_t b[4];
    read_bytes(is, b, 4, what);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

inline std::uint64_t read_u64(std::istream& is, const char* what) {
    const std::uint64_t lo = read_u32(is, what);
    const std::uint64_t hi = read_u32(is, what);
    return lo | hi << 32;
}

inline float read_f32(std::istream& is, const char* what) {
    const std::uint32_t bits = read_u32(is, what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace ash::detail
