#pragma once

// Little-endian byte packing helpers shared by the binary file formats.

#include <cstdint>
#include <cstring>
#include <string>

#include "mmm/core/error.hpp"

namespace mmm::bytes {

inline void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u32(out, bits);
}

inline void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u64(out, bits);
}

// Cursor over an in-memory file image. Every read is bounds-checked and
// failures carry the offset, which is what format errors must name.
class Reader {
public:
    Reader(const std::string& bytes, std::string what)
        : bytes_(bytes), what_(std::move(what)) {}

    std::size_t offset() const { return offset_; }
    std::size_t remaining() const { return bytes_.size() - offset_; }

    std::uint8_t u8(const char* field) {
        need(1, field);
        return static_cast<std::uint8_t>(bytes_[offset_++]);
    }

    std::uint16_t u16(const char* field) {
        need(2, field);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i)
            v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes_[offset_ + i])) << (8 * i);
        offset_ += 2;
        return v;
    }

    std::uint32_t u32(const char* field) {
        need(4, field);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[offset_ + i])) << (8 * i);
        offset_ += 4;
        return v;
    }

    std::uint64_t u64(const char* field) {
        need(8, field);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[offset_ + i])) << (8 * i);
        offset_ += 8;
        return v;
    }

    float f32(const char* field) {
        const std::uint32_t bits = u32(field);
        float v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }

    double f64(const char* field) {
        const std::uint64_t bits = u64(field);
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }

    std::string str(std::size_t n, const char* field) {
        need(n, field);
        std::string s = bytes_.substr(offset_, n);
        offset_ += n;
        return s;
    }

    void expect_end() const {
        if (offset_ != bytes_.size())
            throw FormatError(what_ + ": " + std::to_string(bytes_.size() - offset_) +
                              " trailing bytes at offset " + std::to_string(offset_));
    }

private:
    void need(std::size_t n, const char* field) const {
        if (offset_ + n > bytes_.size())
            throw FormatError(what_ + ": truncated reading " + field + " at offset " +
                              std::to_string(offset_));
    }

    const std::string& bytes_;
    std::string what_;
    std::size_t offset_ = 0;
};

} // namespace mmm::bytes
