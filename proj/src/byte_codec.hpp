#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "radarfuse/error.hpp"

namespace radarfuse::detail {

class ByteWriter {
   public:
    void magic(const char (&tag)[5]) { bytes_.insert(bytes_.end(), tag, tag + 4); }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

    std::vector<std::uint8_t> take() { return std::move(bytes_); }
    void reserve(std::size_t n) { bytes_.reserve(n); }

   private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
   public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    void expect_magic(const char (&tag)[5]) {
        require(4, "magic");
        if (std::memcmp(bytes_.data() + pos_, tag, 4) != 0) {
            throw ParseError(pos_, std::string("magic mismatch, expected \"") + tag + "\"");
        }
        pos_ += 4;
    }

    // Fails up front when `count` more bytes are not available.
    void require(std::size_t count, const std::string& what) const {
        if (remaining() < count) {
            throw ParseError(pos_, "truncated " + what + ": expected " + std::to_string(count) +
                                       " bytes, available " + std::to_string(remaining()));
        }
    }

    std::uint32_t u32() {
        require(4, "u32 field");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }

   private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace radarfuse::detail
