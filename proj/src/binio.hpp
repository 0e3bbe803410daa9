#pragma once

// Internal little-endian buffer helpers shared by the SYNW/SYNB writers.

#include <bit>
#include <cstdint>
#include <string>

#include "syntrans/error.hpp"

namespace syntrans::detail {

inline void put_u8(std::string& buf, std::uint8_t v) {
    buf.push_back(static_cast<char>(v));
}

inline void put_u32(std::string& buf, std::uint32_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
    buf.push_back(static_cast<char>((v >> 16) & 0xff));
    buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_f32(std::string& buf, float f) {
    put_u32(buf, std::bit_cast<std::uint32_t>(f));
}

class ByteReader {
public:
    ByteReader(const char* data, std::size_t size, const char* what)
        : data_(data), size_(size), what_(what) {}

    std::uint8_t u8() {
        require(1);
        return static_cast<std::uint8_t>(data_[pos_++]);
    }

    std::uint32_t u32() {
        require(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) {
            v = (v << 8) | static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)]);
        }
        pos_ += 4;
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }

    std::string str(std::size_t n) {
        require(n);
        std::string s(data_ + pos_, n);
        pos_ += n;
        return s;
    }

    bool at_end() const { return pos_ == size_; }

private:
    void require(std::size_t n) const {
        if (pos_ + n > size_) {
            throw Error(Errc::CorruptPayload, std::string(what_) + " truncated");
        }
    }

    const char* data_;
    std::size_t size_;
    const char* what_;
    std::size_t pos_ = 0;
};

} // namespace syntrans::detail
