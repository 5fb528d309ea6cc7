#pragma once

// Little-endian encode/decode helpers for the checkpoint and dataset files.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "isdml/errors.hpp"

namespace isdml::binary {

class Writer {
public:
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

    template <class T>
    void le(T value) {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
        static_assert(sizeof(T) == sizeof(U));
        const U u = std::bit_cast<U>(value);
        for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
    }

    const std::vector<char>& buffer() const { return buf_; }

private:
    std::vector<char> buf_;
};

class Reader {
public:
    Reader(const std::vector<char>& data, std::string what) : data_(data), what_(std::move(what)) {}

    void expect_bytes(std::string_view s) {
        need(s.size());
        if (std::memcmp(data_.data() + pos_, s.data(), s.size()) != 0) throw FormatError(what_ + ": bad magic");
        pos_ += s.size();
    }

    template <class T>
    T le() {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
        need(sizeof(U));
        U u = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            u |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += sizeof(U);
        return std::bit_cast<T>(u);
    }

    std::size_t remaining() const { return data_.size() - pos_; }

    void expect_end() const {
        if (pos_ != data_.size()) throw FormatError(what_ + ": trailing bytes after payload");
    }

    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw FormatError(what_ + ": truncated file");
    }

private:
    const std::vector<char>& data_;
    std::string what_;
    std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<char>& data);

}  // namespace isdml::binary
