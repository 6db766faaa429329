#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace softsphere::binary {

/// Append-only little-endian byte writer.
class Writer {
public:
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::byte*>(data);
        buffer_.insert(buffer_.end(), p, p + n);
    }
    void u32(std::uint32_t v) { le(v); }
    void u64(std::uint64_t v) { le(v); }
    void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
    void blob(std::span<const std::byte> b) {
        u64(b.size());
        buffer_.insert(buffer_.end(), b.begin(), b.end());
    }

    std::vector<std::byte>& buffer() noexcept { return buffer_; }

private:
    template <typename U>
    void le(U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i) buffer_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFF));
    }
    std::vector<std::byte> buffer_;
};

/// Bounds-checked little-endian reader; throws FormatError past the end.
class Reader {
public:
    explicit Reader(std::span<const std::byte> data) : data_(data) {}

    void bytes(void* out, std::size_t n);
    std::uint32_t u32() { return le<std::uint32_t>(); }
    std::uint64_t u64() { return le<std::uint64_t>(); }
    float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
    double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
    std::span<const std::byte> blob();

    std::size_t remaining() const noexcept { return data_.size() - pos_; }

private:
    template <typename U>
    U le() {
        require(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(std::to_integer<U>(data_[pos_ + i])) << (8 * i);
        pos_ += sizeof(U);
        return v;
    }
    void require(std::size_t n) const;

    std::span<const std::byte> data_;
    std::size_t pos_ = 0;
};

std::vector<std::byte> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::byte> data);

}  // namespace softsphere::binary
