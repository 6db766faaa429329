#include "softsphere/binary_io.hpp"

#include <fstream>
#include <iterator>

#include "softsphere/errors.hpp"

namespace softsphere::binary {

void Reader::require(std::size_t n) const {
    if (data_.size() - pos_ < n) {
        throw FormatError("unexpected end of data at byte " + std::to_string(pos_) + " (needed " +
                          std::to_string(n) + " more)");
    }
}

void Reader::bytes(void* out, std::size_t n) {
    require(n);
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
}

std::span<const std::byte> Reader::blob() {
    const auto n = u64();
    require(n);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
}

std::vector<std::byte> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path.string());
    std::vector<std::byte> out(raw.size());
    std::memcpy(out.data(), raw.data(), raw.size());
    return out;
}

void write_file(const std::filesystem::path& path, std::span<const std::byte> data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace softsphere::binary
