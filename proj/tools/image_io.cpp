#include "image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "softsphere/errors.hpp"

namespace softsphere::cli {

void write_png(const std::filesystem::path& path, const FeatureImage<double>& img, std::span<const int> select,
               int bits) {
    if (select.size() != 1 && select.size() != 3) throw ConfigError("PNG output needs 1 or 3 channels");
    for (const int c : select)
        if (c < 0 || c >= img.channels) throw ConfigError("channel " + std::to_string(c) + " out of range");
    if (bits != 8 && bits != 16) throw ConfigError("PNG bit depth must be 8 or 16");

    png_image out;
    std::memset(&out, 0, sizeof out);
    out.version = PNG_IMAGE_VERSION;
    out.width = static_cast<png_uint_32>(img.width);
    out.height = static_cast<png_uint_32>(img.height);
    out.format = select.size() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    const double top = bits == 8 ? 255.0 : 65535.0;
    const std::size_t n = img.pixel_count() * select.size();
    std::vector<std::uint8_t> b8;
    std::vector<std::uint16_t> b16;
    auto quantize = [&](double v) { return std::lround(std::clamp(v, 0.0, 1.0) * top); };
    if (bits == 8) {
        b8.resize(n);
        for (std::size_t p = 0, k = 0; p < img.pixel_count(); ++p)
            for (const int c : select) b8[k++] = static_cast<std::uint8_t>(quantize(img.pixel(p)[c]));
    } else {
        out.format |= PNG_FORMAT_FLAG_LINEAR;
        b16.resize(n);
        for (std::size_t p = 0, k = 0; p < img.pixel_count(); ++p)
            for (const int c : select) b16[k++] = static_cast<std::uint16_t>(quantize(img.pixel(p)[c]));
    }
    const void* buffer = bits == 8 ? static_cast<const void*>(b8.data()) : static_cast<const void*>(b16.data());
    if (!png_image_write_to_file(&out, path.c_str(), 0, buffer, 0, nullptr))
        throw IoError(path.string() + ": " + out.message);
}

FeatureImage<double> read_png(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError(path.string() + ": no such file");
    png_image in;
    std::memset(&in, 0, sizeof in);
    in.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&in, path.c_str())) throw FormatError(path.string() + ": " + in.message);
    const bool color = (in.format & PNG_FORMAT_FLAG_COLOR) != 0;
    const bool wide = (in.format & PNG_FORMAT_FLAG_LINEAR) != 0;
    in.format = (color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY) | (wide ? PNG_FORMAT_FLAG_LINEAR : 0);
    const int channels = color ? 3 : 1;
    FeatureImage<double> img(static_cast<int>(in.width), static_cast<int>(in.height), channels);
    const std::size_t n = img.data.size();
    bool ok;
    if (wide) {
        std::vector<std::uint16_t> buf(n);
        ok = png_image_finish_read(&in, nullptr, buf.data(), 0, nullptr) != 0;
        for (std::size_t i = 0; i < n; ++i) img.data[i] = buf[i] / 65535.0;
    } else {
        std::vector<std::uint8_t> buf(n);
        ok = png_image_finish_read(&in, nullptr, buf.data(), 0, nullptr) != 0;
        for (std::size_t i = 0; i < n; ++i) img.data[i] = buf[i] / 255.0;
    }
    if (!ok) throw FormatError(path.string() + ": " + in.message);
    return img;
}

}  // namespace softsphere::cli
