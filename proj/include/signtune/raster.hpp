#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "signtune/archive.hpp"
#include "signtune/error.hpp"

namespace signtune {

/// 8-bit interleaved RGB image.
struct Raster {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    Raster() = default;
    Raster(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

    std::uint8_t* pixel(int x, int y) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const std::uint8_t* pixel(int x, int y) const { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }

    std::span<const std::byte> bytes() const { return std::as_bytes(std::span(rgb)); }

    friend bool operator==(const Raster&, const Raster&) = default;
};

inline std::vector<std::byte> encode_ppm(const Raster& r) {
    const std::string header = "P6\n" + std::to_string(r.width) + " " + std::to_string(r.height) + "\n255\n";
    std::vector<std::byte> out(header.size() + r.rgb.size());
    std::memcpy(out.data(), header.data(), header.size());
    std::memcpy(out.data() + header.size(), r.rgb.data(), r.rgb.size());
    return out;
}

inline Raster decode_ppm(std::span<const std::byte> bytes, const std::string& what = "image") {
    std::size_t pos = 0;
    auto fail = [&](const std::string& msg) -> Raster { throw IngestionError(what + ": " + msg); };
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            const auto c = static_cast<char>(bytes[pos]);
            if (c == '#') {
                while (pos < bytes.size() && static_cast<char>(bytes[pos]) != '\n') ++pos;
            } else if (c == ' ' || c == '\n' || c == '\r' || c == '\t') {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&]() -> long {
        skip_space();
        long v = 0;
        bool any = false;
        while (pos < bytes.size()) {
            const auto c = static_cast<char>(bytes[pos]);
            if (c < '0' || c > '9') break;
            v = v * 10 + (c - '0');
            if (v > 1'000'000) break;
            any = true;
            ++pos;
        }
        if (!any) fail("malformed PPM header");
        return v;
    };
    if (bytes.size() < 2 || static_cast<char>(bytes[0]) != 'P' || static_cast<char>(bytes[1]) != '6') {
        return fail("not a binary PPM (P6) file");
    }
    pos = 2;
    const long w = number();
    const long h = number();
    const long maxval = number();
    if (w <= 0 || h <= 0 || maxval != 255) return fail("unsupported PPM geometry or depth");
    ++pos;  // single whitespace before the raster
    const auto need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
    if (pos > bytes.size() || bytes.size() - pos < need) return fail("truncated PPM raster");
    Raster r(static_cast<int>(w), static_cast<int>(h));
    std::memcpy(r.rgb.data(), bytes.data() + pos, need);
    return r;
}

inline void write_ppm(const Raster& r, const std::filesystem::path& path) { write_file_bytes(path, encode_ppm(r)); }

inline Raster read_ppm(const std::filesystem::path& path) {
    std::vector<std::byte> bytes;
    try {
        bytes = read_file_bytes(path);
    } catch (const IoError& e) {
        throw IngestionError(e.what());
    }
    return decode_ppm(bytes, path.string());
}

/// Nearest-neighbour resample to a square side.
inline Raster resize_nearest(const Raster& in, int side) {
    if (in.width == side && in.height == side) return in;
    Raster out(side, side);
    for (int y = 0; y < side; ++y) {
        const int sy = std::min(in.height - 1, static_cast<int>((y + 0.5) * in.height / side));
        for (int x = 0; x < side; ++x) {
            const int sx = std::min(in.width - 1, static_cast<int>((x + 0.5) * in.width / side));
            std::memcpy(out.pixel(x, y), in.pixel(sx, sy), 3);
        }
    }
    return out;
}

}  // namespace signtune
