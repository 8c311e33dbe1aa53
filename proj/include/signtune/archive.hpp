#pragma once

// Named-array archive (params.bin).
//
// Layout, all integers little-endian:
//   magic "SGNA" | u32 version | u32 entry count
//   per entry: u32 name length | name bytes (UTF-8) | u8 dtype (1 = float32)
//              | u8 rank | u64 dims[rank] | u64 payload offset | u64 payload bytes
//   payload: contiguous little-endian IEEE-754 float32 arrays, in entry order
// Payload offsets are relative to the first payload byte.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "signtune/digest.hpp"
#include "signtune/error.hpp"
#include "signtune/parameter_set.hpp"

namespace signtune {

inline constexpr char kArchiveMagic[4] = {'S', 'G', 'N', 'A'};
inline constexpr std::uint32_t kArchiveVersion = 1;
inline constexpr std::uint8_t kDtypeFloat32 = 1;

namespace detail {

class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(static_cast<std::byte>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::byte*>(p);
        bytes_.insert(bytes_.end(), b, b + n);
    }
    std::vector<std::byte>& bytes() { return bytes_; }

private:
    std::vector<std::byte> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::byte> bytes) : bytes_(bytes) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t position() const { return pos_; }
    std::size_t size() const { return bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (n > bytes_.size() - pos_) throw IntegrityError("archive: truncated data");
    }
    std::span<const std::byte> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::byte> encode_archive(const ParameterSet& params) {
    detail::ByteWriter w;
    w.raw(kArchiveMagic, 4);
    w.u32(kArchiveVersion);
    w.u32(static_cast<std::uint32_t>(params.size()));
    std::uint64_t offset = 0;
    for (const auto& [name, t] : params) {
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.raw(name.data(), name.size());
        w.u8(kDtypeFloat32);
        w.u8(static_cast<std::uint8_t>(t.shape.size()));
        for (const auto d : t.shape) w.u64(d);
        const std::uint64_t nbytes = 4ULL * t.values.size();
        w.u64(offset);
        w.u64(nbytes);
        offset += nbytes;
    }
    for (const auto& [_, t] : params) {
        for (const float v : t.values) w.f32(v);
    }
    return std::move(w.bytes());
}

inline ParameterSet decode_archive(std::span<const std::byte> bytes) {
    detail::ByteReader r(bytes);
    if (r.str(4) != std::string(kArchiveMagic, 4)) throw IntegrityError("archive: bad magic");
    const auto version = r.u32();
    if (version != kArchiveVersion) {
        throw VersionError("archive: unsupported format version " + std::to_string(version));
    }
    const auto count = r.u32();
    struct Entry {
        std::string name;
        Shape shape;
        std::uint64_t offset, nbytes;
    };
    std::vector<Entry> entries;
    for (std::uint32_t i = 0; i < count; ++i) {
        Entry e;
        e.name = r.str(r.u32());
        if (r.u8() != kDtypeFloat32) throw IntegrityError("archive: unsupported dtype for '" + e.name + "'");
        const auto rank = r.u8();
        for (int k = 0; k < rank; ++k) e.shape.push_back(static_cast<std::size_t>(r.u64()));
        e.offset = r.u64();
        e.nbytes = r.u64();
        if (e.nbytes != 4ULL * element_count(e.shape)) throw IntegrityError("archive: size mismatch for '" + e.name + "'");
        entries.push_back(std::move(e));
    }
    const std::size_t payload = r.position();
    ParameterSet::map_type out;
    for (auto& e : entries) {
        if (e.offset > bytes.size() - payload || e.nbytes > bytes.size() - payload - e.offset) {
            throw IntegrityError("archive: payload for '" + e.name + "' out of bounds");
        }
        std::vector<float> v(e.nbytes / 4);
        detail::ByteReader pr(bytes.subspan(payload + e.offset, e.nbytes));
        for (auto& x : v) x = std::bit_cast<float>(pr.u32());
        if (!out.emplace(e.name, Tensor<float>(std::move(e.shape), std::move(v))).second) {
            throw IntegrityError("archive: duplicate entry '" + e.name + "'");
        }
    }
    return ParameterSet(std::move(out));
}

/// Content digest of a parameter set: SHA-256 of its archive encoding.
inline std::string parameter_digest(const ParameterSet& params) { return sha256_hex(encode_archive(params)); }

inline std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<std::byte> out(raw.size());
    if (!raw.empty()) std::memcpy(out.data(), raw.data(), raw.size());
    return out;
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    write_file_bytes(path, std::as_bytes(std::span(text.data(), text.size())));
}

inline std::string read_text_file(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

inline void save_archive(const ParameterSet& params, const std::filesystem::path& path) {
    write_file_bytes(path, encode_archive(params));
}

inline ParameterSet load_archive(const std::filesystem::path& path) { return decode_archive(read_file_bytes(path)); }

}  // namespace signtune
