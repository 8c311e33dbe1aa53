#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "signtune/error.hpp"

namespace signtune {

/// Incremental SHA-256, hex-encoded on finish.
class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
            throw Error(ExitCode::data, "sha256: digest initialisation failed");
        }
    }

    Sha256& update(std::span<const std::byte> bytes) {
        if (!bytes.empty() && EVP_DigestUpdate(ctx_.get(), bytes.data(), bytes.size()) != 1) {
            throw Error(ExitCode::data, "sha256: update failed");
        }
        return *this;
    }

    Sha256& update(std::string_view text) { return update(std::as_bytes(std::span(text.data(), text.size()))); }

    std::string hex() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> out{};
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx_.get(), out.data(), &len) != 1) {
            throw Error(ExitCode::data, "sha256: finalisation failed");
        }
        static constexpr char digits[] = "0123456789abcdef";
        std::string hex;
        hex.reserve(2 * len);
        for (unsigned int i = 0; i < len; ++i) {
            hex.push_back(digits[out[i] >> 4]);
            hex.push_back(digits[out[i] & 0x0f]);
        }
        return hex;
    }

private:
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

inline std::string sha256_hex(std::span<const std::byte> bytes) { return Sha256{}.update(bytes).hex(); }
inline std::string sha256_hex(std::string_view text) { return Sha256{}.update(text).hex(); }

// splitmix64 finaliser; used to derive independent sub-seeds from a run seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept {
    return mix_seed(mix_seed(mix_seed(seed) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

}  // namespace signtune
