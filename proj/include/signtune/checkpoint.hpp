#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "signtune/archive.hpp"
#include "signtune/error.hpp"
#include "signtune/parameter_set.hpp"

namespace signtune {

inline constexpr int kCheckpointMetaVersion = 1;

struct CheckpointMeta {
    std::string strategy = "zero_shot";
    std::int64_t epoch = 0;  // completed epochs
    double gamma = 0.0;      // ADWE scaling factor; 0 when not applicable
    double alpha = 0.0;      // Wise-FT factor; 0 when not applicable
    std::vector<double> beta_history;
    std::vector<double> train_losses;
    std::vector<double> zero_shot_losses;
    std::string prompt_digest;
    std::uint64_t seed = 0;

    friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct Checkpoint {
    ParameterSet params;
    CheckpointMeta meta;
};

inline void validate(const CheckpointMeta& meta) {
    if (meta.epoch < 0) throw DataError("checkpoint: negative epoch " + std::to_string(meta.epoch));
    if (meta.strategy == "adwe" && static_cast<std::int64_t>(meta.beta_history.size()) != meta.epoch) {
        throw DataError("checkpoint: ADWE beta history has " + std::to_string(meta.beta_history.size()) +
                        " entries for " + std::to_string(meta.epoch) + " epochs");
    }
}

inline nlohmann::json to_json(const CheckpointMeta& m) {
    return nlohmann::json{
        {"format_version", kCheckpointMetaVersion},
        {"strategy", m.strategy},
        {"epoch", m.epoch},
        {"gamma", m.gamma},
        {"alpha", m.alpha},
        {"beta_history", m.beta_history},
        {"train_losses", m.train_losses},
        {"zero_shot_losses", m.zero_shot_losses},
        {"prompt_digest", m.prompt_digest},
        {"seed", m.seed},
    };
}

inline CheckpointMeta meta_from_json(const nlohmann::json& j) {
    try {
        const int version = j.at("format_version").get<int>();
        if (version != kCheckpointMetaVersion) {
            throw VersionError("checkpoint: unsupported metadata version " + std::to_string(version));
        }
        CheckpointMeta m;
        m.strategy = j.at("strategy").get<std::string>();
        m.epoch = j.at("epoch").get<std::int64_t>();
        m.gamma = j.at("gamma").get<double>();
        m.alpha = j.at("alpha").get<double>();
        m.beta_history = j.at("beta_history").get<std::vector<double>>();
        m.train_losses = j.at("train_losses").get<std::vector<double>>();
        m.zero_shot_losses = j.at("zero_shot_losses").get<std::vector<double>>();
        m.prompt_digest = j.at("prompt_digest").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError(std::string("checkpoint: malformed metadata: ") + e.what());
    }
}

/// Writes `dir/params.bin`, `dir/meta.json` and `dir/digest.txt`.
inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
    validate(ckpt.meta);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create checkpoint directory '" + dir.string() + "': " + ec.message());
    const auto bytes = encode_archive(ckpt.params);
    write_file_bytes(dir / "params.bin", bytes);
    write_text_file(dir / "meta.json", to_json(ckpt.meta).dump(2) + "\n");
    write_text_file(dir / "digest.txt", sha256_hex(bytes) + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw MissingInputError("no checkpoint directory at '" + dir.string() + "'");
    const auto bytes = read_file_bytes(dir / "params.bin");
    auto expected = read_text_file(dir / "digest.txt");
    while (!expected.empty() && (expected.back() == '\n' || expected.back() == '\r' || expected.back() == ' ')) {
        expected.pop_back();
    }
    if (sha256_hex(bytes) != expected) {
        throw IntegrityError("checkpoint: params.bin digest mismatch in '" + dir.string() + "'");
    }
    Checkpoint ckpt;
    ckpt.params = decode_archive(bytes);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_text_file(dir / "meta.json"));
    } catch (const nlohmann::json::parse_error& e) {
        throw IntegrityError(std::string("checkpoint: meta.json is not valid JSON: ") + e.what());
    }
    ckpt.meta = meta_from_json(meta);
    validate(ckpt.meta);
    return ckpt;
}

}  // namespace signtune
