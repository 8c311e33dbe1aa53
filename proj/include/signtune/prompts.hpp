#pragma once

// Traffic-sign prompt grammar.
//
//   scenario = detail ", " appearance ", " background ", " image
//   prompt   = scenario ", " name ". " rule
//
// Scenario phrases come from four editable pools; name and rule come from the
// class taxonomy.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "signtune/archive.hpp"
#include "signtune/digest.hpp"
#include "signtune/error.hpp"

namespace signtune {

inline constexpr int kCanonicalClassCount = 46;

class TaxonomyEntry {
public:
    using AliasMap = std::map<std::string, std::vector<std::string>>;

    TaxonomyEntry(int class_id, std::string canonical_name, std::string rule_text, AliasMap source_aliases = {})
        : class_id_(class_id),
          canonical_name_(std::move(canonical_name)),
          rule_text_(std::move(rule_text)),
          source_aliases_(std::move(source_aliases)) {
        if (class_id_ < 0) throw ConfigError("taxonomy: negative class id " + std::to_string(class_id_));
        if (canonical_name_.empty()) throw ConfigError("taxonomy: class " + std::to_string(class_id_) + " has no name");
        if (rule_text_.empty()) throw ConfigError("taxonomy: class '" + canonical_name_ + "' has no rule text");
    }

    int class_id() const noexcept { return class_id_; }
    const std::string& canonical_name() const noexcept { return canonical_name_; }
    const std::string& rule_text() const noexcept { return rule_text_; }
    const AliasMap& source_aliases() const noexcept { return source_aliases_; }

private:
    int class_id_;
    std::string canonical_name_;
    std::string rule_text_;
    AliasMap source_aliases_;
};

/// Class list with ids dense over [0, size()).
class Taxonomy {
public:
    Taxonomy() = default;

    explicit Taxonomy(std::vector<TaxonomyEntry> entries) : entries_(std::move(entries)) {
        std::sort(entries_.begin(), entries_.end(),
                  [](const auto& a, const auto& b) { return a.class_id() < b.class_id(); });
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].class_id() != static_cast<int>(i)) {
                throw ConfigError("taxonomy: class ids must be unique and dense; expected " + std::to_string(i) +
                                  ", found " + std::to_string(entries_[i].class_id()));
            }
        }
    }

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const TaxonomyEntry& operator[](std::size_t i) const { return entries_.at(i); }
    auto begin() const noexcept { return entries_.begin(); }
    auto end() const noexcept { return entries_.end(); }

    bool is_complete() const noexcept { return entries_.size() == kCanonicalClassCount; }

    /// First n classes; used for reduced synthetic problems.
    Taxonomy prefix(std::size_t n) const {
        if (n == 0 || n > entries_.size()) throw RangeError("taxonomy: prefix size out of range");
        return Taxonomy(std::vector<TaxonomyEntry>(entries_.begin(), entries_.begin() + static_cast<std::ptrdiff_t>(n)));
    }

    static Taxonomy from_json(const nlohmann::json& j) {
        try {
            std::vector<TaxonomyEntry> entries;
            for (const auto& c : j.at("classes")) {
                TaxonomyEntry::AliasMap aliases;
                if (c.contains("aliases")) aliases = c.at("aliases").get<TaxonomyEntry::AliasMap>();
                entries.emplace_back(c.at("id").get<int>(), c.at("name").get<std::string>(),
                                     c.at("rule").get<std::string>(), std::move(aliases));
            }
            return Taxonomy(std::move(entries));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("taxonomy: malformed document: ") + e.what());
        }
    }

    static Taxonomy load(const std::filesystem::path& path) {
        if (!std::filesystem::exists(path)) throw ConfigError("taxonomy file not found: " + path.string());
        try {
            return from_json(nlohmann::json::parse(read_text_file(path)));
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError("taxonomy: " + path.string() + ": " + e.what());
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json classes = nlohmann::json::array();
        for (const auto& e : entries_) {
            classes.push_back({{"id", e.class_id()}, {"name", e.canonical_name()}, {"rule", e.rule_text()},
                               {"aliases", e.source_aliases()}});
        }
        return {{"version", 1}, {"classes", classes}};
    }

private:
    std::vector<TaxonomyEntry> entries_;
};

struct ScenarioPools {
    std::vector<std::string> detail;      // what the sign depicts
    std::vector<std::string> appearance;  // pattern, color, font, shape
    std::vector<std::string> background;  // location, road type
    std::vector<std::string> image;       // resolution, quality

    void validate() const {
        const std::pair<const char*, const std::vector<std::string>*> pools[] = {
            {"detail", &detail}, {"appearance", &appearance}, {"background", &background}, {"image", &image}};
        for (const auto& [name, pool] : pools) {
            if (pool->empty()) throw ConfigError(std::string("scenario pools: '") + name + "' pool is empty");
            for (const auto& phrase : *pool) {
                if (phrase.empty()) throw ConfigError(std::string("scenario pools: empty phrase in '") + name + "'");
                if (phrase.find_first_of("{}") != std::string::npos) {
                    throw ConfigError(std::string("scenario pools: template placeholder in '") + name + "': " + phrase);
                }
            }
        }
    }

    static ScenarioPools from_json(const nlohmann::json& j) {
        try {
            ScenarioPools p{j.at("detail").get<std::vector<std::string>>(),
                            j.at("appearance").get<std::vector<std::string>>(),
                            j.at("background").get<std::vector<std::string>>(),
                            j.at("image").get<std::vector<std::string>>()};
            p.validate();
            return p;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("scenario pools: malformed document: ") + e.what());
        }
    }

    static ScenarioPools load(const std::filesystem::path& path) {
        if (!std::filesystem::exists(path)) throw ConfigError("pools file not found: " + path.string());
        try {
            return from_json(nlohmann::json::parse(read_text_file(path)));
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError("scenario pools: " + path.string() + ": " + e.what());
        }
    }
};

/// Which parts of the grammar a prompt carries; mirrors the ablation rows.
enum class PromptMode { combined, scenario_only, rules_only, name_only };

inline std::string to_string(PromptMode m) {
    switch (m) {
        case PromptMode::combined: return "combined";
        case PromptMode::scenario_only: return "scenario";
        case PromptMode::rules_only: return "rules";
        case PromptMode::name_only: return "name";
    }
    return "combined";
}

inline PromptMode prompt_mode_from_string(std::string_view s) {
    if (s == "combined") return PromptMode::combined;
    if (s == "scenario") return PromptMode::scenario_only;
    if (s == "rules") return PromptMode::rules_only;
    if (s == "name") return PromptMode::name_only;
    throw UsageError("unknown prompt mode '" + std::string(s) + "' (combined|scenario|rules|name)");
}

struct PromptTemplate {
    int template_id = 0;
    int class_id = 0;
    std::string text;

    friend bool operator==(const PromptTemplate&, const PromptTemplate&) = default;
};

using PromptSet = std::vector<PromptTemplate>;

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

inline std::string compose_scenario(const ScenarioPools& pools, std::uint64_t seed) {
    pools.validate();
    std::mt19937_64 rng(seed);
    std::string out;
    for (const auto* pool : {&pools.detail, &pools.appearance, &pools.background, &pools.image}) {
        if (!out.empty()) out += ", ";
        out += (*pool)[uniform_index(rng, pool->size())];
    }
    return out;
}

inline PromptTemplate compose_prompt(std::string_view scenario, const TaxonomyEntry& entry,
                                     PromptMode mode = PromptMode::combined, int template_id = 0) {
    const bool uses_scenario = mode == PromptMode::combined || mode == PromptMode::scenario_only;
    if (uses_scenario && scenario.empty()) throw ConfigError("compose_prompt: empty scenario");
    PromptTemplate p{template_id, entry.class_id(), {}};
    switch (mode) {
        case PromptMode::combined:
            p.text = std::string(scenario) + ", " + entry.canonical_name() + ". " + entry.rule_text();
            break;
        case PromptMode::scenario_only:
            p.text = std::string(scenario) + ", " + entry.canonical_name() + ".";
            break;
        case PromptMode::rules_only:
            p.text = entry.canonical_name() + ". " + entry.rule_text();
            break;
        case PromptMode::name_only:
            p.text = "a photo of a " + entry.canonical_name() + " sign.";
            break;
    }
    return p;
}

/// n_per_class templates for every class, class-major, with template ids
/// class_id * n_per_class + k.
inline PromptSet generate_prompt_set(const Taxonomy& taxonomy, const ScenarioPools& pools, int n_per_class,
                                     std::uint64_t seed, PromptMode mode = PromptMode::combined) {
    if (n_per_class < 1) throw RangeError("generate_prompt_set: n_per_class must be >= 1");
    if (taxonomy.empty()) throw ConfigError("generate_prompt_set: empty taxonomy");
    pools.validate();
    PromptSet out;
    out.reserve(taxonomy.size() * static_cast<std::size_t>(n_per_class));
    for (const auto& entry : taxonomy) {
        for (int k = 0; k < n_per_class; ++k) {
            const auto scenario = compose_scenario(pools, derive_seed(seed, static_cast<std::uint64_t>(entry.class_id()),
                                                                      static_cast<std::uint64_t>(k)));
            out.push_back(compose_prompt(scenario, entry, mode, entry.class_id() * n_per_class + k));
        }
    }
    return out;
}

inline std::string prompt_set_jsonl(const PromptSet& prompts) {
    std::string out;
    for (const auto& p : prompts) {
        out += nlohmann::json{{"template_id", p.template_id}, {"class_id", p.class_id}, {"text", p.text}}.dump();
        out += '\n';
    }
    return out;
}

inline std::string prompt_set_digest(const PromptSet& prompts) { return sha256_hex(prompt_set_jsonl(prompts)); }

inline void save_prompt_set(const PromptSet& prompts, const std::filesystem::path& path) {
    write_text_file(path, prompt_set_jsonl(prompts));
}

inline PromptSet load_prompt_set(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw MissingInputError("prompt set not found: " + path.string());
    std::istringstream in(read_text_file(path));
    PromptSet out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            out.push_back({j.at("template_id").get<int>(), j.at("class_id").get<int>(), j.at("text").get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            throw DataError("prompt set: malformed line in " + path.string() + ": " + e.what());
        }
    }
    return out;
}

/// Number of classes covered densely by a prompt set; throws if a class in
/// [0, n_classes) has no template.
inline void require_prompt_coverage(const PromptSet& prompts, std::size_t n_classes) {
    std::vector<int> count(n_classes, 0);
    for (const auto& p : prompts) {
        if (p.class_id < 0 || static_cast<std::size_t>(p.class_id) >= n_classes) {
            throw CoverageError("prompt set: class id " + std::to_string(p.class_id) + " outside [0, " +
                                std::to_string(n_classes) + ")");
        }
        ++count[static_cast<std::size_t>(p.class_id)];
    }
    for (std::size_t c = 0; c < n_classes; ++c) {
        if (count[c] == 0) throw CoverageError("prompt set: no template for class " + std::to_string(c));
    }
}

}  // namespace signtune
