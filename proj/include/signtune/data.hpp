#pragma once

// Cross-regional dataset plumbing: manifests, canonical label mapping, region
// holdout splits, coverage tables, and a synthetic regional-shift generator.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "signtune/archive.hpp"
#include "signtune/digest.hpp"
#include "signtune/error.hpp"
#include "signtune/prompts.hpp"
#include "signtune/raster.hpp"

namespace signtune {

struct SampleRecord {
    std::string image_ref;
    std::string source_id;
    std::string region;
    std::string raw_label;
    int class_id = 0;
    std::optional<Raster> raster;  // embedded pixels; otherwise image_ref is a path

    friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct SourceProvenance {
    std::string region;
    int year = 0;
    std::size_t count = 0;

    friend bool operator==(const SourceProvenance&, const SourceProvenance&) = default;
};

struct Manifest {
    std::vector<SampleRecord> records;
    std::map<std::string, SourceProvenance> provenance;
    std::filesystem::path base_dir;  // relative image_refs resolve against this

    void validate(std::size_t n_classes = kCanonicalClassCount) const {
        std::set<std::string> refs;
        std::map<std::string, std::size_t> counts;
        for (const auto& r : records) {
            if (r.class_id < 0 || static_cast<std::size_t>(r.class_id) >= n_classes) {
                throw LabelError("manifest: class id " + std::to_string(r.class_id) + " out of range for '" +
                                 r.image_ref + "'");
            }
            if (r.region.empty()) throw DataError("manifest: record '" + r.image_ref + "' has no region");
            if (!refs.insert(r.image_ref).second) throw DuplicateError("manifest: duplicate image_ref '" + r.image_ref + "'");
            ++counts[r.source_id];
        }
        for (const auto& [source, n] : counts) {
            const auto it = provenance.find(source);
            if (it == provenance.end() || it->second.count != n) {
                throw DataError("manifest: record count for source '" + source + "' does not match provenance");
            }
        }
        for (const auto& [source, p] : provenance) {
            if (p.count != 0 && !counts.contains(source)) {
                throw DataError("manifest: provenance lists records for '" + source + "' but none are present");
            }
        }
    }

    std::set<std::string> regions() const {
        std::set<std::string> out;
        for (const auto& r : records) out.insert(r.region);
        return out;
    }
};

inline nlohmann::json record_json(const SampleRecord& r) {
    return {{"image_ref", r.image_ref}, {"source_id", r.source_id}, {"region", r.region},
            {"raw_label", r.raw_label}, {"class_id", r.class_id}};
}

inline nlohmann::json provenance_json(const Manifest& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [source, p] : m.provenance) j[source] = {{"region", p.region}, {"year", p.year}, {"count", p.count}};
    return j;
}

inline std::string manifest_jsonl(const Manifest& m) {
    std::string out;
    for (const auto& r : m.records) out += record_json(r).dump() + "\n";
    return out;
}

/// SHA-256 over provenance, records, and any embedded pixels.
inline std::string manifest_digest(const Manifest& m) {
    Sha256 h;
    h.update(provenance_json(m).dump());
    h.update("\n");
    for (const auto& r : m.records) {
        h.update(record_json(r).dump());
        h.update("\n");
        if (r.raster) h.update(r.raster->bytes());
    }
    return h.hex();
}

inline std::filesystem::path provenance_path(const std::filesystem::path& manifest_path) {
    auto p = manifest_path;
    p += ".provenance.json";
    return p;
}

/// JSON-lines records plus a `<path>.provenance.json` header file.
inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
    write_text_file(path, manifest_jsonl(m));
    write_text_file(provenance_path(path), provenance_json(m).dump(2) + "\n");
}

inline Manifest load_manifest(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw MissingInputError("manifest not found: " + path.string());
    Manifest m;
    m.base_dir = path.parent_path();
    try {
        const auto prov = nlohmann::json::parse(read_text_file(provenance_path(path)));
        for (const auto& [source, p] : prov.items()) {
            m.provenance[source] = {p.at("region").get<std::string>(), p.at("year").get<int>(),
                                    p.at("count").get<std::size_t>()};
        }
        std::istringstream in(read_text_file(path));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            m.records.push_back({j.at("image_ref").get<std::string>(), j.at("source_id").get<std::string>(),
                                 j.at("region").get<std::string>(), j.at("raw_label").get<std::string>(),
                                 j.at("class_id").get<int>(), std::nullopt});
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest: malformed file " + path.string() + ": " + e.what());
    }
    return m;
}

inline Raster load_raster(const SampleRecord& r, const std::filesystem::path& base_dir = {}) {
    if (r.raster) return *r.raster;
    std::filesystem::path p(r.image_ref);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    return read_ppm(p);
}

// ---------------------------------------------------------------------------
// Label mapping and manifest construction

/// Per-source mapping from raw dataset labels to canonical class ids;
/// std::nullopt is an explicit DROP.
struct SourceMapping {
    std::string region;
    int year = 0;
    std::map<std::string, std::optional<int>> labels;
};

struct MappingConfig {
    std::map<std::string, SourceMapping> sources;

    static MappingConfig from_json(const nlohmann::json& j) {
        MappingConfig cfg;
        try {
            for (const auto& [source, s] : j.items()) {
                SourceMapping sm;
                sm.region = s.at("region").get<std::string>();
                sm.year = s.value("year", 0);
                for (const auto& [raw, target] : s.at("labels").items()) {
                    if (target.is_string()) {
                        if (target.get<std::string>() != "DROP") {
                            throw ConfigError("mapping: '" + source + "/" + raw + "' maps to unknown marker '" +
                                              target.get<std::string>() + "'");
                        }
                        sm.labels[raw] = std::nullopt;
                    } else {
                        sm.labels[raw] = target.get<int>();
                    }
                }
                cfg.sources[source] = std::move(sm);
            }
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("mapping: malformed document: ") + e.what());
        }
        return cfg;
    }

    static MappingConfig load(const std::filesystem::path& path) {
        if (!std::filesystem::exists(path)) throw ConfigError("mapping config not found: " + path.string());
        try {
            return from_json(nlohmann::json::parse(read_text_file(path)));
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError("mapping: " + path.string() + ": " + e.what());
        }
    }
};

struct SourceRoot {
    std::string source_id;
    std::filesystem::path path;  // contains one subdirectory per raw label
};

struct ManifestBuild {
    Manifest manifest;
    std::map<std::string, std::size_t> dropped;  // "source/raw_label" -> files skipped
};

namespace detail {

inline void check_readable_image(const std::filesystem::path& file) {
    auto ext = file.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".ppm") {
        (void)read_ppm(file);
        return;
    }
    std::error_code ec;
    const auto size = std::filesystem::file_size(file, ec);
    if (ec || size == 0) throw IngestionError("unreadable image '" + file.string() + "'");
    std::ifstream in(file, std::ios::binary);
    if (!in || in.get() == std::char_traits<char>::eof()) throw IngestionError("unreadable image '" + file.string() + "'");
}

}  // namespace detail

/// Scans `<root>/<raw_label>/<image>` trees. Every raw label must be mapped
/// to a class id or to DROP; records come out sorted by (source_id, image_ref).
inline ManifestBuild build_manifest(const std::vector<SourceRoot>& roots, const MappingConfig& mapping,
                                    std::size_t n_classes = kCanonicalClassCount) {
    ManifestBuild out;
    for (const auto& root : roots) {
        const auto sm = mapping.sources.find(root.source_id);
        if (sm == mapping.sources.end()) {
            throw MappingError("mapping: no entry for source '" + root.source_id + "'");
        }
        if (!std::filesystem::is_directory(root.path)) {
            throw IngestionError("source '" + root.source_id + "': not a directory: " + root.path.string());
        }
        auto& prov = out.manifest.provenance[root.source_id];
        prov.region = sm->second.region;
        prov.year = sm->second.year;

        std::vector<std::filesystem::path> label_dirs;
        for (const auto& e : std::filesystem::directory_iterator(root.path)) {
            if (e.is_directory()) label_dirs.push_back(e.path());
        }
        std::sort(label_dirs.begin(), label_dirs.end());
        for (const auto& dir : label_dirs) {
            const auto raw = dir.filename().string();
            const auto lbl = sm->second.labels.find(raw);
            if (lbl == sm->second.labels.end()) {
                throw MappingError("mapping: unmapped raw label '" + raw + "' in source '" + root.source_id + "'");
            }
            std::vector<std::filesystem::path> files;
            for (const auto& e : std::filesystem::directory_iterator(dir)) {
                if (e.is_regular_file()) files.push_back(e.path());
            }
            std::sort(files.begin(), files.end());
            if (!lbl->second) {
                out.dropped[root.source_id + "/" + raw] += files.size();
                continue;
            }
            if (*lbl->second < 0 || static_cast<std::size_t>(*lbl->second) >= n_classes) {
                throw MappingError("mapping: '" + root.source_id + "/" + raw + "' maps to invalid class " +
                                   std::to_string(*lbl->second));
            }
            for (const auto& f : files) {
                detail::check_readable_image(f);
                out.manifest.records.push_back({std::filesystem::weakly_canonical(f).string(), root.source_id,
                                                sm->second.region, raw, *lbl->second, std::nullopt});
                ++prov.count;
            }
        }
    }
    std::sort(out.manifest.records.begin(), out.manifest.records.end(), [](const auto& a, const auto& b) {
        return std::tie(a.source_id, a.image_ref) < std::tie(b.source_id, b.image_ref);
    });
    out.manifest.validate(n_classes);
    return out;
}

// ---------------------------------------------------------------------------
// Region holdout

struct RegionSplit {
    std::set<std::string> train_regions;
    std::set<std::string> test_regions;
    std::vector<SampleRecord> train;
    std::vector<SampleRecord> test;
    std::vector<std::string> warnings;
    std::filesystem::path base_dir;
};

inline RegionSplit split_by_region(const Manifest& m, const std::set<std::string>& train_regions) {
    if (train_regions.empty()) throw DataError("split: no training regions given");
    const auto present = m.regions();
    for (const auto& r : train_regions) {
        if (!present.contains(r)) throw RegionError("split: unknown training region '" + r + "'");
    }
    RegionSplit s;
    s.base_dir = m.base_dir;
    s.train_regions = train_regions;
    for (const auto& r : present) {
        if (!train_regions.contains(r)) s.test_regions.insert(r);
    }
    for (const auto& rec : m.records) (train_regions.contains(rec.region) ? s.train : s.test).push_back(rec);
    if (s.train.empty()) throw DataError("split: training set is empty");
    if (s.test.empty()) s.warnings.push_back("split: every region is a training region; the test set is empty");
    return s;
}

// ---------------------------------------------------------------------------
// Coverage

struct RegionCoverage {
    std::string region;
    std::set<int> classes;
    std::size_t images = 0;
};

struct CoverageReport {
    std::vector<RegionCoverage> regions;  // sorted by region name
    std::vector<int> absent_classes;       // missing from every region
};

inline CoverageReport coverage_check(const Manifest& m, std::size_t n_classes = kCanonicalClassCount) {
    std::map<std::string, RegionCoverage> by_region;
    std::set<int> seen;
    for (const auto& r : m.records) {
        auto& cov = by_region[r.region];
        cov.region = r.region;
        cov.classes.insert(r.class_id);
        ++cov.images;
        seen.insert(r.class_id);
    }
    CoverageReport out;
    for (auto& [_, cov] : by_region) out.regions.push_back(std::move(cov));
    for (int c = 0; c < static_cast<int>(n_classes); ++c) {
        if (!seen.contains(c)) out.absent_classes.push_back(c);
    }
    return out;
}

/// The ten public regional sources of the cross-regional benchmark, as
/// published (category and image counts after label standardisation).
struct RegionSource {
    int number;
    const char* region;
    const char* source;
    int categories;
    int images;
    int year;
};

inline constexpr std::array<RegionSource, 10> kRegionRegistry{{
    {1, "China", "TT100", 36, 13012, 2016},
    {2, "Germany", "GTSRB", 31, 35939, 2013},
    {3, "Iran", "PTSD", 26, 11198, 2024},
    {4, "India", "IndiaTS", 41, 3723, 2022},
    {5, "Turkey", "TurkeyTS", 43, 9663, 2020},
    {6, "Belgium", "BelgiumTS", 36, 4194, 2014},
    {7, "Russia", "RTSD", 44, 56138, 2016},
    {8, "World", "MTSD", 45, 37053, 2020},
    {9, "Slovenia", "DFG", 42, 4769, 2019},
    {10, "America", "ARTS", 27, 15393, 2019},
}};

inline const RegionSource* find_registry_region(std::string_view region) {
    for (const auto& r : kRegionRegistry) {
        if (region == r.region) return &r;
    }
    return nullptr;
}

// ---------------------------------------------------------------------------
// Synthetic regional-shift generator
//
// Class fixes the sign's shape and base color; region applies a systematic
// style (hue rotation, background tint, outline rendering, contrast, a glyph
// overlay) whose magnitude is style_shift_strength. Per-sample jitter depends
// only on (seed, class, sample index), so at strength 0 every region renders
// identical images.

inline constexpr int kSyntheticSide = 32;

namespace detail {

struct Rgb {
    double r, g, b;
};

inline Rgb hsv_to_rgb(double h, double s, double v) {
    h = h - std::floor(h);
    const double hh = h * 6.0;
    const int i = static_cast<int>(hh) % 6;
    const double f = hh - std::floor(hh);
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (i) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

inline Rgb mix(const Rgb& a, const Rgb& b, double w) {
    return {a.r + (b.r - a.r) * w, a.g + (b.g - a.g) * w, a.b + (b.b - a.b) * w};
}

// Shape membership in unit coordinates (sign radius 1).
inline bool inside_shape(int shape, double u, double v) {
    const double au = std::abs(u), av = std::abs(v);
    switch (shape % 8) {
        case 0: return u * u + v * v <= 1.0;
        case 1: return v <= 0.75 && v >= -1.0 && au <= (v + 1.0) * 0.55;       // triangle, apex up
        case 2: return au <= 0.8 && av <= 0.8;                                 // square
        case 3: return au + av <= 1.0;                                         // diamond
        case 4: return au <= 0.92 && av <= 0.92 && au + av <= 1.3;             // octagon
        case 5: return v >= -0.75 && v <= 1.0 && au <= (1.0 - v) * 0.55;       // triangle, apex down
        case 6: return au <= 1.0 && av <= 0.38;                                // horizontal bar
        default: return (au <= 0.32 && av <= 1.0) || (av <= 0.32 && au <= 1.0);  // cross
    }
}

struct RegionStyle {
    double hue_shift;
    Rgb background;
    double outline;  // 0 filled, 1 outline-only
    double contrast;
    Rgb glyph_color;
    std::array<bool, 9> glyph;
};

inline RegionStyle region_style(std::uint64_t seed, int region) {
    std::mt19937_64 rng(derive_seed(seed, 0x5245474eULL, static_cast<std::uint64_t>(region)));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    RegionStyle s;
    s.hue_shift = u01(rng) - 0.5;
    s.background = hsv_to_rgb(u01(rng), 0.3 + 0.5 * u01(rng), 0.25 + 0.6 * u01(rng));
    s.outline = u01(rng) < 0.5 ? 1.0 : 0.0;
    s.contrast = 0.7 + 0.6 * u01(rng);
    s.glyph_color = hsv_to_rgb(u01(rng), 0.9, u01(rng) < 0.5 ? 0.1 : 0.95);
    for (auto& g : s.glyph) g = u01(rng) < 0.5;
    return s;
}

}  // namespace detail

inline Raster render_synthetic_sign(int class_id, const detail::RegionStyle& style, double strength, std::uint64_t sample_seed) {
    std::mt19937_64 rng(sample_seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.03);

    const double cx = kSyntheticSide / 2.0 + (u01(rng) - 0.5) * 4.0;
    const double cy = kSyntheticSide / 2.0 + (u01(rng) - 0.5) * 4.0;
    const double radius = 10.0 + 3.0 * u01(rng);
    const double brightness = 0.85 + 0.3 * u01(rng);

    const double base_hue = std::fmod(class_id * 0.618033988749895, 1.0);
    const detail::Rgb fill = detail::hsv_to_rgb(base_hue + strength * style.hue_shift, 0.85, 0.9);
    const detail::Rgb border = detail::hsv_to_rgb(base_hue + strength * style.hue_shift + 0.5, 0.3, 0.2);
    const detail::Rgb neutral{0.5, 0.5, 0.5};
    const detail::Rgb white{0.95, 0.95, 0.95};
    const detail::Rgb background = detail::mix(neutral, style.background, 0.8 * strength);
    const detail::Rgb interior = detail::mix(fill, white, 0.85 * strength * style.outline);
    const double contrast = 1.0 + strength * (style.contrast - 1.0);
    const double edge = 0.78;

    Raster out(kSyntheticSide, kSyntheticSide);
    for (int y = 0; y < kSyntheticSide; ++y) {
        for (int x = 0; x < kSyntheticSide; ++x) {
            const double u = (x + 0.5 - cx) / radius;
            const double v = (y + 0.5 - cy) / radius;
            detail::Rgb c = background;
            if (detail::inside_shape(class_id, u, v)) {
                c = detail::inside_shape(class_id, u / edge, v / edge) ? interior : border;
                if (detail::inside_shape(class_id, u / edge, v / edge) && style.outline > 0.0) {
                    // Outline-style regions draw a colored rim instead of a filled face.
                    if (!detail::inside_shape(class_id, u / (edge * 0.8), v / (edge * 0.8))) {
                        c = detail::mix(interior, fill, strength * style.outline);
                    }
                }
                const int gx = static_cast<int>(std::floor((u + 0.45) / 0.3));
                const int gy = static_cast<int>(std::floor((v + 0.45) / 0.3));
                if (gx >= 0 && gx < 3 && gy >= 0 && gy < 3 && style.glyph[static_cast<std::size_t>(gy * 3 + gx)]) {
                    c = detail::mix(c, style.glyph_color, 0.9 * strength);
                }
            }
            auto channel = [&](double value) {
                const double adjusted = (0.5 + (value - 0.5) * contrast) * brightness + noise(rng);
                return static_cast<std::uint8_t>(std::lround(std::clamp(adjusted, 0.0, 1.0) * 255.0));
            };
            auto* p = out.pixel(x, y);
            p[0] = channel(c.r);
            p[1] = channel(c.g);
            p[2] = channel(c.b);
        }
    }
    return out;
}

inline std::string synthetic_region_name(int region) { return "region_" + std::to_string(region); }

/// Labelled synthetic rasters (embedded) for n_regions styled copies of an
/// n_classes problem. Record order: region, class, sample.
inline Manifest generate_synthetic_regions(int n_classes, int n_regions, int samples_per_class_region,
                                           double style_shift_strength, std::uint64_t seed) {
    if (n_classes < 2 || n_classes > kCanonicalClassCount) throw RangeError("synthetic: n_classes must be in [2, 46]");
    if (n_regions < 2) throw RangeError("synthetic: n_regions must be >= 2");
    if (samples_per_class_region < 1) throw RangeError("synthetic: samples_per_class_region must be >= 1");
    if (!(style_shift_strength >= 0.0 && style_shift_strength <= 1.0)) {
        throw RangeError("synthetic: style_shift_strength must be in [0, 1]");
    }
    Manifest m;
    for (int r = 0; r < n_regions; ++r) {
        const auto style = detail::region_style(seed, r);
        const auto region = synthetic_region_name(r);
        const auto source = "SYN" + std::to_string(r);
        m.provenance[source] = {region, 0, static_cast<std::size_t>(n_classes * samples_per_class_region)};
        for (int c = 0; c < n_classes; ++c) {
            for (int i = 0; i < samples_per_class_region; ++i) {
                const auto sample_seed = derive_seed(seed, static_cast<std::uint64_t>(c) + 1,
                                                     static_cast<std::uint64_t>(i) + 1);
                SampleRecord rec;
                rec.image_ref = "s" + std::to_string(seed) + "/" + region + "/c" + std::to_string(c) + "_" +
                                std::to_string(i) + ".ppm";
                rec.source_id = source;
                rec.region = region;
                rec.raw_label = "c" + std::to_string(c);
                rec.class_id = c;
                rec.raster = render_synthetic_sign(c, style, style_shift_strength, sample_seed);
                m.records.push_back(std::move(rec));
            }
        }
    }
    m.validate(static_cast<std::size_t>(n_classes));
    return m;
}

/// Writes embedded rasters as PPM files under `dir` and the manifest as
/// `dir/manifest.jsonl` with path references.
inline std::filesystem::path write_synthetic_dataset(const Manifest& m, const std::filesystem::path& dir) {
    Manifest on_disk;
    on_disk.provenance = m.provenance;
    for (const auto& r : m.records) {
        if (!r.raster) throw DataError("synthetic: record '" + r.image_ref + "' has no embedded raster");
        const auto file = dir / r.image_ref;
        std::filesystem::create_directories(file.parent_path());
        write_ppm(*r.raster, file);
        auto copy = r;
        copy.raster.reset();
        on_disk.records.push_back(std::move(copy));
    }
    const auto path = dir / "manifest.jsonl";
    save_manifest(on_disk, path);
    return path;
}

struct Holdout {
    std::vector<SampleRecord> train;
    std::vector<SampleRecord> validation;
};

/// Per-class seeded holdout: round(fraction * count) records of every class
/// go to validation, keeping at least one per class on each side when the
/// class has two or more records. Input order is preserved within each side.
inline Holdout stratified_holdout(std::span<const SampleRecord> records, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw RangeError("holdout: fraction must be in (0, 1)");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < records.size(); ++i) by_class[records[i].class_id].push_back(i);
    std::vector<bool> to_val(records.size(), false);
    for (auto& [c, idx] : by_class) {
        std::mt19937_64 rng(derive_seed(seed, 0x484f4c44ULL, static_cast<std::uint64_t>(c)));
        std::shuffle(idx.begin(), idx.end(), rng);
        auto k = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(idx.size())));
        if (idx.size() >= 2) k = std::clamp<std::size_t>(k, 1, idx.size() - 1);
        for (std::size_t j = 0; j < k; ++j) to_val[idx[j]] = true;
    }
    Holdout out;
    for (std::size_t i = 0; i < records.size(); ++i) (to_val[i] ? out.validation : out.train).push_back(records[i]);
    return out;
}

}  // namespace signtune
