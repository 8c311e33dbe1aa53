#pragma once

// Cross-region accuracy reports, deltas between reports, and embedding export.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "signtune/archive.hpp"
#include "signtune/data.hpp"
#include "signtune/error.hpp"
#include "signtune/model.hpp"
#include "signtune/parameter_set.hpp"
#include "signtune/prompts.hpp"

namespace signtune {

/// Predicts class ids from a parameter set. Checkpoints with a linear head
/// use argmax of W z; all others use cosine similarity to class-text
/// embeddings built from the prompt set.
class ModelClassifier {
public:
    ModelClassifier(ParameterSet params, const PromptSet& prompts, std::size_t n_classes)
        : digest_(parameter_digest(params)), model_(std::move(params)) {
        if (model_.has_head()) {
            head_ = as_matrix(model_.parameters().at(kHeadName));
            if (static_cast<std::size_t>(head_.rows()) != n_classes) throw AlignmentError("classifier: head rows differ from class count");
        } else {
            classes_ = model_.class_embeddings(prompts, n_classes);
        }
    }

    Matrix<float> embed(const Matrix<float>& pixels) const { return model_.encode_images(pixels); }

    std::vector<int> predict_pixels(const Matrix<float>& pixels) const {
        const Matrix<float> z = embed(pixels);
        std::vector<int> out;
        if (model_.has_head()) {
            const Matrix<float> logits = z * head_.transpose();
            for (Eigen::Index i = 0; i < logits.rows(); ++i) {
                Eigen::Index best = 0;
                for (Eigen::Index c = 1; c < logits.cols(); ++c) {
                    if (logits(i, c) > logits(i, best)) best = c;
                }
                out.push_back(static_cast<int>(best));
            }
        } else {
            for (const auto& p : zero_shot_classify<float>(z, classes_)) out.push_back(p.class_id);
        }
        return out;
    }

    std::vector<int> predict(std::span<const SampleRecord> records, const std::filesystem::path& base_dir = {}) const {
        return predict_pixels(record_inputs<float>(records, model_.image_side(), base_dir));
    }

    const ReferenceModel<float>& model() const noexcept { return model_; }
    const std::string& digest() const noexcept { return digest_; }

private:
    std::string digest_;
    ReferenceModel<float> model_;
    Matrix<float> head_;
    Matrix<float> classes_;
};

inline double accuracy(std::span<const int> predicted, std::span<const int> labels) {
    if (predicted.size() != labels.size()) throw AlignmentError("accuracy: prediction and label counts differ");
    if (labels.empty()) throw DataError("accuracy: no samples");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hit += predicted[i] == labels[i];
    return static_cast<double>(hit) / static_cast<double>(labels.size());
}

/// Which region average a comparison uses. Unweighted is the headline
/// number; the sample-weighted average weights each region by its test count.
enum class AverageKind { unweighted, sample_weighted };

inline AverageKind average_kind_from_string(std::string_view s) {
    if (s == "unweighted") return AverageKind::unweighted;
    if (s == "sample_weighted") return AverageKind::sample_weighted;
    throw UsageError("unknown average '" + std::string(s) + "' (unweighted|sample_weighted)");
}

struct RegionReport {
    std::map<std::string, double> per_region;
    std::map<std::string, std::size_t> n_per_region;
    double average = 0.0;  // unweighted mean over regions
    std::string strategy;
    std::uint64_t seed = 0;
    std::string checkpoint_digest;
    std::vector<std::string> warnings;

    static double mean_of(const std::map<std::string, double>& per_region) {
        if (per_region.empty()) throw DataError("region report: no evaluated regions");
        double s = 0.0;
        for (const auto& [r, a] : per_region) s += a;
        return s / static_cast<double>(per_region.size());
    }

    /// Mean weighted by test-sample counts. Not the headline number.
    double sample_weighted_average() const {
        double s = 0.0;
        std::size_t n = 0;
        for (const auto& [r, a] : per_region) {
            const auto k = n_per_region.at(r);
            s += a * static_cast<double>(k);
            n += k;
        }
        if (n == 0) throw DivisionGuardError("region report: zero samples");
        return s / static_cast<double>(n);
    }

    double average_of(AverageKind kind) const { return kind == AverageKind::unweighted ? average : sample_weighted_average(); }

    std::set<std::string> regions() const {
        std::set<std::string> out;
        for (const auto& [r, a] : per_region) out.insert(r);
        return out;
    }

    void validate() const {
        for (const auto& [r, a] : per_region) {
            if (!(a >= 0.0 && a <= 1.0)) throw ValidityError("region report: accuracy of " + r + " outside [0, 1]");
        }
        if (std::abs(average - mean_of(per_region)) > 1e-9) throw ValidityError("region report: average is not the mean of the regions");
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["per_region"] = per_region;
        j["n_per_region"] = n_per_region;
        j["average"] = average;
        j["sample_weighted_average"] = sample_weighted_average();
        j["strategy"] = strategy;
        j["seed"] = seed;
        j["checkpoint_digest"] = checkpoint_digest;
        j["warnings"] = warnings;
        return j;
    }

    static RegionReport from_json(const nlohmann::json& j) {
        RegionReport r;
        try {
            r.per_region = j.at("per_region").get<std::map<std::string, double>>();
            r.n_per_region = j.at("n_per_region").get<std::map<std::string, std::size_t>>();
            r.average = j.at("average").get<double>();
            r.strategy = j.value("strategy", "");
            r.seed = j.value("seed", std::uint64_t{0});
            r.checkpoint_digest = j.value("checkpoint_digest", "");
            r.warnings = j.value("warnings", std::vector<std::string>{});
        } catch (const nlohmann::json::exception& e) {
            throw IntegrityError(std::string("region report: ") + e.what());
        }
        r.validate();
        return r;
    }

    static RegionReport load(const std::filesystem::path& path) {
        try {
            return from_json(nlohmann::json::parse(read_text_file(path)));
        } catch (const nlohmann::json::parse_error& e) {
            throw IntegrityError(path.string() + ": " + e.what());
        }
    }

    void save(const std::filesystem::path& path) const { write_text_file(path, to_json().dump(2) + "\n"); }
};

/// Per-region top-1 accuracy of `classifier` on the split's test records.
/// The classifier needs `predict(span<const SampleRecord>, path) -> vector<int>`.
/// Regions without test samples are reported as warnings, never as zeros.
template <class Classifier>
RegionReport evaluate(const Classifier& classifier, const RegionSplit& split) {
    if (split.test_regions.empty()) throw RegionError("evaluate: no test regions");
    std::map<std::string, std::vector<SampleRecord>> by_region;
    for (const auto& rec : split.test) by_region[rec.region].push_back(rec);
    RegionReport report;
    for (const auto& region : split.test_regions) {
        const auto it = by_region.find(region);
        if (it == by_region.end() || it->second.empty()) {
            report.warnings.push_back("region " + region + " has no test samples; excluded from the average");
            continue;
        }
        std::vector<int> labels;
        for (const auto& r : it->second) labels.push_back(r.class_id);
        const auto predicted = classifier.predict(std::span<const SampleRecord>(it->second), split.base_dir);
        report.per_region[region] = accuracy(predicted, labels);
        report.n_per_region[region] = labels.size();
    }
    report.average = RegionReport::mean_of(report.per_region);
    return report;
}

inline RegionReport evaluate(const ModelClassifier& classifier, const RegionSplit& split, std::string strategy, std::uint64_t seed) {
    auto report = evaluate<ModelClassifier>(classifier, split);
    report.strategy = std::move(strategy);
    report.seed = seed;
    report.checkpoint_digest = classifier.digest();
    return report;
}

/// Difference of averages in percentage points.
inline double compare(const RegionReport& candidate, const RegionReport& baseline, AverageKind kind = AverageKind::unweighted) {
    if (candidate.regions() != baseline.regions()) throw ComparabilityError("compare: reports cover different regions");
    return 100.0 * (candidate.average_of(kind) - baseline.average_of(kind));
}

inline std::string format_delta(double delta) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.2f", delta);
    return buf;
}

/// Aligned text table: one row per report, regions as columns (percent),
/// then the average and, when a baseline is given, the delta against it.
inline std::string render_table(std::span<const RegionReport> reports, const RegionReport* baseline = nullptr,
                                AverageKind kind = AverageKind::unweighted) {
    if (reports.empty()) return {};
    const auto regions = reports.front().regions();
    std::vector<std::string> header{"Method"};
    for (const auto& r : regions) header.push_back(r);
    header.push_back(kind == AverageKind::unweighted ? "Avg." : "Avg. (weighted)");
    if (baseline) header.push_back("Δ (%)");

    std::vector<std::vector<std::string>> rows{header};
    for (const auto& rep : reports) {
        if (rep.regions() != regions) throw ComparabilityError("render_table: reports cover different regions");
        std::vector<std::string> row{rep.strategy.empty() ? "-" : rep.strategy};
        char buf[32];
        for (const auto& r : regions) {
            std::snprintf(buf, sizeof buf, "%.2f", 100.0 * rep.per_region.at(r));
            row.push_back(buf);
        }
        std::snprintf(buf, sizeof buf, "%.2f", 100.0 * rep.average_of(kind));
        row.push_back(buf);
        if (baseline) row.push_back(format_delta(compare(rep, *baseline, kind)));
        rows.push_back(std::move(row));
    }

    // Column widths count code points so the delta symbol aligns.
    auto width = [](const std::string& s) {
        std::size_t w = 0;
        for (const unsigned char c : s) w += (c & 0xC0) != 0x80;
        return w;
    };
    std::vector<std::size_t> widths(header.size(), 0);
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], width(row[c]));
    }
    std::ostringstream out;
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            const auto pad = widths[c] - width(row[c]);
            if (c == 0) {
                out << row[c] << std::string(pad, ' ');
            } else {
                out << "  " << std::string(pad, ' ') << row[c];
            }
        }
        out << "\n";
    }
    return out.str();
}

/// Writes `embeddings.bin` (one (n, d) float32 array named "embeddings") and
/// `embeddings.csv` (sample_id, region, class_id, predicted_id) into `dir`.
inline void export_embeddings(const ModelClassifier& classifier, std::span<const SampleRecord> records,
                              const std::filesystem::path& base_dir, const std::filesystem::path& dir) {
    if (records.empty()) throw DataError("export_embeddings: empty split");
    const Matrix<float> pixels = record_inputs<float>(records, classifier.model().image_side(), base_dir);
    const Matrix<float> z = classifier.embed(pixels);
    const auto predicted = classifier.predict_pixels(pixels);
    ParameterSet::map_type m;
    m.emplace("embeddings", to_tensor<float>(z, {static_cast<std::size_t>(z.rows()), static_cast<std::size_t>(z.cols())}));
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("export_embeddings: cannot create " + dir.string());
    save_archive(ParameterSet(std::move(m)), dir / "embeddings.bin");
    std::string csv = "sample_id,region,class_id,predicted_id\n";
    for (std::size_t i = 0; i < records.size(); ++i) {
        csv += records[i].image_ref + "," + records[i].region + "," + std::to_string(records[i].class_id) + "," +
               std::to_string(predicted[i]) + "\n";
    }
    write_text_file(dir / "embeddings.csv", csv);
}

}  // namespace signtune
