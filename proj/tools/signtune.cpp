// signtune: prompts -> manifest -> train -> ensemble -> evaluate -> report.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "signtune/signtune.hpp"

namespace fs = std::filesystem;
using namespace signtune;

namespace {

struct Common {
    std::uint64_t seed = 0;
    std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    cmd->add_option("--out", c.out, "Output directory (default: runs/<timestamp>-seed<seed>)");
}

fs::path run_dir(const Common& c) {
    fs::path dir;
    if (!c.out.empty()) {
        dir = c.out;
    } else {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        localtime_r(&now, &tm);
        char stamp[32];
        std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
        dir = fs::path("runs") / (std::string(stamp) + "-seed" + std::to_string(c.seed));
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

std::set<std::string> split_list(const std::vector<std::string>& items) {
    std::set<std::string> out;
    for (const auto& item : items) {
        std::stringstream ss(item);
        std::string part;
        while (std::getline(ss, part, ',')) {
            if (!part.empty()) out.insert(part);
        }
    }
    return out;
}

std::size_t class_count(const PromptSet& prompts) {
    int hi = -1;
    for (const auto& p : prompts) hi = std::max(hi, p.class_id);
    if (hi < 0) throw CoverageError("prompt set is empty");
    return static_cast<std::size_t>(hi + 1);
}

// TOML section for the active subcommand holding every option that has a
// value (given or defaulted); loadable again through --config.
std::string resolved_config(const CLI::App& cmd) {
    auto quote = [](const std::string& v) {
        std::string q = "\"";
        for (const char c : v) {
            if (c == '"' || c == '\\') q += '\\';
            q += c;
        }
        return q + "\"";
    };
    std::string out = "[" + cmd.get_name() + "]\n";
    for (const CLI::Option* opt : cmd.get_options()) {
        if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
        std::vector<std::string> values = opt->count() > 0 ? opt->results() : std::vector<std::string>{};
        if (values.empty() && !opt->get_default_str().empty()) values.push_back(opt->get_default_str());
        if (values.empty()) continue;
        out += opt->get_lnames().front() + "=";
        if (values.size() == 1) {
            out += quote(values.front());
        } else {
            out += "[";
            for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + quote(values[i]);
            out += "]";
        }
        out += "\n";
    }
    return out;
}

void echo_config(const CLI::App& cmd, const fs::path& dir) {
    const auto text = resolved_config(cmd);
    std::cout << "# resolved config\n" << text << std::flush;
    if (!dir.empty()) write_text_file(dir / "config.toml", text);
}

// --- gen-prompts -----------------------------------------------------------

struct GenPrompts {
    Common common;
    std::string taxonomy, pools, mode = "combined";
    int n_per_class = 8;
    std::size_t classes = 0;
};

int gen_prompts(const CLI::App& app, const GenPrompts& o) {
    const auto dir = run_dir(o.common);
    echo_config(app, dir);
    auto taxonomy = Taxonomy::load(o.taxonomy);
    const auto pools = ScenarioPools::load(o.pools);
    if (o.classes == 0) {
        if (!taxonomy.is_complete()) {
            throw signtune::ConfigError("taxonomy has " + std::to_string(taxonomy.size()) + " classes; expected " +
                                        std::to_string(kCanonicalClassCount) + " (or pass --classes)");
        }
    } else {
        taxonomy = taxonomy.prefix(o.classes);
    }
    const auto prompts = generate_prompt_set(taxonomy, pools, o.n_per_class, o.common.seed, prompt_mode_from_string(o.mode));
    save_prompt_set(prompts, dir / "prompts.jsonl");
    std::cout << "prompts: " << prompts.size() << "\ndigest: " << prompt_set_digest(prompts) << "\nwritten: "
              << (dir / "prompts.jsonl").string() << "\n";
    return 0;
}

// --- build-manifest --------------------------------------------------------

struct BuildManifest {
    Common common;
    std::string mapping;
    std::vector<std::string> sources;
    std::size_t classes = kCanonicalClassCount;
};

int build_manifest_cmd(const CLI::App& app, const BuildManifest& o) {
    const auto dir = run_dir(o.common);
    echo_config(app, dir);
    const auto mapping = MappingConfig::load(o.mapping);
    std::vector<SourceRoot> roots;
    for (const auto& s : o.sources) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError("--source expects ID=PATH, got '" + s + "'");
        roots.push_back({s.substr(0, eq), s.substr(eq + 1)});
    }
    const auto built = build_manifest(roots, mapping, o.classes);
    save_manifest(built.manifest, dir / "manifest.jsonl");
    const auto coverage = coverage_check(built.manifest, o.classes);
    nlohmann::json cov;
    for (const auto& r : coverage.regions) cov["regions"][r.region] = {{"images", r.images}, {"classes", r.classes}};
    cov["absent_classes"] = coverage.absent_classes;
    write_text_file(dir / "coverage.json", cov.dump(2) + "\n");
    std::size_t dropped = 0;
    for (const auto& [key, n] : built.dropped) dropped += n;
    std::cout << "records: " << built.manifest.records.size() << "\ndropped: " << dropped
              << "\ndigest: " << manifest_digest(built.manifest) << "\n";
    return 0;
}

// --- synth-data ------------------------------------------------------------

struct SynthData {
    Common common;
    int classes = 6, regions = 3, per_class = 40;
    double shift = 0.4;
};

int synth_data(const CLI::App& app, const SynthData& o) {
    const auto dir = run_dir(o.common);
    echo_config(app, dir);
    const auto m = generate_synthetic_regions(o.classes, o.regions, o.per_class, o.shift, o.common.seed);
    const auto path = write_synthetic_dataset(m, dir);
    std::cout << "records: " << m.records.size() << "\ndigest: " << manifest_digest(m) << "\nmanifest: " << path.string() << "\n";
    return 0;
}

// --- zero-shot -------------------------------------------------------------

struct ZeroShot {
    Common common;
    std::string from, taxonomy, pools;
    std::size_t classes = 6;
    int pretrain_epochs = 4;
    bool random_init = false;
};

int zero_shot(const CLI::App& app, const ZeroShot& o) {
    const auto dir = run_dir(o.common);
    echo_config(app, dir);
    Checkpoint ckpt;
    ckpt.meta.seed = o.common.seed;
    if (!o.from.empty()) {
        ckpt.params = load_archive(o.from);
        (void)ReferenceModel<float>(ckpt.params);
    } else if (o.random_init) {
        ckpt.params = ReferenceModel<float>::init({}, o.common.seed).parameters();
    } else {
        if (o.taxonomy.empty() || o.pools.empty()) throw UsageError("zero-shot pretraining needs --taxonomy and --pools");
        const auto taxonomy = Taxonomy::load(o.taxonomy).prefix(o.classes);
        const auto pools = ScenarioPools::load(o.pools);
        AnchorPretraining cfg;
        cfg.epochs = o.pretrain_epochs;
        ckpt.params = pretrain_synthetic_anchor(cfg, taxonomy, pools, o.common.seed);
    }
    save_checkpoint(ckpt, dir / "checkpoint");
    std::cout << "checkpoint: " << (dir / "checkpoint").string() << "\ndigest: " << parameter_digest(ckpt.params) << "\n";
    return 0;
}

// --- train -----------------------------------------------------------------

struct Train {
    Common common;
    std::string strategy, init, manifest, prompts, fine_tuned, profile = "full_scale";
    std::vector<std::string> train_regions;
    double val_fraction = 0.2;
    std::optional<int> epochs, warmup_steps;
    std::optional<std::size_t> batch_size;
    std::optional<double> lr, lambda, alpha, gamma, clamp_lo, clamp_hi, momentum, weight_decay;
    std::optional<std::string> loss_mode, optimizer;
};

TrainConfig resolve(const Train& o) {
    TrainConfig cfg;
    if (o.profile == "synthetic") {
        cfg = TrainConfig::synthetic_profile();
    } else if (o.profile != "full_scale") {
        throw UsageError("unknown profile '" + o.profile + "' (full_scale|synthetic)");
    }
    cfg.strategy = strategy_from_string(o.strategy);
    cfg.seed = o.common.seed;
    if (o.epochs) cfg.epochs = *o.epochs;
    if (o.batch_size) cfg.batch_size = *o.batch_size;
    if (o.lr) cfg.learning_rate = *o.lr;
    if (o.lambda) cfg.lambda = *o.lambda;
    if (o.alpha) cfg.alpha = *o.alpha;
    if (o.gamma) cfg.factor.gamma = *o.gamma;
    if (o.clamp_lo) cfg.factor.clamp_lo = *o.clamp_lo;
    if (o.clamp_hi) cfg.factor.clamp_hi = *o.clamp_hi;
    if (o.momentum) cfg.momentum = *o.momentum;
    if (o.weight_decay) cfg.weight_decay = *o.weight_decay;
    if (o.warmup_steps) cfg.warmup_steps = *o.warmup_steps;
    if (o.loss_mode) cfg.loss_mode = loss_mode_from_string(*o.loss_mode);
    if (o.optimizer) cfg.optimizer = optimizer_from_string(*o.optimizer);
    cfg.validate();
    return cfg;
}

int train(const CLI::App& app, const Train& o) {
    const auto cfg = resolve(o);
    const auto dir = run_dir(o.common);
    echo_config(app, dir);
    std::cout << "# resolved training config\n" << cfg.to_json().dump() << "\n";
    write_text_file(dir / "train_config.json", cfg.to_json().dump(2) + "\n");

    std::optional<Checkpoint> fine_tuned;
    if (cfg.strategy == Strategy::wise_ft) {
        if (o.fine_tuned.empty()) throw MissingInputError("wise_ft needs a finished fine-tuned checkpoint (--fine-tuned)");
        fine_tuned = load_checkpoint(o.fine_tuned);
    }
    const auto init = load_checkpoint(o.init);
    const auto prompts = load_prompt_set(o.prompts);
    const auto manifest = load_manifest(o.manifest);
    const auto n_classes = class_count(prompts);
    manifest.validate(n_classes);
    const auto split = split_by_region(manifest, split_list(o.train_regions));
    for (const auto& w : split.warnings) std::cerr << "warning: " << w << "\n";
    const auto holdout = stratified_holdout(split.train, o.val_fraction, derive_seed(cfg.seed, 0x56414cULL));

    const auto side = ReferenceModel<float>(filter_parameters(init.params, [](const std::string& n) { return !is_head_parameter(n); }))
                          .image_side();
    TrainingData data;
    data.train = LabeledImages::from_records(holdout.train, side, manifest.base_dir);
    data.validation = LabeledImages::from_records(holdout.validation, side, manifest.base_dir);
    data.prompts = prompts;
    data.n_classes = n_classes;

    const auto result = run_strategy(init.params, data, cfg, fine_tuned, [](const EpochResult& e, const ParameterSet&) {
        std::cout << "epoch " << e.epoch << " loss " << e.train_loss;
        if (e.beta) std::cout << " zs_loss " << *e.zero_shot_loss << " beta " << *e.beta;
        std::cout << "\n" << std::flush;
    });
    save_checkpoint(result.checkpoint, dir / "checkpoint");
    write_text_file(dir / "epochs.jsonl", epochs_jsonl(result.epochs));
    if (cfg.strategy == Strategy::adwe) write_text_file(dir / "trace.csv", result.trace.csv());
    std::cout << "checkpoint: " << (dir / "checkpoint").string() << "\ndigest: " << parameter_digest(result.checkpoint.params)
              << "\n";
    return 0;
}

// --- ensemble --------------------------------------------------------------

struct Ensemble {
    Common common;
    std::string zero_shot, fine_tuned;
    double alpha = 0.5;
};

int ensemble(const CLI::App& app, const Ensemble& o) {
    const auto dir = run_dir(o.common);
    echo_config(app, dir);
    const auto zs = load_checkpoint(o.zero_shot);
    const auto ft = load_checkpoint(o.fine_tuned);
    Checkpoint out{wise_ft_ensemble(zs.params, ft.params, o.alpha), ft.meta};
    out.meta.strategy = "wise_ft";
    out.meta.alpha = o.alpha;
    out.meta.beta_history.clear();
    save_checkpoint(out, dir / "checkpoint");
    std::cout << "checkpoint: " << (dir / "checkpoint").string() << "\ndigest: " << parameter_digest(out.params) << "\n";
    return 0;
}

// --- evaluate --------------------------------------------------------------

struct Evaluate {
    Common common;
    std::string checkpoint, manifest, prompts, baseline, label, average = "unweighted";
    std::vector<std::string> train_regions;
    bool export_embeddings = false;
};

int evaluate_cmd(const CLI::App& app, const Evaluate& o) {
    const auto dir = run_dir(o.common);
    echo_config(app, dir);
    const auto ckpt = load_checkpoint(o.checkpoint);
    const auto prompts = load_prompt_set(o.prompts);
    const auto manifest = load_manifest(o.manifest);
    const auto n_classes = class_count(prompts);
    manifest.validate(n_classes);
    const auto split = split_by_region(manifest, split_list(o.train_regions));
    for (const auto& w : split.warnings) std::cerr << "warning: " << w << "\n";

    const ModelClassifier clf(ckpt.params, prompts, n_classes);
    auto report = evaluate(clf, split, o.label.empty() ? ckpt.meta.strategy : o.label, ckpt.meta.seed);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    report.save(dir / "report.json");

    std::optional<RegionReport> baseline;
    if (!o.baseline.empty()) baseline = RegionReport::load(o.baseline);
    const std::vector<RegionReport> rows{report};
    const auto kind = average_kind_from_string(o.average);
    const auto table = render_table(rows, baseline ? &*baseline : nullptr, kind);
    write_text_file(dir / "report.txt", table);
    std::cout << table;
    if (baseline) std::cout << "delta: " << format_delta(compare(report, *baseline, kind)) << "\n";
    if (o.export_embeddings) export_embeddings(clf, split.test, split.base_dir, dir / "embeddings");
    return 0;
}

// --- report ----------------------------------------------------------------

struct Report {
    Common common;
    std::vector<std::string> reports;
    std::string baseline, average = "unweighted";
};

int report_cmd(const CLI::App& app, const Report& o) {
    const auto dir = run_dir(o.common);
    echo_config(app, dir);
    std::vector<RegionReport> rows;
    for (const auto& p : o.reports) rows.push_back(RegionReport::load(p));
    std::optional<RegionReport> baseline;
    if (!o.baseline.empty()) baseline = RegionReport::load(o.baseline);
    const auto table = render_table(rows, baseline ? &*baseline : nullptr, average_kind_from_string(o.average));
    write_text_file(dir / "table.txt", table);
    std::cout << table;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust fine-tuning of contrastive image-text sign classifiers"};
    app.set_config("--config", "", "TOML config file; command-line flags override it");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1);

    GenPrompts gp;
    auto* c_gp = app.add_subcommand("gen-prompts", "Compose the scenario + category + rule prompt set");
    add_common(c_gp, gp.common);
    c_gp->add_option("--taxonomy", gp.taxonomy, "Taxonomy JSON")->required();
    c_gp->add_option("--pools", gp.pools, "Scenario pools JSON")->required();
    c_gp->add_option("--n-per-class", gp.n_per_class, "Templates per class")->capture_default_str();
    c_gp->add_option("--mode", gp.mode, "combined|scenario|rules|name")->capture_default_str();
    c_gp->add_option("--classes", gp.classes, "Use the first N classes (0 = full taxonomy)")->capture_default_str();

    BuildManifest bm;
    auto* c_bm = app.add_subcommand("build-manifest", "Map raw source folders onto canonical classes");
    add_common(c_bm, bm.common);
    c_bm->add_option("--mapping", bm.mapping, "Mapping JSON")->required();
    c_bm->add_option("--source", bm.sources, "SOURCE_ID=PATH, repeatable")->required();
    c_bm->add_option("--classes", bm.classes, "Canonical class count")->capture_default_str();

    SynthData sd;
    auto* c_sd = app.add_subcommand("synth-data", "Render a synthetic multi-region sign dataset");
    add_common(c_sd, sd.common);
    c_sd->add_option("--classes", sd.classes)->capture_default_str();
    c_sd->add_option("--regions", sd.regions)->capture_default_str();
    c_sd->add_option("--per-class", sd.per_class, "Samples per class and region")->capture_default_str();
    c_sd->add_option("--shift", sd.shift, "Regional style strength in [0, 1]")->capture_default_str();

    ZeroShot zs;
    auto* c_zs = app.add_subcommand("zero-shot", "Create the zero-shot anchor checkpoint");
    add_common(c_zs, zs.common);
    c_zs->add_option("--from", zs.from, "Wrap an existing params.bin archive");
    c_zs->add_flag("--random-init", zs.random_init, "Untrained reference encoders");
    c_zs->add_option("--taxonomy", zs.taxonomy, "Taxonomy JSON (pretraining captions)");
    c_zs->add_option("--pools", zs.pools, "Scenario pools JSON (pretraining captions)");
    c_zs->add_option("--classes", zs.classes)->capture_default_str();
    c_zs->add_option("--pretrain-epochs", zs.pretrain_epochs)->capture_default_str();

    Train tr;
    auto* c_tr = app.add_subcommand("train", "Fine-tune with one strategy");
    add_common(c_tr, tr.common);
    c_tr->add_option("--strategy", tr.strategy, "zero_shot|linear_probe|full_ft|wise_ft|adwe")->required();
    c_tr->add_option("--init", tr.init, "Zero-shot anchor checkpoint directory")->required();
    c_tr->add_option("--manifest", tr.manifest, "Manifest JSONL")->required();
    c_tr->add_option("--prompts", tr.prompts, "Prompt set JSONL")->required();
    c_tr->add_option("--train-regions", tr.train_regions, "Training regions (comma list)")->required();
    c_tr->add_option("--fine-tuned", tr.fine_tuned, "Finished fine-tuned checkpoint (wise_ft)");
    c_tr->add_option("--profile", tr.profile, "full_scale|synthetic defaults")->capture_default_str();
    c_tr->add_option("--val-fraction", tr.val_fraction)->capture_default_str();
    c_tr->add_option("--epochs", tr.epochs);
    c_tr->add_option("--batch-size", tr.batch_size);
    c_tr->add_option("--lr", tr.lr);
    c_tr->add_option("--lambda", tr.lambda, "Anchor penalty weight");
    c_tr->add_option("--alpha", tr.alpha, "Wise-FT zero-shot proportion");
    c_tr->add_option("--gamma", tr.gamma, "Adaptive factor scale");
    c_tr->add_option("--clamp-lo", tr.clamp_lo);
    c_tr->add_option("--clamp-hi", tr.clamp_hi);
    c_tr->add_option("--loss-mode", tr.loss_mode, "contrastive|cross_entropy");
    c_tr->add_option("--optimizer", tr.optimizer, "sgd|adam");
    c_tr->add_option("--momentum", tr.momentum);
    c_tr->add_option("--weight-decay", tr.weight_decay);
    c_tr->add_option("--warmup-steps", tr.warmup_steps);

    Ensemble en;
    auto* c_en = app.add_subcommand("ensemble", "Interpolate a zero-shot and a fine-tuned checkpoint");
    add_common(c_en, en.common);
    c_en->add_option("--zero-shot", en.zero_shot)->required();
    c_en->add_option("--fine-tuned", en.fine_tuned)->required();
    c_en->add_option("--alpha", en.alpha)->capture_default_str();

    Evaluate ev;
    auto* c_ev = app.add_subcommand("evaluate", "Per-region accuracy on the held-out regions");
    add_common(c_ev, ev.common);
    c_ev->add_option("--checkpoint", ev.checkpoint)->required();
    c_ev->add_option("--manifest", ev.manifest)->required();
    c_ev->add_option("--prompts", ev.prompts)->required();
    c_ev->add_option("--train-regions", ev.train_regions, "Regions excluded from testing (comma list)")->required();
    c_ev->add_option("--baseline", ev.baseline, "Baseline report.json for the delta");
    c_ev->add_option("--label", ev.label, "Row label (default: checkpoint strategy)");
    c_ev->add_option("--average", ev.average, "unweighted|sample_weighted")->capture_default_str();
    c_ev->add_flag("--export-embeddings", ev.export_embeddings);

    Report rp;
    auto* c_rp = app.add_subcommand("report", "Render report files as one table");
    add_common(c_rp, rp.common);
    c_rp->add_option("--reports", rp.reports)->required();
    c_rp->add_option("--baseline", rp.baseline);
    c_rp->add_option("--average", rp.average, "unweighted|sample_weighted")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::config);
    } catch (const CLI::FileError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::config);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::usage);
    }

    try {
        if (*c_gp) return gen_prompts(*c_gp, gp);
        if (*c_bm) return build_manifest_cmd(*c_bm, bm);
        if (*c_sd) return synth_data(*c_sd, sd);
        if (*c_zs) return zero_shot(*c_zs, zs);
        if (*c_tr) return train(*c_tr, tr);
        if (*c_en) return ensemble(*c_en, en);
        if (*c_ev) return evaluate_cmd(*c_ev, ev);
        if (*c_rp) return report_cmd(*c_rp, rp);
    } catch (const signtune::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.exit_code());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::data);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::numeric);
    }
    return static_cast<int>(ExitCode::usage);
}
