#pragma once

// Desk-scale cross-region protocol on synthetic signs: pretrain a small
// contrastive anchor on a many-region corpus, then fine-tune on one region
// of an unseen style family and measure accuracy on the held-out regions.

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "signtune/data.hpp"
#include "signtune/eval.hpp"
#include "signtune/model.hpp"
#include "signtune/prompts.hpp"
#include "signtune/training.hpp"

namespace signtune {

struct AnchorPretraining {
    ReferenceConfig model{};
    int n_regions = 8;
    int samples_per_class_region = 10;
    double shift = 1.0;
    int epochs = 4;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    int prompts_per_class = 4;
    PromptMode caption_mode = PromptMode::combined;
};

/// Contrastively pretrained reference encoders: the zero-shot anchor.
inline ParameterSet pretrain_synthetic_anchor(const AnchorPretraining& cfg, const Taxonomy& taxonomy, const ScenarioPools& pools,
                                              std::uint64_t seed) {
    const auto n_classes = static_cast<int>(taxonomy.size());
    const auto corpus = generate_synthetic_regions(n_classes, cfg.n_regions, cfg.samples_per_class_region, cfg.shift,
                                                   derive_seed(seed, 0x434f5250ULL));
    TrainingData data;
    data.train = LabeledImages::from_records(corpus.records, cfg.model.image_side);
    data.prompts = generate_prompt_set(taxonomy, pools, cfg.prompts_per_class, derive_seed(seed, 0x50524d50ULL), cfg.caption_mode);
    data.n_classes = taxonomy.size();

    TrainConfig train = TrainConfig::synthetic_profile();
    train.strategy = Strategy::full_ft;
    train.epochs = cfg.epochs;
    train.batch_size = cfg.batch_size;
    train.learning_rate = cfg.learning_rate;
    train.seed = derive_seed(seed, 0x5054ULL);
    const auto init = ReferenceModel<float>::init(cfg.model, derive_seed(seed, 0x494e4954ULL)).parameters();
    return train_full(init, data, train).checkpoint.params;
}

struct DeskConfig {
    int n_classes = 6;
    int n_regions = 3;  // region_0 trains, the rest are held out
    int samples_per_class_region = 40;
    double shift = 0.4;  // held-out regions differ in style, not in shape
    double val_fraction = 0.2;
    int prompts_per_class = 4;
    PromptMode prompt_mode = PromptMode::combined;
    TrainConfig train = TrainConfig::synthetic_profile();
    AnchorPretraining anchor{};
    std::vector<double> gammas{5.0, 1.0};
};

struct DeskRun {
    std::string label;
    std::vector<double> epoch_accuracy;  // held-out average after each epoch
    double final_accuracy = 0.0;
    RegionReport report;
    std::vector<double> betas;
};

struct DeskSeedResult {
    std::uint64_t seed = 0;
    DeskRun zero_shot;
    DeskRun full_ft;
    std::vector<DeskRun> adwe;  // one per configured gamma
};

/// Largest epoch-over-epoch decrease (0 when accuracy never drops).
inline double largest_drop(const std::vector<double>& acc) {
    double worst = 0.0;
    for (std::size_t t = 1; t < acc.size(); ++t) worst = std::max(worst, acc[t - 1] - acc[t]);
    return worst;
}

namespace detail {

struct HeldOut {
    std::vector<std::string> regions;
    std::vector<LabeledImages> images;
};

inline double held_out_accuracy(const ParameterSet& params, const HeldOut& held, const PromptSet& prompts, std::size_t n_classes) {
    const ModelClassifier clf(params, prompts, n_classes);
    double s = 0.0;
    for (const auto& im : held.images) s += accuracy(clf.predict_pixels(im.pixels), im.labels);
    return s / static_cast<double>(held.images.size());
}

}  // namespace detail

inline DeskSeedResult run_desk_seed(const DeskConfig& cfg, const Taxonomy& taxonomy, const ScenarioPools& pools, std::uint64_t seed) {
    const auto tax = taxonomy.prefix(static_cast<std::size_t>(cfg.n_classes));
    const auto n_classes = static_cast<std::size_t>(cfg.n_classes);
    const auto anchor = pretrain_synthetic_anchor(cfg.anchor, tax, pools, derive_seed(seed, 0x414e4348ULL));

    const auto manifest = generate_synthetic_regions(cfg.n_classes, cfg.n_regions, cfg.samples_per_class_region, cfg.shift,
                                                     derive_seed(seed, 0x4445534bULL));
    const auto split = split_by_region(manifest, {synthetic_region_name(0)});
    const auto holdout = stratified_holdout(split.train, cfg.val_fraction, derive_seed(seed, 0x56414cULL));

    TrainingData data;
    data.train = LabeledImages::from_records(holdout.train, kSyntheticSide);
    data.validation = LabeledImages::from_records(holdout.validation, kSyntheticSide);
    data.prompts = generate_prompt_set(tax, pools, cfg.prompts_per_class, derive_seed(seed, 0x50524d50ULL), cfg.prompt_mode);
    data.n_classes = n_classes;

    detail::HeldOut held;
    for (const auto& region : split.test_regions) {
        std::vector<SampleRecord> recs;
        for (const auto& r : split.test) {
            if (r.region == region) recs.push_back(r);
        }
        held.regions.push_back(region);
        held.images.push_back(LabeledImages::from_records(recs, kSyntheticSide));
    }

    auto finish = [&](DeskRun& run, const ParameterSet& params) {
        run.report = evaluate(ModelClassifier(params, data.prompts, n_classes), split, run.label, seed);
        run.final_accuracy = run.report.average;
    };
    auto observer_for = [&](DeskRun& run) {
        return [&run, &held, &data, n_classes](const EpochResult&, const ParameterSet& theta) {
            run.epoch_accuracy.push_back(detail::held_out_accuracy(theta, held, data.prompts, n_classes));
        };
    };

    DeskSeedResult out;
    out.seed = seed;
    out.zero_shot.label = "zero_shot";
    finish(out.zero_shot, anchor);

    TrainConfig train = cfg.train;
    train.seed = derive_seed(seed, 0x5452ULL);
    train.strategy = Strategy::full_ft;
    out.full_ft.label = "full_ft";
    finish(out.full_ft, train_full(anchor, data, train, observer_for(out.full_ft)).checkpoint.params);

    for (const double gamma : cfg.gammas) {
        DeskRun run;
        run.label = "adwe_gamma_" + std::to_string(static_cast<int>(gamma));
        train.strategy = Strategy::adwe;
        train.factor.gamma = gamma;
        const auto result = train_adwe(anchor, data, train, observer_for(run));
        run.betas = result.trace.betas();
        finish(run, result.checkpoint.params);
        out.adwe.push_back(std::move(run));
    }
    return out;
}

}  // namespace signtune
