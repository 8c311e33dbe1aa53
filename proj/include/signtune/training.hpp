#pragma once

// Fine-tuning strategies: zero-shot, linear probe, full fine-tuning, post-hoc
// weight-space ensembling (Wise-FT), and adaptive dynamic weight ensembling
// (ADWE), which blends the running weights back toward the zero-shot anchor
// at the end of every epoch.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "signtune/archive.hpp"
#include "signtune/checkpoint.hpp"
#include "signtune/data.hpp"
#include "signtune/error.hpp"
#include "signtune/losses.hpp"
#include "signtune/model.hpp"
#include "signtune/parameter_set.hpp"
#include "signtune/prompts.hpp"
#include "signtune/schedule.hpp"

namespace signtune {

enum class Strategy { zero_shot, linear_probe, full_ft, wise_ft, adwe };
enum class LossMode { contrastive, cross_entropy };
enum class OptimizerKind { sgd, adam };

inline std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::zero_shot: return "zero_shot";
        case Strategy::linear_probe: return "linear_probe";
        case Strategy::full_ft: return "full_ft";
        case Strategy::wise_ft: return "wise_ft";
        case Strategy::adwe: return "adwe";
    }
    return "adwe";
}

inline Strategy strategy_from_string(std::string_view s) {
    if (s == "zero_shot") return Strategy::zero_shot;
    if (s == "linear_probe") return Strategy::linear_probe;
    if (s == "full_ft") return Strategy::full_ft;
    if (s == "wise_ft") return Strategy::wise_ft;
    if (s == "adwe") return Strategy::adwe;
    throw UsageError("unknown strategy '" + std::string(s) + "' (zero_shot|linear_probe|full_ft|wise_ft|adwe)");
}

inline std::string to_string(LossMode m) { return m == LossMode::contrastive ? "contrastive" : "cross_entropy"; }

inline LossMode loss_mode_from_string(std::string_view s) {
    if (s == "contrastive") return LossMode::contrastive;
    if (s == "cross_entropy") return LossMode::cross_entropy;
    throw UsageError("unknown loss mode '" + std::string(s) + "' (contrastive|cross_entropy)");
}

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

inline OptimizerKind optimizer_from_string(std::string_view s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adam") return OptimizerKind::adam;
    throw UsageError("unknown optimizer '" + std::string(s) + "' (sgd|adam)");
}

struct TrainConfig {
    Strategy strategy = Strategy::adwe;
    int epochs = 10;
    std::size_t batch_size = 512;
    double learning_rate = 3e-5;
    double lambda = 0.0;  // anchor penalty weight
    double alpha = 0.5;   // Wise-FT zero-shot proportion
    AdaptiveFactorConfig factor{};  // total_epochs is taken from `epochs`
    std::uint64_t seed = 0;
    LossMode loss_mode = LossMode::contrastive;
    OptimizerKind optimizer = OptimizerKind::sgd;
    double momentum = 0.0;
    double weight_decay = 0.0;
    int warmup_steps = 0;

    /// Hyperparameters used for full-size backbones.
    static TrainConfig full_scale_defaults() { return {}; }

    /// Desk-scale settings for the reference encoders on synthetic data:
    /// same epoch count, smaller batches, and a step size the tiny towers
    /// can actually move with.
    static TrainConfig synthetic_profile() {
        TrainConfig c;
        c.batch_size = 32;
        c.learning_rate = 5e-4;
        c.optimizer = OptimizerKind::adam;
        return c;
    }

    AdaptiveFactorConfig factor_config() const {
        auto f = factor;
        f.total_epochs = epochs;
        return f;
    }

    void validate() const {
        if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("train config: batch size must be >= 1");
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train config: learning rate must be positive");
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("train config: lambda must be >= 0");
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("train config: alpha must be in [0, 1]");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train config: momentum must be in [0, 1)");
        if (!(weight_decay >= 0.0)) throw ConfigError("train config: weight decay must be >= 0");
        if (warmup_steps < 0) throw ConfigError("train config: warmup steps must be >= 0");
        factor_config().validate();
    }

    nlohmann::json to_json() const {
        return {{"strategy", to_string(strategy)},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"learning_rate", learning_rate},
                {"lambda", lambda},
                {"alpha", alpha},
                {"gamma", factor.gamma},
                {"clamp_lo", factor.clamp_lo},
                {"clamp_hi", factor.clamp_hi},
                {"seed", seed},
                {"loss_mode", to_string(loss_mode)},
                {"optimizer", to_string(optimizer)},
                {"momentum", momentum},
                {"weight_decay", weight_decay},
                {"warmup_steps", warmup_steps}};
    }
};

struct EpochResult {
    int epoch = 0;
    double train_loss = 0.0;
    std::optional<double> zero_shot_loss;
    std::optional<double> beta_raw;
    std::optional<double> beta;
    std::string param_digest;

    nlohmann::json to_json() const {
        nlohmann::json j{{"epoch", epoch}, {"train_loss", train_loss}, {"param_digest", param_digest}};
        j["zero_shot_loss"] = zero_shot_loss ? nlohmann::json(*zero_shot_loss) : nlohmann::json(nullptr);
        j["beta_raw"] = beta_raw ? nlohmann::json(*beta_raw) : nlohmann::json(nullptr);
        j["beta"] = beta ? nlohmann::json(*beta) : nlohmann::json(nullptr);
        return j;
    }
};

inline std::string epochs_jsonl(const std::vector<EpochResult>& epochs) {
    std::string out;
    for (const auto& e : epochs) out += e.to_json().dump() + "\n";
    return out;
}

struct LabeledImages {
    Matrix<float> pixels;  // one flattened raster per row
    std::vector<int> labels;

    std::size_t size() const noexcept { return labels.size(); }
    bool empty() const noexcept { return labels.empty(); }

    static LabeledImages from_records(std::span<const SampleRecord> records, int side,
                                      const std::filesystem::path& base_dir = {}) {
        LabeledImages out;
        out.pixels = record_inputs<float>(records, side, base_dir);
        for (const auto& r : records) out.labels.push_back(r.class_id);
        return out;
    }
};

struct TrainingData {
    LabeledImages train;
    LabeledImages validation;
    PromptSet prompts;
    std::size_t n_classes = 0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochResult> epochs;
    FactorTrace trace;
};

/// Called after every epoch with the epoch record and the post-epoch weights.
using EpochObserver = std::function<void(const EpochResult&, const ParameterSet&)>;

namespace detail {

struct PromptBank {
    Matrix<float> bags;  // token bags of every template
    std::vector<int> class_of;
    std::vector<std::vector<int>> by_class;
};

inline PromptBank make_prompt_bank(const PromptSet& prompts, int vocab, std::size_t n_classes) {
    require_prompt_coverage(prompts, n_classes);
    PromptBank bank;
    std::vector<std::string> texts;
    bank.by_class.resize(n_classes);
    for (const auto& p : prompts) {
        bank.by_class[static_cast<std::size_t>(p.class_id)].push_back(static_cast<int>(texts.size()));
        texts.push_back(p.text);
        bank.class_of.push_back(p.class_id);
    }
    bank.bags = token_bags<float>(texts, vocab);
    return bank;
}

template <class S>
Matrix<S> gather_rows(const Matrix<S>& m, std::span<const std::size_t> rows) {
    Matrix<S> out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

/// Per-parameter optimizer state; never part of any ensembled parameter set.
class Optimizer {
public:
    explicit Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}

    ParameterSet step(const ParameterSet& theta, const ParameterSet& grad, std::size_t step_index) {
        double lr = cfg_.learning_rate;
        if (cfg_.warmup_steps > 0) {
            lr *= std::min(1.0, static_cast<double>(step_index + 1) / static_cast<double>(cfg_.warmup_steps));
        }
        ++t_;
        ParameterSet::map_type out;
        auto ig = grad.begin();
        for (auto it = theta.begin(); it != theta.end(); ++it, ++ig) {
            const auto& name = it->first;
            std::vector<float> v = it->second.values;
            const auto& g = ig->second.values;
            if (cfg_.optimizer == OptimizerKind::sgd) {
                if (cfg_.momentum > 0.0) {
                    auto& buf = state(first_, name, v.size());
                    for (std::size_t i = 0; i < v.size(); ++i) {
                        buf[i] = cfg_.momentum * buf[i] + g[i];
                        v[i] = static_cast<float>(v[i] - lr * buf[i]);
                    }
                } else {
                    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(v[i] - lr * g[i]);
                }
            } else {
                constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
                auto& m = state(first_, name, v.size());
                auto& s = state(second_, name, v.size());
                const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
                const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
                for (std::size_t i = 0; i < v.size(); ++i) {
                    m[i] = b1 * m[i] + (1 - b1) * g[i];
                    s[i] = b2 * s[i] + (1 - b2) * static_cast<double>(g[i]) * g[i];
                    v[i] = static_cast<float>(v[i] - lr * (m[i] / c1) / (std::sqrt(s[i] / c2) + eps));
                }
            }
            if (cfg_.weight_decay > 0.0) {
                for (auto& x : v) x = static_cast<float>(x - lr * cfg_.weight_decay * x);
            }
            out.emplace(name, Tensor<float>(it->second.shape, std::move(v)));
        }
        last_lr_ = lr;
        return ParameterSet(std::move(out));
    }

    double last_learning_rate() const noexcept { return last_lr_; }

private:
    using State = std::map<std::string, std::vector<double>, std::less<>>;

    static std::vector<double>& state(State& s, const std::string& name, std::size_t n) {
        auto [it, inserted] = s.try_emplace(name, n, 0.0);
        return it->second;
    }

    TrainConfig cfg_;
    State first_;
    State second_;
    std::uint64_t t_ = 0;
    double last_lr_ = 0.0;
};

/// Exact minimiser of the anchor penalty's implicit step:
/// theta <- (theta + 2 lr lambda theta0) / (1 + 2 lr lambda).
inline ParameterSet anchor_proximal_step(const ParameterSet& theta, const ParameterSet& theta0, double lr, double lambda) {
    const double k = 2.0 * lr * lambda;
    ParameterSet::map_type out;
    auto i0 = theta0.begin();
    for (auto it = theta.begin(); it != theta.end(); ++it, ++i0) {
        std::vector<float> v = it->second.values;
        const auto& a = i0->second.values;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>((v[i] + k * a[i]) / (1.0 + k));
        out.emplace(it->first, Tensor<float>(it->second.shape, std::move(v)));
    }
    return ParameterSet(std::move(out));
}

/// Task loss and gradients of the encoder model on one batch.
inline double encoder_batch_gradient(const ReferenceModel<float>& model, const LabeledImages& data,
                                     std::span<const std::size_t> idx, const PromptBank& bank, LossMode mode,
                                     std::mt19937_64* caption_rng, Gradients<float>& grads) {
    const float scale = model.logit_scale();
    TowerCache<float> img_cache;
    const Matrix<float> z = model.encode_images(gather_rows(data.pixels, idx), &img_cache);

    if (mode == LossMode::contrastive) {
        std::vector<std::size_t> captions(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const auto& pool = bank.by_class[static_cast<std::size_t>(data.labels[idx[i]])];
            const std::size_t pick = caption_rng ? static_cast<std::size_t>((*caption_rng)() % pool.size()) : idx[i] % pool.size();
            captions[i] = static_cast<std::size_t>(pool[pick]);
        }
        TowerCache<float> txt_cache;
        const Matrix<float> t = model.encode_token_bags(gather_rows(bank.bags, captions), &txt_cache);
        const auto loss = contrastive_loss<float>(z, t, scale);
        model.backward_images(img_cache, loss.d_image, grads);
        model.backward_texts(txt_cache, loss.d_text, grads);
        grads.add_scalar(kLogitScaleName, loss.d_scale * scale);
        return loss.value;
    }

    TowerCache<float> txt_cache;
    const Matrix<float> templates = model.encode_token_bags(bank.bags, &txt_cache);
    ClassEmbeddingCache<float> agg;
    const Matrix<float> classes = aggregate_class_embeddings<float>(templates, bank.class_of, bank.by_class.size(), &agg);
    std::vector<int> labels(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = data.labels[idx[i]];
    const auto loss = lp_loss<float>(z, labels, Matrix<float>(scale * classes));
    model.backward_images(img_cache, loss.d_features, grads);
    const Matrix<float> d_classes = scale * loss.d_weight;
    model.backward_texts(txt_cache, aggregate_class_embeddings_backward(agg, d_classes), grads);
    grads.add_scalar(kLogitScaleName, (loss.d_weight.array() * classes.array()).sum() * scale);
    return loss.value;
}

/// Deterministic loss of a frozen model over a labelled split (fixed batch
/// order, fixed caption choice).
inline double evaluation_loss(const ReferenceModel<float>& model, const LabeledImages& data, const PromptBank& bank,
                              LossMode mode, std::size_t batch_size) {
    if (data.empty()) throw DataError("evaluation loss: empty split");
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t end = std::min(data.size(), start + batch_size);
        if (mode == LossMode::contrastive && end - start < 2) continue;
        std::vector<std::size_t> idx(end - start);
        std::iota(idx.begin(), idx.end(), start);
        Gradients<float> unused;
        sum += encoder_batch_gradient(model, data, idx, bank, mode, nullptr, unused) * static_cast<double>(idx.size());
        count += idx.size();
    }
    if (count == 0) throw DataError("evaluation loss: split too small for a contrastive batch");
    return sum / static_cast<double>(count);
}

/// One pass over the training split for the encoder strategies.
class EncoderTrainer {
public:
    EncoderTrainer(const ParameterSet& init, const TrainingData& data, const TrainConfig& cfg)
        : data_(data),
          cfg_(cfg),
          anchor_(init),
          bank_(make_prompt_bank(data.prompts, ReferenceModel<float>(init).vocab(), data.n_classes)),
          optimizer_(cfg),
          rng_(derive_seed(cfg.seed, 0x7472616eULL)) {
        if (data.train.empty()) throw DataError("training: empty training split");
    }

    /// Trains theta for one epoch; returns the mean batch loss (task loss plus
    /// anchor penalty) weighted by batch size.
    double run_epoch(ParameterSet& theta) {
        std::vector<std::size_t> order(data_.train.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng_);
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
            if (cfg_.loss_mode == LossMode::contrastive && end - start < 2) continue;
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            const ReferenceModel<float> model(theta);
            Gradients<float> grads;
            double loss = encoder_batch_gradient(model, data_.train, idx, bank_, cfg_.loss_mode, &rng_, grads);
            if (cfg_.lambda > 0.0) loss += cfg_.lambda * squared_distance(theta, anchor_);
            theta = optimizer_.step(theta, grads.aligned_with(theta), step_++);
            if (cfg_.lambda > 0.0) theta = anchor_proximal_step(theta, anchor_, optimizer_.last_learning_rate(), cfg_.lambda);
            sum += loss * static_cast<double>(idx.size());
            count += idx.size();
        }
        if (count == 0) throw DataError("training: no usable batch (contrastive batches need >= 2 samples)");
        return sum / static_cast<double>(count);
    }

    const PromptBank& bank() const noexcept { return bank_; }

private:
    const TrainingData& data_;
    TrainConfig cfg_;
    ParameterSet anchor_;
    PromptBank bank_;
    Optimizer optimizer_;
    std::mt19937_64 rng_;
    std::size_t step_ = 0;
};

inline CheckpointMeta base_meta(const TrainConfig& cfg, const TrainingData& data, std::string strategy) {
    CheckpointMeta m;
    m.strategy = std::move(strategy);
    m.prompt_digest = prompt_set_digest(data.prompts);
    m.seed = cfg.seed;
    return m;
}

}  // namespace detail

/// Interpolation of a zero-shot and a fine-tuned parameter set:
/// alpha * zs + (1 - alpha) * ft.
inline ParameterSet wise_ft_ensemble(const ParameterSet& zero_shot, const ParameterSet& fine_tuned, double alpha) {
    return interpolate(zero_shot, fine_tuned, alpha);
}

/// Zero-shot validation loss of a frozen model on the validation split.
inline double zero_shot_validation_loss(const ParameterSet& anchor, const TrainingData& data, const TrainConfig& cfg) {
    const ReferenceModel<float> model(anchor);
    const auto bank = detail::make_prompt_bank(data.prompts, model.vocab(), data.n_classes);
    return detail::evaluation_loss(model, data.validation, bank, cfg.loss_mode, cfg.batch_size);
}

/// Zero-shot "training": the checkpoint is the anchor itself.
inline TrainResult train_zero_shot(const ParameterSet& encoders, const TrainingData& data, const TrainConfig& cfg) {
    TrainResult out;
    out.checkpoint = {encoders, detail::base_meta(cfg, data, "zero_shot")};
    return out;
}

/// Trains a linear classifier (head.weight, initialised from the zero-shot
/// class-text embeddings times the logit scale) on frozen image features.
/// Encoder arrays are copied through untouched.
inline TrainResult train_linear_probe(const ParameterSet& encoders, const TrainingData& data, const TrainConfig& cfg,
                                      const EpochObserver& observer = {}) {
    cfg.validate();
    if (data.train.empty()) throw DataError("linear probe: empty training split");
    const ReferenceModel<float> model(filter_parameters(encoders, [](const std::string& n) { return !is_head_parameter(n); }));
    const Matrix<float> features = model.encode_images(data.train.pixels);
    const Matrix<float> init_head = model.logit_scale() * model.class_embeddings(data.prompts, data.n_classes);

    ParameterSet::map_type head_map;
    head_map.emplace(kHeadName, to_tensor<float>(init_head, {data.n_classes, static_cast<std::size_t>(model.embed_dim())}));
    ParameterSet head(std::move(head_map));

    detail::Optimizer optimizer(cfg);
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x6c70ULL));
    TrainResult out;
    out.checkpoint.meta = detail::base_meta(cfg, data, "linear_probe");
    std::size_t step = 0;
    auto full_params = [&] {
        auto m = model.parameters().entries();
        m.insert_or_assign(kHeadName, head.at(kHeadName));
        return ParameterSet(std::move(m));
    };
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(data.train.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            std::vector<int> labels;
            for (const auto i : idx) labels.push_back(data.train.labels[i]);
            const auto loss = lp_loss<float>(detail::gather_rows(features, idx), labels, as_matrix(head.at(kHeadName)));
            ParameterSet::map_type g;
            g.emplace(kHeadName, to_tensor<float>(loss.d_weight, head.at(kHeadName).shape));
            head = optimizer.step(head, ParameterSet(std::move(g)), step++);
            sum += loss.value * static_cast<double>(idx.size());
        }
        EpochResult r;
        r.epoch = epoch;
        r.train_loss = sum / static_cast<double>(data.train.size());
        const auto params = full_params();
        r.param_digest = parameter_digest(params);
        out.checkpoint.meta.train_losses.push_back(r.train_loss);
        out.epochs.push_back(r);
        if (observer) observer(r, params);
    }
    out.checkpoint.params = full_params();
    out.checkpoint.meta.epoch = cfg.epochs;
    return out;
}

namespace detail {

// Shared loop for full fine-tuning and ADWE. With `ensemble` unset this is
// plain fine-tuning; otherwise every epoch ends by interpolating toward the
// original anchor.
inline TrainResult train_encoders(const ParameterSet& encoders, const TrainingData& data, const TrainConfig& cfg,
                                  bool ensemble, const EpochObserver& observer) {
    cfg.validate();
    if (encoders.contains(kHeadName)) throw AlignmentError("training: encoder parameters must not carry a linear head");
    const ParameterSet anchor = encoders;  // never re-anchored
    ParameterSet theta = encoders;
    EncoderTrainer trainer(anchor, data, cfg);
    const ReferenceModel<float> anchor_model(anchor);
    const auto factor = cfg.factor_config();
    if (ensemble && data.validation.empty()) throw DataError("adwe: empty validation split");

    TrainResult out;
    out.checkpoint.meta = base_meta(cfg, data, ensemble ? "adwe" : "full_ft");
    if (ensemble) out.checkpoint.meta.gamma = factor.gamma;
    for (int t = 0; t < cfg.epochs; ++t) {
        EpochResult r;
        r.epoch = t;
        r.train_loss = trainer.run_epoch(theta);
        out.checkpoint.meta.train_losses.push_back(r.train_loss);
        if (ensemble) {
            const double zs_loss = evaluation_loss(anchor_model, data.validation, trainer.bank(), cfg.loss_mode, cfg.batch_size);
            const auto f = adaptive_factor(t, factor, r.train_loss, zs_loss);
            theta = interpolate(anchor, theta, f.beta);
            out.trace.append({t, r.train_loss, zs_loss, f.beta_raw, f.beta});
            r.zero_shot_loss = zs_loss;
            r.beta_raw = f.beta_raw;
            r.beta = f.beta;
            out.checkpoint.meta.zero_shot_losses.push_back(zs_loss);
            out.checkpoint.meta.beta_history.push_back(f.beta);
        }
        r.param_digest = parameter_digest(theta);
        out.epochs.push_back(r);
        if (observer) observer(r, theta);
    }
    out.checkpoint.params = std::move(theta);
    out.checkpoint.meta.epoch = cfg.epochs;
    return out;
}

}  // namespace detail

/// Updates every encoder parameter (and the logit scale) with the configured
/// loss; lambda > 0 adds the anchor penalty toward the initial weights.
inline TrainResult train_full(const ParameterSet& encoders, const TrainingData& data, const TrainConfig& cfg,
                              const EpochObserver& observer = {}) {
    return detail::train_encoders(encoders, data, cfg, false, observer);
}

/// Full fine-tuning where each epoch t ends with
///   theta <- beta(t) * theta_zero_shot + (1 - beta(t)) * theta
/// and beta(t) comes from the adaptive factor of the epoch's mean training
/// loss and the frozen anchor's validation loss.
inline TrainResult train_adwe(const ParameterSet& encoders, const TrainingData& data, const TrainConfig& cfg,
                              const EpochObserver& observer = {}) {
    return detail::train_encoders(encoders, data, cfg, true, observer);
}

/// Dispatch on cfg.strategy. Wise-FT needs a finished fine-tuned checkpoint.
inline TrainResult run_strategy(const ParameterSet& encoders, const TrainingData& data, const TrainConfig& cfg,
                                const std::optional<Checkpoint>& fine_tuned = std::nullopt,
                                const EpochObserver& observer = {}) {
    switch (cfg.strategy) {
        case Strategy::zero_shot: return train_zero_shot(encoders, data, cfg);
        case Strategy::linear_probe: return train_linear_probe(encoders, data, cfg, observer);
        case Strategy::full_ft: return train_full(encoders, data, cfg, observer);
        case Strategy::adwe: return train_adwe(encoders, data, cfg, observer);
        case Strategy::wise_ft: {
            if (!fine_tuned) throw MissingInputError("wise_ft: a finished fine-tuned checkpoint is required");
            cfg.validate();
            TrainResult out;
            out.checkpoint.params = wise_ft_ensemble(encoders, fine_tuned->params, cfg.alpha);
            out.checkpoint.meta = fine_tuned->meta;
            out.checkpoint.meta.strategy = "wise_ft";
            out.checkpoint.meta.alpha = cfg.alpha;
            out.checkpoint.meta.beta_history.clear();
            return out;
        }
    }
    throw UsageError("unknown strategy");
}

}  // namespace signtune
