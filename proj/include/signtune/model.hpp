#pragma once

// Encoders and zero-shot classification.
//
// The reference encoders are two small towers (affine, tanh, affine, L2
// normalisation) over a flattened raster and a hashed bag of tokens. They are
// deliberately tiny so contrastive fine-tuning runs on a CPU in seconds; real
// pretrained backbones plug in behind EncoderBackend.

#include <Eigen/Dense>

#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "signtune/data.hpp"
#include "signtune/error.hpp"
#include "signtune/parameter_set.hpp"
#include "signtune/prompts.hpp"

namespace signtune {

template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;

template <class S>
Eigen::Map<const Matrix<S>> as_matrix(const Tensor<S>& t) {
    return {t.values.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

template <class S>
Eigen::Map<const RowVector<S>> as_row(const Tensor<S>& t) {
    return {t.values.data(), static_cast<Eigen::Index>(t.size())};
}

template <class S, class Derived>
Tensor<S> to_tensor(const Eigen::MatrixBase<Derived>& m, Shape shape) {
    Tensor<S> t(std::move(shape), std::vector<S>(static_cast<std::size_t>(m.size())));
    Eigen::Map<Matrix<S>>(t.values.data(), m.rows(), m.cols()) = m;
    return t;
}

/// Accumulates gradients for a subset of a parameter set's arrays.
template <class S>
class Gradients {
public:
    void add(const std::string& name, const Shape& shape, const Eigen::Ref<const Matrix<S>>& g) {
        auto [it, inserted] = grads_.try_emplace(name, Tensor<S>::zeros(shape));
        Eigen::Map<Matrix<S>>(it->second.values.data(), g.rows(), g.cols()) += g;
    }

    void add_scalar(const std::string& name, S g) {
        auto [it, inserted] = grads_.try_emplace(name, Tensor<S>::zeros({}));
        it->second.values[0] += g;
    }

    bool contains(std::string_view name) const { return grads_.find(name) != grads_.end(); }
    const Tensor<S>& at(std::string_view name) const { return grads_.find(name)->second; }

    /// Dense gradient aligned with `like`; arrays never touched are zero.
    BasicParameterSet<S> aligned_with(const BasicParameterSet<S>& like) const {
        typename BasicParameterSet<S>::map_type out;
        for (const auto& [name, t] : like) {
            const auto it = grads_.find(name);
            out.emplace(name, it != grads_.end() ? it->second : Tensor<S>::zeros(t.shape));
        }
        return BasicParameterSet<S>(std::move(out));
    }

private:
    std::map<std::string, Tensor<S>, std::less<>> grads_;
};

// ---------------------------------------------------------------------------
// Cosine similarity and zero-shot classification

template <class S>
S cosine_similarity(std::span<const S> z, std::span<const S> t) {
    if (z.size() != t.size()) throw AlignmentError("cosine_similarity: dimension mismatch");
    double dot = 0, nz = 0, nt = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        dot += static_cast<double>(z[i]) * t[i];
        nz += static_cast<double>(z[i]) * z[i];
        nt += static_cast<double>(t[i]) * t[i];
    }
    if (nz == 0.0 || nt == 0.0) throw DegenerateInputError("cosine_similarity: zero-norm input");
    return static_cast<S>(std::clamp(dot / (std::sqrt(nz) * std::sqrt(nt)), -1.0, 1.0));
}

struct Prediction {
    int class_id = 0;
    double score = 0.0;
};

/// Per image: the class whose text embedding has the highest cosine
/// similarity; ties go to the lowest class id.
template <class S>
std::vector<Prediction> zero_shot_classify(const Matrix<S>& image_embs, const Matrix<S>& class_embs) {
    if (image_embs.cols() != class_embs.cols()) throw AlignmentError("zero_shot_classify: embedding dimensions differ");
    if (class_embs.rows() == 0) throw CoverageError("zero_shot_classify: no classes");
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> z = image_embs.template cast<double>();
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> c = class_embs.template cast<double>();
    const Eigen::VectorXd class_norms = c.rowwise().norm();
    std::vector<Prediction> out;
    out.reserve(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double zn = z.row(i).norm();
        if (zn == 0.0) throw DegenerateInputError("zero_shot_classify: image " + std::to_string(i) + " has zero norm");
        Prediction best{-1, -std::numeric_limits<double>::infinity()};
        for (Eigen::Index k = 0; k < c.rows(); ++k) {
            const double score = std::clamp(z.row(i).dot(c.row(k)) / (zn * class_norms(k)), -1.0, 1.0);
            if (score > best.score) best = {static_cast<int>(k), score};
        }
        out.push_back(best);
    }
    return out;
}

template <class S>
void normalize_rows_in_place(Matrix<S>& m, const char* what) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const S n = m.row(i).norm();
        if (!(n > S(0))) throw DegenerateInputError(std::string(what) + ": zero-norm row " + std::to_string(i));
        m.row(i) /= n;
    }
}

// ---------------------------------------------------------------------------
// Class-text embeddings: per class, mean of normalised template embeddings,
// renormalised.

template <class S>
struct ClassEmbeddingCache {
    Matrix<S> unit;               // normalised template embeddings (M x d)
    std::vector<S> template_norm;  // pre-normalisation norms
    Matrix<S> mean;               // per-class means (C x d)
    std::vector<S> mean_norm;
    std::vector<int> class_of;
    std::vector<int> count;
};

template <class S>
Matrix<S> aggregate_class_embeddings(const Matrix<S>& template_embs, const std::vector<int>& class_of, std::size_t n_classes,
                                     ClassEmbeddingCache<S>* cache = nullptr) {
    const auto d = template_embs.cols();
    std::vector<int> count(n_classes, 0);
    for (const int c : class_of) {
        if (c < 0 || static_cast<std::size_t>(c) >= n_classes) throw CoverageError("class embeddings: class id out of range");
        ++count[static_cast<std::size_t>(c)];
    }
    for (std::size_t c = 0; c < n_classes; ++c) {
        if (count[c] == 0) throw CoverageError("class embeddings: no template for class " + std::to_string(c));
    }
    Matrix<S> unit = template_embs;
    std::vector<S> tnorm(static_cast<std::size_t>(unit.rows()));
    for (Eigen::Index i = 0; i < unit.rows(); ++i) {
        tnorm[static_cast<std::size_t>(i)] = unit.row(i).norm();
        if (!(tnorm[static_cast<std::size_t>(i)] > S(0))) throw DegenerateInputError("class embeddings: zero-norm template");
        unit.row(i) /= tnorm[static_cast<std::size_t>(i)];
    }
    Matrix<S> mean = Matrix<S>::Zero(static_cast<Eigen::Index>(n_classes), d);
    for (Eigen::Index i = 0; i < unit.rows(); ++i) mean.row(class_of[static_cast<std::size_t>(i)]) += unit.row(i);
    std::vector<S> mnorm(n_classes);
    Matrix<S> out = mean;
    for (std::size_t c = 0; c < n_classes; ++c) {
        mean.row(static_cast<Eigen::Index>(c)) /= static_cast<S>(count[c]);
        mnorm[c] = mean.row(static_cast<Eigen::Index>(c)).norm();
        if (!(mnorm[c] > S(0))) throw DegenerateInputError("class embeddings: templates of class " + std::to_string(c) + " cancel out");
        out.row(static_cast<Eigen::Index>(c)) = mean.row(static_cast<Eigen::Index>(c)) / mnorm[c];
    }
    if (cache) *cache = {std::move(unit), std::move(tnorm), std::move(mean), std::move(mnorm), class_of, std::move(count)};
    return out;
}

/// Gradient with respect to the raw template embeddings given dL/d(class embeddings).
template <class S>
Matrix<S> aggregate_class_embeddings_backward(const ClassEmbeddingCache<S>& cache, const Matrix<S>& d_class) {
    const auto n_classes = static_cast<Eigen::Index>(cache.count.size());
    Matrix<S> d_mean(n_classes, d_class.cols());
    for (Eigen::Index c = 0; c < n_classes; ++c) {
        const RowVector<S> out = cache.mean.row(c) / cache.mean_norm[static_cast<std::size_t>(c)];
        const S proj = out.dot(d_class.row(c));
        d_mean.row(c) = (d_class.row(c) - proj * out) / cache.mean_norm[static_cast<std::size_t>(c)];
    }
    Matrix<S> d_templates(cache.unit.rows(), cache.unit.cols());
    for (Eigen::Index i = 0; i < cache.unit.rows(); ++i) {
        const int c = cache.class_of[static_cast<std::size_t>(i)];
        const RowVector<S> du = d_mean.row(c) / static_cast<S>(cache.count[static_cast<std::size_t>(c)]);
        const S proj = cache.unit.row(i).dot(du);
        d_templates.row(i) = (du - proj * cache.unit.row(i)) / cache.template_norm[static_cast<std::size_t>(i)];
    }
    return d_templates;
}

/// (n_classes x d) unit-norm class-text embeddings from a prompt set.
/// `encode_texts` maps a list of strings to one embedding row per string.
template <class S, class TextEncoder>
Matrix<S> build_class_text_embeddings(const PromptSet& prompts, TextEncoder&& encode_texts, std::size_t n_classes) {
    require_prompt_coverage(prompts, n_classes);
    std::vector<std::string> texts;
    std::vector<int> class_of;
    for (const auto& p : prompts) {
        texts.push_back(p.text);
        class_of.push_back(p.class_id);
    }
    const Matrix<S> embs = encode_texts(texts);
    return aggregate_class_embeddings<S>(embs, class_of, n_classes);
}

// ---------------------------------------------------------------------------
// Reference encoders

struct ReferenceConfig {
    int image_side = kSyntheticSide;
    int image_hidden = 64;
    int text_vocab = 512;
    int text_hidden = 64;
    int embed_dim = 64;
    double init_logit_scale = 10.0;
};

/// Lower-case alphanumeric runs.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (const char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// L2-normalised hashed bag of tokens, one row per text.
template <class S>
Matrix<S> token_bags(std::span<const std::string> texts, int vocab) {
    Matrix<S> out = Matrix<S>::Zero(static_cast<Eigen::Index>(texts.size()), vocab);
    for (std::size_t i = 0; i < texts.size(); ++i) {
        for (const auto& tok : tokenize(texts[i])) {
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(fnv1a(tok) % static_cast<std::uint64_t>(vocab))) += S(1);
        }
        const S n = out.row(static_cast<Eigen::Index>(i)).norm();
        if (n > S(0)) out.row(static_cast<Eigen::Index>(i)) /= n;
    }
    return out;
}

/// Flattened interleaved RGB in [-0.5, 0.5], one row per raster.
template <class S>
Matrix<S> image_inputs(std::span<const Raster> rasters, int side) {
    Matrix<S> out(static_cast<Eigen::Index>(rasters.size()), side * side * 3);
    for (std::size_t i = 0; i < rasters.size(); ++i) {
        const Raster r = resize_nearest(rasters[i], side);
        for (std::size_t k = 0; k < r.rgb.size(); ++k) {
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = static_cast<S>(r.rgb[k] / 255.0 - 0.5);
        }
    }
    return out;
}

template <class S>
Matrix<S> record_inputs(std::span<const SampleRecord> records, int side, const std::filesystem::path& base_dir = {}) {
    std::vector<Raster> rasters;
    rasters.reserve(records.size());
    for (const auto& r : records) rasters.push_back(load_raster(r, base_dir));
    return image_inputs<S>(rasters, side);
}

template <class S>
struct TowerCache {
    Matrix<S> input;
    Matrix<S> hidden;
    std::vector<S> norms;
    Matrix<S> output;
};

namespace detail {

template <class S>
Matrix<S> tower_forward(const BasicParameterSet<S>& p, const std::string& prefix, const Matrix<S>& x, TowerCache<S>* cache) {
    const auto w1 = as_matrix(p.at(prefix + ".fc1.weight"));
    const auto b1 = as_row(p.at(prefix + ".fc1.bias"));
    const auto w2 = as_matrix(p.at(prefix + ".fc2.weight"));
    const auto b2 = as_row(p.at(prefix + ".fc2.bias"));
    if (x.cols() != w1.cols()) throw AlignmentError(prefix + ": input width " + std::to_string(x.cols()) + " != " + std::to_string(w1.cols()));
    Matrix<S> hidden = (x * w1.transpose()).rowwise() + b1;
    hidden = hidden.array().tanh().matrix();
    Matrix<S> out = (hidden * w2.transpose()).rowwise() + b2;
    std::vector<S> norms(static_cast<std::size_t>(out.rows()));
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const S n = out.row(i).norm();
        if (!(n > S(0))) throw DegenerateInputError(prefix + ": zero-norm embedding");
        norms[static_cast<std::size_t>(i)] = n;
        out.row(i) /= n;
    }
    if (cache) *cache = {x, std::move(hidden), std::move(norms), out};
    return out;
}

template <class S>
void tower_backward(const BasicParameterSet<S>& p, const std::string& prefix, const TowerCache<S>& cache,
                    const Matrix<S>& d_out, Gradients<S>& grads) {
    const auto& w1t = p.at(prefix + ".fc1.weight");
    const auto& w2t = p.at(prefix + ".fc2.weight");
    Matrix<S> d_pre(d_out.rows(), d_out.cols());
    for (Eigen::Index i = 0; i < d_out.rows(); ++i) {
        const S proj = cache.output.row(i).dot(d_out.row(i));
        d_pre.row(i) = (d_out.row(i) - proj * cache.output.row(i)) / cache.norms[static_cast<std::size_t>(i)];
    }
    grads.add(prefix + ".fc2.weight", w2t.shape, d_pre.transpose() * cache.hidden);
    grads.add(prefix + ".fc2.bias", p.at(prefix + ".fc2.bias").shape, d_pre.colwise().sum());
    Matrix<S> d_hidden = d_pre * as_matrix(w2t);
    d_hidden.array() *= (S(1) - cache.hidden.array().square());
    grads.add(prefix + ".fc1.weight", w1t.shape, d_hidden.transpose() * cache.input);
    grads.add(prefix + ".fc1.bias", p.at(prefix + ".fc1.bias").shape, d_hidden.colwise().sum());
}

}  // namespace detail

inline constexpr const char* kLogitScaleName = "logit_scale";
inline constexpr const char* kHeadName = "head.weight";

inline bool is_head_parameter(std::string_view name) { return name.starts_with("head."); }

/// Tiny image/text encoder pair over a parameter set.
///
/// Parameters: image.fc{1,2}.{weight,bias}, text.fc{1,2}.{weight,bias} and
/// the scalar `logit_scale` (stored as a log, so the similarity scale
/// exp(logit_scale) is always positive). A linear probe adds `head.weight`.
template <class S>
class ReferenceModel {
public:
    explicit ReferenceModel(BasicParameterSet<S> params) : params_(std::move(params)) {
        const auto& iw1 = params_.at("image.fc1.weight");
        const auto& iw2 = params_.at("image.fc2.weight");
        const auto& tw1 = params_.at("text.fc1.weight");
        const auto& tw2 = params_.at("text.fc2.weight");
        (void)params_.at(kLogitScaleName);
        if (iw1.shape.size() != 2 || iw2.shape.size() != 2 || tw1.shape.size() != 2 || tw2.shape.size() != 2) {
            throw AlignmentError("reference model: weight arrays must be 2-D");
        }
        input_dim_ = static_cast<int>(iw1.shape[1]);
        vocab_ = static_cast<int>(tw1.shape[1]);
        embed_dim_ = static_cast<int>(iw2.shape[0]);
        if (static_cast<int>(tw2.shape[0]) != embed_dim_) throw AlignmentError("reference model: image and text embedding dims differ");
        if (embed_dim_ < 2) throw AlignmentError("reference model: embedding dim must be >= 2");
        image_side_ = static_cast<int>(std::lround(std::sqrt(input_dim_ / 3.0)));
        if (image_side_ * image_side_ * 3 != input_dim_) throw AlignmentError("reference model: image input is not a square RGB raster");
        if (params_.contains(kHeadName) && static_cast<int>(params_.at(kHeadName).cols()) != embed_dim_) {
            throw AlignmentError("reference model: head width differs from embedding dim");
        }
    }

    static ReferenceModel init(const ReferenceConfig& cfg, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        typename BasicParameterSet<S>::map_type p;
        auto dense = [&](const std::string& name, int out, int in) {
            std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
            Tensor<S> w = Tensor<S>::zeros({static_cast<std::size_t>(out), static_cast<std::size_t>(in)});
            for (auto& v : w.values) v = static_cast<S>(dist(rng));
            p.emplace(name + ".weight", std::move(w));
            p.emplace(name + ".bias", Tensor<S>::zeros({static_cast<std::size_t>(out)}));
        };
        dense("image.fc1", cfg.image_hidden, cfg.image_side * cfg.image_side * 3);
        dense("image.fc2", cfg.embed_dim, cfg.image_hidden);
        dense("text.fc1", cfg.text_hidden, cfg.text_vocab);
        dense("text.fc2", cfg.embed_dim, cfg.text_hidden);
        p.emplace(kLogitScaleName, Tensor<S>::scalar(static_cast<S>(std::log(cfg.init_logit_scale))));
        return ReferenceModel(BasicParameterSet<S>(std::move(p)));
    }

    const BasicParameterSet<S>& parameters() const noexcept { return params_; }
    int image_side() const noexcept { return image_side_; }
    int input_dim() const noexcept { return input_dim_; }
    int vocab() const noexcept { return vocab_; }
    int embed_dim() const noexcept { return embed_dim_; }
    bool has_head() const { return params_.contains(kHeadName); }
    S logit_scale() const { return std::exp(params_.at(kLogitScaleName).values[0]); }

    Matrix<S> encode_images(const Matrix<S>& pixels, TowerCache<S>* cache = nullptr) const {
        return detail::tower_forward(params_, "image", pixels, cache);
    }
    Matrix<S> encode_token_bags(const Matrix<S>& bags, TowerCache<S>* cache = nullptr) const {
        return detail::tower_forward(params_, "text", bags, cache);
    }
    Matrix<S> encode_texts(std::span<const std::string> texts) const { return encode_token_bags(token_bags<S>(texts, vocab_)); }

    void backward_images(const TowerCache<S>& cache, const Matrix<S>& d_out, Gradients<S>& grads) const {
        detail::tower_backward(params_, "image", cache, d_out, grads);
    }
    void backward_texts(const TowerCache<S>& cache, const Matrix<S>& d_out, Gradients<S>& grads) const {
        detail::tower_backward(params_, "text", cache, d_out, grads);
    }

    Matrix<S> class_embeddings(const PromptSet& prompts, std::size_t n_classes) const {
        return build_class_text_embeddings<S>(prompts, [this](const std::vector<std::string>& t) { return encode_texts(t); },
                                              n_classes);
    }

private:
    BasicParameterSet<S> params_;
    int input_dim_ = 0;
    int vocab_ = 0;
    int embed_dim_ = 0;
    int image_side_ = 0;
};

/// Seam for external vision-language backbones: anything that embeds images
/// and texts into a shared space and round-trips its weights as a ParameterSet.
class EncoderBackend {
public:
    virtual ~EncoderBackend() = default;
    virtual Matrix<float> encode_images(std::span<const Raster> images) const = 0;
    virtual Matrix<float> encode_texts(std::span<const std::string> texts) const = 0;
    virtual float logit_scale() const = 0;
    virtual ParameterSet export_parameters() const = 0;
    virtual void import_parameters(const ParameterSet& params) = 0;
};

class ReferenceBackend final : public EncoderBackend {
public:
    explicit ReferenceBackend(ParameterSet params) : model_(std::move(params)) {}

    Matrix<float> encode_images(std::span<const Raster> images) const override {
        return model_.encode_images(image_inputs<float>(images, model_.image_side()));
    }
    Matrix<float> encode_texts(std::span<const std::string> texts) const override { return model_.encode_texts(texts); }
    float logit_scale() const override { return model_.logit_scale(); }
    ParameterSet export_parameters() const override { return model_.parameters(); }
    void import_parameters(const ParameterSet& params) override { model_ = ReferenceModel<float>(params); }

    const ReferenceModel<float>& model() const noexcept { return model_; }

private:
    ReferenceModel<float> model_;
};

}  // namespace signtune
