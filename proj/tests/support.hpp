#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "signtune/signtune.hpp"

namespace signtune::testing {

inline std::filesystem::path data_dir() { return SIGNTUNE_DATA_DIR; }

inline const Taxonomy& default_taxonomy() {
    static const Taxonomy t = Taxonomy::load(data_dir() / "taxonomy.json");
    return t;
}

inline const ScenarioPools& default_pools() {
    static const ScenarioPools p = ScenarioPools::load(data_dir() / "pools.json");
    return p;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("signtune-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

/// Random parameter set with `arrays` entries of random rank-0..2 shapes.
template <class S = float>
BasicParameterSet<S> random_parameters(std::mt19937_64& rng, int arrays = 5, double scale = 1.0) {
    std::uniform_int_distribution<int> rank(0, 2), dim(1, 6);
    std::normal_distribution<double> value(0.0, scale);
    typename BasicParameterSet<S>::map_type m;
    for (int i = 0; i < arrays; ++i) {
        Shape shape;
        const int r = rank(rng);
        for (int k = 0; k < r; ++k) shape.push_back(static_cast<std::size_t>(dim(rng)));
        Tensor<S> t = Tensor<S>::zeros(shape);
        for (auto& v : t.values) v = static_cast<S>(value(rng));
        m.emplace("layer" + std::to_string(i) + ".w", std::move(t));
    }
    return BasicParameterSet<S>(std::move(m));
}

/// Same names and shapes as `like`, fresh values.
template <class S>
BasicParameterSet<S> random_like(const BasicParameterSet<S>& like, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> value(0.0, scale);
    typename BasicParameterSet<S>::map_type m;
    for (const auto& [name, t] : like) {
        Tensor<S> u = Tensor<S>::zeros(t.shape);
        for (auto& v : u.values) v = static_cast<S>(value(rng));
        m.emplace(name, std::move(u));
    }
    return BasicParameterSet<S>(std::move(m));
}

/// A small reference-model problem: 4 classes, 2 regions, region_0 for
/// training and validation.
struct SmallProblem {
    ParameterSet anchor;
    TrainingData data;
    Manifest manifest;
};

inline SmallProblem small_problem(std::uint64_t seed, int per_class = 8) {
    SmallProblem p;
    ReferenceConfig rc;
    rc.image_hidden = 16;
    rc.text_hidden = 16;
    rc.embed_dim = 8;
    rc.text_vocab = 128;
    p.anchor = ReferenceModel<float>::init(rc, seed).parameters();
    p.manifest = generate_synthetic_regions(4, 2, per_class, 0.5, seed);
    const auto split = split_by_region(p.manifest, {"region_0"});
    const auto holdout = stratified_holdout(split.train, 0.25, seed);
    p.data.train = LabeledImages::from_records(holdout.train, kSyntheticSide);
    p.data.validation = LabeledImages::from_records(holdout.validation, kSyntheticSide);
    p.data.prompts = generate_prompt_set(default_taxonomy().prefix(4), default_pools(), 2, seed);
    p.data.n_classes = 4;
    return p;
}

inline TrainConfig small_config(Strategy s, std::uint64_t seed, int epochs = 3) {
    TrainConfig c = TrainConfig::synthetic_profile();
    c.strategy = s;
    c.epochs = epochs;
    c.batch_size = 8;
    c.learning_rate = 1e-2;
    c.seed = seed;
    return c;
}

inline ParameterSet encoder_part(const ParameterSet& p) {
    return filter_parameters(p, [](const std::string& n) { return !is_head_parameter(n); });
}

}  // namespace signtune::testing
