#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "support.hpp"

using namespace signtune;
using namespace signtune::testing;

namespace {

float cos2(std::vector<float> z, std::vector<float> t) { return cosine_similarity<float>(z, t); }

Matrix<double> rows(std::initializer_list<std::initializer_list<double>> r) {
    Matrix<double> m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
    Eigen::Index i = 0;
    for (const auto& row : r) {
        Eigen::Index j = 0;
        for (const double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

}  // namespace

TEST(CosineSimilarity, HandValues) {
    EXPECT_FLOAT_EQ(cos2({1, 0}, {1, 0}), 1.0f);
    EXPECT_FLOAT_EQ(cos2({1, 0}, {0, 1}), 0.0f);
    EXPECT_NEAR(cos2({3, 4}, {4, 3}), 0.96f, 1e-7);
    EXPECT_THROW(cos2({0, 0}, {1, 0}), DegenerateInputError);
    EXPECT_THROW(cos2({1, 0, 0}, {1, 0}), AlignmentError);
}

TEST(CosineSimilarity, BoundedForRandomVectors) {
    std::mt19937_64 rng(1);
    std::normal_distribution<float> n(0, 1);
    for (int k = 0; k < 200; ++k) {
        std::vector<float> a(7), b(7);
        for (auto& v : a) v = n(rng);
        for (auto& v : b) v = n(rng);
        const float c = cos2(a, b);
        EXPECT_GE(c, -1.0f);
        EXPECT_LE(c, 1.0f);
        EXPECT_FLOAT_EQ(cos2(a, a), 1.0f);
    }
}

TEST(ZeroShotClassify, HandValues) {
    const auto classes = rows({{1, 0}, {0, 1}});
    auto p = zero_shot_classify<double>(rows({{0.9, 0.1}}), classes);
    EXPECT_EQ(p[0].class_id, 0);
    EXPECT_NEAR(p[0].score, 0.9 / std::hypot(0.9, 0.1), 1e-12);
    EXPECT_NEAR(p[0].score, 0.9939, 1e-4);
    p = zero_shot_classify<double>(rows({{0, 1}}), classes);
    EXPECT_EQ(p[0].class_id, 1);
    EXPECT_DOUBLE_EQ(p[0].score, 1.0);
    p = zero_shot_classify<double>(rows({{1, 1}}), classes);
    EXPECT_EQ(p[0].class_id, 0);  // tie goes to the lowest id
    EXPECT_THROW(zero_shot_classify<double>(rows({{0, 0}}), classes), DegenerateInputError);
}

TEST(ZeroShotClassifyProperty, PositiveScaleInvariance) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> scale(1e-3, 1e3);
    for (int k = 0; k < 50; ++k) {
        const auto z = random_matrix(rng, 6, 5);
        const auto c = unit_rows(random_matrix(rng, 4, 5));
        const double s = scale(rng);
        const auto a = zero_shot_classify<double>(z, c);
        const auto b = zero_shot_classify<double>(Matrix<double>(s * z), c);
        for (std::size_t i = 0; i < a.size(); ++i) {
            EXPECT_EQ(a[i].class_id, b[i].class_id);
            EXPECT_NEAR(a[i].score, b[i].score, 1e-6);
            EXPECT_GE(a[i].score, -1.0);
            EXPECT_LE(a[i].score, 1.0);
        }
    }
}

TEST(ClassEmbeddings, AggregationHandValues) {
    const auto single = aggregate_class_embeddings<double>(rows({{3, 4}, {0, 2}}), {0, 1}, 2);
    EXPECT_NEAR(single(0, 0), 0.6, 1e-12);
    EXPECT_NEAR(single(0, 1), 0.8, 1e-12);
    EXPECT_NEAR(single(1, 1), 1.0, 1e-12);

    const auto twice = aggregate_class_embeddings<double>(rows({{3, 4}, {6, 8}}), {0, 0}, 1);
    EXPECT_NEAR(twice(0, 0), 0.6, 1e-12);
    EXPECT_NEAR(twice(0, 1), 0.8, 1e-12);

    const auto ortho = aggregate_class_embeddings<double>(rows({{1, 0}, {0, 1}}), {0, 0}, 1);
    EXPECT_NEAR(ortho(0, 0), 1 / std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(ortho(0, 1), 1 / std::sqrt(2.0), 1e-12);

    EXPECT_THROW(aggregate_class_embeddings<double>(rows({{1, 0}}), {0}, 2), CoverageError);
}

TEST(ClassEmbeddings, UnitRowsFromPromptSet) {
    const auto model = ReferenceModel<float>::init({}, 3);
    const auto prompts = generate_prompt_set(default_taxonomy(), default_pools(), 3, 3);
    const auto c = model.class_embeddings(prompts, 46);
    ASSERT_EQ(c.rows(), 46);
    for (Eigen::Index i = 0; i < c.rows(); ++i) EXPECT_NEAR(c.row(i).norm(), 1.0f, 1e-6f);
    EXPECT_THROW(model.class_embeddings(generate_prompt_set(default_taxonomy().prefix(5), default_pools(), 1, 1), 6),
                 CoverageError);
}

TEST(ClassEmbeddings, BackwardMatchesFiniteDifferences) {
    std::mt19937_64 rng(4);
    const std::vector<int> class_of{0, 1, 0, 2, 1, 2, 2};
    auto t = random_matrix(rng, 7, 5);
    const auto r = random_matrix(rng, 3, 5);
    auto value = [&] { return (aggregate_class_embeddings<double>(t, class_of, 3).array() * r.array()).sum(); };
    ClassEmbeddingCache<double> cache;
    aggregate_class_embeddings<double>(t, class_of, 3, &cache);
    const auto analytic = flatten(aggregate_class_embeddings_backward<double>(cache, r));
    EXPECT_LT(relative_error(analytic, numeric_gradient(t, value)), kGradTolerance);
}

TEST(ReferenceModel, InitIsDeterministic) {
    ReferenceConfig rc;
    rc.embed_dim = 16;
    const auto a = ReferenceModel<float>::init(rc, 42).parameters();
    const auto b = ReferenceModel<float>::init(rc, 42).parameters();
    EXPECT_EQ(a, b);
    EXPECT_EQ(parameter_digest(a), parameter_digest(b));
    EXPECT_NE(parameter_digest(a), parameter_digest(ReferenceModel<float>::init(rc, 43).parameters()));
    EXPECT_NEAR(ReferenceModel<float>::init(rc, 42).logit_scale(), 10.0f, 1e-4f);
}

TEST(ReferenceModel, EmbeddingsAreUnitNorm) {
    const auto model = ReferenceModel<float>::init({}, 5);
    const auto m = generate_synthetic_regions(3, 2, 2, 0.5, 5);
    const auto z = model.encode_images(record_inputs<float>(m.records, model.image_side()));
    ASSERT_EQ(z.rows(), 12);
    ASSERT_EQ(z.cols(), 64);
    for (Eigen::Index i = 0; i < z.rows(); ++i) EXPECT_NEAR(z.row(i).norm(), 1.0f, 1e-5f);
}

TEST(ReferenceModel, RejectsMisshapedParameters) {
    auto p = ReferenceModel<float>::init({}, 1).parameters();
    auto m = p.entries();
    m.erase("logit_scale");
    EXPECT_THROW(ReferenceModel<float>(ParameterSet(m)), AlignmentError);
}

TEST(ReferenceModel, TowerBackwardMatchesFiniteDifferences) {
    ReferenceConfig rc;
    rc.image_side = 2;
    rc.image_hidden = 5;
    rc.text_vocab = 9;
    rc.text_hidden = 4;
    rc.embed_dim = 3;
    const auto params = ReferenceModel<double>::init(rc, 7).parameters();
    std::mt19937_64 rng(8);
    const auto x = random_matrix(rng, 4, 12);
    const auto r = random_matrix(rng, 4, 3);

    auto objective = [&](const BasicParameterSet<double>& p) {
        return (ReferenceModel<double>(p).encode_images(x).array() * r.array()).sum();
    };
    const ReferenceModel<double> model(params);
    TowerCache<double> cache;
    model.encode_images(x, &cache);
    Gradients<double> grads;
    model.backward_images(cache, r, grads);
    const auto g = grads.aligned_with(params);

    std::vector<double> analytic, numeric;
    for (const auto& [name, t] : params) {
        for (std::size_t i = 0; i < t.values.size(); ++i) {
            auto up = params.entries(), down = params.entries();
            up.at(name).values[i] += kFdStep;
            down.at(name).values[i] -= kFdStep;
            numeric.push_back((objective(BasicParameterSet<double>(up)) - objective(BasicParameterSet<double>(down))) /
                              (2 * kFdStep));
            analytic.push_back(g.at(name).values[i]);
        }
    }
    EXPECT_LT(relative_error(analytic, numeric), kGradTolerance);
}

TEST(Tokenizer, LowercaseAlphanumericRuns) {
    EXPECT_EQ(tokenize("No Overtaking, 30km/h!"), (std::vector<std::string>{"no", "overtaking", "30km", "h"}));
    const std::vector<std::string> texts{"stop sign", "STOP  sign"};
    const auto bags = token_bags<float>(texts, 64);
    EXPECT_EQ(bags.row(0), bags.row(1));
    EXPECT_NEAR(bags.row(0).norm(), 1.0f, 1e-6f);
}

TEST(ReferenceBackend, ParameterRoundTrip) {
    const auto p = ReferenceModel<float>::init({}, 9).parameters();
    ReferenceBackend backend(p);
    EXPECT_EQ(backend.export_parameters(), p);
    const auto q = ReferenceModel<float>::init({}, 10).parameters();
    backend.import_parameters(q);
    EXPECT_EQ(backend.export_parameters(), q);
    const std::vector<std::string> texts{"a", "b c"};
    EXPECT_EQ(backend.encode_texts(texts).rows(), 2);
}
