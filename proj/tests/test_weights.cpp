#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "support.hpp"

using namespace signtune;
using namespace signtune::testing;

namespace {

ParameterSet scalars(float p) {
    ParameterSet::map_type m;
    m.emplace("p", Tensor<float>::scalar(p));
    return ParameterSet(std::move(m));
}

ParameterSet vec(std::vector<float> v) {
    ParameterSet::map_type m;
    const auto n = v.size();
    m.emplace("p", Tensor<float>({n}, std::move(v)));
    return ParameterSet(std::move(m));
}

}  // namespace

TEST(ParameterSet, RejectsEmptyNameWrongSizeAndNonFinite) {
    ParameterSet::map_type empty_name;
    empty_name.emplace("", Tensor<float>::scalar(1));
    EXPECT_THROW(ParameterSet{empty_name}, ConfigError);

    ParameterSet::map_type bad_shape;
    bad_shape.emplace("w", Tensor<float>({2, 2}, {1, 2, 3}));
    EXPECT_THROW(ParameterSet{bad_shape}, ConfigError);

    ParameterSet::map_type nan;
    nan.emplace("w", Tensor<float>::scalar(std::nanf("")));
    EXPECT_THROW(ParameterSet{nan}, ValidityError);

    ParameterSet::map_type inf;
    inf.emplace("w", Tensor<float>::scalar(INFINITY));
    EXPECT_THROW(ParameterSet{inf}, ValidityError);
}

TEST(ParameterSet, AlignmentNamesFirstOffender) {
    ParameterSet::map_type a, b;
    a.emplace("a.weight", Tensor<float>::zeros({2}));
    a.emplace("b.weight", Tensor<float>::zeros({3}));
    b.emplace("a.weight", Tensor<float>::zeros({2}));
    b.emplace("b.weight", Tensor<float>::zeros({4}));
    try {
        interpolate(ParameterSet(a), ParameterSet(b), 0.5);
        FAIL() << "expected AlignmentError";
    } catch (const AlignmentError& e) {
        EXPECT_NE(std::string(e.what()).find("b.weight"), std::string::npos);
    }
    b.erase("b.weight");
    b.emplace("c.weight", Tensor<float>::zeros({3}));
    EXPECT_THROW(squared_distance(ParameterSet(a), ParameterSet(b)), AlignmentError);
    EXPECT_FALSE(aligned(ParameterSet(a), ParameterSet(b)));
}

TEST(Interpolate, EndpointsAreExact) {
    std::mt19937_64 rng(1);
    const auto a = random_parameters(rng), b = random_like(a, rng);
    EXPECT_EQ(interpolate(a, b, 1.0), a);
    EXPECT_EQ(interpolate(a, b, 0.0), b);
}

TEST(Interpolate, ScalarMidpoint) {
    EXPECT_EQ(interpolate(scalars(1.0f), scalars(3.0f), 0.5).at("p").values[0], 2.0f);
}

TEST(Interpolate, RejectsFactorOutsideUnitInterval) {
    EXPECT_THROW(interpolate(scalars(1), scalars(2), -0.01), RangeError);
    EXPECT_THROW(interpolate(scalars(1), scalars(2), 1.01), RangeError);
    EXPECT_THROW(interpolate(scalars(1), scalars(2), std::nan("")), RangeError);
}

TEST(SquaredDistance, HandValues) {
    EXPECT_EQ(squared_distance(vec({2, 0}), vec({0, 0})), 4.0);
    std::mt19937_64 rng(2);
    const auto a = random_parameters(rng);
    EXPECT_EQ(squared_distance(a, a), 0.0);
}

TEST(InterpolateProperty, SelfInterpolationIsIdentity) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> w(0.0, 1.0);
    for (int k = 0; k < 50; ++k) {
        const auto a = random_parameters(rng);
        EXPECT_EQ(interpolate(a, a, w(rng)), a);
    }
}

TEST(InterpolateProperty, AffineConsistencyAndDistanceScaling) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> wd(0.0, 1.0);
    for (int k = 0; k < 100; ++k) {
        const auto a = random_parameters(rng), b = random_like(a, rng);
        const double w = wd(rng);
        const auto c = interpolate(a, b, w);
        for (const auto& [name, t] : c) {
            const auto& av = a.at(name).values;
            const auto& bv = b.at(name).values;
            for (std::size_t i = 0; i < t.values.size(); ++i) {
                const double expect = bv[i] + w * (static_cast<double>(av[i]) - bv[i]);
                const double scale = std::max({std::abs(static_cast<double>(av[i])), std::abs(static_cast<double>(bv[i])), 1e-30});
                EXPECT_LE(std::abs(t.values[i] - expect) / scale, 1e-6);
            }
        }
        const double d_ab = squared_distance(a, b);
        EXPECT_NEAR(squared_distance(c, b), w * w * d_ab, 1e-5 * std::max(w * w * d_ab, 1e-12));
    }
}

TEST(SquaredDistanceProperty, Symmetric) {
    std::mt19937_64 rng(5);
    for (int k = 0; k < 50; ++k) {
        const auto a = random_parameters(rng), b = random_like(a, rng);
        EXPECT_EQ(squared_distance(a, b), squared_distance(b, a));
    }
}

TEST(Archive, RoundTripIsBitExact) {
    std::mt19937_64 rng(6);
    const auto a = random_parameters(rng, 5);
    const auto bytes = encode_archive(a);
    EXPECT_EQ(decode_archive(bytes), a);
    EXPECT_EQ(encode_archive(decode_archive(bytes)), bytes);
}

TEST(Archive, TruncationAndVersion) {
    std::mt19937_64 rng(7);
    auto bytes = encode_archive(random_parameters(rng));
    EXPECT_THROW(decode_archive(std::span(bytes).first(bytes.size() - 3)), IntegrityError);
    bytes[4] = std::byte{9};  // version field
    EXPECT_THROW(decode_archive(bytes), VersionError);
}

TEST(Checkpoint, RoundTripParamsAndMeta) {
    TempDir tmp;
    std::mt19937_64 rng(8);
    Checkpoint c;
    c.params = random_parameters(rng, 5);
    c.meta.strategy = "adwe";
    c.meta.epoch = 3;
    c.meta.gamma = 5;
    c.meta.beta_history = {0.4, 0.1 + 0.2, 1.0 / 3.0};
    c.meta.train_losses = {1.5, 1.25, 0.1};
    c.meta.zero_shot_losses = {2.0, 2.0, 2.0};
    c.meta.prompt_digest = "abc";
    c.meta.seed = 0xFFFFFFFFFFFFFFFFULL;
    save_checkpoint(c, tmp / "ck");
    const auto back = load_checkpoint(tmp / "ck");
    EXPECT_EQ(back.params, c.params);
    EXPECT_EQ(back.meta, c.meta);
    EXPECT_EQ(back.meta.epoch, 3);
    EXPECT_EQ(back.meta.gamma, 5.0);
    EXPECT_EQ(parameter_digest(back.params), parameter_digest(c.params));
}

TEST(Checkpoint, FlippedByteIsIntegrityError) {
    TempDir tmp;
    std::mt19937_64 rng(9);
    save_checkpoint({random_parameters(rng), {}}, tmp / "ck");
    auto bytes = read_file_bytes(tmp / "ck" / "params.bin");
    bytes[bytes.size() / 2] ^= std::byte{0x01};
    write_file_bytes(tmp / "ck" / "params.bin", bytes);
    EXPECT_THROW(load_checkpoint(tmp / "ck"), IntegrityError);
}

TEST(Checkpoint, UnknownMetaVersionIsVersionError) {
    TempDir tmp;
    std::mt19937_64 rng(10);
    save_checkpoint({random_parameters(rng), {}}, tmp / "ck");
    auto meta = nlohmann::json::parse(read_text_file(tmp / "ck" / "meta.json"));
    meta["format_version"] = 99;
    write_text_file(tmp / "ck" / "meta.json", meta.dump());
    EXPECT_THROW(load_checkpoint(tmp / "ck"), VersionError);
}

TEST(Checkpoint, MetaInvariants) {
    CheckpointMeta m;
    m.epoch = -1;
    EXPECT_THROW(validate(m), DataError);
    m.epoch = 2;
    m.strategy = "adwe";
    m.beta_history = {0.3};
    EXPECT_THROW(validate(m), DataError);
    m.beta_history = {0.3, 0.2};
    EXPECT_NO_THROW(validate(m));
}

TEST(Checkpoint, MissingDirectory) {
    EXPECT_THROW(load_checkpoint("/nonexistent/signtune/ck"), MissingInputError);
}
