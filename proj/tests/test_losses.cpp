#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "gradcheck.hpp"

using namespace signtune;
using namespace signtune::testing;

namespace {

MatD identity2() { return MatD::Identity(2, 2); }

}  // namespace

TEST(ContrastiveLoss, UniformLogitsGiveLn2) {
    EXPECT_NEAR(contrastive_loss<double>(identity2(), identity2(), 0.0).value, std::numbers::ln2, 1e-15);
}

TEST(ContrastiveLoss, LargeScaleTendsToZero) {
    double prev = contrastive_loss<double>(identity2(), identity2(), 1.0).value;
    for (double s : {5.0, 10.0, 20.0}) {
        const double v = contrastive_loss<double>(identity2(), identity2(), s).value;
        EXPECT_LT(v, prev);
        prev = v;
    }
    EXPECT_LT(contrastive_loss<double>(identity2(), identity2(), 200.0).value, 1e-12);
}

TEST(ContrastiveLoss, PairPermutationInvariance) {
    std::mt19937_64 rng(1);
    for (int k = 0; k < 20; ++k) {
        const auto u = unit_rows(random_matrix(rng, 6, 5)), v = unit_rows(random_matrix(rng, 6, 5));
        std::vector<int> perm(6);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        MatD pu(6, 5), pv(6, 5);
        for (int i = 0; i < 6; ++i) {
            pu.row(i) = u.row(perm[static_cast<std::size_t>(i)]);
            pv.row(i) = v.row(perm[static_cast<std::size_t>(i)]);
        }
        EXPECT_NEAR(contrastive_loss<double>(u, v, 7.0).value, contrastive_loss<double>(pu, pv, 7.0).value, 1e-12);
    }
}

TEST(ContrastiveLoss, Preconditions) {
    EXPECT_THROW(contrastive_loss<double>(MatD::Identity(1, 2), MatD::Identity(1, 2), 1.0), BatchSizeError);
    MatD raw = identity2();
    raw(0, 0) = 2.0;
    EXPECT_THROW(contrastive_loss<double>(raw, identity2(), 1.0), NormalizationError);
    EXPECT_THROW(contrastive_loss<double>(identity2(), MatD::Identity(3, 2), 1.0), AlignmentError);
}

TEST(LpLoss, HandValues) {
    const std::vector<int> y{1};
    EXPECT_NEAR(lp_loss<double>(MatD::Zero(1, 3), y, MatD::Ones(2, 3)).value, std::numbers::ln2, 1e-15);
    MatD w(2, 1);
    w << -50, 50;
    EXPECT_LT(lp_loss<double>(MatD::Ones(1, 1), y, w).value, 1e-12);
    const std::vector<int> bad{2};
    EXPECT_THROW(lp_loss<double>(MatD::Zero(1, 3), bad, MatD::Ones(2, 3)), LabelError);
}

TEST(LpLoss, ShiftInvariance) {
    // Adding c·v to every class row shifts every logit of sample i by c·(v·z_i).
    std::mt19937_64 rng(2);
    for (int k = 0; k < 20; ++k) {
        const auto z = random_matrix(rng, 5, 4);
        const auto w = random_matrix(rng, 3, 4);
        const std::vector<int> y{0, 1, 2, 1, 0};
        MatD shifted = w;
        const auto v = random_matrix(rng, 1, 4);
        for (Eigen::Index c = 0; c < 3; ++c) shifted.row(c) += 3.0 * v;
        EXPECT_NEAR(lp_loss<double>(z, y, w).value, lp_loss<double>(z, y, shifted).value, 1e-12);
    }
}

TEST(FftLoss, HandValues) {
    auto scalar = [](double v) {
        BasicParameterSet<double>::map_type m;
        m.emplace("p", Tensor<double>::scalar(v));
        return BasicParameterSet<double>(std::move(m));
    };
    std::mt19937_64 rng(3);
    const auto z = random_matrix(rng, 3, 4);
    const auto w = random_matrix(rng, 2, 4);
    const std::vector<int> y{0, 1, 1};
    const double ce = lp_loss<double>(z, y, w).value;
    EXPECT_DOUBLE_EQ(fft_loss<double>(z, y, w, scalar(5), scalar(1), 0.0).value, ce);
    EXPECT_DOUBLE_EQ(fft_loss<double>(z, y, w, scalar(5), scalar(5), 3.0).penalty, 0.0);
    const auto l = fft_loss<double>(z, y, w, scalar(3), scalar(1), 0.5);
    EXPECT_DOUBLE_EQ(l.penalty, 2.0);
    EXPECT_DOUBLE_EQ(l.value, ce + 2.0);
    EXPECT_DOUBLE_EQ(l.d_theta.at("p").values[0], 2.0);
    EXPECT_THROW(fft_loss<double>(z, y, w, scalar(3), scalar(1), -1.0), RangeError);
}

TEST(GradientCheck, Contrastive) {
    const auto r = check_contrastive(50, 10);
    EXPECT_EQ(r.instances, 50);
    EXPECT_LT(r.worst, kGradTolerance);
}

TEST(GradientCheck, LinearProbe) {
    const auto r = check_lp(50, 11);
    EXPECT_LT(r.worst, kGradTolerance);
}

TEST(GradientCheck, AnchoredFullFineTune) {
    const auto r = check_fft(50, 12);
    EXPECT_LT(r.worst, kGradTolerance);
}
