#include <gtest/gtest.h>

#include "bfn/metrics.hpp"

using namespace bfn;

TEST(Wrap, Interval) {
    EXPECT_NEAR(wrap_half_pi(3.10), 3.10 - kPi, 1e-12);
    EXPECT_EQ(wrap_half_pi(kPi / 2.0), kPi / 2.0);
    EXPECT_NEAR(wrap_half_pi(-kPi / 2.0), kPi / 2.0, 1e-15);
    EXPECT_EQ(wrap_half_pi(0.0), 0.0);
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double x = rng.uniform(-20.0, 20.0);
        const double w = wrap_half_pi(x);
        EXPECT_GT(w, -kPi / 2.0);
        EXPECT_LE(w, kPi / 2.0);
        EXPECT_EQ(wrap_half_pi(w), w);
        const double turns = (x - w) / kPi;
        EXPECT_NEAR(turns, std::round(turns), 1e-9);
    }
}

TEST(Rmspe, Examples) {
    EXPECT_NEAR(rmspe({0.1, -0.2}, {-0.2, 0.1}), 0.0, 1e-12);
    EXPECT_NEAR(rmspe({0.0}, {0.1}), 0.1, 1e-12);
    EXPECT_NEAR(rmspe({1.55}, {-1.55}), kPi - 3.10, 1e-9);
    EXPECT_NEAR(rmspe({1.55}, {-1.55}), 0.041593, 1e-6);
}

TEST(Rmspe, Properties) {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t K = 1 + rng.below(5);
        std::vector<double> a(K), b(K);
        for (auto& v : a) v = rng.uniform(-kPi / 2.0, kPi / 2.0);
        for (auto& v : b) v = rng.uniform(-kPi / 2.0, kPi / 2.0);
        EXPECT_EQ(rmspe(a, a), 0.0);
        EXPECT_NEAR(rmspe(a, b), rmspe(b, a), 1e-12);
        auto br = b;
        std::reverse(br.begin(), br.end());
        EXPECT_NEAR(rmspe(a, b), rmspe(a, br), 1e-12);
        EXPECT_GE(rmspe(a, b), 0.0);
    }
}

TEST(Rmspe, Errors) {
    EXPECT_THROW((void)rmspe({0.0, 1.0}, {0.0}), shape_error);
    EXPECT_THROW((void)rmspe(std::vector<double>(9, 0.0), std::vector<double>(9, 0.0)), validation_error);
}

namespace {
SpatialSpectrum spec_with_peaks(const AngleGrid& g, std::size_t a, std::size_t b) {
    std::vector<double> p(g.size(), 0.0);
    p[a] = 5.0;
    p[b] = 3.0;
    return SpatialSpectrum::from_energy(p);
}
}  // namespace

TEST(Align, TruncatesByEnergy) {
    const AngleGrid g(1.0);
    const std::vector<Peak> est{{10, 0.1, 5.0}, {20, 0.2, 4.0}, {30, 0.3, 1.0}};
    const auto out = align(est, 2, spec_with_peaks(g, 0, 1), g);
    EXPECT_EQ(out, (std::vector<double>{0.1, 0.2}));
}

TEST(Align, PadsWithStrongestUnusedGrids) {
    const AngleGrid g(1.0);
    const auto spec = spec_with_peaks(g, 100, 50);  // 10° strongest, −40° next
    const std::vector<Peak> est{{100, g[100], 5.0}};
    const auto out = align(est, 2, spec, g);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0], g[100]);
    EXPECT_EQ(out[1], g[50]);
    const auto from_nothing = align({}, 2, spec, g);
    EXPECT_EQ(from_nothing, (std::vector<double>{g[100], g[50]}));
}

TEST(Align, IdentityAndErrors) {
    const AngleGrid g(1.0);
    const std::vector<Peak> est{{1, 0.5, 1.0}, {2, -0.5, 2.0}};
    auto out = align(est, 2, SpatialSpectrum{}, g);
    std::sort(out.begin(), out.end());
    EXPECT_EQ(out, (std::vector<double>{-0.5, 0.5}));
    EXPECT_THROW((void)align({}, 1, SpatialSpectrum{}, g), validation_error);
}

TEST(MicroF1, Examples) {
    EXPECT_EQ(micro_f1({0.9, 0.1, 0.8}, {1, 0, 1}), 1.0);
    // 45° and 46° predicted, 45° true.
    std::vector<double> pred(181, 0.0);
    std::vector<int> truth(181, 0);
    pred[135] = pred[136] = 0.9;
    truth[135] = 1;
    EXPECT_NEAR(micro_f1(pred, truth), 2.0 / 3.0, 1e-12);
    EXPECT_EQ(micro_f1({0.1, 0.2}, {1, 1}), 0.0);
    EXPECT_EQ(micro_f1({0.1, 0.2}, {0, 0}), 1.0);
}

TEST(KAccuracy, Examples) {
    std::vector<EvalRecord> r(4);
    for (auto& x : r) x.k_est = x.k_true = 2;
    EXPECT_EQ(k_accuracy(r), 1.0);
    r[0].k_est = 1;
    r[1].k_est = 3;
    EXPECT_EQ(k_accuracy(r), 0.5);
    EXPECT_THROW((void)k_accuracy({}), validation_error);
}
