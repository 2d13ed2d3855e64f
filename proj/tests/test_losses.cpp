#include <gtest/gtest.h>

#include <cmath>

#include "pcmsar/losses.hpp"
#include "pcmsar/rng.hpp"

using namespace pcmsar;

namespace {

ProbVector random_simplex(int k, Rng& rng) {
    Vec v(static_cast<std::size_t>(k));
    for (double& x : v) x = rng.uniform(-2.0, 2.0);
    return temperature_softmax(v, 1.0);
}

}  // namespace

TEST(Softmax, ZeroVectorIsUniform) {
    ProbVector p = temperature_softmax(Vec{0.0, 0.0, 0.0, 0.0}, 0.7);
    for (double x : p.p) EXPECT_NEAR(x, 0.25, 1e-15);
}

TEST(Softmax, WorkedExample) {
    ProbVector p = temperature_softmax(Vec{std::log(2.0), 0.0}, 1.0);
    EXPECT_NEAR(p.p[0], 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(p.p[1], 1.0 / 3.0, 1e-12);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
    ProbVector p = temperature_softmax(Vec{1000.0, 0.0}, 1.0);
    EXPECT_NEAR(p.p[0], 1.0, 1e-12);
    EXPECT_GE(p.p[1], 0.0);
    EXPECT_TRUE(std::isfinite(p.p[0]));
    EXPECT_TRUE(std::isfinite(p.p[1]));
}

TEST(Softmax, ShiftInvariant) {
    Rng rng(61);
    for (int trial = 0; trial < 100; ++trial) {
        Vec v(5);
        for (double& x : v) x = rng.uniform(-3.0, 3.0);
        Vec shifted = v;
        double c = rng.uniform(-10.0, 10.0);
        for (double& x : shifted) x += c;
        ProbVector a = temperature_softmax(v, 0.5);
        ProbVector b = temperature_softmax(shifted, 0.5);
        for (std::size_t i = 0; i < v.size(); ++i)
            EXPECT_NEAR(a.p[i], b.p[i], 1e-12);
    }
}

TEST(Softmax, HighTemperatureFlattens) {
    Vec v{1.0, -1.0, 0.5, 0.0};
    ProbVector p = temperature_softmax(v, 1e6);
    for (double x : p.p) EXPECT_NEAR(x, 0.25, 1e-6);
}

TEST(Softmax, OnSimplex) {
    Rng rng(62);
    for (int trial = 0; trial < 100; ++trial) {
        Vec v(1 + rng.uniform_index(8));
        for (double& x : v) x = rng.uniform(-50.0, 50.0);
        ProbVector p = temperature_softmax(v, 0.1 + rng.uniform());
        double sum = 0.0;
        for (double x : p.p) {
            EXPECT_GE(x, 0.0);
            sum += x;
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}

TEST(Softmax, NonPositiveTemperatureThrows) {
    EXPECT_THROW(temperature_softmax(Vec{1.0}, 0.0), ParamError);
    EXPECT_THROW(temperature_softmax(Vec{1.0}, -1.0), ParamError);
}

TEST(Softmax, BackwardMatchesFiniteDifferences) {
    Rng rng(63);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        int k = 3 + static_cast<int>(rng.uniform_index(4));
        double t = 0.3 + rng.uniform();
        Vec v(static_cast<std::size_t>(k));
        for (double& x : v) x = rng.uniform(-2.0, 2.0);
        Vec g(static_cast<std::size_t>(k));
        for (double& x : g) x = rng.uniform(-1.0, 1.0);

        ProbVector p = temperature_softmax(v, t);
        Vec dv = temperature_softmax_backward(p, g, t);

        for (int i = 0; i < k; ++i) {
            Vec vp = v, vm = v;
            vp[static_cast<std::size_t>(i)] += h;
            vm[static_cast<std::size_t>(i)] -= h;
            double lp = 0.0, lm = 0.0;
            ProbVector pp = temperature_softmax(vp, t);
            ProbVector pm = temperature_softmax(vm, t);
            for (int j = 0; j < k; ++j) {
                lp += g[static_cast<std::size_t>(j)] *
                      pp.p[static_cast<std::size_t>(j)];
                lm += g[static_cast<std::size_t>(j)] *
                      pm.p[static_cast<std::size_t>(j)];
            }
            EXPECT_NEAR(dv[static_cast<std::size_t>(i)], (lp - lm) / (2 * h),
                        1e-6);
        }
    }
}

// ----- symmetric cross-entropy -----

TEST(SymmetricCe, UniformPairIsLogK) {
    ProbVector u{Vec{0.25, 0.25, 0.25, 0.25}};
    EXPECT_NEAR(symmetric_ce(u, u), std::log(4.0), 1e-12);
}

TEST(SymmetricCe, DiagonalIsEntropy) {
    ProbVector p{Vec{0.5, 0.25, 0.25}};
    double expected = -(0.5 * std::log(0.5) + 0.5 * std::log(0.25));
    EXPECT_NEAR(symmetric_ce(p, p), expected, 1e-12);
    EXPECT_NEAR(expected, 1.039721, 1e-6);
    EXPECT_NEAR(symmetric_ce(p, p), entropy(p), 1e-12);
}

TEST(SymmetricCe, DisjointSupportHitsClamp) {
    ProbVector p{Vec{1.0, 0.0}};
    ProbVector q{Vec{0.0, 1.0}};
    EXPECT_NEAR(symmetric_ce(p, q), -std::log(1e-12), 1e-6);
    EXPECT_NEAR(symmetric_ce(p, q), 27.631021, 1e-5);
}

TEST(SymmetricCe, ExactlySymmetric) {
    Rng rng(64);
    for (int trial = 0; trial < 1000; ++trial) {
        int k = 2 + static_cast<int>(rng.uniform_index(6));
        ProbVector p = random_simplex(k, rng);
        ProbVector q = random_simplex(k, rng);
        EXPECT_EQ(symmetric_ce(p, q), symmetric_ce(q, p));
    }
}

TEST(SymmetricCe, GibbsBound) {
    Rng rng(65);
    for (int trial = 0; trial < 500; ++trial) {
        int k = 2 + static_cast<int>(rng.uniform_index(6));
        ProbVector p = random_simplex(k, rng);
        ProbVector q = random_simplex(k, rng);
        double lower = 0.5 * (entropy(p) + entropy(q));
        EXPECT_GE(symmetric_ce(p, q), lower - 1e-12);
        // equality holds on the diagonal
        EXPECT_NEAR(symmetric_ce(p, p), entropy(p), 1e-12);
    }
}

TEST(SymmetricCe, DimMismatchThrows) {
    ProbVector p{Vec{0.5, 0.5}};
    ProbVector q{Vec{1.0 / 3, 1.0 / 3, 1.0 / 3}};
    EXPECT_THROW(symmetric_ce(p, q), ParamError);
}

TEST(SymmetricCe, BackwardMatchesFiniteDifferences) {
    Rng rng(66);
    const double h = 1e-7;
    for (int trial = 0; trial < 20; ++trial) {
        int k = 2 + static_cast<int>(rng.uniform_index(5));
        ProbVector p = random_simplex(k, rng);
        ProbVector q = random_simplex(k, rng);
        Vec dp(static_cast<std::size_t>(k), 0.0);
        Vec dq(static_cast<std::size_t>(k), 0.0);
        symmetric_ce_backward(p, q, 1.0, dp, dq);
        for (int i = 0; i < k; ++i) {
            ProbVector pp = p, pm = p;
            pp.p[static_cast<std::size_t>(i)] += h;
            pm.p[static_cast<std::size_t>(i)] -= h;
            double fd = (symmetric_ce(pp, q) - symmetric_ce(pm, q)) / (2 * h);
            EXPECT_NEAR(dp[static_cast<std::size_t>(i)], fd, 1e-5);

            ProbVector qp = q, qm = q;
            qp.p[static_cast<std::size_t>(i)] += h;
            qm.p[static_cast<std::size_t>(i)] -= h;
            fd = (symmetric_ce(p, qp) - symmetric_ce(p, qm)) / (2 * h);
            EXPECT_NEAR(dq[static_cast<std::size_t>(i)], fd, 1e-5);
        }
    }
}

TEST(LossWrappers, MatchKernel) {
    Rng rng(67);
    ProbVector u{Vec{0.25, 0.25, 0.25, 0.25}};
    EXPECT_NEAR(cl_loss(u, u), 1.386294, 1e-6);
    for (int trial = 0; trial < 50; ++trial) {
        ProbVector p = random_simplex(4, rng);
        ProbVector q = random_simplex(4, rng);
        EXPECT_EQ(cl_loss(p, q), cl_loss(q, p));
        EXPECT_EQ(ml_loss(p, q), symmetric_ce(p, q));
        EXPECT_NEAR(ml_loss(p, p), entropy(p), 1e-12);
    }
}

// ----- total loss -----

TEST(TotalLoss, WeightedSum) {
    LossWeights w;
    w.lambda1 = 1.0;
    w.lambda2 = 0.0;
    EXPECT_DOUBLE_EQ(total_loss(0.5, 99.0, w), 0.5);

    w.lambda2 = 1.0;
    EXPECT_DOUBLE_EQ(total_loss(0.5, 0.25, w), 0.75);

    w.lambda1 = 0.0;
    w.lambda2 = 0.0;
    EXPECT_DOUBLE_EQ(total_loss(123.0, 456.0, w), 0.0);
}

TEST(TotalLoss, LinearInEachArgument) {
    Rng rng(68);
    LossWeights w;
    w.lambda1 = 0.7;
    w.lambda2 = 0.3;
    for (int trial = 0; trial < 50; ++trial) {
        double a = rng.uniform(), b = rng.uniform();
        EXPECT_NEAR(total_loss(a + b, 0.0, w),
                    total_loss(a, 0.0, w) + total_loss(b, 0.0, w), 1e-12);
        EXPECT_NEAR(total_loss(0.0, a + b, w),
                    total_loss(0.0, a, w) + total_loss(0.0, b, w), 1e-12);
    }
}

TEST(LossWeightsCheck, RangeEnforced) {
    LossWeights w;
    w.lambda1 = 1.5;
    EXPECT_THROW(w.validate(), ParamError);
    w = LossWeights{};
    w.lambda2 = -0.1;
    EXPECT_THROW(w.validate(), ParamError);
    EXPECT_NO_THROW(LossWeights{}.validate());
}

// ----- EMA -----

TEST(Ema, EndpointsAndMidpoint) {
    Vec mom{1.0, 2.0, 3.0};
    Vec onl{0.0, 0.0, 0.0};

    Vec m1 = mom;
    ema_update(m1, onl, 1.0);
    EXPECT_EQ(m1, mom);

    Vec m0 = mom;
    ema_update(m0, onl, 0.0);
    EXPECT_EQ(m0, onl);

    Vec m9{1.0};
    Vec o9{0.0};
    ema_update(m9, o9, 0.9);
    EXPECT_DOUBLE_EQ(m9[0], 0.9);
}

TEST(Ema, Errors) {
    Vec a{1.0, 2.0};
    Vec b{1.0};
    EXPECT_THROW(ema_update(a, b, 0.5), ParamError);
    Vec c{1.0, 2.0};
    EXPECT_THROW(ema_update(a, c, 1.5), ParamError);
    EXPECT_THROW(ema_update(a, c, -0.5), ParamError);
}
