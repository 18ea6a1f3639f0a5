#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "ncl/errors.hpp"
#include "ncl/rde_solver.hpp"

using namespace ncl;

namespace {

LambdaMeasure two_atoms() { return LambdaMeasure::atomic({{1.0, 0.3}, {0.5, 0.7}}); }
LambdaMeasure star() { return LambdaMeasure::atomic({{1.0, 1.0}}); }

// Star coalescent, c < 1: R = x/(1+c) + c/(1+c) R^2, so p_n = Cat_{n-1} c^{n-1} / (1+c)^{2n-1}.
double star_mass(double c, int n) {
    const double log_cat = std::lgamma(2.0 * (n - 1) + 1) - std::lgamma(n + 1.0) - std::lgamma(n);
    return std::exp(log_cat + (n - 1) * std::log(c) - (2.0 * n - 1) * std::log1p(c));
}

const std::vector<double> kGrid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

ExtDist random_dist(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p(n);
    double s = 0.0;
    for (auto& v : p) s += (v = std::pow(u(rng), 3.0));
    for (auto& v : p) v /= s;
    return ExtDist(p, 0.0, 0.0, TailPolicy::Envelope);
}

}  // namespace

TEST(RdeSolver, FrozenReferenceValues) {
    // Beta(0.5), c = 1, N = 512, computed independently and frozen.
    const LYKernel k(LambdaMeasure::beta(0.5), 1.0, 512);
    const FixResult r = fix_from_delta1(k, {1e-13, 100000, TailPolicy::Envelope});
    const double p[] = {0.40145, 0.17187, 0.10489, 0.07208, 0.05251, 0.03960, 0.03055};
    for (int n = 1; n <= 7; ++n) EXPECT_NEAR(r.dist.mass(n), p[n - 1], 5e-6) << n;
    EXPECT_NEAR(r.dist.mean(), 3.670563744088, 1e-9);
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.regime, Regime::FiniteMean);
}

TEST(RdeSolver, FixedPointDiagnostics) {
    const auto m = LambdaMeasure::beta(0.5);
    const LYKernel k(m, 1.0, 512);
    const FixResult r = fix_from_delta1(k);
    EXPECT_LE(r.fixed_point_tv, 1e-10);
    const auto res = pgf_residual(r.dist, m, 1.0, kGrid);
    ASSERT_TRUE(res.asserted);
    for (double v : res.values) EXPECT_LE(std::abs(v), 1e-8);

    const auto t = inverse_T(r.dist, k);
    const auto conv = self_convolution(r.dist);
    double tv = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) tv += std::abs(t[i] - conv[i]);
    EXPECT_LE(0.5 * tv, 1e-8);

    EXPECT_LE(mean_identity_check(r.dist, m, 1.0).gap(), 1e-6);
    const auto d = diagnose(r, k);
    EXPECT_LE(d.pgf_residual_max, 1e-8);
    EXPECT_LE(d.inverse_T_tv, 1e-8);
    EXPECT_LE(d.mean_identity_gap, 1e-6);
    EXPECT_LE(r.monotone_violation, 1e-14);
}

TEST(RdeSolver, MeanStableUnderTruncation) {
    const auto m = LambdaMeasure::beta(0.5);
    const double m256 = fix_from_delta1(LYKernel(m, 1.0, 256)).dist.mean();
    const double m512 = fix_from_delta1(LYKernel(m, 1.0, 512)).dist.mean();
    EXPECT_NEAR(m256, m512, 1e-6);
}

TEST(RdeSolver, StarCoalescentClosedForm) {
    const double c = 0.5;
    const LYKernel k(star(), c, 400);
    const FixResult r = fix_from_delta1(k);
    for (int n = 1; n <= 60; ++n) EXPECT_NEAR(r.dist.mass(n), star_mass(c, n), 1e-11) << n;
    EXPECT_EQ(r.dist.p_inf(), 0.0);
}

TEST(RdeSolver, MassAtInfinity) {
    const auto m = two_atoms();
    {
        const FixResult r = fix_from_delta_inf(LYKernel(m, 0.5, 512));
        EXPECT_NEAR(r.dist.p_inf(), 0.4, 1e-8);
    }
    {
        const FixResult r = fix_from_delta_inf(LYKernel(m, 0.2, 512));
        EXPECT_NEAR(r.dist.p_inf(), 0.0, 1e-10);
    }
    {
        const FixResult r = fix_from_delta_inf(LYKernel(star(), 2.0, 512));
        EXPECT_NEAR(r.dist.p_inf(), 0.5, 1e-8);
    }
    for (double c : {0.3, 1.0, 5.0}) {
        const FixResult r = fix_from_delta_inf(LYKernel(LambdaMeasure::beta(0.5), c, 64));
        EXPECT_EQ(r.dist.p_inf(), 1.0);
        for (double v : r.dist.masses()) EXPECT_EQ(v, 0.0);
    }
}

TEST(RdeSolver, FromInfinityNeedsDust) {
    EXPECT_THROW(fix_from_delta_inf(LYKernel(LambdaMeasure::beta(1.5), 1.0, 32, false)), DomainError);
}

TEST(RdeSolver, MonotoneInC) {
    const auto m = LambdaMeasure::beta(0.5);
    std::vector<ExtDist> sols;
    for (double c : {0.5, 1.0, 1.5}) sols.push_back(fix_from_delta1(LYKernel(m, c, 512)).dist);
    for (std::size_t i = 0; i + 1 < sols.size(); ++i) {
        const auto lo = sols[i].cdf(), hi = sols[i + 1].cdf();
        for (std::size_t n = 0; n < lo.size(); ++n) EXPECT_GE(lo[n] - hi[n], -1e-12) << n;
        for (double x : kGrid) EXPECT_GT(pgf(sols[i], x) - pgf(sols[i + 1], x), 1e-10) << x;
    }
}

TEST(RdeSolver, MapPreservesOrder) {
    // mu <= nu stochastically implies G(mu) <= G(nu)
    const LYKernel k(LambdaMeasure::beta(0.5), 1.0, 64);
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const ExtDist mu = random_dist(rng, 64);
        // push every mass one step right (the last one stays)
        std::vector<double> q(64, 0.0);
        for (int n = 1; n <= 64; ++n) q[std::min(n, 63)] += mu.mass(n);
        const ExtDist nu(q, 0.0, 0.0, TailPolicy::Envelope);
        const auto a = g_map(mu, k).cdf(), b = g_map(nu, k).cdf();
        for (std::size_t n = 0; n < a.size(); ++n) EXPECT_GE(a[n] - b[n], -1e-13);
    }
}

TEST(RdeSolver, EnvelopeBracketsTruncation) {
    const LYKernel k(LambdaMeasure::beta(0.5), 1.0, 64);
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const ExtDist mu = random_dist(rng, 64);
        const Envelope env = g_map_envelope(mu, k);
        EXPECT_NEAR(env.fold_n.total(), 1.0, 1e-12);
        EXPECT_NEAR(env.fold_inf.total(), 1.0, 1e-12);
        EXPECT_GT(env.excess, 0.0);
        for (double v : env.band_cdf()) EXPECT_GE(v, -1e-14);
        EXPECT_GE(env.band(), 0.0);
        EXPECT_NEAR(g_map(mu, k).band(), env.band(), 1e-15);
    }
    // a point mass at 1 never leaves {1..N}
    const Envelope e1 = g_map_envelope(ExtDist::point(1, 64), k);
    EXPECT_EQ(e1.excess, 0.0);
    EXPECT_EQ(e1.band(), 0.0);
}

TEST(RdeSolver, OneStepFromPointMass) {
    // G(delta_1) = law of L_2(Y)
    const LYKernel k(LambdaMeasure::beta(0.5), 1.0, 16);
    const ExtDist g = g_map(ExtDist::point(1, 16), k);
    EXPECT_NEAR(g.mass(1), k.at(2, 1), 1e-15);
    EXPECT_NEAR(g.mass(2), k.at(2, 2), 1e-15);
}

TEST(RdeSolver, ExtDistBasics) {
    const ExtDist d({0.5, 0.25}, 0.25, 0.0, TailPolicy::Envelope);
    EXPECT_DOUBLE_EQ(d.total(), 1.0);
    EXPECT_TRUE(std::isinf(d.mean()));
    EXPECT_EQ(d.cdf(), (std::vector<double>{0.5, 0.75}));
    EXPECT_EQ(tv_distance(d, d), 0.0);
    const ExtDist e({0.5, 0.5}, 0.0, 0.0, TailPolicy::Envelope);
    EXPECT_DOUBLE_EQ(tv_distance(d, e), 0.25);
    EXPECT_DOUBLE_EQ(tv_distance(e, d), 0.25);
    EXPECT_DOUBLE_EQ(e.mean(), 1.5);
    const ExtDist t({0.5, 0.25}, 0.0, 0.25, TailPolicy::FoldToN);
    EXPECT_DOUBLE_EQ(t.mean(), 0.5 + 0.5 + 0.75);
    EXPECT_TRUE(std::isinf(t.with_policy(TailPolicy::FoldToInf).mean()));
    EXPECT_THROW(ExtDist({-0.1, 1.1}, 0.0, 0.0, TailPolicy::Envelope), ArgumentError);
    EXPECT_THROW(ExtDist::point(3, 2), ArgumentError);
}

TEST(RdeSolver, PgfOfPointMass) {
    for (int n : {1, 3, 7})
        for (double x : kGrid) EXPECT_NEAR(pgf(ExtDist::point(n, 8), x), std::pow(x, n), 1e-15);
    EXPECT_EQ(pgf(ExtDist::infinite(8), 1.0), 0.0);
    const auto conv = self_convolution(ExtDist::point(2, 8));
    EXPECT_EQ(conv[3], 1.0);
}

TEST(RdeSolver, ConvergenceFailureCarriesPartial) {
    const LYKernel k(LambdaMeasure::beta(0.5), 1.0, 128);
    try {
        fix_from_delta1(k, {1e-12, 3, TailPolicy::Envelope});
        FAIL() << "expected ConvergenceError";
    } catch (const ConvergenceError& e) {
        EXPECT_EQ(e.partial().iterations, 3);
        EXPECT_FALSE(e.partial().converged);
    }
}

TEST(RdeSolver, RegimeClassification) {
    const auto m = LambdaMeasure::beta(0.5);
    EXPECT_EQ(regime_of(m, 1.0), Regime::FiniteMean);
    EXPECT_EQ(regime_of(m, 2.0), Regime::Boundary);
    EXPECT_EQ(regime_of(m, 3.0), Regime::InfiniteMean);
    EXPECT_THROW(mean_identity_check(ExtDist::point(1, 4), m, 2.5), DomainError);
    EXPECT_THROW(mean_identity_check(ExtDist::infinite(4), m, 1.0), DomainError);
}

TEST(RdeSolver, PgfResidualNotAssertedWithMassAtInfinity) {
    const auto r = pgf_residual(ExtDist::infinite(8), LambdaMeasure::beta(0.5), 1.0, kGrid);
    EXPECT_FALSE(r.asserted);
}

TEST(RdeSolver, PolicyNamesAndJson) {
    for (auto p : {TailPolicy::FoldToN, TailPolicy::FoldToInf, TailPolicy::Envelope})
        EXPECT_EQ(parse_tail_policy(to_string(p)), p);
    EXPECT_THROW(parse_tail_policy("sideways"), ArgumentError);
    ExtDist d({0.5, 0.25}, 0.25, 0.0, TailPolicy::FoldToInf);
    d.set_band(1e-3);
    const ExtDist back = ext_dist_from_json(to_json(d));
    EXPECT_EQ(back.masses(), d.masses());
    EXPECT_EQ(back.p_inf(), d.p_inf());
    EXPECT_EQ(back.policy(), d.policy());
    EXPECT_EQ(back.band(), d.band());
}
