#include <cmath>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "ncl/block_kernel.hpp"
#include "ncl/errors.hpp"
#include "ncl/nested_sim.hpp"

using namespace ncl;

namespace {

SimConfig base(int s, int m, long reps) {
    SimConfig cfg{LambdaMeasure::beta(0.5)};
    cfg.c = 1.0;
    cfg.s = s;
    cfg.m = m;
    cfg.replicates = reps;
    cfg.seed = 7;
    return cfg;
}

}  // namespace

TEST(NestedSim, CountArithmetic) {
    EXPECT_EQ(Count(2) + Count(3), Count(5));
    EXPECT_TRUE((Count(2) + Count::infinite()).is_inf());
    EXPECT_TRUE((Count::infinite() + Count(1)).is_inf());
    EXPECT_EQ(Count::infinite().str(), "inf");
    EXPECT_EQ(Count(12).str(), "12");
    EXPECT_EQ(parse_init("inf"), InitKind::Infinite);
    EXPECT_EQ(to_string(InitKind::One), "one");
    EXPECT_THROW(parse_init("two"), ArgumentError);
}

TEST(NestedSim, HistogramBookkeeping) {
    Histogram h, g;
    h.add(Count(1));
    h.add(Count(3));
    g.add(Count::infinite());
    g.add(Count(3));
    h.merge(g);
    EXPECT_EQ(h.total(), 4);
    EXPECT_DOUBLE_EQ(h.pmf(3), 0.5);
    EXPECT_DOUBLE_EQ(h.pmf(2), 0.0);
    EXPECT_DOUBLE_EQ(h.pmf(100), 0.0);
    EXPECT_EQ(h.infinite, 1);
}

TEST(NestedSim, TvBucketed) {
    Histogram h;
    h.add(Count(1));
    h.add(Count(2));
    const ExtDist ref({0.5, 0.5}, 0.0, 0.0, TailPolicy::Envelope);
    EXPECT_DOUBLE_EQ(tv_bucketed(h, ref), 0.0);
    h.add(Count(9));
    h.add(Count(9));
    EXPECT_NEAR(tv_bucketed(h, ref), 0.5, 1e-15);
    EXPECT_NEAR(tv_bucketed(h, ref, 1), 0.25, 1e-15);
}

TEST(NestedSim, SubstreamsDiffer) {
    EXPECT_NE(substream_seed(1, 0), substream_seed(1, 1));
    EXPECT_NE(substream_seed(1, 0), substream_seed(2, 0));
    EXPECT_EQ(substream_seed(3, 5), substream_seed(3, 5));
    Rng r(1);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
    }
}

TEST(NestedSim, NextCountFollowsTransitionLaw) {
    const auto m = LambdaMeasure::beta(0.5);
    const SimTables t(m, 30);
    const RateTable rates(m, 30);
    EXPECT_NEAR(t.rate(Count(30)), rates.lambda_b(30), 1e-12);
    EXPECT_EQ(t.rate(Count(1)), 0.0);
    // inverse CDF at the cell midpoints hits every target once
    const int b = 12;
    double acc = 0.0;
    for (int to = 1; to < b; ++to) {
        const double p = rates.transition(b, to) / rates.lambda_b(b);
        EXPECT_EQ(t.next_count(b, acc + 0.5 * p), to);
        acc += p;
    }
}

TEST(NestedSim, DeterministicAcrossThreadCounts) {
    auto cfg = base(40, 2, 300);
    cfg.threads = 1;
    const auto a = run_many(cfg);
    cfg.threads = 3;
    const auto b = run_many(cfg);
    EXPECT_EQ(a.counts, b.counts);
    std::ostringstream sa, sb;
    write_replicates_csv(sa, a);
    write_replicates_csv(sb, b);
    EXPECT_EQ(sa.str(), sb.str());
    cfg.seed = 8;
    EXPECT_NE(run_many(cfg).counts, a.counts);
}

TEST(NestedSim, CountsNeverExceedSpecies) {
    const auto r = run_many(base(30, 3, 500));
    for (long rep = 0; rep < 500; ++rep) {
        long total = 0;
        for (int j = 0; j < 3; ++j) {
            ASSERT_FALSE(r.at(rep, j).is_inf());
            ASSERT_GE(r.at(rep, j).value(), 1);
            total += r.at(rep, j).value();
        }
        EXPECT_LE(total, 30);
    }
}

TEST(NestedSim, NoSpeciesMergerWhenSEqualsM) {
    const auto r = run_many(base(4, 4, 50));
    for (const Count& c : r.counts) EXPECT_EQ(c, Count(1));
}

TEST(NestedSim, StarTwoSpecies) {
    // both lineages survive the merger with prob c/(1+c)
    SimConfig cfg{LambdaMeasure::atomic({{1.0, 1.0}})};
    cfg.c = 100.0;
    cfg.s = 2;
    cfg.m = 1;
    cfg.replicates = 20000;
    cfg.seed = 3;
    const auto r = run_many(cfg);
    const double p = 100.0 / 101.0;
    const double sd = std::sqrt(p * (1 - p) / 20000);
    EXPECT_NEAR(r.per_coordinate[0].pmf(2), p, 4 * sd);
    EXPECT_NEAR(r.per_coordinate[0].pmf(1), 1 - p, 4 * sd);
}

TEST(NestedSim, InfiniteStartStaysInfiniteForBeta) {
    auto cfg = base(20, 2, 100);
    cfg.init = InitKind::Infinite;
    const auto r = run_many(cfg);
    for (const Count& c : r.counts) EXPECT_TRUE(c.is_inf());
    EXPECT_EQ(r.pooled.infinite, 200);
}

TEST(NestedSim, MarginalNearFixedPoint) {
    const auto r = run_many(base(300, 2, 4000));
    const auto ref = fix_from_delta1(LYKernel(LambdaMeasure::beta(0.5), 1.0, 512)).dist;
    for (const auto& h : r.per_coordinate) EXPECT_LE(tv_bucketed(h, ref), 0.08);
    EXPECT_LE(std::abs(r.correlations.at(0)), 0.08);
    const auto j = summary_json(r, base(300, 2, 4000), &ref);
    EXPECT_FALSE(j.at("all_infinite").get<bool>());
    EXPECT_EQ(j.at("per_coordinate").size(), 2u);
}

TEST(NestedSim, BlockCountChainMatchesKernel) {
    const auto m = LambdaMeasure::beta(0.5);
    const int n = 10;
    const long reps = 200000;
    const LYKernel k(m, 1.0, n);
    const auto pmf = simulate_lny(m, 1.0, n, reps, 42);
    ASSERT_EQ(pmf.size(), static_cast<std::size_t>(n));
    for (int j = 1; j <= n; ++j) {
        const double p = k.at(n, j);
        const double sd = std::max(std::sqrt(p * (1 - p) / reps), 1.0 / reps);
        EXPECT_NEAR(pmf[j - 1], p, 3 * sd) << j;
    }
}

TEST(NestedSim, BlockCountChainEdgeCases) {
    const auto m = LambdaMeasure::atomic({{1.0, 1.0}});
    EXPECT_EQ(simulate_lny(m, 1.0, 1, 10, 1), std::vector<double>{1.0});
    const auto pmf = simulate_lny(m, 1.0, 7, 40000, 9);
    EXPECT_NEAR(pmf[0], 0.5, 0.01);
    EXPECT_NEAR(pmf[6], 0.5, 0.01);
    for (int j = 2; j <= 6; ++j) EXPECT_EQ(pmf[j - 1], 0.0);
    EXPECT_THROW(simulate_lny(m, 0.0, 5, 10, 1), ArgumentError);
    EXPECT_THROW(simulate_lny(m, 1.0, 0, 10, 1), ArgumentError);
}
