#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "ncl/block_kernel.hpp"
#include "ncl/errors.hpp"

using namespace ncl;

namespace {

// P(L_i(Y) = k) by uniformization: the chain observed at the jumps of a rate-R
// Poisson clock, stopped at the first ring of Y. Independent of the kernel recursion.
std::vector<std::vector<double>> uniformized(const LambdaMeasure& m, double c, int n) {
    const RateTable rates(m, n);
    double big = 0.0;
    for (int b = 2; b <= n; ++b) big = std::max(big, rates.lambda_b(b));
    big *= 1.01;
    const double stop = c / (c + big), go = big / (c + big);
    std::vector<std::vector<double>> k(n + 1, std::vector<double>(n + 1, 0.0));
    for (int i = 1; i <= n; ++i) {
        std::vector<double> dist(n + 1, 0.0);
        dist[i] = 1.0;
        double weight = stop;
        for (int step = 0; step < 200000 && weight > 1e-18; ++step) {
            for (int j = 1; j <= i; ++j) k[i][j] += weight * dist[j];
            std::vector<double> next(n + 1, 0.0);
            for (int b = 1; b <= i; ++b) {
                if (dist[b] == 0.0) continue;
                double leave = 0.0;
                for (int to = 1; to < b; ++to) {
                    const double r = rates.transition(b, to) / big;
                    next[to] += dist[b] * r;
                    leave += r;
                }
                next[b] += dist[b] * (1.0 - leave);
            }
            dist.swap(next);
            weight *= go;
        }
    }
    return k;
}

LambdaMeasure two_atoms() { return LambdaMeasure::atomic({{1.0, 0.3}, {0.5, 0.7}}); }

}  // namespace

TEST(BlockKernel, RowsAreDistributions) {
    for (const auto& m : {LambdaMeasure::beta(0.5), two_atoms(), LambdaMeasure::beta(1.5)}) {
        const LYKernel k(m, 1.0, 300, m.is_dust());
        for (int i = 1; i <= 300; ++i) {
            double s = 0.0;
            for (int j = 1; j <= i; ++j) {
                EXPECT_GE(k.at(i, j), 0.0);
                s += k.at(i, j);
            }
            EXPECT_NEAR(s, 1.0, 1e-12) << i;
        }
        EXPECT_LE(k.renormalization_delta(), 1e-12);
    }
}

TEST(BlockKernel, DiagonalIsNoEventProbability) {
    for (double c : {0.3, 1.0, 4.0}) {
        const auto m = LambdaMeasure::beta(0.5);
        const LYKernel k(m, c, 200);
        for (int i = 2; i <= 200; ++i)
            EXPECT_NEAR(k.at(i, i) * (k.rates().lambda_b(i) + c), c, 1e-12);
        EXPECT_EQ(k.at(1, 1), 1.0);
    }
}

TEST(BlockKernel, StarCoalescentRow) {
    const double c = 0.7;
    const LYKernel k(LambdaMeasure::atomic({{1.0, 1.0}}), c, 12);
    for (int i = 2; i <= 12; ++i) {
        EXPECT_NEAR(k.at(i, i), c / (1 + c), 1e-15);
        EXPECT_NEAR(k.at(i, 1), 1 / (1 + c), 1e-15);
        for (int j = 2; j < i; ++j) EXPECT_EQ(k.at(i, j), 0.0);
    }
}

TEST(BlockKernel, MatchesUniformizedChain) {
    for (const auto& m : {LambdaMeasure::beta(0.5), two_atoms()}) {
        const int n = 20;
        const LYKernel k(m, 1.0, n);
        const auto ref = uniformized(m, 1.0, n);
        for (int i = 1; i <= n; ++i)
            for (int j = 1; j <= i; ++j) EXPECT_NEAR(k.at(i, j), ref[i][j], 1e-12) << i << "," << j;
    }
}

TEST(BlockKernel, InfiniteRow) {
    const auto m = two_atoms();
    const LYKernel k(m, 0.5, 10);
    EXPECT_NEAR(k.inf_row().p_one, 0.3 / 0.8, 1e-15);
    EXPECT_NEAR(k.inf_row().p_inf, 0.5 / 0.8, 1e-15);
    const LYKernel kb(LambdaMeasure::beta(0.5), 1.0, 10);
    EXPECT_EQ(kb.inf_row().p_one, 0.0);
    EXPECT_EQ(kb.inf_row().p_inf, 1.0);
}

TEST(BlockKernel, InfiniteRowNeedsDust) {
    EXPECT_THROW(LYKernel(LambdaMeasure::beta(1.5), 1.0, 10, true), DomainError);
    const LYKernel k(LambdaMeasure::beta(1.5), 1.0, 10, false);
    EXPECT_FALSE(k.has_inf_row());
    EXPECT_THROW(k.inf_row(), DomainError);
    EXPECT_THROW(LYKernel(LambdaMeasure::beta(0.5), 0.0, 10), ArgumentError);
    EXPECT_THROW(LYKernel(LambdaMeasure::beta(0.5), 1.0, 0), ArgumentError);
}

TEST(BlockKernel, RowMean) {
    const LYKernel k(LambdaMeasure::beta(0.5), 1.0, 50);
    for (int i = 1; i <= 50; ++i) {
        double m = 0.0;
        for (int j = 1; j <= i; ++j) m += j * k.at(i, j);
        EXPECT_NEAR(k.row_mean(i), m, 1e-12 * m);
    }
}

TEST(BlockKernel, IncrementsStayAboveLimit) {
    // Beta(0.5), c = 1: E[1/X] = 2 and the increments decrease to c/(c+E[1/X]) = 1/3.
    const LYKernel k(LambdaMeasure::beta(0.5), 1.0, 401);
    const auto b = b_sequence(k, 400);
    ASSERT_EQ(b.size(), 400u);
    for (double v : b) EXPECT_GE(v, 1.0 / 3.0);
    EXPECT_LT(std::abs(b[399] - 1.0 / 3.0), std::abs(b[49] - 1.0 / 3.0));
    EXPECT_THROW(b_sequence(k, 401), ArgumentError);
}

TEST(BlockKernel, KernelIsMonotoneInStart) {
    // L_i(Y) is stochastically increasing in i (coupling by adding a block).
    const LYKernel k(LambdaMeasure::beta(0.5), 1.0, 120);
    for (int i = 1; i < 120; ++i) {
        double ci = 0.0, cn = 0.0;
        for (int j = 1; j <= i; ++j) {
            ci += k.at(i, j);
            cn += k.at(i + 1, j);
            EXPECT_GE(ci, cn - 1e-13);
        }
    }
}

TEST(BlockKernel, CsvLayout) {
    const LYKernel k(LambdaMeasure::beta(0.5), 1.0, 3);
    std::ostringstream out;
    k.write_csv(out);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line.rfind("# c=1", 0), 0u);
    std::getline(in, line);
    EXPECT_EQ(line, "i,k1,k2,k3");
    std::getline(in, line);
    EXPECT_EQ(line, "1,1,0,0");
}
