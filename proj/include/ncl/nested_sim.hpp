#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ncl/lambda_measure.hpp"
#include "ncl/rde_solver.hpp"

namespace ncl {

// Lineage count in N+ u {inf}.
class Count {
public:
    constexpr Count() = default;
    constexpr explicit Count(std::int64_t n) : n_(n) {}
    static constexpr Count infinite() { return Count(kInf); }

    constexpr bool is_inf() const { return n_ == kInf; }
    constexpr std::int64_t value() const { return n_; }
    std::string str() const;

    friend constexpr Count operator+(Count a, Count b) {
        return a.is_inf() || b.is_inf() ? infinite() : Count(a.n_ + b.n_);
    }
    constexpr bool operator==(const Count&) const = default;

private:
    static constexpr std::int64_t kInf = -1;
    std::int64_t n_ = 1;
};

enum class InitKind { One, Infinite };
std::string to_string(InitKind k);
InitKind parse_init(const std::string& s);

struct SimConfig {
    LambdaMeasure measure;
    double c = 1.0;
    int s = 2;
    int m = 1;
    InitKind init = InitKind::One;
    long replicates = 1;
    std::uint64_t seed = 0;
    int b_cap = 0;    // 0: use s, the largest count reachable
    int threads = 0;  // 0: NCL_THREADS, else hardware concurrency
};

struct NestedState {
    std::vector<Count> species;
    std::vector<int> labels;
    double time = 0.0;
};

// Per-count total merger rates and merger-size laws, tabulated up to b_cap.
class SimTables {
public:
    SimTables(const LambdaMeasure& measure, int b_cap);

    int b_cap() const { return b_cap_; }
    double rate(Count n) const;
    // Count after one merger event starting from n finite blocks, given u in [0,1).
    std::int64_t next_count(std::int64_t n, double u) const;

private:
    int b_cap_;
    double inf_rate_;
    std::vector<double> totals_;
    std::vector<std::vector<double>> cdf_;  // cdf_[b][j]: P(new count <= j+1)
};

// Counter-based substream seed for replicate `index`.
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index);

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

private:
    std::mt19937_64 engine_;
};

std::vector<Count> run_once(const SimConfig& config, const SimTables& tables, Rng& rng);

struct Histogram {
    std::vector<long> finite;  // finite[n] = occurrences of n, finite[0] unused
    long infinite = 0;
    long total() const;
    void add(Count c);
    void merge(const Histogram& other);
    double pmf(long n) const;
};

struct SimResult {
    int m = 0;
    std::vector<Count> counts;  // replicate-major, m per replicate
    std::vector<Histogram> per_coordinate;
    Histogram pooled;
    // Pearson correlation of coordinates (i, j), i < j, over replicates where both are finite.
    std::vector<double> correlations;
    double runtime_seconds = 0.0;

    Count at(long rep, int coord) const { return counts[static_cast<std::size_t>(rep) * m + coord]; }
};

SimResult run_many(const SimConfig& config);

int resolve_threads(int requested);

// Empirical law of L_n(Y) from the jump chain; element j is P(L_n(Y) = j), j = 1..n.
std::vector<double> simulate_lny(const LambdaMeasure& measure, double c, int n, long replicates,
                                 std::uint64_t seed, int threads = 0);

// TV between an empirical histogram and a reference on {1..cap} plus one bucket for the rest.
double tv_bucketed(const Histogram& h, const ExtDist& reference, int cap = 50);

void write_replicates_csv(std::ostream& out, const SimResult& r);
nlohmann::json summary_json(const SimResult& r, const SimConfig& config, const ExtDist* reference,
                            int cap = 50);

}  // namespace ncl
