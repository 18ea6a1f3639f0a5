#include "ncl/nested_sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ostream>
#include <thread>

#include <nlohmann/json.hpp>

#include "ncl/errors.hpp"
#include "ncl/format.hpp"

namespace ncl {

namespace {

constexpr long kMaxTableCells = 200'000'000;

// Sum tree over species slots; parents are recomputed, never updated by deltas,
// so the total does not drift over thousands of events.
class RateTree {
public:
    explicit RateTree(int n) {
        size_ = 1;
        while (size_ < n) size_ *= 2;
        node_.assign(2 * static_cast<std::size_t>(size_), 0.0);
    }
    void set(int i, double v) {
        std::size_t k = static_cast<std::size_t>(i) + size_;
        node_[k] = v;
        for (k /= 2; k >= 1; k /= 2) node_[k] = node_[2 * k] + node_[2 * k + 1];
    }
    double total() const { return node_[1]; }
    int find(double v) const {
        std::size_t k = 1;
        while (k < static_cast<std::size_t>(size_)) {
            const double left = node_[2 * k];
            if (v < left || node_[2 * k + 1] == 0.0) {
                k = 2 * k;
            } else {
                v -= left;
                k = 2 * k + 1;
            }
        }
        return static_cast<int>(k - size_);
    }

private:
    int size_;
    std::vector<double> node_;
};

template <class Job>
void parallel_for(long count, int threads, Job job) {
    threads = static_cast<int>(std::min<long>(threads, std::max<long>(count, 1)));
    if (threads <= 1) {
        for (long i = 0; i < count; ++i) job(i);
        return;
    }
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            for (long i = t; i < count; i += threads) job(i);
        });
    for (auto& th : pool) th.join();
}

}  // namespace

std::string Count::str() const { return is_inf() ? "inf" : std::to_string(n_); }

std::string to_string(InitKind k) { return k == InitKind::One ? "one" : "inf"; }

InitKind parse_init(const std::string& s) {
    if (s == "one" || s == "1") return InitKind::One;
    if (s == "inf" || s == "infinite") return InitKind::Infinite;
    throw ArgumentError("unknown init '" + s + "' (expected one|inf)");
}

SimTables::SimTables(const LambdaMeasure& measure, int b_cap)
    : b_cap_(std::max(b_cap, 2)), inf_rate_(atom_at_one(measure)) {
    if (static_cast<long>(b_cap_) * b_cap_ / 2 > kMaxTableCells)
        throw ArgumentError("simulator: b_cap " + std::to_string(b_cap_) + " exceeds the table budget");
    const RateTable rates(measure, b_cap_);
    totals_.assign(static_cast<std::size_t>(b_cap_) + 1, 0.0);
    cdf_.resize(static_cast<std::size_t>(b_cap_) + 1);
    for (int b = 2; b <= b_cap_; ++b) {
        totals_[b] = rates.lambda_b(b);
        auto& row = cdf_[b];
        row.resize(static_cast<std::size_t>(b - 1));
        double acc = 0.0;
        for (int n = 1; n < b; ++n) {
            acc += rates.transition(b, n);
            row[n - 1] = acc;
        }
        for (double& v : row) v /= acc;
    }
}

double SimTables::rate(Count n) const {
    if (n.is_inf()) return inf_rate_;
    if (n.value() > b_cap_)
        throw ArgumentError("simulator: count " + std::to_string(n.value()) + " exceeds b_cap");
    return totals_[static_cast<std::size_t>(n.value())];
}

std::int64_t SimTables::next_count(std::int64_t n, double u) const {
    const auto& row = cdf_[static_cast<std::size_t>(n)];
    const auto it = std::upper_bound(row.begin(), row.end(), u);
    const auto j = std::min<std::ptrdiff_t>(it - row.begin(), static_cast<std::ptrdiff_t>(row.size()) - 1);
    return j + 1;
}

std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 finalizer over a counter
    std::uint64_t z = seed + (index + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::vector<Count> run_once(const SimConfig& cfg, const SimTables& tables, Rng& rng) {
    NestedState st;
    const Count start = cfg.init == InitKind::One ? Count(1) : Count::infinite();
    st.species.assign(static_cast<std::size_t>(cfg.s), start);
    st.labels.resize(static_cast<std::size_t>(cfg.s));
    RateTree tree(cfg.s);
    for (int i = 0; i < cfg.s; ++i) {
        st.labels[i] = i;
        tree.set(i, tables.rate(start));
    }
    int alive = cfg.s;
    for (;;) {
        const double deaths = cfg.c * alive;
        const double total = deaths + tree.total();
        st.time += rng.exponential(total);
        const double u = rng.uniform() * total;
        if (u < deaths) {
            const int dying = std::min(alive - 1, static_cast<int>(u / cfg.c));
            if (alive == cfg.m) {
                std::vector<std::pair<int, Count>> rec;
                for (int i = 0; i < alive; ++i) rec.emplace_back(st.labels[i], st.species[i]);
                std::sort(rec.begin(), rec.end(),
                          [](const auto& a, const auto& b) { return a.first < b.first; });
                std::vector<Count> out;
                for (const auto& r : rec) out.push_back(r.second);
                return out;
            }
            int target = static_cast<int>(rng.uniform() * (alive - 1));
            target = std::min(target, alive - 2);
            if (target >= dying) ++target;
            st.species[target] = st.species[target] + st.species[dying];
            tree.set(target, tables.rate(st.species[target]));
            const int last = alive - 1;
            st.species[dying] = st.species[last];
            st.labels[dying] = st.labels[last];
            tree.set(dying, tables.rate(st.species[dying]));
            tree.set(last, 0.0);
            --alive;
        } else {
            const int slot = tree.find(u - deaths);
            Count& n = st.species[slot];
            n = n.is_inf() ? Count(1) : Count(tables.next_count(n.value(), rng.uniform()));
            tree.set(slot, tables.rate(n));
        }
    }
}

long Histogram::total() const {
    long t = infinite;
    for (long v : finite) t += v;
    return t;
}

void Histogram::add(Count c) {
    if (c.is_inf()) {
        ++infinite;
        return;
    }
    const auto n = static_cast<std::size_t>(c.value());
    if (finite.size() <= n) finite.resize(n + 1, 0);
    ++finite[n];
}

void Histogram::merge(const Histogram& o) {
    if (finite.size() < o.finite.size()) finite.resize(o.finite.size(), 0);
    for (std::size_t i = 0; i < o.finite.size(); ++i) finite[i] += o.finite[i];
    infinite += o.infinite;
}

double Histogram::pmf(long n) const {
    const long t = total();
    if (t == 0 || n < 0 || static_cast<std::size_t>(n) >= finite.size()) return 0.0;
    return static_cast<double>(finite[static_cast<std::size_t>(n)]) / t;
}

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    if (const char* env = std::getenv("NCL_THREADS")) {
        const int cap = std::atoi(env);
        if (cap > 0) hw = std::min(hw, cap);
    }
    return hw;
}

SimResult run_many(const SimConfig& cfg) {
    if (cfg.s < 2) throw ArgumentError("simulate: s must be at least 2");
    if (cfg.m < 1 || cfg.m > cfg.s) throw ArgumentError("simulate: m must lie in [1, s]");
    if (cfg.replicates < 1) throw ArgumentError("simulate: replicates must be at least 1");
    if (!(cfg.c > 0.0)) throw ArgumentError("simulate: c must be positive");
    if (cfg.init == InitKind::Infinite && !cfg.measure.is_dust())
        throw DomainError("simulate: infinite initial counts need a dust measure");

    const auto t0 = std::chrono::steady_clock::now();
    const SimTables tables(cfg.measure, std::max(cfg.b_cap, cfg.s));
    SimResult res;
    res.m = cfg.m;
    res.counts.resize(static_cast<std::size_t>(cfg.replicates) * cfg.m);
    parallel_for(cfg.replicates, resolve_threads(cfg.threads), [&](long rep) {
        Rng rng(substream_seed(cfg.seed, static_cast<std::uint64_t>(rep)));
        const auto out = run_once(cfg, tables, rng);
        std::copy(out.begin(), out.end(), res.counts.begin() + rep * cfg.m);
    });

    // reduction in replicate order
    res.per_coordinate.resize(static_cast<std::size_t>(cfg.m));
    for (long r = 0; r < cfg.replicates; ++r)
        for (int j = 0; j < cfg.m; ++j) {
            res.per_coordinate[j].add(res.at(r, j));
            res.pooled.add(res.at(r, j));
        }
    for (int a = 0; a < cfg.m; ++a)
        for (int b = a + 1; b < cfg.m; ++b) {
            long n = 0;
            double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            for (long r = 0; r < cfg.replicates; ++r) {
                const Count x = res.at(r, a), y = res.at(r, b);
                if (x.is_inf() || y.is_inf()) continue;
                const double u = static_cast<double>(x.value()), v = static_cast<double>(y.value());
                ++n;
                sa += u;
                sb += v;
                saa += u * u;
                sbb += v * v;
                sab += u * v;
            }
            double corr = std::nan("");
            if (n > 1) {
                const double cov = sab - sa * sb / n;
                const double va = saa - sa * sa / n, vb = sbb - sb * sb / n;
                if (va > 0 && vb > 0) corr = cov / std::sqrt(va * vb);
            }
            res.correlations.push_back(corr);
        }
    res.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

std::vector<double> simulate_lny(const LambdaMeasure& measure, double c, int n, long replicates,
                                 std::uint64_t seed, int threads) {
    if (n < 1) throw ArgumentError("simulate_lny: n must be at least 1");
    if (replicates < 1) throw ArgumentError("simulate_lny: replicates must be at least 1");
    if (!(c > 0.0)) throw ArgumentError("simulate_lny: c must be positive");
    const SimTables tables(measure, n);
    std::vector<int> finals(static_cast<std::size_t>(replicates));
    parallel_for(replicates, resolve_threads(threads), [&](long rep) {
        Rng rng(substream_seed(seed, static_cast<std::uint64_t>(rep)));
        std::int64_t b = n;
        while (b > 1) {
            const double lam = tables.rate(Count(b));
            if (rng.uniform() * (lam + c) < c) break;  // Y rings first
            b = tables.next_count(b, rng.uniform());
        }
        finals[static_cast<std::size_t>(rep)] = static_cast<int>(b);
    });
    std::vector<double> pmf(static_cast<std::size_t>(n), 0.0);
    for (int v : finals) pmf[static_cast<std::size_t>(v - 1)] += 1.0;
    for (double& v : pmf) v /= static_cast<double>(replicates);
    return pmf;
}

double tv_bucketed(const Histogram& h, const ExtDist& ref, int cap) {
    const int top = std::min(cap, ref.size());
    double s = 0.0, emp_rest = 1.0, ref_rest = 1.0;
    for (int n = 1; n <= top; ++n) {
        const double e = h.pmf(n), r = ref.mass(n);
        s += std::abs(e - r);
        emp_rest -= e;
        ref_rest -= r;
    }
    s += std::abs(std::max(emp_rest, 0.0) - std::max(ref_rest, 0.0));
    return 0.5 * s;
}

void write_replicates_csv(std::ostream& out, const SimResult& r) {
    out << "replicate";
    for (int j = 1; j <= r.m; ++j) out << ",count_" << j;
    out << "\n";
    const long reps = r.m == 0 ? 0 : static_cast<long>(r.counts.size()) / r.m;
    for (long i = 0; i < reps; ++i) {
        out << i;
        for (int j = 0; j < r.m; ++j) out << ',' << r.at(i, j).str();
        out << "\n";
    }
}

nlohmann::json summary_json(const SimResult& r, const SimConfig& cfg, const ExtDist* ref, int cap) {
    auto pmf_of = [cap](const Histogram& h) {
        std::vector<double> p;
        double rest = 1.0;
        for (int n = 1; n <= cap; ++n) {
            p.push_back(h.pmf(n));
            rest -= p.back();
        }
        const double inf = h.total() ? static_cast<double>(h.infinite) / h.total() : 0.0;
        return nlohmann::json{{"p", json_array(p)},
                              {"rest_finite", json_number(std::max(0.0, rest - inf))},
                              {"inf", json_number(inf)}};
    };
    nlohmann::json coords = nlohmann::json::array();
    for (const auto& h : r.per_coordinate) {
        auto j = pmf_of(h);
        if (ref) j["tv_to_reference"] = json_number(tv_bucketed(h, *ref, cap));
        coords.push_back(j);
    }
    nlohmann::json j{{"config",
                      {{"measure", cfg.measure.to_json()},
                       {"c", cfg.c},
                       {"s", cfg.s},
                       {"m", cfg.m},
                       {"init", to_string(cfg.init)},
                       {"replicates", cfg.replicates}}},
                     {"seed", cfg.seed},
                     {"empirical_pmf", pmf_of(r.pooled)},
                     {"per_coordinate", coords},
                     {"correlations", json_array(r.correlations)},
                     {"bucket_cap", cap}};
    if (ref) {
        double worst = 0.0;
        for (const auto& h : r.per_coordinate) worst = std::max(worst, tv_bucketed(h, *ref, cap));
        j["tv_to_reference"] = json_number(worst);
    }
    const bool all_inf = r.pooled.infinite == r.pooled.total();
    j["all_infinite"] = all_inf;
    return j;
}

}  // namespace ncl
