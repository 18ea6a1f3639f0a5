#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ncl/block_kernel.hpp"
#include "ncl/lambda_measure.hpp"
#include "ncl/rde_solver.hpp"

namespace ncl {

// gamma_n = (-1)^{n+1} C(alpha, n): the coefficients of 1-(1-x)^alpha.
struct GammaSeq {
    double alpha;
    int n_max;
    std::vector<double> gamma;  // gamma[n], gamma[0] = 0

    double at(int n) const { return gamma[static_cast<std::size_t>(n)]; }
    // sum_{i<=n} gamma_i
    double partial_sum(int n) const;
    // gamma_n n^{1+alpha} divided by its limit alpha/Gamma(1-alpha)
    double asymptotic_ratio(int n) const;
};

GammaSeq gamma_coeffs(double alpha, int n_max);

// r_i <= scale * gamma_{alpha,i} for i > N; lets s_from_r bound what it drops.
struct TailEnvelope {
    double alpha;
    double scale;
};

struct SFromR {
    std::vector<double> s;                // s[n], s[0] = 0
    std::vector<double> residual_bound;   // empty when no envelope was given
};

// s_n = ((lambda_n+c)/c) r_n - (1/c) sum_{n<i<=N} q(i->n) r_i for r[1..N].
SFromR s_from_r(const std::vector<double>& r, const LambdaMeasure& measure, double c,
                const RateTable& rates, const std::optional<TailEnvelope>& envelope = {});

// s_n for r = gamma_{a,.} summed over all i (no truncation), n = 1..n_max.
// phi must hold phi_0..phi_{n_max} (see phi_table).
std::vector<double> sibuya_s(const LambdaMeasure& measure, double c, double a, int n_max,
                             const std::vector<double>& phi);

ExtDist build_mu0(const LambdaMeasure& measure, double c, double beta, double a, double eps, int n);

struct Nu0 {
    ExtDist dist;
    int k = 0;
    int m1 = 0;              // smallest support point of T
    double mass_at_m1 = 0.0;
    double normalizer = 0.0; // Z in r_n = (gamma_{alpha_c,n} + gamma_{beta,n})/Z, n >= k
    double min_mass = 0.0;
    // min over k <= n <= n_check of (s_n - 2(gamma_{alpha_c,n}+gamma_{beta,n})/Z) / gamma_{alpha_c,n}
    double coefficient_margin = 0.0;
    int n_check = 0;
    double sum_s_minus_one = 0.0;
    double kernel_route_gap = 0.0;  // max_n (T K)_n - nu0_n; T K drops T beyond N, so <= 0
};

// Construction of nu0 for a given k on the kernel's truncation level.
Nu0 build_nu0(const LambdaMeasure& measure, double c, double beta, int k, const LYKernel& kernel,
              int n_check = 1 << 20);

enum class Order { ImageAbove, ImageBelow };

// Pointwise CDF comparison of g_map(mu) with mu. For ImageAbove (G(mu) >= mu) the
// certified margin is CDF_mu - CDF_foldN; for ImageBelow it is CDF_foldInf - CDF_mu.
// The check passes when margin_n >= -band_n at every n.
struct Dominance {
    std::vector<double> margin;
    std::vector<double> band;
    double min_margin = 0.0;
    double worst_excess = 0.0;  // max(0, -(margin+band))
    bool passed = false;
};
Dominance check_dominance(const ExtDist& mu, const LYKernel& kernel, Order expected);

// Least-squares slope of -log P(W >= n) against log n over n = 2^j in [n_lo, N/2].
double tail_index(const ExtDist& dist, int n_lo = 16);

struct ConditionCheck {
    double p;
    std::vector<long> n;
    std::vector<double> scaled;  // n^{-p} phi_n
    double ratio;                // max/min
    bool holds;
};
ConditionCheck condition_check(const LambdaMeasure& measure, std::optional<double> p = {},
                               int j_max = 20);

struct BracketParams {
    std::optional<double> beta;
    int n = 4096;
    double tol = 1e-10;
    long max_iter = 100000;
    int j_max = 20;        // a in {2^-3, ..., 2^-j_max}
    int eps_steps = 6;     // eps in {alpha_c/(2 beta), ..., alpha_c/(2^eps_steps beta)}
    int n_check = 1 << 20;
    // explicit triple; used instead of the search when all three are set
    std::optional<double> a;
    std::optional<double> eps;
    std::optional<int> k;
};

struct LimitSummary {
    FixResult fix;
    double tail_index;
    double dominance_over_star;  // min_n (CDF_star - CDF_limit + slack)
};

struct BracketReport {
    double c;
    double alpha_c;
    double beta;
    double threshold;  // E[(1-(1-X)^{1/2})/X^2]
    double mean_inv_x;
    ConditionCheck condition;
    double a;
    double eps;
    Nu0 nu0;
    ExtDist mu0;
    Dominance mu0_dominance;
    Dominance nu0_dominance;
    std::vector<std::string> search_log;
    LimitSummary lower;
    LimitSummary upper;
    FixResult star;
    double lower_upper_tv;
    double order_margin;  // min_n CDF_lower - CDF_upper + slack
    double tail_index_mu0;
    double tail_index_nu0;
    bool passed;
};

// Parameter search plus the two monotone iterations. Throws DomainError when
// the hypotheses fail, SearchError when no admissible parameters are found, and
// IntegrityError when the limits are out of order beyond the band.
BracketReport bracket_fixed_point(const LambdaMeasure& measure, double c, const BracketParams& params);

nlohmann::json to_json(const BracketReport& report);
nlohmann::json to_json(const GammaSeq& g);

}  // namespace ncl
