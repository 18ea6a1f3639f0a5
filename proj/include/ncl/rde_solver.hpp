#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ncl/block_kernel.hpp"
#include "ncl/errors.hpp"
#include "ncl/lambda_measure.hpp"

namespace ncl {

// What happens to finite mass that lands beyond the truncation level N.
enum class TailPolicy { FoldToN, FoldToInf, Envelope };

std::string to_string(TailPolicy p);
TailPolicy parse_tail_policy(const std::string& s);

// Distribution on {1..N} u {inf}. `tail` is finite mass known to sit beyond N.
class ExtDist {
public:
    ExtDist(std::vector<double> p, double p_inf, double tail, TailPolicy policy);

    static ExtDist point(int n, int size, TailPolicy policy = TailPolicy::Envelope);
    static ExtDist infinite(int size, TailPolicy policy = TailPolicy::Envelope);

    int size() const { return static_cast<int>(p_.size()); }
    double mass(int n) const { return p_[static_cast<std::size_t>(n - 1)]; }
    const std::vector<double>& masses() const { return p_; }
    double p_inf() const { return p_inf_; }
    double tail() const { return tail_; }
    TailPolicy policy() const { return policy_; }

    // Truncation band attached by an Envelope g_map: the TV distance between the
    // FoldToN and FoldToInf images. Zero otherwise.
    double band() const { return band_; }
    void set_band(double b) { band_ = b; }

    double total() const;
    // Finite tail counted at N+1; +inf with mass at infinity (or tail under FoldToInf).
    double mean() const;
    // P(W <= n) for n = 1..N.
    std::vector<double> cdf() const;
    ExtDist with_policy(TailPolicy p) const;

private:
    std::vector<double> p_;
    double p_inf_;
    double tail_;
    TailPolicy policy_;
    double band_ = 0.0;
};

double tv_distance(const ExtDist& a, const ExtDist& b);

// Both truncation projections of one application of G_c.
struct Envelope {
    ExtDist fold_n;    // excess mass sent through row N (CDF upper bound)
    ExtDist fold_inf;  // excess mass sent through the infinite row (CDF lower bound)
    double excess;     // finite input mass beyond N

    double band() const { return tv_distance(fold_n, fold_inf); }
    // CDF_fold_n(n) - CDF_fold_inf(n), n = 1..N. Non-negative.
    std::vector<double> band_cdf() const;
};

Envelope g_map_envelope(const ExtDist& mu, const LYKernel& kernel);
ExtDist g_map(const ExtDist& mu, const LYKernel& kernel);

enum class Regime { FiniteMean, Boundary, InfiniteMean };
std::string to_string(Regime r);
Regime regime_of(const LambdaMeasure& measure, double c);

struct FixOptions {
    double tol = 1e-12;
    long max_iter = 100000;
    TailPolicy policy = TailPolicy::Envelope;
};

struct FixTrace {
    std::vector<double> tv;
    std::vector<double> mean;
    std::vector<double> band;
};

struct FixResult {
    ExtDist dist;
    FixTrace trace;
    long iterations = 0;
    bool converged = false;
    Regime regime = Regime::FiniteMean;
    // Worst step against the expected direction of the monotone iteration.
    double monotone_violation = 0.0;
    // TV(G(dist), dist) after stopping.
    double fixed_point_tv = 0.0;
    std::string note;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, FixResult partial)
        : Error(what), partial_(std::move(partial)) {}
    const FixResult& partial() const { return partial_; }

private:
    FixResult partial_;
};

enum class Direction { Increasing, Decreasing, Unknown };

// Iterates G_c from `start` until successive TV < tol. Throws ConvergenceError.
FixResult iterate_map(const ExtDist& start, const LYKernel& kernel, const FixOptions& opts,
                      Direction dir);
FixResult fix_from_delta1(const LYKernel& kernel, const FixOptions& opts = {});
FixResult fix_from_delta_inf(const LYKernel& kernel, const FixOptions& opts = {});

// Geometric growth of the iterate means over the early part of the trace.
double mean_growth_ratio(const FixTrace& trace, int size);

double pgf(const ExtDist& dist, double x);

struct PgfResidual {
    std::vector<double> values;
    bool asserted = true;  // false when the distribution has mass at infinity
};
PgfResidual pgf_residual(const ExtDist& dist, const LambdaMeasure& measure, double c,
                         const std::vector<double>& xs);

// Signed array t with t_n = ((lambda_n+c)/c) p_n - (1/c) sum_{i>n} q(i->n) p_i.
std::vector<double> inverse_T(const ExtDist& dist, const LYKernel& kernel);
// (p * p)_n for n = 1..N.
std::vector<double> self_convolution(const ExtDist& dist);

struct MeanIdentity {
    double lhs;
    double rhs;
    double gap() const;
};
MeanIdentity mean_identity_check(const ExtDist& dist, const LambdaMeasure& measure, double c);

struct FixDiagnostics {
    double pgf_residual_max = 0.0;
    bool pgf_asserted = true;
    double inverse_T_tv = 0.0;
    double mean_identity_gap = 0.0;  // NaN outside the finite-mean regime
    double mean_identity_lhs = 0.0;
    double mean_identity_rhs = 0.0;
};
FixDiagnostics diagnose(const FixResult& result, const LYKernel& kernel);

nlohmann::json to_json(const ExtDist& dist);
ExtDist ext_dist_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FixResult& result, const LYKernel& kernel, const FixDiagnostics& diag);

}  // namespace ncl
