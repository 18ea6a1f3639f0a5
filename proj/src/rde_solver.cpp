#include "ncl/rde_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "ncl/format.hpp"

namespace ncl {

namespace {

constexpr double kClip = -1e-14;
constexpr double kNormTol = 1e-12;

double kahan_sum(const std::vector<double>& v) {
    long double s = 0.0L;
    for (double x : v) s += x;
    return static_cast<double>(s);
}

// Clip round-off negatives, then rescale so the masses sum to one exactly.
ExtDist finalize(std::vector<double> p, double p_inf, TailPolicy policy) {
    for (double& v : p) {
        if (v < kClip) throw IntegrityError("g_map: negative mass " + fmt17(v));
        if (v < 0.0) v = 0.0;
    }
    if (p_inf < kClip) throw IntegrityError("g_map: negative mass at infinity");
    p_inf = std::max(p_inf, 0.0);
    const double total = kahan_sum(p) + p_inf;
    if (!(total > 0.0)) throw IntegrityError("g_map: image has no mass");
    for (double& v : p) v /= total;
    return ExtDist(std::move(p), p_inf / total, 0.0, policy);
}

}  // namespace

std::string to_string(TailPolicy p) {
    switch (p) {
        case TailPolicy::FoldToN: return "fold_to_n";
        case TailPolicy::FoldToInf: return "fold_to_inf";
        case TailPolicy::Envelope: return "envelope";
    }
    return "?";
}

TailPolicy parse_tail_policy(const std::string& s) {
    if (s == "fold_to_n" || s == "n") return TailPolicy::FoldToN;
    if (s == "fold_to_inf" || s == "inf") return TailPolicy::FoldToInf;
    if (s == "envelope") return TailPolicy::Envelope;
    throw ArgumentError("unknown tail policy '" + s + "'");
}

ExtDist::ExtDist(std::vector<double> p, double p_inf, double tail, TailPolicy policy)
    : p_(std::move(p)), p_inf_(p_inf), tail_(tail), policy_(policy) {
    if (p_.empty()) throw ArgumentError("ExtDist: support size must be at least 1");
    if (!(p_inf_ >= 0.0) || !(tail_ >= 0.0)) throw ArgumentError("ExtDist: negative mass");
    for (double v : p_)
        if (!(v >= 0.0)) throw ArgumentError("ExtDist: negative or NaN mass");
}

ExtDist ExtDist::point(int n, int size, TailPolicy policy) {
    if (n < 1 || n > size) throw ArgumentError("ExtDist::point: n outside 1..N");
    std::vector<double> p(static_cast<std::size_t>(size), 0.0);
    p[static_cast<std::size_t>(n - 1)] = 1.0;
    return ExtDist(std::move(p), 0.0, 0.0, policy);
}

ExtDist ExtDist::infinite(int size, TailPolicy policy) {
    return ExtDist(std::vector<double>(static_cast<std::size_t>(size), 0.0), 1.0, 0.0, policy);
}

double ExtDist::total() const { return kahan_sum(p_) + p_inf_ + tail_; }

double ExtDist::mean() const {
    if (p_inf_ > 0.0 || (tail_ > 0.0 && policy_ == TailPolicy::FoldToInf))
        return std::numeric_limits<double>::infinity();
    long double s = 0.0L;
    for (std::size_t i = 0; i < p_.size(); ++i) s += static_cast<long double>(i + 1) * p_[i];
    s += static_cast<long double>(p_.size() + 1) * tail_;
    return static_cast<double>(s);
}

std::vector<double> ExtDist::cdf() const {
    std::vector<double> c(p_.size());
    long double s = 0.0L;
    for (std::size_t i = 0; i < p_.size(); ++i) {
        s += p_[i];
        c[i] = static_cast<double>(s);
    }
    return c;
}

ExtDist ExtDist::with_policy(TailPolicy p) const {
    ExtDist d = *this;
    d.policy_ = p;
    return d;
}

double tv_distance(const ExtDist& a, const ExtDist& b) {
    if (a.size() != b.size()) throw ArgumentError("tv_distance: support sizes differ");
    long double s = 0.0L;
    for (int n = 1; n <= a.size(); ++n) s += std::abs(a.mass(n) - b.mass(n));
    s += std::abs(a.p_inf() - b.p_inf()) + std::abs(a.tail() - b.tail());
    return static_cast<double>(0.5L * s);
}

std::vector<double> Envelope::band_cdf() const {
    auto hi = fold_n.cdf();
    const auto lo = fold_inf.cdf();
    for (std::size_t i = 0; i < hi.size(); ++i) hi[i] = std::max(0.0, hi[i] - lo[i]);
    return hi;
}

namespace {

// Image of mu before any decision about where overshooting mass goes.
struct Pushed {
    std::vector<double> base;  // from W1+W2 <= N
    double excess;             // finite W1+W2 > N
    double inf_in;             // W1+W2 = inf
};

Pushed push_forward(const ExtDist& mu, const LYKernel& kernel) {
    const int n = mu.size();
    if (kernel.size() < 2) throw ArgumentError("g_map: kernel needs N >= 2");
    if (kernel.size() != n) throw ArgumentError("g_map: distribution and kernel sizes differ");
    if (std::abs(mu.total() - 1.0) > kNormTol)
        throw ArgumentError("g_map: input is not normalized (total " + fmt17(mu.total()) + ")");

    const auto& p = mu.masses();
    const double tail = mu.tail();

    std::vector<double> conv(static_cast<std::size_t>(n) + 1, 0.0);
    for (int i = 1; i < n; ++i) {
        const double pi = p[i - 1];
        if (pi == 0.0) continue;
        for (int j = 1; i + j <= n; ++j) conv[i + j] += pi * p[j - 1];
    }
    // overshooting pairs, plus anything involving the tail
    std::vector<double> suffix(static_cast<std::size_t>(n) + 2, 0.0);
    for (int j = n; j >= 1; --j) suffix[j] = suffix[j + 1] + p[j - 1];
    long double excess = 0.0L;
    for (int i = 1; i <= n; ++i) excess += static_cast<long double>(p[i - 1]) * suffix[n - i + 1];
    excess += 2.0L * tail * suffix[1] + static_cast<long double>(tail) * tail;

    std::vector<double> base(static_cast<std::size_t>(n), 0.0);
    for (int s = 2; s <= n; ++s) {
        const double w = conv[s];
        if (w == 0.0) continue;
        const double* row = kernel.row(s);
        for (int k = 0; k < s; ++k) base[k] += w * row[k];
    }
    return {std::move(base), static_cast<double>(excess), mu.p_inf() * (2.0 - mu.p_inf())};
}

ExtDist assemble(const Pushed& img, const LYKernel& kernel, bool excess_to_inf, TailPolicy policy) {
    std::vector<double> v = img.base;
    double inf_mass = 0.0;
    double through_inf_row = img.inf_in;
    if (excess_to_inf) {
        through_inf_row += img.excess;
    } else if (img.excess > 0.0) {
        const double* last = kernel.row(kernel.size());
        for (int k = 0; k < kernel.size(); ++k) v[k] += img.excess * last[k];
    }
    if (through_inf_row > 0.0) {
        const auto& r = kernel.inf_row();
        v[0] += through_inf_row * r.p_one;
        inf_mass += through_inf_row * r.p_inf;
    }
    return finalize(std::move(v), inf_mass, policy);
}

}  // namespace

Envelope g_map_envelope(const ExtDist& mu, const LYKernel& kernel) {
    const Pushed img = push_forward(mu, kernel);
    return Envelope{assemble(img, kernel, false, mu.policy()), assemble(img, kernel, true, mu.policy()),
                    img.excess};
}

ExtDist g_map(const ExtDist& mu, const LYKernel& kernel) {
    const Pushed img = push_forward(mu, kernel);
    switch (mu.policy()) {
        case TailPolicy::FoldToN: return assemble(img, kernel, false, mu.policy());
        case TailPolicy::FoldToInf: return assemble(img, kernel, true, mu.policy());
        case TailPolicy::Envelope: break;
    }
    ExtDist out = assemble(img, kernel, false, mu.policy());
    out.set_band(tv_distance(out, assemble(img, kernel, true, mu.policy())));
    return out;
}

std::string to_string(Regime r) {
    switch (r) {
        case Regime::FiniteMean: return "finite_mean";
        case Regime::Boundary: return "boundary";
        case Regime::InfiniteMean: return "infinite_mean";
    }
    return "?";
}

Regime regime_of(const LambdaMeasure& measure, double c) {
    const double top = mean_inv_x(measure);
    if (std::isinf(top)) return Regime::InfiniteMean;
    if (std::abs(c - top) <= 1e-12 * std::max(1.0, top)) return Regime::Boundary;
    return c < top ? Regime::FiniteMean : Regime::InfiniteMean;
}

FixResult iterate_map(const ExtDist& start, const LYKernel& kernel, const FixOptions& opts,
                      Direction dir) {
    if (!(opts.tol > 0.0) || opts.max_iter < 1)
        throw ArgumentError("fixed-point iteration: tol > 0 and max_iter >= 1 required");
    FixResult res{start.with_policy(opts.policy), {}, 0, false, regime_of(kernel.measure(), kernel.c()), 0.0, 0.0, {}};
    switch (res.regime) {
        case Regime::Boundary:
            res.note = "boundary regime: c = E[1/X], finite-mean hypothesis not met";
            break;
        case Regime::InfiniteMean:
            res.note = "c > E[1/X]: iterate means grow, truncation level caps them";
            break;
        case Regime::FiniteMean:
            res.note = "uniqueness among finite-mean solutions is not certified numerically";
            break;
    }
    auto prev_cdf = res.dist.cdf();
    for (long it = 1; it <= opts.max_iter; ++it) {
        ExtDist next = g_map(res.dist, kernel);
        const double tv = tv_distance(next, res.dist);
        auto cdf = next.cdf();
        if (dir != Direction::Unknown) {
            // increasing in stochastic order means the CDF goes down
            for (std::size_t i = 0; i < cdf.size(); ++i) {
                const double step = dir == Direction::Increasing ? cdf[i] - prev_cdf[i]
                                                                 : prev_cdf[i] - cdf[i];
                res.monotone_violation = std::max(res.monotone_violation, step);
            }
        }
        res.trace.tv.push_back(tv);
        res.trace.mean.push_back(next.mean());
        res.trace.band.push_back(next.band());
        res.dist = std::move(next);
        prev_cdf = std::move(cdf);
        res.iterations = it;
        if (tv < opts.tol) {
            res.converged = true;
            break;
        }
    }
    res.fixed_point_tv = tv_distance(g_map(res.dist, kernel), res.dist);
    if (!res.converged)
        throw ConvergenceError("fixed-point iteration did not reach tol " + fmt17(opts.tol) +
                                   " within " + std::to_string(opts.max_iter) + " iterations",
                               std::move(res));
    return res;
}

FixResult fix_from_delta1(const LYKernel& kernel, const FixOptions& opts) {
    return iterate_map(ExtDist::point(1, kernel.size(), opts.policy), kernel, opts,
                       Direction::Increasing);
}

FixResult fix_from_delta_inf(const LYKernel& kernel, const FixOptions& opts) {
    if (!kernel.measure().is_dust()) throw DomainError("fix_from_delta_inf: measure is not dust");
    FixResult res = iterate_map(ExtDist::infinite(kernel.size(), opts.policy), kernel, opts,
                                Direction::Decreasing);
    const double expected = std::max(0.0, 1.0 - atom_at_one(kernel.measure()) / kernel.c());
    if (std::abs(res.dist.p_inf() - expected) > 1e-8)
        throw IntegrityError("fix_from_delta_inf: mass at infinity " + fmt17(res.dist.p_inf()) +
                             " differs from 1 - P(X=1)/c = " + fmt17(expected));
    return res;
}

double mean_growth_ratio(const FixTrace& trace, int size) {
    // ratio of successive means while the iterates are still far from the cap
    std::vector<double> r;
    for (std::size_t i = 1; i < trace.mean.size(); ++i) {
        const double a = trace.mean[i - 1], b = trace.mean[i];
        if (!std::isfinite(a) || !std::isfinite(b) || b > size / 8.0) break;
        if (a > 2.0) r.push_back(b / a);
    }
    if (r.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(r.begin(), r.end());
    return r[r.size() / 2];
}

double pgf(const ExtDist& dist, double x) {
    if (!(x >= 0.0 && x <= 1.0)) throw ArgumentError("pgf: x must lie in [0,1]");
    if (x == 1.0) return 1.0 - dist.p_inf();
    long double s = 0.0L, xn = 1.0L;
    for (int n = 1; n <= dist.size(); ++n) {
        xn *= x;
        if (xn == 0.0L) break;
        s += xn * dist.mass(n);
    }
    return static_cast<double>(s);
}

PgfResidual pgf_residual(const ExtDist& dist, const LambdaMeasure& measure, double c,
                         const std::vector<double>& xs) {
    PgfResidual out;
    out.asserted = dist.p_inf() == 0.0;
    const auto& p = dist.masses();
    const int n_max = dist.size();
    for (double x : xs) {
        if (!(x >= 0.0 && x <= 1.0)) throw ArgumentError("pgf_residual: x must lie in [0,1]");
        const double r = pgf(dist.with_policy(TailPolicy::FoldToN), x) -
                         (x == 1.0 ? dist.tail() : 0.0);
        // E[(R(x) - R((1-X)x))/X^2]; x^n (1-(1-u)^n) with d_n = u + (1-u) d_{n-1}
        const double t1 = expect_over_x2(measure, [&](double u, double y) {
            double s = 0.0, d = 0.0, xn = 1.0;
            for (int n = 1; n <= n_max; ++n) {
                d = u + y * d;
                xn *= x;
                if (xn < 1e-300) break;
                s += p[n - 1] * xn * d;
            }
            return s;
        });
        // E[(R(u+(1-u)x) - R((1-u)x))/X^2]; a^n - b^n with e_n = a e_{n-1} + u b^{n-1}
        const double t3 = expect_over_x2(measure, [&](double u, double y) {
            const double b = y * x;
            const double a = b + u;
            double s = 0.0, e = 0.0, bn = 1.0, an = 1.0;
            for (int n = 1; n <= n_max; ++n) {
                e = a * e + u * bn;
                bn *= b;
                an *= a;
                s += p[n - 1] * e;
                if (an < 1e-300) break;
            }
            return s;
        });
        out.values.push_back(t1 + c * (r - r * r) - x * t3);
    }
    return out;
}

std::vector<double> inverse_T(const ExtDist& dist, const LYKernel& kernel) {
    const int n = dist.size();
    if (kernel.size() != n) throw ArgumentError("inverse_T: distribution and kernel sizes differ");
    const double c = kernel.c();
    const RateTable& r = kernel.rates();
    std::vector<double> t(static_cast<std::size_t>(n));
    for (int m = 1; m <= n; ++m) t[m - 1] = (r.lambda_b(m) + c) / c * dist.mass(m);
    for (int i = 2; i <= n; ++i) {
        const double pi = dist.mass(i);
        if (pi == 0.0) continue;
        for (int m = 1; m < i; ++m) t[m - 1] -= r.transition(i, m) * pi / c;
    }
    return t;
}

std::vector<double> self_convolution(const ExtDist& dist) {
    const int n = dist.size();
    const auto& p = dist.masses();
    std::vector<double> conv(static_cast<std::size_t>(n), 0.0);
    for (int i = 1; i < n; ++i)
        for (int j = 1; i + j <= n; ++j) conv[i + j - 1] += p[i - 1] * p[j - 1];
    return conv;
}

double MeanIdentity::gap() const { return std::abs(lhs - rhs); }

MeanIdentity mean_identity_check(const ExtDist& dist, const LambdaMeasure& measure, double c) {
    const double inv = mean_inv_x(measure);
    if (!(c < inv)) throw DomainError("mean identity: needs c < E[1/X] = " + fmt17(inv));
    if (dist.p_inf() > 0.0) throw DomainError("mean identity: distribution has mass at infinity");
    const auto& p = dist.masses();
    const int n_max = dist.size();
    const double tail = dist.tail();
    // E[(1 - R(1-X))/X^2] = sum_n p_n E[(1-(1-X)^n)/X^2]
    const double num = expect_over_x2(measure, [&](double u, double y) {
        double s = 0.0, d = 0.0;
        for (int n = 1; n <= n_max; ++n) {
            d = u + y * d;
            s += p[n - 1] * d;
        }
        d = u + y * d;
        return s + tail * d;
    });
    return {dist.mean(), num / (inv - c)};
}

FixDiagnostics diagnose(const FixResult& result, const LYKernel& kernel) {
    FixDiagnostics d;
    const ExtDist& dist = result.dist;
    const LambdaMeasure& m = kernel.measure();
    const double c = kernel.c();
    std::vector<double> xs;
    for (int i = 1; i <= 9; ++i) xs.push_back(i / 10.0);
    if (m.is_dust()) {
        const auto res = pgf_residual(dist, m, c, xs);
        d.pgf_asserted = res.asserted;
        for (double v : res.values) d.pgf_residual_max = std::max(d.pgf_residual_max, std::abs(v));
    } else {
        d.pgf_asserted = false;
        d.pgf_residual_max = std::numeric_limits<double>::quiet_NaN();
    }
    if (dist.p_inf() == 0.0) {
        const auto t = inverse_T(dist, kernel);
        const auto conv = self_convolution(dist);
        long double s = 0.0L;
        for (std::size_t i = 0; i < t.size(); ++i) s += std::abs(t[i] - conv[i]);
        d.inverse_T_tv = static_cast<double>(0.5L * s);
    } else {
        d.inverse_T_tv = std::numeric_limits<double>::quiet_NaN();
    }
    if (result.regime == Regime::FiniteMean && dist.p_inf() == 0.0) {
        const auto mi = mean_identity_check(dist, m, c);
        d.mean_identity_lhs = mi.lhs;
        d.mean_identity_rhs = mi.rhs;
        d.mean_identity_gap = mi.gap();
    } else {
        d.mean_identity_lhs = d.mean_identity_rhs = d.mean_identity_gap =
            std::numeric_limits<double>::quiet_NaN();
    }
    return d;
}

nlohmann::json to_json(const ExtDist& dist) {
    return {{"N", dist.size()},
            {"policy", to_string(dist.policy())},
            {"p", json_array(dist.masses())},
            {"p_inf", json_number(dist.p_inf())},
            {"tail", json_number(dist.tail())},
            {"band", json_number(dist.band())},
            {"mean", json_number(dist.mean())}};
}

ExtDist ext_dist_from_json(const nlohmann::json& j) {
    try {
        std::vector<double> p;
        for (const auto& v : j.at("p")) p.push_back(number_from_json(v));
        ExtDist d(std::move(p), number_from_json(j.at("p_inf")), number_from_json(j.at("tail")),
                  parse_tail_policy(j.at("policy").get<std::string>()));
        if (j.contains("band")) d.set_band(number_from_json(j.at("band")));
        return d;
    } catch (const nlohmann::json::exception& e) {
        throw ArgumentError(std::string("distribution JSON: ") + e.what());
    }
}

nlohmann::json to_json(const FixResult& r, const LYKernel& kernel, const FixDiagnostics& d) {
    nlohmann::json j = to_json(r.dist);
    j["measure"] = kernel.measure().to_json();
    j["c"] = kernel.c();
    j["converged"] = r.converged;
    j["iterations"] = r.iterations;
    j["regime"] = to_string(r.regime);
    j["note"] = r.note;
    j["tv_trace"] = json_array(r.trace.tv);
    j["mean_trace"] = json_array(r.trace.mean);
    j["band_trace"] = json_array(r.trace.band);
    j["diagnostics"] = {{"pgf_residual_max", json_number(d.pgf_residual_max)},
                        {"pgf_identity_asserted", d.pgf_asserted},
                        {"inverse_T_tv", json_number(d.inverse_T_tv)},
                        {"mean_identity_gap", json_number(d.mean_identity_gap)},
                        {"mean_identity_lhs", json_number(d.mean_identity_lhs)},
                        {"mean_identity_rhs", json_number(d.mean_identity_rhs)},
                        {"fixed_point_tv", json_number(r.fixed_point_tv)},
                        {"monotone_violation", json_number(r.monotone_violation)},
                        {"kernel_renormalization_delta", json_number(kernel.renormalization_delta())},
                        {"mean_growth_ratio", json_number(mean_growth_ratio(r.trace, kernel.size()))}};
    return j;
}

}  // namespace ncl
