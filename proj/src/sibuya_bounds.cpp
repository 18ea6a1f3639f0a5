#include "ncl/sibuya_bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "ncl/errors.hpp"
#include "ncl/format.hpp"

namespace ncl {

namespace {

constexpr double kClip = -1e-14;

double condition_exponent(const LambdaMeasure& m) {
    return m.kind() == LambdaMeasure::Kind::Beta ? m.alpha() : 0.0;
}

// Everything build_nu0 needs that does not depend on k.
struct Nu0Context {
    double c;
    double alpha_c;
    double beta;
    int n_hi;
    GammaSeq ga;
    GammaSeq gb;
    std::vector<double> sa;  // s coefficients of 1-(1-x)^{alpha_c}
    std::vector<double> sb;  // ... of 1-(1-x)^beta
};

Nu0Context make_context(const LambdaMeasure& m, double c, double alpha_c, double beta, int n,
                        int n_check) {
    const int n_hi = std::max(n, n_check);
    const auto phi = phi_table(m, n_hi);
    return Nu0Context{c,
                      alpha_c,
                      beta,
                      n_hi,
                      gamma_coeffs(alpha_c, n_hi),
                      gamma_coeffs(beta, n_hi),
                      sibuya_s(m, c, alpha_c, n_hi, phi),
                      sibuya_s(m, c, beta, n_hi, phi)};
}

Nu0 build_nu0_with(const Nu0Context& ctx, int k, const LYKernel& kernel, int n_check) {
    const int n = kernel.size();
    const double c = ctx.c;
    if (k < 2 || k > n) throw ArgumentError("build_nu0: k must lie in [2, N]");
    if (n_check < k) n_check = k;
    const RateTable& rates = kernel.rates();

    Nu0 out{ExtDist::point(1, n)};
    out.k = k;
    out.n_check = n_check;
    const double z = (1.0 - ctx.ga.partial_sum(k - 1)) + (1.0 - ctx.gb.partial_sum(k - 1));
    out.normalizer = z;

    // s_n >= 2(gamma_{alpha_c,n} + gamma_{beta,n})/Z for every n >= k up to n_check
    double margin = std::numeric_limits<double>::infinity();
    int worst_n = k;
    for (int i = k; i <= n_check; ++i) {
        const double h = (ctx.sa[i] + ctx.sb[i] - 2.0 * (ctx.ga.at(i) + ctx.gb.at(i))) / ctx.ga.at(i);
        if (h < margin) {
            margin = h;
            worst_n = i;
        }
    }
    out.coefficient_margin = margin;
    if (!(margin > 0.0))
        throw SearchError("k=" + std::to_string(k) + ": coefficient condition fails at n=" +
                          std::to_string(worst_n));

    // polynomial part sum_{i<k} (gamma_{alpha_c,i} + gamma_{beta,i}) x^i is subtracted
    std::vector<double> poly(static_cast<std::size_t>(k), 0.0);
    for (int i = 1; i < k; ++i) poly[i] = ctx.ga.at(i) + ctx.gb.at(i);
    const auto s_poly = s_from_r(poly, kernel.measure(), c, rates).s;

    std::vector<double> s(static_cast<std::size_t>(n) + 1, 0.0);
    for (int i = 1; i <= n; ++i) {
        const double sp = i < k ? s_poly[i] : 0.0;
        s[i] = (ctx.sa[i] + ctx.sb[i] - sp) / z;
    }

    long double partial = 0.0L;
    int m1 = 0;
    for (int i = 1; i <= n; ++i) {
        partial += s[i];
        if (partial >= 0.0L) {
            m1 = i;
            break;
        }
    }
    if (m1 == 0)
        throw SearchError("k=" + std::to_string(k) + ": partial sums of s stay negative up to N=" +
                          std::to_string(n));
    out.m1 = m1;
    out.mass_at_m1 = static_cast<double>(partial);
    for (int i = m1 + 1; i <= n; ++i)
        if (s[i] < 0.0)
            throw SearchError("k=" + std::to_string(k) + ": negative s beyond M1 at n=" +
                              std::to_string(i));

    // L_T(Y) = r - delta, where delta is the L-image of the signed measure s - T
    std::vector<double> delta(static_cast<std::size_t>(m1) + 1, 0.0);
    std::vector<double> acc(static_cast<std::size_t>(m1) + 1, 0.0);
    for (int i = m1; i >= 1; --i) {
        const double t = i == m1 ? out.mass_at_m1 : 0.0;
        delta[i] = (c * (s[i] - t) + acc[i]) / (rates.lambda_b(i) + c);
        for (int j = 1; j < i; ++j) acc[j] += rates.transition(i, j) * delta[i];
    }

    std::vector<double> p(static_cast<std::size_t>(n), 0.0);
    double lowest = std::numeric_limits<double>::infinity();
    for (int i = 1; i <= n; ++i) {
        const double r = i >= k ? (ctx.ga.at(i) + ctx.gb.at(i)) / z : 0.0;
        double v = r - (i <= m1 ? delta[i] : 0.0);
        lowest = std::min(lowest, v);
        if (v < kClip)
            throw IntegrityError("build_nu0: negative mass " + fmt17(v) + " at n=" + std::to_string(i));
        p[i - 1] = std::max(v, 0.0);
    }
    out.min_mass = lowest;
    const double tail = ((1.0 - ctx.ga.partial_sum(n)) + (1.0 - ctx.gb.partial_sum(n))) / z;

    // T K only sees T on {M1..N}, so it must sit below the exact masses
    std::vector<double> via_kernel(static_cast<std::size_t>(n), 0.0);
    for (int i = m1; i <= n; ++i) {
        const double t = i == m1 ? out.mass_at_m1 : s[i];
        const double* row = kernel.row(i);
        for (int j = 0; j < i; ++j) via_kernel[j] += t * row[j];
    }
    double gap = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) gap = std::max(gap, via_kernel[i] - p[i]);
    out.kernel_route_gap = gap;

    out.dist = ExtDist(std::move(p), 0.0, tail, TailPolicy::Envelope);
    return out;
}

void check_beta_for_nu0(const LambdaMeasure& m, double alpha_c, double beta) {
    const double hi = std::min({alpha_c + 1.0 - condition_exponent(m), 2.0 * alpha_c, 0.5});
    if (!(beta > alpha_c && beta < hi))
        throw ArgumentError("build_nu0: beta must lie in (alpha_c, " + fmt17(hi) + ") = (" +
                            fmt17(alpha_c) + ", " + fmt17(hi) + ")");
}

double min_of(const std::vector<double>& v) {
    double m = std::numeric_limits<double>::infinity();
    for (double x : v) m = std::min(m, x);
    return m;
}

}  // namespace

double GammaSeq::partial_sum(int n) const {
    long double s = 0.0L;
    for (int i = 1; i <= n; ++i) s += gamma[static_cast<std::size_t>(i)];
    return static_cast<double>(s);
}

double GammaSeq::asymptotic_ratio(int n) const {
    const double limit = alpha / std::tgamma(1.0 - alpha);
    return at(n) * std::pow(static_cast<double>(n), 1.0 + alpha) / limit;
}

GammaSeq gamma_coeffs(double alpha, int n_max) {
    if (!(alpha > 0.0 && alpha < 2.0)) throw ArgumentError("gamma_coeffs: alpha must lie in (0,2)");
    if (n_max < 1) throw ArgumentError("gamma_coeffs: n_max must be at least 1");
    std::vector<double> g(static_cast<std::size_t>(n_max) + 1, 0.0);
    g[1] = alpha;
    for (int n = 1; n < n_max; ++n) g[n + 1] = g[n] * (n - alpha) / (n + 1);
    return GammaSeq{alpha, n_max, std::move(g)};
}

SFromR s_from_r(const std::vector<double>& r, const LambdaMeasure& measure, double c,
                const RateTable& rates, const std::optional<TailEnvelope>& envelope) {
    if (r.size() < 2) throw ArgumentError("s_from_r: need coefficients r[1..N]");
    if (!(c > 0.0)) throw ArgumentError("s_from_r: c must be positive");
    const int n = static_cast<int>(r.size()) - 1;
    if (rates.b_max() < n && n > 1) throw ArgumentError("s_from_r: rate table shorter than r");
    SFromR out;
    out.s.assign(r.size(), 0.0);
    for (int i = 1; i <= n; ++i) out.s[i] = (rates.lambda_b(i) + c) / c * r[i];
    for (int i = 2; i <= n; ++i) {
        if (r[i] == 0.0) continue;
        for (int j = 1; j < i; ++j) out.s[j] -= rates.transition(i, j) * r[i] / c;
    }
    if (envelope) {
        // exact minus truncated s for gamma_{alpha}: what the cut at N drops
        const auto phi = phi_table(measure, n);
        const auto exact = sibuya_s(measure, c, envelope->alpha, n, phi);
        const auto g = gamma_coeffs(envelope->alpha, n);
        const auto trunc = s_from_r(g.gamma, measure, c, rates).s;
        out.residual_bound.assign(r.size(), 0.0);
        for (int i = 1; i <= n; ++i)
            out.residual_bound[i] = envelope->scale * std::max(0.0, trunc[i] - exact[i]);
    }
    return out;
}

std::vector<double> sibuya_s(const LambdaMeasure& m, double c, double a, int n_max,
                             const std::vector<double>& phi) {
    if (!(a > 0.0 && a < 1.0)) throw ArgumentError("sibuya_s: exponent must lie in (0,1)");
    if (static_cast<int>(phi.size()) <= n_max) throw ArgumentError("sibuya_s: phi table too short");
    const double psi_a = psi(m, a);
    const double inv = mean_inv_x(m);
    const auto g = gamma_coeffs(a, n_max);
    std::vector<double> s(static_cast<std::size_t>(n_max) + 1, 0.0);
    s[1] = a - (psi_a - a * inv) / c;
    for (int n = 2; n <= n_max; ++n) {
        const double bracket = phi[n] - n * (phi[n - 1] - psi_a) / (n - 1 - a);
        s[n] = g.at(n) * (1.0 + bracket / c);
    }
    return s;
}

ExtDist build_mu0(const LambdaMeasure& measure, double c, double beta, double a, double eps, int n) {
    if (n < 2) throw ArgumentError("build_mu0: N must be at least 2");
    const double ac = alpha_c(measure, c);
    std::string bad;
    if (!(beta > ac && beta < std::min(2.0 * ac, 1.0)))
        bad += " beta outside (alpha_c, min(2 alpha_c, 1)) = (" + fmt17(ac) + ", " +
               fmt17(std::min(2.0 * ac, 1.0)) + ");";
    if (!(a > 0.0 && a < 0.25)) bad += " a outside (0, 1/4);";
    if (!(eps >= 0.0 && eps < ac / beta)) bad += " eps outside [0, alpha_c/beta);";
    if (!bad.empty()) throw ArgumentError("build_mu0:" + bad);

    const auto ga = gamma_coeffs(ac, n);
    const auto gb = gamma_coeffs(beta, n);
    std::vector<double> p(static_cast<std::size_t>(n), 0.0);
    p[0] = 1.0 - a + eps * a + a * ac - eps * a * beta;
    for (int i = 2; i <= n; ++i) {
        const double v = a * ga.at(i) - eps * a * gb.at(i);
        if (v < 0.0)
            throw IntegrityError("build_mu0: negative mass at n=" + std::to_string(i));
        p[i - 1] = v;
    }
    const double tail = a * ((1.0 - ga.partial_sum(n)) - eps * (1.0 - gb.partial_sum(n)));
    return ExtDist(std::move(p), 0.0, std::max(tail, 0.0), TailPolicy::Envelope);
}

Nu0 build_nu0(const LambdaMeasure& measure, double c, double beta, int k, const LYKernel& kernel,
              int n_check) {
    if (kernel.c() != c) throw ArgumentError("build_nu0: kernel was built for a different c");
    const double ac = alpha_c(measure, c);
    const double threshold = psi(measure, 0.5);
    if (!(c < threshold))
        throw DomainError("build_nu0: needs c < E[(1-(1-X)^{1/2})/X^2] = " + fmt17(threshold));
    check_beta_for_nu0(measure, ac, beta);
    const auto ctx = make_context(measure, c, ac, beta, kernel.size(), n_check);
    return build_nu0_with(ctx, k, kernel, n_check);
}

Dominance check_dominance(const ExtDist& mu, const LYKernel& kernel, Order expected) {
    const Envelope env = g_map_envelope(mu.with_policy(TailPolicy::Envelope), kernel);
    const auto own = mu.cdf();
    const auto hi = env.fold_n.cdf();
    const auto lo = env.fold_inf.cdf();
    Dominance d;
    d.band = env.band_cdf();
    d.margin.resize(own.size());
    for (std::size_t i = 0; i < own.size(); ++i)
        d.margin[i] = expected == Order::ImageAbove ? own[i] - hi[i] : lo[i] - own[i];
    d.min_margin = min_of(d.margin);
    for (std::size_t i = 0; i < own.size(); ++i)
        d.worst_excess = std::max(d.worst_excess, -(d.margin[i] + d.band[i]));
    d.passed = d.worst_excess <= 0.0;
    return d;
}

double tail_index(const ExtDist& dist, int n_lo) {
    const int n = dist.size();
    std::vector<double> upper(static_cast<std::size_t>(n) + 2, 0.0);  // P(W >= i)
    long double s = dist.tail() + dist.p_inf();
    upper[n + 1] = static_cast<double>(s);
    for (int i = n; i >= 1; --i) {
        s += dist.mass(i);
        upper[i] = static_cast<double>(s);
    }
    std::vector<double> xs, ys;
    for (long i = std::max(1, n_lo); i <= n / 2; i *= 2) {
        if (!(upper[i] > 0.0)) break;
        xs.push_back(std::log(static_cast<double>(i)));
        ys.push_back(std::log(upper[i]));
    }
    if (xs.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    return -sxy / sxx;
}

ConditionCheck condition_check(const LambdaMeasure& measure, std::optional<double> p, int j_max) {
    ConditionCheck cc;
    cc.p = p.value_or(condition_exponent(measure));
    const auto phi = phi_table(measure, 1 << j_max);
    for (int j = 0; j <= j_max; ++j) {
        const long n = 1L << j;
        cc.n.push_back(n);
        cc.scaled.push_back(std::pow(static_cast<double>(n), -cc.p) * phi[static_cast<std::size_t>(n)]);
    }
    const auto [lo, hi] = std::minmax_element(cc.scaled.begin(), cc.scaled.end());
    cc.ratio = *hi / *lo;
    cc.holds = cc.ratio < 10.0;
    return cc;
}

BracketReport bracket_fixed_point(const LambdaMeasure& measure, double c, const BracketParams& prm) {
    if (!measure.is_dust()) throw DomainError("bracket: measure is not dust");
    if (!(c > 0.0)) throw ArgumentError("bracket: c must be positive");
    const double threshold = psi(measure, 0.5);
    if (!(c < threshold))
        throw DomainError("bracket: needs c < E[(1-(1-X)^{1/2})/X^2] = " + fmt17(threshold));
    auto cond = condition_check(measure);
    if (!cond.holds)
        throw DomainError("bracket: n^{-p} phi_n does not look bounded (max/min " + fmt17(cond.ratio) +
                          ")");
    const double ac = alpha_c(measure, c);
    const double p = condition_exponent(measure);
    const double beta_hi = std::min({2.0 * ac, 0.5, ac + 1.0 - p, 1.0});
    const double beta = prm.beta.value_or(ac + 0.9 * (beta_hi - ac));
    check_beta_for_nu0(measure, ac, beta);

    const LYKernel kernel(measure, c, prm.n);
    const int n = kernel.size();
    std::vector<std::string> log;

    // sub-solution
    std::optional<ExtDist> mu0;
    Dominance mu0_dom;
    double a_used = 0.0, eps_used = 0.0;
    auto try_mu0 = [&](double a, double eps) {
        ExtDist cand = build_mu0(measure, c, beta, a, eps, n);
        Dominance d = check_dominance(cand, kernel, Order::ImageAbove);
        log.push_back("mu0 a=" + fmt17(a) + " eps=" + fmt17(eps) + " worst_excess=" +
                      fmt17(d.worst_excess) + (d.passed ? " accepted" : " rejected"));
        if (d.passed) {
            mu0 = std::move(cand);
            mu0_dom = std::move(d);
            a_used = a;
            eps_used = eps;
        }
    };
    if (prm.a && prm.eps) {
        try_mu0(*prm.a, *prm.eps);
    } else {
        for (int j = 3; j <= prm.j_max && !mu0; ++j)
            for (int i = 1; i <= prm.eps_steps && !mu0; ++i)
                try_mu0(std::ldexp(1.0, -j), ac / (std::ldexp(1.0, i) * beta));
    }

    // super-solution
    const auto ctx = make_context(measure, c, ac, beta, n, prm.n_check);
    std::optional<Nu0> nu0;
    Dominance nu0_dom;
    auto try_nu0 = [&](int k) {
        try {
            Nu0 cand = build_nu0_with(ctx, k, kernel, prm.n_check);
            Dominance d = check_dominance(cand.dist, kernel, Order::ImageBelow);
            log.push_back("nu0 k=" + std::to_string(k) + " M1=" + std::to_string(cand.m1) +
                          " worst_excess=" + fmt17(d.worst_excess) +
                          (d.passed ? " accepted" : " rejected"));
            if (d.passed) {
                nu0 = std::move(cand);
                nu0_dom = std::move(d);
            }
        } catch (const SearchError& e) {
            log.push_back(std::string("nu0 ") + e.what());
        }
    };
    if (prm.k) {
        try_nu0(*prm.k);
    } else {
        for (int k = 2; k <= n && !nu0; k *= 2) try_nu0(k);
    }

    if (!mu0 || !nu0) {
        std::string msg = "bracket: no admissible ";
        msg += !mu0 ? "(a, eps)" : "";
        msg += !mu0 && !nu0 ? " and " : "";
        msg += !nu0 ? "k" : "";
        msg += " at N=" + std::to_string(n) + "; tried:";
        for (const auto& l : log) msg += "\n  " + l;
        throw SearchError(msg);
    }

    FixOptions opts{prm.tol, prm.max_iter, TailPolicy::Envelope};
    FixOptions star_opts{std::min(prm.tol, 1e-12), prm.max_iter, TailPolicy::Envelope};
    FixResult star = fix_from_delta1(kernel, star_opts);
    FixResult lower = iterate_map(*mu0, kernel, opts, Direction::Increasing);
    FixResult upper = iterate_map(nu0->dist, kernel, opts, Direction::Decreasing);

    const auto star_cdf = star.dist.cdf();
    auto dominance_over_star = [&](const FixResult& r) {
        const auto cdf = r.dist.cdf();
        const double slack = prm.tol * 100.0 + r.dist.band();
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < cdf.size(); ++i) m = std::min(m, star_cdf[i] - cdf[i] + slack);
        return m;
    };

    BracketReport rep{c,
                      ac,
                      beta,
                      threshold,
                      mean_inv_x(measure),
                      std::move(cond),
                      a_used,
                      eps_used,
                      *nu0,
                      *mu0,
                      mu0_dom,
                      nu0_dom,
                      log,
                      LimitSummary{lower, tail_index(lower.dist), dominance_over_star(lower)},
                      LimitSummary{upper, tail_index(upper.dist), dominance_over_star(upper)},
                      star,
                      tv_distance(lower.dist, upper.dist),
                      0.0,
                      tail_index(*mu0),
                      tail_index(nu0->dist),
                      false};

    const auto lo_cdf = lower.dist.cdf();
    const auto up_cdf = upper.dist.cdf();
    const double slack = prm.tol * 100.0 + std::max(lower.dist.band(), upper.dist.band());
    double om = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < lo_cdf.size(); ++i) om = std::min(om, lo_cdf[i] - up_cdf[i] + slack);
    rep.order_margin = om;
    if (om < 0.0)
        throw IntegrityError("bracket: lower limit is not below the upper limit (margin " + fmt17(om) +
                             ")");

    auto limit_ok = [&](const LimitSummary& s) {
        return s.fix.fixed_point_tv <= 1e-8 && s.dominance_over_star >= 0.0 &&
               s.fix.dist.p_inf() <= s.fix.dist.band();
    };
    rep.passed = mu0_dom.passed && nu0_dom.passed && limit_ok(rep.lower) && limit_ok(rep.upper);
    return rep;
}

nlohmann::json to_json(const GammaSeq& g) {
    const int n = g.n_max;
    return {{"alpha", g.alpha},
            {"n_max", n},
            {"gamma_head", json_array(std::vector<double>(g.gamma.begin() + 1,
                                                          g.gamma.begin() + 1 + std::min(n, 20)))},
            {"gamma_at_n_max", json_number(g.at(n))},
            {"partial_sum", json_number(g.partial_sum(n))},
            {"asymptotic_constant", json_number(g.alpha / std::tgamma(1.0 - g.alpha))},
            {"asymptotic_ratio", json_number(g.asymptotic_ratio(n))}};
}

namespace {

nlohmann::json summary(const LimitSummary& s, const ExtDist& star) {
    const auto& d = s.fix.dist;
    return {{"mean", json_number(d.mean())},
            {"p_inf", json_number(d.p_inf())},
            {"band", json_number(d.band())},
            {"iterations", s.fix.iterations},
            {"fixed_point_tv", json_number(s.fix.fixed_point_tv)},
            {"monotone_violation", json_number(s.fix.monotone_violation)},
            {"tail_index", json_number(s.tail_index)},
            {"dominance_over_star", json_number(s.dominance_over_star)},
            {"tv_to_star", json_number(tv_distance(d, star))},
            {"p", json_array(d.masses())}};
}

nlohmann::json dominance_json(const Dominance& d) {
    return {{"passed", d.passed},
            {"min_margin", json_number(d.min_margin)},
            {"worst_excess", json_number(d.worst_excess)},
            {"margins", json_array(d.margin)},
            {"band", json_array(d.band)}};
}

}  // namespace

nlohmann::json to_json(const BracketReport& r) {
    return {{"params",
             {{"a", r.a}, {"eps", r.eps}, {"k", r.nu0.k}, {"beta", r.beta}, {"alpha_c", r.alpha_c}}},
            {"c", r.c},
            {"N", r.mu0.size()},
            {"hypotheses",
             {{"mean_inv_x", json_number(r.mean_inv_x)},
              {"c_threshold", json_number(r.threshold)},
              {"condition_p", r.condition.p},
              {"condition_n", r.condition.n},
              {"condition_scaled_phi", json_array(r.condition.scaled)},
              {"condition_ratio", json_number(r.condition.ratio)}}},
            {"nu0",
             {{"M1", r.nu0.m1},
              {"mass_at_M1", json_number(r.nu0.mass_at_m1)},
              {"normalizer", json_number(r.nu0.normalizer)},
              {"min_mass", json_number(r.nu0.min_mass)},
              {"tail", json_number(r.nu0.dist.tail())},
              {"coefficient_margin", json_number(r.nu0.coefficient_margin)},
              {"coefficient_checked_to", r.nu0.n_check},
              {"kernel_route_gap", json_number(r.nu0.kernel_route_gap)}}},
            {"mu0", {{"tail", json_number(r.mu0.tail())}}},
            {"dominance_margins", {{"mu0", dominance_json(r.mu0_dominance)},
                                   {"nu0", dominance_json(r.nu0_dominance)}}},
            {"search_log", r.search_log},
            {"lower_summary", summary(r.lower, r.star.dist)},
            {"upper_summary", summary(r.upper, r.star.dist)},
            {"star_mean", json_number(r.star.dist.mean())},
            {"lower_upper_tv", json_number(r.lower_upper_tv)},
            {"order_margin", json_number(r.order_margin)},
            {"tail_index_estimates",
             {{"mu0", json_number(r.tail_index_mu0)},
              {"nu0", json_number(r.tail_index_nu0)},
              {"lower", json_number(r.lower.tail_index)},
              {"upper", json_number(r.upper.tail_index)},
              {"alpha_c", r.alpha_c}}},
            {"note", "limits of the truncated iteration are reported side by side; their equality is "
                     "not asserted"},
            {"passed", r.passed}};
}

}  // namespace ncl
