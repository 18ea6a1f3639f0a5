#include "ncl/lambda_measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <nlohmann/json.hpp>

#include "ncl/errors.hpp"

namespace ncl {

namespace {

double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

void check_bk(int b, int k) {
    if (b < 2 || k < 2 || k > b)
        throw ArgumentError("lambda_bk: need 2 <= k <= b, got b=" + std::to_string(b) +
                            " k=" + std::to_string(k));
}

void require_dust(const LambdaMeasure& m, const char* who) {
    if (!m.is_dust())
        throw DomainError(std::string(who) + ": measure is not dust (E[1/X] is infinite)");
}

constexpr double kQuadTol = 1e-10;

template <class F>
double quad01(F f) {
    thread_local boost::math::quadrature::tanh_sinh<double> integrator;
    return integrator.integrate(f, 0.0, 1.0, kQuadTol);
}

}  // namespace

LambdaMeasure LambdaMeasure::beta(double alpha) {
    if (!(alpha > 0.0 && alpha < 2.0))
        throw ArgumentError("beta measure: alpha must lie in (0,2)");
    LambdaMeasure m;
    m.kind_ = Kind::Beta;
    m.alpha_ = alpha;
    return m;
}

LambdaMeasure LambdaMeasure::atomic(std::vector<Atom> atoms) {
    if (atoms.empty()) throw ArgumentError("atomic measure: no atoms");
    double total = 0.0;
    for (const auto& a : atoms) {
        if (a.x == 0.0)
            throw ArgumentError("atomic measure: atom at 0 (Kingman component) is not supported");
        if (!(a.x > 0.0 && a.x <= 1.0)) throw ArgumentError("atomic measure: atom outside (0,1]");
        if (!(a.w > 0.0)) throw ArgumentError("atomic measure: weights must be positive");
        total += a.w;
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw ArgumentError("atomic measure: weights sum to " + std::to_string(total) +
                            ", a probability measure is required");
    LambdaMeasure m;
    m.kind_ = Kind::Atomic;
    m.atoms_ = std::move(atoms);
    return m;
}

bool LambdaMeasure::is_dust() const { return kind_ == Kind::Atomic || alpha_ < 1.0; }

LambdaMeasure LambdaMeasure::from_json(const nlohmann::json& j) {
    try {
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "beta") return beta(j.at("alpha").get<double>());
        if (kind == "atomic") {
            std::vector<Atom> atoms;
            for (const auto& a : j.at("atoms")) {
                if (!a.is_array() || a.size() != 2)
                    throw ArgumentError("atomic measure: each atom is [x, w]");
                atoms.push_back({a[0].get<double>(), a[1].get<double>()});
            }
            return atomic(std::move(atoms));
        }
        throw ArgumentError("unknown measure kind '" + kind + "'");
    } catch (const nlohmann::json::exception& e) {
        throw ArgumentError(std::string("malformed measure JSON: ") + e.what());
    }
}

LambdaMeasure LambdaMeasure::parse(const std::string& text) {
    if (text.rfind("beta:", 0) == 0) {
        std::size_t used = 0;
        double a = 0.0;
        try {
            a = std::stod(text.substr(5), &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != text.size() - 5)
            throw ArgumentError("bad measure shorthand '" + text + "'");
        return beta(a);
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ArgumentError(std::string("measure is neither beta:<alpha> nor JSON: ") + e.what());
    }
    return from_json(j);
}

nlohmann::json LambdaMeasure::to_json() const {
    if (kind_ == Kind::Beta) return {{"kind", "beta"}, {"alpha", alpha_}};
    auto arr = nlohmann::json::array();
    for (const auto& a : atoms_) arr.push_back({a.x, a.w});
    return {{"kind", "atomic"}, {"atoms", arr}};
}

double log_lambda_bk(const LambdaMeasure& m, int b, int k) {
    check_bk(b, k);
    if (m.kind() == LambdaMeasure::Kind::Beta) {
        const double a = m.alpha();
        return log_beta(k - a, b - k + a) - log_beta(2.0 - a, a);
    }
    return std::log(lambda_bk(m, b, k));
}

double lambda_bk(const LambdaMeasure& m, int b, int k) {
    check_bk(b, k);
    if (m.kind() == LambdaMeasure::Kind::Beta) return std::exp(log_lambda_bk(m, b, k));
    double s = 0.0;
    for (const auto& a : m.atoms()) s += a.w * std::pow(a.x, k - 2) * std::pow(1.0 - a.x, b - k);
    return s;
}

RateTable::RateTable(const LambdaMeasure& m, int b_max) : b_max_(b_max) {
    if (b_max < 2) throw ArgumentError("rate table: b_max must be at least 2");
    const std::size_t cells = offset(b_max + 1);
    bk_.resize(cells);
    moves_.resize(cells);
    totals_.assign(static_cast<std::size_t>(b_max) + 1, 0.0);
    const bool beta = m.kind() == LambdaMeasure::Kind::Beta;
    // log-gamma values reused across the whole table
    std::vector<double> lg_fact(static_cast<std::size_t>(b_max) + 1);
    std::vector<double> lg_lo(lg_fact.size()), lg_hi(lg_fact.size());
    const double a = beta ? m.alpha() : 0.0;
    for (int n = 0; n <= b_max; ++n) {
        lg_fact[n] = std::lgamma(n + 1.0);
        if (beta) {
            lg_lo[n] = n >= 2 ? std::lgamma(n - a) : 0.0;
            lg_hi[n] = std::lgamma(n + a);
        }
    }
    const double lb0 = beta ? log_beta(2.0 - a, a) : 0.0;
    for (int b = 2; b <= b_max; ++b) {
        const std::size_t o = offset(b);
        double total = 0.0;
        for (int k = 2; k <= b; ++k) {
            const double lc = lg_fact[b] - lg_fact[k] - lg_fact[b - k];
            double lam = 0.0;
            double move = 0.0;
            if (beta) {
                const double l = lg_lo[k] + lg_hi[b - k] - lg_fact[b - 1] - lb0;
                lam = std::exp(l);
                move = std::exp(l + lc);
            } else {
                lam = ncl::lambda_bk(m, b, k);
                move = lam > 0.0 ? std::exp(std::log(lam) + lc) : 0.0;
            }
            bk_[o + (k - 2)] = lam;
            moves_[o + (b - k)] = move;  // b -> b-k+1 blocks
            total += move;
        }
        totals_[b] = total;
    }
}

double RateTable::consistency_violation() const {
    double worst = 0.0;
    for (int b = 2; b < b_max_; ++b)
        for (int k = 2; k <= b; ++k)
            worst = std::max(worst, std::abs(lambda_bk(b, k) - lambda_bk(b + 1, k) -
                                             lambda_bk(b + 1, k + 1)));
    return worst;
}

RateTable rate_table(const LambdaMeasure& measure, int b_max) { return RateTable(measure, b_max); }

double mean_inv_x(const LambdaMeasure& m) {
    if (m.kind() == LambdaMeasure::Kind::Beta)
        return m.alpha() < 1.0 ? 1.0 / (1.0 - m.alpha()) : std::numeric_limits<double>::infinity();
    double s = 0.0;
    for (const auto& a : m.atoms()) s += a.w / a.x;
    return s;
}

double atom_at_one(const LambdaMeasure& m) {
    double s = 0.0;
    for (const auto& a : m.atoms())
        if (a.x == 1.0) s += a.w;
    return s;
}

double expect_over_x2(const LambdaMeasure& m, const RatioIntegrand& num) {
    require_dust(m, "expect_over_x2");
    if (m.kind() == LambdaMeasure::Kind::Atomic) {
        double s = 0.0;
        for (const auto& a : m.atoms()) s += a.w * num(a.x, 1.0 - a.x) / (a.x * a.x);
        return s;
    }
    // Beta(2-a,a) weight divided by x^2 is x^{-1-a}(1-x)^{a-1}/B. The substitutions
    // below turn that weight into a constant on each half.
    const double a = m.alpha();
    const double norm = std::exp(log_beta(2.0 - a, a));
    const double p = 1.0 / (1.0 - a);
    const double q = 1.0 / a;
    const double left_scale = std::pow(2.0, a) * 0.5 * p / norm;
    const double right_scale = std::pow(0.5, a) * q / norm;

    auto left = [&](double t) {
        const double x = 0.5 * std::pow(t, p);
        if (x <= 0.0) return 0.0;
        const double y = 1.0 - x;
        return num(x, y) / x * std::pow(y, a - 1.0) * left_scale;
    };
    auto right = [&](double t) {
        const double y = 0.5 * std::pow(t, q);
        const double x = 1.0 - y;
        return num(x, y) * std::pow(x, -1.0 - a) * right_scale;
    };
    return quad01(left) + quad01(right);
}

double psi(const LambdaMeasure& m, double a) {
    require_dust(m, "psi");
    if (!(a > 0.0 && a <= 1.0)) throw ArgumentError("psi: exponent must lie in (0,1]");
    return expect_over_x2(m, [a](double x, double y) {
        // 1-(1-x)^a, computed from whichever of x, 1-x is accurate
        return x < 0.5 ? -std::expm1(a * std::log1p(-x)) : 1.0 - std::pow(y, a);
    });
}

double alpha_c(const LambdaMeasure& m, double c) {
    require_dust(m, "alpha_c");
    if (!(c > 0.0)) throw ArgumentError("alpha_c: c must be positive");
    const double top = mean_inv_x(m);
    if (c >= top)
        throw DomainError("alpha_c: no root in (0,1) since c >= E[1/X] = " + std::to_string(top));
    double lo = 0.0, hi = 1.0;
    while (hi - lo > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        (psi(m, mid) < c ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double phi_n(const LambdaMeasure& m, long n) {
    require_dust(m, "phi_n");
    if (n < 1) throw ArgumentError("phi_n: n must be at least 1");
    const double dn = static_cast<double>(n);
    return expect_over_x2(m, [dn](double x, double y) {
        return x < 0.5 ? -std::expm1(dn * std::log1p(-x)) : 1.0 - std::pow(y, dn);
    });
}

std::vector<double> phi_table(const LambdaMeasure& m, int n_max) {
    require_dust(m, "phi_table");
    if (n_max < 1) throw ArgumentError("phi_table: n_max must be at least 1");
    // phi_n = sum_{j<n} E[(1-X)^j/X], and E[(1-X)^j/X] = E[1/X] - sum_{i<j} E[(1-X)^i].
    const long double inv = mean_inv_x(m);
    std::vector<double> out(static_cast<std::size_t>(n_max) + 1, 0.0);
    long double moments = 0.0L;  // sum_{i<j} E[(1-X)^i]
    long double phi = 0.0L;
    for (int j = 0; j < n_max; ++j) {
        phi += inv - moments;
        out[j + 1] = static_cast<double>(phi);
        moments += lambda_bk(m, j + 2, 2);
    }
    return out;
}

}  // namespace ncl
