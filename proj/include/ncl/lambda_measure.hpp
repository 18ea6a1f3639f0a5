#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace ncl {

struct Atom {
    double x;
    double w;
    bool operator==(const Atom&) const = default;
};

// The measure driving the coalescent. Either Beta(2-alpha, alpha) or a finite
// mixture of atoms on (0,1]. Always a probability measure.
class LambdaMeasure {
public:
    enum class Kind { Beta, Atomic };

    static LambdaMeasure beta(double alpha);
    static LambdaMeasure atomic(std::vector<Atom> atoms);

    Kind kind() const { return kind_; }
    double alpha() const { return alpha_; }
    const std::vector<Atom>& atoms() const { return atoms_; }

    bool is_dust() const;

    // "beta:0.5" or a JSON object string.
    static LambdaMeasure parse(const std::string& text);
    static LambdaMeasure from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    bool operator==(const LambdaMeasure& other) const = default;

private:
    LambdaMeasure() = default;

    Kind kind_ = Kind::Beta;
    double alpha_ = 0.0;
    std::vector<Atom> atoms_;
};

// Triangular table of lambda_{b,k}; totals lambda_b. Index with b,k directly.
class RateTable {
public:
    RateTable(const LambdaMeasure& measure, int b_max);

    int b_max() const { return b_max_; }
    double lambda_bk(int b, int k) const { return bk_[offset(b) + (k - 2)]; }
    double lambda_b(int b) const { return totals_[b]; }
    // Rate at which b blocks become n blocks: C(b, b-n+1) * lambda_{b, b-n+1}.
    double transition(int b, int n) const { return moves_[offset(b) + (n - 1)]; }

    // max |lambda_{b,k} - lambda_{b+1,k} - lambda_{b+1,k+1}| over the table.
    double consistency_violation() const;

private:
    static std::size_t offset(int b) {
        return static_cast<std::size_t>(b - 2) * static_cast<std::size_t>(b - 1) / 2;
    }

    int b_max_;
    std::vector<double> bk_;     // (b,k), 2<=k<=b
    std::vector<double> moves_;  // (b,n), 1<=n<=b-1
    std::vector<double> totals_;
};

double lambda_bk(const LambdaMeasure& measure, int b, int k);
double log_lambda_bk(const LambdaMeasure& measure, int b, int k);
RateTable rate_table(const LambdaMeasure& measure, int b_max);

double mean_inv_x(const LambdaMeasure& measure);
double atom_at_one(const LambdaMeasure& measure);

// E[num(X) / X^2]. num receives (x, 1-x) so callers can stay accurate near 1.
// Requires dust; num(x) must vanish at least linearly at 0.
using RatioIntegrand = std::function<double(double x, double one_minus_x)>;
double expect_over_x2(const LambdaMeasure& measure, const RatioIntegrand& num);

// E[(1-(1-X)^a)/X^2] for a in (0,1].
double psi(const LambdaMeasure& measure, double a);
// Root of psi(a) = c on (0,1).
double alpha_c(const LambdaMeasure& measure, double c);
double phi_n(const LambdaMeasure& measure, long n);
// phi_1..phi_{n_max} by summing E[(1-X)^m / X] = E[1/X] - sum_{j<m} lambda_{j+2,2}.
std::vector<double> phi_table(const LambdaMeasure& measure, int n_max);

}  // namespace ncl
