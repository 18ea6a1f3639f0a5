#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include "ncl/lambda_measure.hpp"

namespace ncl {

// Law of L_inf(Y) on {1, inf}.
struct InfRow {
    double p_one;
    double p_inf;
};

// K[i][k] = P(L_i(Y) = k), 1 <= k <= i <= N, where Y ~ Exp(c) is independent
// of the coalescent started from i blocks.
class LYKernel {
public:
    LYKernel(const LambdaMeasure& measure, double c, int n, bool with_inf_row = true);

    double c() const { return c_; }
    int size() const { return n_; }
    const LambdaMeasure& measure() const { return measure_; }
    const RateTable& rates() const { return *rates_; }

    double at(int i, int k) const { return k <= i ? rows_[offset(i) + (k - 1)] : 0.0; }
    // Row i as a contiguous span of i entries, k = 1..i.
    const double* row(int i) const { return rows_.data() + offset(i); }

    bool has_inf_row() const { return inf_row_.has_value(); }
    const InfRow& inf_row() const;

    double row_mean(int i) const;
    // Largest |1 - raw row sum| removed when rows were renormalized after underflow.
    double renormalization_delta() const { return renorm_delta_; }

    void write_csv(std::ostream& out) const;

private:
    static std::size_t offset(int i) {
        return static_cast<std::size_t>(i - 1) * static_cast<std::size_t>(i) / 2;
    }

    LambdaMeasure measure_;
    double c_;
    int n_;
    std::shared_ptr<const RateTable> rates_;
    std::vector<double> rows_;
    std::optional<InfRow> inf_row_;
    double renorm_delta_ = 0.0;
};

LYKernel build_kernel(const LambdaMeasure& measure, double c, int n, bool with_inf_row = true);

// b_i = E[L_{i+1}(Y)] - E[L_i(Y)] for i = 1..i_max (element 0 is b_1).
std::vector<double> b_sequence(const LYKernel& kernel, int i_max);

}  // namespace ncl
