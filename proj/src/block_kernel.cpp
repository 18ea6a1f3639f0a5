#include "ncl/block_kernel.hpp"

#include <cmath>
#include <ostream>

#include <nlohmann/json.hpp>

#include "ncl/errors.hpp"
#include "ncl/format.hpp"

namespace ncl {

LYKernel::LYKernel(const LambdaMeasure& measure, double c, int n, bool with_inf_row)
    : measure_(measure), c_(c), n_(n) {
    if (n < 1) throw ArgumentError("build_kernel: N must be at least 1");
    if (!(c > 0.0)) throw ArgumentError("build_kernel: c must be positive");
    if (with_inf_row) {
        if (!measure.is_dust())
            throw DomainError("build_kernel: the infinite row needs a dust measure");
        const double p1 = atom_at_one(measure);
        inf_row_ = InfRow{p1 / (p1 + c), c / (p1 + c)};
    }
    rates_ = std::make_shared<const RateTable>(measure, std::max(n, 2));
    const RateTable& r = *rates_;

    rows_.assign(offset(n + 1), 0.0);
    rows_[0] = 1.0;
    for (int i = 2; i <= n; ++i) {
        double* out = rows_.data() + offset(i);
        const double denom = r.lambda_b(i) + c;
        // P(L_i(Y)=k) = sum_{m=k}^{i-1} q(i->m) P(L_m(Y)=k) / (lambda_i + c)
        for (int m = 1; m < i; ++m) {
            const double w = r.transition(i, m) / denom;
            if (w == 0.0) continue;
            const double* src = rows_.data() + offset(m);
            for (int k = 0; k < m; ++k) out[k] += w * src[k];
        }
        out[i - 1] = c / denom;
        double sum = 0.0;
        bool flushed = false;
        for (int k = 0; k < i; ++k) {
            if (out[k] < 1e-300 && out[k] != 0.0) {
                out[k] = 0.0;
                flushed = true;
            }
            sum += out[k];
        }
        if (flushed) {
            renorm_delta_ = std::max(renorm_delta_, std::abs(1.0 - sum));
            for (int k = 0; k < i; ++k) out[k] /= sum;
        }
    }
}

const InfRow& LYKernel::inf_row() const {
    if (!inf_row_) throw DomainError("kernel was built without the infinite row");
    return *inf_row_;
}

double LYKernel::row_mean(int i) const {
    const double* r = row(i);
    double s = 0.0;
    for (int k = 0; k < i; ++k) s += (k + 1) * r[k];
    return s;
}

void LYKernel::write_csv(std::ostream& out) const {
    out << "# c=" << fmt17(c_) << " measure=" << measure_.to_json().dump() << "\n";
    out << "i";
    for (int k = 1; k <= n_; ++k) out << ",k" << k;
    out << "\n";
    for (int i = 1; i <= n_; ++i) {
        out << i;
        for (int k = 1; k <= n_; ++k) out << ',' << fmt17(at(i, k));
        out << "\n";
    }
}

LYKernel build_kernel(const LambdaMeasure& measure, double c, int n, bool with_inf_row) {
    return LYKernel(measure, c, n, with_inf_row);
}

std::vector<double> b_sequence(const LYKernel& kernel, int i_max) {
    if (i_max < 1 || i_max >= kernel.size())
        throw ArgumentError("b_sequence: need 1 <= i_max < N");
    std::vector<double> b(static_cast<std::size_t>(i_max));
    double prev = kernel.row_mean(1);
    for (int i = 1; i <= i_max; ++i) {
        const double next = kernel.row_mean(i + 1);
        b[i - 1] = next - prev;
        prev = next;
    }
    return b;
}

}  // namespace ncl
