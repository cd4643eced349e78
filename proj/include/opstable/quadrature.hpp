#pragma once

#include <cmath>
#include <functional>
#include <vector>

namespace opstable {

// Integrand evaluated as f(base + offset). Keeping the two parts separate lets
// callers form differences like t - s without cancellation near a knot.
using LineFn = std::function<double(double base, double offset)>;

struct QuadResult {
    double value = 0.0;
    double error = 0.0;
    bool divergent = false;
    long evaluations = 0;
};

// Globally adaptive Gauss-Kronrod 10/21 on base + [o1, o2].
QuadResult adaptive_gk(const LineFn& f, double base, double o1, double o2, double rel_tol,
                       double abs_tol, int max_intervals = 400);

struct LineOptions {
    double lo = -INFINITY;
    double hi = INFINITY;
    std::vector<double> singular;  // integrable singularities or null-set points
    std::vector<double> breaks;    // kinks or jumps
    double rel_tol = 1e-10;
    double abs_tol = 1e-300;
    // Decay |s|^{-p} of the integrand; makes the tail remainder more conservative.
    double tail_exponent_hint = NAN;
    // If false an unbounded domain is accepted without a hint.
    bool require_tail_certificate = true;
    double scale = 1.0;  // length of the first tail piece
    // The integrand resolves base + offset exactly (e.g. it forms t - s from
    // the parts), so dyadic pieces may shrink far below the spacing of doubles
    // near a nonzero knot.
    bool exact_offsets = false;
    int max_levels = 900;
};

// Integral over [lo, hi] split at the knots. Near singular points and toward
// +-infinity the domain is cut into dyadic pieces whose contributions are
// summed until the geometric remainder estimate meets the tolerance; a
// ratio that stays >= 1 is reported as divergence.
QuadResult integrate_line(const LineFn& f, const LineOptions& opt);

// Wynn's epsilon algorithm on a stream of partial sums.
class WynnEpsilon {
public:
    void push(double partial_sum);
    double estimate() const { return best_; }
    double error() const { return err_; }
    int count() const { return static_cast<int>(n_); }

private:
    std::vector<double> e_;
    std::size_t n_ = 0;
    double best_ = 0.0;
    double err_ = INFINITY;
    double prev_best_ = NAN;
};

}  // namespace opstable
