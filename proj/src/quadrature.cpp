#include "opstable/quadrature.hpp"
#include "opstable/errors.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>

namespace opstable {

namespace {

using GK = boost::math::quadrature::gauss_kronrod<double, 21>;
using G = boost::math::quadrature::gauss<double, 10>;

struct Panel {
    double o1, o2, value, error;
    bool operator<(const Panel& p) const { return error < p.error; }
};

Panel gk21(const LineFn& f, double base, double o1, double o2) {
    const auto& xk = GK::abscissa();
    const auto& wk = GK::weights();
    const auto& wg = G::weights();
    const double c = 0.5 * (o1 + o2), h = 0.5 * (o2 - o1);
    double f0 = f(base, c);
    double k = f0 * wk[0], g = 0.0;
    // Gauss nodes sit at odd Kronrod indices for the 10-point rule.
    for (std::size_t i = 1; i < xk.size(); ++i) {
        double fp = f(base, c + h * xk[i]);
        double fm = f(base, c - h * xk[i]);
        k += (fp + fm) * wk[i];
        if (i % 2 == 1) g += (fp + fm) * wg[i / 2];
    }
    Panel p{o1, o2, k * h, std::abs((k - g) * h)};
    p.error = std::max(p.error, 1e-15 * std::abs(p.value));
    return p;
}

}  // namespace

QuadResult adaptive_gk(const LineFn& f, double base, double o1, double o2, double rel_tol,
                       double abs_tol, int max_intervals) {
    QuadResult r;
    if (o1 == o2) return r;
    std::priority_queue<Panel> heap;
    Panel p = gk21(f, base, o1, o2);
    r.evaluations += 21;
    heap.push(p);
    double value = p.value, error = p.error;
    int n = 1;
    while (error > std::max(abs_tol, rel_tol * std::abs(value)) && n < max_intervals) {
        Panel top = heap.top();
        heap.pop();
        double mid = 0.5 * (top.o1 + top.o2);
        if (mid == top.o1 || mid == top.o2) {
            heap.push(top);
            break;
        }
        Panel a = gk21(f, base, top.o1, mid);
        Panel b = gk21(f, base, mid, top.o2);
        r.evaluations += 42;
        value += a.value + b.value - top.value;
        error += a.error + b.error - top.error;
        heap.push(a);
        heap.push(b);
        ++n;
    }
    // Re-sum to avoid drift from the running updates.
    value = 0.0;
    error = 0.0;
    while (!heap.empty()) {
        value += heap.top().value;
        error += heap.top().error;
        heap.pop();
    }
    r.value = value;
    r.error = error;
    return r;
}

namespace {

struct LevelSum {
    double value = 0.0;
    double error = 0.0;
    bool divergent = false;
    long evals = 0;
};

// Sum of the pieces base + [lo_j, hi_j], j = 0, 1, ..., generated by `piece`.
// The pieces are dyadic so a power-law integrand gives geometric contributions.
template <class PieceFn>
LevelSum sum_levels(const LineFn& f, double base, PieceFn piece, const LineOptions& opt,
                    double rho_hint) {
    LevelSum out;
    std::deque<double> ratios;
    double prev = NAN;
    int zero_run = 0;
    const int jmin = 6;
    for (int j = 0; j < opt.max_levels; ++j) {
        double o1, o2;
        if (!piece(j, o1, o2)) {
            // Pieces no longer resolvable in double precision. Close with the
            // geometric extrapolation of the measured ratio.
            double rho = ratios.empty() ? 1.0 : *std::max_element(ratios.begin(), ratios.end());
            if (rho < 1.0 && std::isfinite(prev)) {
                double rem = std::abs(prev) * rho / (1.0 - rho);
                out.value += prev * rho / (1.0 - rho);
                out.error += rem;
                return out;
            }
            if (std::isfinite(prev) && prev == 0.0) return out;
            throw NumericalError("cannot certify tail: pieces exhausted without geometric decay");
        }
        QuadResult q = adaptive_gk(f, base, std::min(o1, o2), std::max(o1, o2),
                                   opt.rel_tol * 0.1, opt.abs_tol, 200);
        double a = q.value;
        out.evals += q.evaluations;
        out.value += a;
        out.error += q.error;
        if (std::isfinite(prev) && prev != 0.0) {
            ratios.push_back(std::abs(a) / std::abs(prev));
            if (ratios.size() > 6) ratios.pop_front();
        } else if (std::isfinite(prev) && prev == 0.0 && a != 0.0) {
            ratios.clear();
        }
        zero_run = (a == 0.0) ? zero_run + 1 : 0;
        prev = a;
        if (j < jmin) continue;
        if (zero_run >= 2) return out;
        if (ratios.size() < 3) continue;
        double rho = *std::max_element(ratios.end() - 3, ratios.end());
        double rho_used = std::max(rho, rho_hint);
        if (rho_used < 1.0) {
            double rem = std::abs(a) * rho_used / (1.0 - rho_used);
            if (rem <= std::max(opt.rel_tol * std::abs(out.value), opt.abs_tol)) {
                out.error += rem;
                return out;
            }
            // Slow but settled power-law tail: sum the geometric remainder
            // with the measured ratio once its spread is small enough.
            if (ratios.size() == 6) {
                double rmax = *std::max_element(ratios.begin(), ratios.end());
                double rmin = *std::min_element(ratios.begin(), ratios.end());
                double rm = ratios.back();
                if (rmax < 1.0) {
                    double geo = rm / (1.0 - rm);
                    double err = std::abs(a) * ((rho_used / (1.0 - rho_used) - geo) +
                                                (rmax - rmin) / ((1.0 - rmax) * (1.0 - rmax)));
                    if (err <= std::max(opt.rel_tol * std::abs(out.value + a * geo), opt.abs_tol)) {
                        out.value += a * geo;
                        out.error += err;
                        return out;
                    }
                }
            }
        }
        if (j >= 12 && ratios.size() == 6 &&
            *std::min_element(ratios.begin(), ratios.end()) >= 1.0) {
            out.divergent = true;
            out.value = INFINITY;
            return out;
        }
    }
    throw NumericalError("cannot certify tail: level budget exhausted");
}

}  // namespace

QuadResult integrate_line(const LineFn& f, const LineOptions& opt) {
    if (!(opt.lo < opt.hi)) {
        QuadResult r;
        return r;
    }
    const bool left_inf = std::isinf(opt.lo), right_inf = std::isinf(opt.hi);
    if ((left_inf || right_inf) && opt.require_tail_certificate && std::isnan(opt.tail_exponent_hint))
        throw NumericalError("cannot certify tail: unbounded domain without tail hint or majorant");

    std::vector<double> knots;
    auto inside = [&](double x) { return x >= opt.lo && x <= opt.hi && std::isfinite(x); };
    for (double x : opt.singular)
        if (inside(x)) knots.push_back(x);
    for (double x : opt.breaks)
        if (inside(x)) knots.push_back(x);
    if (!left_inf) knots.push_back(opt.lo);
    if (!right_inf) knots.push_back(opt.hi);
    if (knots.empty()) knots.push_back(std::clamp(0.0, opt.lo, opt.hi));
    std::sort(knots.begin(), knots.end());
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

    auto is_singular = [&](double x) {
        return std::find(opt.singular.begin(), opt.singular.end(), x) != opt.singular.end();
    };

    QuadResult res;
    auto add = [&](const LevelSum& s) {
        res.value += s.value;
        res.error += s.error;
        res.evaluations += s.evals;
        if (s.divergent) res.divergent = true;
    };
    auto add_q = [&](const QuadResult& q) {
        res.value += q.value;
        res.error += q.error;
        res.evaluations += q.evaluations;
    };

    // Dyadic pieces toward the singular point p over a half-segment of signed length L.
    auto toward = [&](double p, double L) {
        const bool exact = opt.exact_offsets;
        auto piece = [p, L, exact](int j, double& o1, double& o2) {
            o2 = std::ldexp(L, -j);
            o1 = std::ldexp(L, -j - 1);
            // Offsets below ~1e-16 |p| would be absorbed by any p + offset
            // formed by the integrand; stop and extrapolate.
            if (std::abs(o1) < 1e-280 ||
                (!exact && p != 0.0 && std::abs(o1) < 1e-15 * std::abs(p)))
                return false;
            return true;
        };
        add(sum_levels(f, p, piece, opt, 0.0));
    };

    auto gk_segment = [&](double x0, double x1) {
        add_q(adaptive_gk(f, x0, 0.0, x1 - x0, opt.rel_tol * 0.1, opt.abs_tol));
    };

    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        double x0 = knots[i], x1 = knots[i + 1];
        bool s0 = is_singular(x0), s1 = is_singular(x1);
        if (s0 && s1) {
            double h = 0.5 * (x1 - x0);
            toward(x0, h);
            toward(x1, -h);
        } else if (s0) {
            toward(x0, x1 - x0);
        } else if (s1) {
            toward(x1, x0 - x1);
        } else {
            gk_segment(x0, x1);
        }
    }

    // A hint p > 1 floors the level ratio at 2^{1-p}. A hint <= 1 only
    // certifies the tail; convergence then rests on the measured ratios.
    double rho_hint = 0.0;
    if (opt.tail_exponent_hint > 1.0) rho_hint = std::exp2(1.0 - opt.tail_exponent_hint);
    double span = knots.back() - knots.front();
    double L = std::max(opt.scale, span);

    auto tail = [&](double k, double dir) {
        // First piece [k, k + L], then [k + L 2^j, k + L 2^{j+1}].
        if (is_singular(k)) toward(k, dir * L);
        else gk_segment(std::min(k, k + dir * L), std::max(k, k + dir * L));
        auto piece = [L, dir](int j, double& o1, double& o2) {
            o1 = dir * std::ldexp(L, j);
            o2 = dir * std::ldexp(L, j + 1);
            return std::isfinite(o2) && std::abs(o2) < 1e300;
        };
        add(sum_levels(f, k, piece, opt, rho_hint));
    };
    if (left_inf) tail(knots.front(), -1.0);
    if (right_inf) tail(knots.back(), 1.0);
    if (res.divergent) res.value = INFINITY;
    return res;
}

void WynnEpsilon::push(double s) {
    const double tiny = 1e-300, huge = 1e300;
    e_.push_back(s);
    const std::size_t n = n_++;
    if (n == 0) {
        best_ = s;
        err_ = INFINITY;
        return;
    }
    double aux2 = 0.0;
    for (std::size_t j = n; j >= 1; --j) {
        double aux1 = aux2;
        aux2 = e_[j - 1];
        double diff = e_[j] - aux2;
        e_[j - 1] = (std::abs(diff) < tiny) ? huge : aux1 + 1.0 / diff;
    }
    double est = e_[n % 2];
    if (std::abs(est) >= huge * 0.5) est = s;
    err_ = std::isnan(prev_best_) ? INFINITY : std::abs(est - prev_best_);
    prev_best_ = est;
    best_ = est;
}

}  // namespace opstable
