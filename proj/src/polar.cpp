#include "opstable/polar.hpp"
#include "opstable/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace opstable {

namespace {

void require_positive(const Vec& spectrum) {
    if (spectrum(0) <= 0.0) {
        std::ostringstream os;
        os << "not in Q(R^m): eigenvalue " << spectrum(0) << " <= 0";
        throw DomainError(os.str());
    }
}

// ln Q(t) with Q(t) = sum_j y_j^2 exp(-2 lambda_j t), and its t-derivative.
struct LogQ {
    int n = 0;
    double ly[16];
    double lam[16];

    void eval(double t, double& f, double& df) const {
        double mx = -INFINITY;
        for (int j = 0; j < n; ++j) mx = std::max(mx, 2.0 * ly[j] - 2.0 * lam[j] * t);
        double s = 0.0, sl = 0.0;
        for (int j = 0; j < n; ++j) {
            double w = std::exp(2.0 * ly[j] - 2.0 * lam[j] * t - mx);
            s += w;
            sl += w * lam[j];
        }
        f = mx + std::log(s);
        df = -2.0 * sl / s;
    }
};

}  // namespace

double tau_eigen(const Vec& spectrum, const double* y) {
    const int m = static_cast<int>(spectrum.size());
    require_positive(spectrum);
    // scaled so tiny inputs do not underflow to zero
    double amax = 0.0;
    for (int j = 0; j < m; ++j) {
        if (std::isnan(y[j])) throw DomainError("tau: non-finite input");
        amax = std::max(amax, std::abs(y[j]));
    }
    if (amax == 0.0) return 0.0;
    if (!std::isfinite(amax)) throw DomainError("tau: non-finite input");
    double nrm2 = 0.0;
    for (int j = 0; j < m; ++j) nrm2 += (y[j] / amax) * (y[j] / amax);
    double nrm = amax * std::sqrt(nrm2);

    // Only the nonzero coordinates enter; this also tightens the bracket.
    LogQ q;
    if (m > 16) throw DomainError("tau: dimension above 16 not supported");
    double lmin = INFINITY, lmax = 0.0;
    for (int j = 0; j < m; ++j) {
        if (y[j] == 0.0) continue;
        q.ly[q.n] = std::log(std::abs(y[j]));
        q.lam[q.n] = spectrum(j);
        lmin = std::min(lmin, spectrum(j));
        lmax = std::max(lmax, spectrum(j));
        ++q.n;
    }
    double ln = std::log(nrm);
    double ta = ln / lmax, tb = ln / lmin;
    double lo = std::min(ta, tb), hi = std::max(ta, tb);
    if (q.n == 1) return std::exp(q.ly[0] / q.lam[0]);

    double t = lo, f, df;
    q.eval(t, f, df);
    if (f <= 0.0) return std::exp(t);
    for (int it = 0; it < 200; ++it) {
        double step = -f / df;
        double tn = t + step;
        if (!(tn > lo && tn <= hi)) tn = 0.5 * (lo + hi);
        q.eval(tn, f, df);
        if (f > 0.0) lo = tn; else hi = tn;
        t = tn;
        // |sqrt(Q) - 1| is about |ln Q| / 2
        if (std::abs(f) <= 1e-15 || hi - lo <= 1e-16 * std::max(1.0, std::abs(t))) {
            double resid = std::abs(std::exp(0.5 * f) - 1.0);
            if (resid > 1e-12) break;
            return std::exp(t);
        }
    }
    // Plain bisection as a fallback. Should not be reached in practice.
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        q.eval(mid, f, df);
        if (f > 0.0) lo = mid; else hi = mid;
        if (std::abs(std::exp(0.5 * f) - 1.0) <= 1e-12) return std::exp(mid);
    }
    throw NumericalError("tau: root finder did not converge", std::abs(std::exp(0.5 * f) - 1.0));
}

double tau(const EigenDecomposition& e, const Vec& x) {
    if (x.size() != e.spectrum.size()) throw DomainError("tau: dimension mismatch");
    Vec y = e.basis.transpose() * x;
    return tau_eigen(e.spectrum, y.data());
}

double tau(const SymMatrix& D, const Vec& x) { return tau(eigendecompose(D), x); }

PolarPoint polar(const SymMatrix& D, const Vec& x) {
    EigenDecomposition e = eigendecompose(D);
    require_positive(e.spectrum);
    if (x.norm() < 1e-300) throw DomainError("polar undefined at origin");
    PolarPoint p;
    p.tau = tau(e, x);
    p.direction = matrix_power(e, 1.0 / p.tau) * x;
    return p;
}

Envelope tau_bracket(const Vec& spectrum, double norm_x) {
    if (norm_x <= 0.0) return {0.0, 0.0};
    double e1 = std::pow(norm_x, 1.0 / spectrum(spectrum.size() - 1));
    double e2 = std::pow(norm_x, 1.0 / spectrum(0));
    return {std::min(e1, e2), std::max(e1, e2)};
}

Envelope tau_envelope(const SymMatrix& D, const Vec& x, double a, double b, double r0) {
    if (!(a > 0.0 && a <= b && b < 2.0)) throw DomainError("tau_envelope: need 0 < a <= b < 2");
    if (!(r0 > 0.0)) throw DomainError("tau_envelope: need r0 > 0");
    EigenDecomposition e = eigendecompose(D);
    require_positive(e.spectrum);
    const double tol = 1e-12;
    if (e.spectrum(0) < (1.0 / b) * (1 - tol) || e.spectrum(e.spectrum.size() - 1) > (1.0 / a) * (1 + tol))
        throw DomainError("tau_envelope: spectrum of D outside [1/b, 1/a]");
    double n = x.norm();
    if (n == 0.0) return {0.0, 0.0};
    double pa = std::pow(n, a), pb = std::pow(n, b);
    // Constants of the norm chain, see header.
    const double C3 = 1.0, C4 = 1.0;
    return {C3 * std::min(pa, pb), C4 * std::max(pa, pb)};
}

}  // namespace opstable
