#include "opstable/levy_cf.hpp"
#include "opstable/errors.hpp"
#include "opstable/polar.hpp"
#include "opstable/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace opstable {

namespace {

constexpr double kPi = std::numbers::pi;

int matrix_rank(const Mat& m) {
    // Rank through the Gram matrix eigenvalues, relative threshold.
    Mat g = m * m.transpose();
    EigenDecomposition e = eigendecompose(SymMatrix(0.5 * (g + g.transpose())));
    double top = e.spectrum(e.spectrum.size() - 1);
    int r = 0;
    for (Eigen::Index i = 0; i < e.spectrum.size(); ++i)
        if (e.spectrum(i) > 1e-12 * std::max(top, 1e-300)) ++r;
    return r;
}

}  // namespace

SpectralMeasure::SpectralMeasure(std::vector<Atom> atoms, bool symmetrize) {
    if (atoms.empty()) throw DomainError("spectral measure needs at least one atom");
    dim_ = static_cast<int>(atoms.front().theta.size());
    for (const Atom& a : atoms) {
        if (a.theta.size() != dim_) throw DomainError("spectral measure: atoms of mixed dimension");
        if (!(a.weight > 0.0) || !std::isfinite(a.weight))
            throw DomainError("spectral measure: weights must be positive and finite");
        if (std::abs(a.theta.norm() - 1.0) > 1e-12)
            throw DomainError("spectral measure: atom direction is not a unit vector");
    }
    auto find_mirror = [&](const std::vector<Atom>& v, std::size_t i) -> long {
        for (std::size_t j = 0; j < v.size(); ++j)
            if (j != i && (v[j].theta + v[i].theta).norm() <= 1e-12 &&
                std::abs(v[j].weight - v[i].weight) <= 1e-12 * v[i].weight)
                return static_cast<long>(j);
        return -1;
    };
    std::vector<Atom> out;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        if (find_mirror(atoms, i) >= 0) {
            out.push_back(atoms[i]);
        } else {
            if (!symmetrize) throw DomainError("spectral measure is not symmetric");
            symmetrized_ = true;
            out.push_back({atoms[i].theta, 0.5 * atoms[i].weight});
            out.push_back({-atoms[i].theta, 0.5 * atoms[i].weight});
        }
    }
    atoms_ = std::move(out);
    mass_ = 0.0;
    for (const Atom& a : atoms_) mass_ += a.weight;

    Mat span(dim_, atoms_.size());
    for (std::size_t i = 0; i < atoms_.size(); ++i) span.col(i) = atoms_[i].theta;
    if (matrix_rank(span) < dim_) throw DomainError("fullness violation: atoms do not span R^m");

    // Pair up mirrors; an atom split by symmetrization pairs with its own mirror.
    std::vector<bool> used(atoms_.size(), false);
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
        if (used[i]) continue;
        used[i] = true;
        double w = atoms_[i].weight;
        for (std::size_t j = i + 1; j < atoms_.size(); ++j) {
            if (!used[j] && (atoms_[j].theta + atoms_[i].theta).norm() <= 1e-12 &&
                std::abs(atoms_[j].weight - w) <= 1e-12 * w) {
                used[j] = true;
                w += atoms_[j].weight;
                break;
            }
        }
        pairs_.push_back({atoms_[i].theta, w});
    }
}

SpectralMeasure SpectralMeasure::axis(int m, double w) {
    std::vector<Atom> a;
    for (int j = 0; j < m; ++j) {
        Vec e = Vec::Zero(m);
        e(j) = 1.0;
        a.push_back({e, w});
        a.push_back({-e, w});
    }
    return SpectralMeasure(std::move(a), false);
}

SpectralMeasure SpectralMeasure::planar(const std::vector<double>& angles,
                                        const std::vector<double>& weights) {
    if (angles.size() != weights.size()) throw DomainError("planar: size mismatch");
    std::vector<Atom> a;
    for (std::size_t k = 0; k < angles.size(); ++k) {
        Vec t(2);
        t << std::cos(angles[k]), std::sin(angles[k]);
        a.push_back({t, weights[k]});
        a.push_back({-t, weights[k]});
    }
    return SpectralMeasure(std::move(a), false);
}

SpectralMeasure SpectralMeasure::scaled(double t) const {
    if (!(t > 0.0)) throw DomainError("spectral measure scale must be positive");
    SpectralMeasure s = *this;
    for (Atom& a : s.atoms_) a.weight *= t;
    for (Atom& a : s.pairs_) a.weight *= t;
    s.mass_ *= t;
    return s;
}

PointLaw::PointLaw(const SymMatrix& B, SpectralMeasure sigma)
    : B_(B), eig_(eigendecompose(B)), sigma_(std::move(sigma)) {
    if (sigma_.dim() != B_.dim()) throw DomainError("point law: dimension mismatch");
    if (eig_.spectrum(0) <= 0.5) {
        std::ostringstream os;
        os << "spectral bound violation: eigenvalue " << eig_.spectrum(0) << " <= 1/2";
        throw DomainError(os.str());
    }
}

double stable_K(double alpha) {
    if (!(alpha > 0.0 && alpha < 2.0)) throw DomainError("stable_K needs 0 < alpha < 2");
    // Gamma(1-a) cos(pi a/2) = Gamma(2-a) (pi/2) sinc(pi (1-a)/2)
    double x = 0.5 * kPi * (1.0 - alpha);
    double sinc = (std::abs(x) < 1e-4) ? 1.0 - x * x / 6.0 + x * x * x * x / 120.0 : std::sin(x) / x;
    return std::tgamma(2.0 - alpha) * 0.5 * kPi * sinc;
}

namespace {

// g(r) = sum_j c_j r^{lambda_j}
struct Modes {
    int n = 0;
    double lam[16];
    double c[16];
};

Modes make_modes(const EigenDecomposition& e, const Vec& theta, const Vec& u) {
    Vec a = e.basis.transpose() * theta;
    Vec b = e.basis.transpose() * u;
    Modes md;
    const int m = static_cast<int>(a.size());
    if (m > 16) throw DomainError("radial term: dimension above 16 not supported");
    for (int j = 0; j < m; ++j) {
        double c = a(j) * b(j);
        double lam = e.spectrum(j);
        if (md.n > 0 && std::abs(lam - md.lam[md.n - 1]) <= 1e-13 * std::max(1.0, lam)) {
            md.c[md.n - 1] += c;
            continue;
        }
        md.lam[md.n] = lam;
        md.c[md.n] = c;
        ++md.n;
    }
    double cmax = 0.0;
    for (int j = 0; j < md.n; ++j) cmax = std::max(cmax, std::abs(md.c[j]));
    Modes out;
    for (int j = 0; j < md.n; ++j) {
        if (md.c[j] == 0.0 || std::abs(md.c[j]) <= 1e-15 * cmax) continue;
        out.lam[out.n] = md.lam[j];
        out.c[out.n] = md.c[j];
        ++out.n;
    }
    return out;
}

double g_at(const Modes& md, double t) {
    double s = 0.0;
    for (int j = 0; j < md.n; ++j) s += md.c[j] * std::exp(md.lam[j] * t);
    return s;
}

double gabs_at(const Modes& md, double t) {
    double s = 0.0;
    for (int j = 0; j < md.n; ++j) s += std::abs(md.c[j]) * std::exp(md.lam[j] * t);
    return s;
}

// r g'(r) at r = e^t
double rdg_at(const Modes& md, double t) {
    double s = 0.0;
    for (int j = 0; j < md.n; ++j) s += md.c[j] * md.lam[j] * std::exp(md.lam[j] * t);
    return s;
}

// Root of an increasing function F on the real line near t0.
template <class F>
double solve_increasing(F f, double target, double t0) {
    double lo = t0, hi = t0, step = 1.0;
    if (f(t0) < target) {
        while (f(hi) < target) {
            lo = hi;
            hi += step;
            step *= 2.0;
            if (hi > 800) throw NumericalError("radial term: bracket search overflow");
        }
    } else {
        while (f(lo) >= target) {
            hi = lo;
            lo -= step;
            step *= 2.0;
            if (lo < -800) throw NumericalError("radial term: bracket search underflow");
        }
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
        double mid = 0.5 * (lo + hi);
        if (f(mid) < target) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
}

// Generalized polynomial sum_k coef_k r^{e_k}.
using GPoly = std::vector<std::pair<double, double>>;

GPoly gp_mul(const GPoly& a, const GPoly& b) {
    GPoly out;
    for (auto [ea, ca] : a)
        for (auto [eb, cb] : b) {
            double e = ea + eb, c = ca * cb;
            bool merged = false;
            for (auto& [eo, co] : out)
                if (std::abs(eo - e) <= 1e-13 * std::max(1.0, e)) {
                    co += c;
                    merged = true;
                    break;
                }
            if (!merged) out.push_back({e, c});
        }
    return out;
}

// int_0^{r1} p(r) r^{-2} dr
double gp_int_rm2(const GPoly& p, double r1) {
    double s = 0.0;
    for (auto [e, c] : p) s += c * std::pow(r1, e - 1.0) / (e - 1.0);
    return s;
}

// Root of an increasing f on [lo, hi] with f(lo) < target <= f(hi).
template <class F>
double solve_in(F f, double target, double lo, double hi) {
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
        double mid = 0.5 * (lo + hi);
        if (f(mid) < target) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
}

// Zeros of g' in (t1, t_cut), ascending.
std::vector<double> derivative_zeros(const Modes& md, double t1, double t_cut) {
    std::vector<double> z;
    int changes = 0;
    for (int j = 1; j < md.n; ++j)
        if ((md.c[j] > 0) != (md.c[j - 1] > 0)) ++changes;
    if (changes == 0) return z;
    if (md.n == 2) {
        double t0 = std::log(-md.c[0] * md.lam[0] / (md.c[1] * md.lam[1])) / (md.lam[1] - md.lam[0]);
        if (t0 > t1 && t0 < t_cut) z.push_back(t0);
        return z;
    }
    // Beyond t_dom the top mode carries more than half of |g'|.
    const int top = md.n - 1;
    const double ctop = std::abs(md.c[top] * md.lam[top]);
    auto dom = [&](double t) {
        double s = 0.0;
        for (int j = 0; j < top; ++j) s += std::abs(md.c[j] * md.lam[j]) * std::exp((md.lam[j] - md.lam[top]) * t);
        return std::log(ctop) - std::log(2.0 * s);
    };
    double t_end = t_cut;
    if (dom(t_cut) >= 0.0) t_end = solve_in(dom, 0.0, std::min(t1, t_cut) - 1000.0, t_cut);
    const double h = 0.01;
    double prev = rdg_at(md, t1);
    for (double t = t1 + h; t <= t_end + h; t += h) {
        double cur = rdg_at(md, t);
        if ((cur > 0) != (prev > 0)) {
            double lo = t - h, hi = t;
            const bool slo = prev > 0;
            for (int it = 0; it < 100; ++it) {
                double mid = 0.5 * (lo + hi);
                if ((rdg_at(md, mid) > 0) == slo) lo = mid; else hi = mid;
            }
            z.push_back(0.5 * (lo + hi));
        }
        prev = cur;
    }
    return z;
}

double radial_quadrature(const Modes& md, double rel_tol) {
    // Natural scale: G(r_s) = 1 with G = sum |c_j| r^{lambda_j}.
    auto lnG = [&](double t) { return std::log(gabs_at(md, t)); };
    const double t_s = solve_increasing(lnG, 0.0, 0.0);
    const double abs_tol = 1e-15 * std::exp(-t_s);
    // Beyond t_cut the whole remaining integral is below 2 e^{-t_cut}.
    const double t_cut = t_s + 32.0;

    // Small r: Taylor series of cos g - 1 integrated exactly.
    const double t1 = solve_increasing(lnG, std::log(0.05), t_s);
    const double r1 = std::exp(t1);
    GPoly g1;
    for (int j = 0; j < md.n; ++j) g1.push_back({md.lam[j], md.c[j]});
    GPoly g2 = gp_mul(g1, g1), g4 = gp_mul(g2, g2), g6 = gp_mul(g4, g2);
    double total = -0.5 * gp_int_rm2(g2, r1) + gp_int_rm2(g4, r1) / 24.0 - gp_int_rm2(g6, r1) / 720.0;

    // In t = ln r the integrand is (cos g - 1) e^{-t}, written with sin^2 to
    // keep small phases accurate.
    LineFn full = [&](double base, double off) {
        double t = base + off;
        double h = std::sin(0.5 * g_at(md, t));
        return -2.0 * h * h * std::exp(-t);
    };
    LineFn osc = [&](double base, double off) {
        double t = base + off;
        return std::cos(g_at(md, t)) * std::exp(-t);
    };
    auto gk = [&](const LineFn& f, double a, double b) {
        return adaptive_gk(f, a, 0.0, b - a, std::min(rel_tol * 0.1, 1e-13), abs_tol, 4000).value;
    };
    auto sgn_after = [&](double t) { return rdg_at(md, t + 1e-9 * std::max(1.0, std::abs(t))) > 0 ? 1.0 : -1.0; };

    // g is monotone between consecutive zeros of g'. Each such stretch is cut
    // where cos g = 0 so that every piece holds at most half a wave.
    auto march = [&](double lo, double hi) {
        const double sg = sgn_after(lo);
        auto ph = [&](double t) { return sg * g_at(md, t); };
        double p_lo = ph(lo), p_hi = ph(hi);
        if ((p_hi - p_lo) / kPi > 2e5)
            throw NumericalError("radial term: too many oscillations between stationary points");
        double s = 0.0, a = lo;
        for (double W = kPi * (std::floor(p_lo / kPi - 0.5) + 1.5); W < p_hi; W += kPi) {
            double b = solve_in(ph, W, a, hi);
            s += gk(full, a, b);
            a = b;
        }
        return s + gk(full, a, hi);
    };

    // Stationary points of g are marched through unless the phase swings
    // too far between them. Beyond the first such far point every stationary
    // point contributes its leading stationary-phase term; the remaining
    // non-stationary contributions there are of order e^{-t} / |g|.
    std::vector<double> zeros = derivative_zeros(md, t1, t_cut);
    double lo = t1;
    std::size_t iz = 0;
    for (; iz < zeros.size(); ++iz) {
        if (std::abs(g_at(md, zeros[iz]) - g_at(md, lo)) / kPi > 2e4) break;
        total += march(lo, zeros[iz]);
        lo = zeros[iz];
    }
    const double t_stop = iz < zeros.size() ? zeros[iz] : t_cut;
    for (std::size_t k = iz; k < zeros.size(); ++k) {
        double r0 = std::exp(zeros[k]);
        double g2 = 0.0;
        for (int j = 0; j < md.n; ++j) g2 += md.c[j] * md.lam[j] * (md.lam[j] - 1.0) * std::pow(r0, md.lam[j] - 2.0);
        double shift = g2 > 0 ? 0.25 * kPi : -0.25 * kPi;
        total += std::sqrt(2.0 * kPi / std::abs(g2)) * std::cos(g_at(md, zeros[k]) + shift) / (r0 * r0);
    }

    // Last monotone stretch: march until the phase has made a couple of
    // oscillations, then sum half-waves of cos g with Wynn acceleration.
    const double sg = sgn_after(lo);
    auto ph = [&](double t) { return sg * g_at(md, t); };
    double t2 = std::max(lo, t_s);
    while (ph(t2) < 4.0 * kPi && t2 < t_stop) t2 += 0.25;
    t2 = std::min(t2, t_stop);
    total += march(lo, t2);
    total -= std::exp(-t2);

    double W = kPi * (std::floor(ph(t2) / kPi - 0.5) + 1.5);
    if (t2 >= t_stop || ph(t_stop) < W) return std::min(total + gk(osc, t2, std::max(t2, t_stop)), 0.0);
    double ta = t2, tb = solve_in(ph, W, t2, t_stop);
    WynnEpsilon wynn;
    double partial = gk(osc, ta, tb);
    wynn.push(partial);
    bool done = false;
    for (int k = 0; k < 400; ++k) {
        ta = tb;
        W += kPi;
        if (ph(t_stop) < W) {
            partial += gk(osc, ta, t_stop);
            wynn = WynnEpsilon();
            wynn.push(partial);
            done = true;
            break;
        }
        tb = solve_in(ph, W, ta, t_stop);
        partial += gk(osc, ta, tb);
        wynn.push(partial);
        if (k >= 8 && wynn.error() <= std::max(abs_tol, 1e-14 * std::abs(wynn.estimate()))) {
            done = true;
            break;
        }
    }
    if (!done && wynn.error() > 1e3 * abs_tol)
        throw NumericalError("radial term: oscillatory tail did not converge", wynn.error());
    total += wynn.estimate();
    return std::min(total, 0.0);
}

}  // namespace

double radial_cf_term(const EigenDecomposition& B, const Vec& theta, const Vec& u,
                      const RadialOptions& opt) {
    if (theta.size() != B.spectrum.size() || u.size() != B.spectrum.size())
        throw DomainError("radial term: dimension mismatch");
    if (std::abs(theta.norm() - 1.0) > 1e-10) throw DomainError("radial term: theta must be a unit vector");
    Modes md = make_modes(B, theta, u);
    if (md.n == 0) return 0.0;
    if (md.n == 1 && opt.allow_closed_form) {
        double alpha = 1.0 / md.lam[0];
        return -std::pow(std::abs(md.c[0]), alpha) * stable_K(alpha);
    }
    return radial_quadrature(md, opt.rel_tol);
}

double radial_cf_term(const SymMatrix& B, const Vec& theta, const Vec& u, const RadialOptions& opt) {
    return radial_cf_term(eigendecompose(B), theta, u, opt);
}

double log_cf(const EigenDecomposition& B, const SpectralMeasure& sigma, const Vec& u,
              const RadialOptions& opt) {
    if (u.size() != B.spectrum.size() || sigma.dim() != B.spectrum.size())
        throw DomainError("log_cf: dimension mismatch");
    double s = 0.0;
    for (const Atom& a : sigma.pairs()) s += a.weight * radial_cf_term(B, a.theta, u, opt);
    return s;
}

double log_cf(const PointLaw& law, const Vec& u, const RadialOptions& opt) {
    return log_cf(law.eig(), law.sigma(), u, opt);
}

double concentration_c(const PointLaw& law) {
    const EigenDecomposition& e = law.eig();
    double c = 0.0;
    for (const Atom& at : law.sigma().atoms()) {
        // |r^B theta| = 1 at r* = 1 / tau_B(theta); split there.
        double rstar = 1.0 / tau(e, at.theta);
        Vec a = e.basis.transpose() * at.theta;
        double inner = 0.0;
        for (Eigen::Index j = 0; j < a.size(); ++j) {
            double p = 2.0 * e.spectrum(j) - 1.0;
            inner += a(j) * a(j) * std::pow(rstar, p) / p;
        }
        c += at.weight * (inner + 1.0 / rstar);
    }
    return c;
}

std::pair<double, double> normalized_pair(const PointLaw& law, const Vec& u) {
    double c = concentration_c(law);
    return {1.0 / c, log_cf(law, u) / c};
}

std::vector<Vec> sphere_points(int m, int n) {
    std::vector<Vec> out;
    if (m == 1) {
        out.push_back(Vec::Constant(1, 1.0));
        out.push_back(Vec::Constant(1, -1.0));
        return out;
    }
    if (m == 2) {
        for (int k = 0; k < n; ++k) {
            double phi = 2.0 * kPi * (k + 0.5) / n;
            Vec v(2);
            v << std::cos(phi), std::sin(phi);
            out.push_back(v);
        }
        return out;
    }
    // Normalised Halton-rank Gaussian-like points: map low-discrepancy
    // coordinates through the inverse of a logistic and normalise.
    static const int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
    for (int k = 1; out.size() < static_cast<std::size_t>(n); ++k) {
        Vec v(m);
        for (int j = 0; j < m; ++j) {
            double f = 1.0, x = 0.0;
            for (int i = k; i > 0; i /= primes[j]) {
                f /= primes[j];
                x += f * (i % primes[j]);
            }
            v(j) = std::log(x / (1.0 - x));
        }
        if (v.norm() > 1e-8) out.push_back(v / v.norm());
    }
    return out;
}

PsiBounds psi_bounds_check(const PointLaw& law, double rho1, double rho2, int samples) {
    if (!(rho1 > 0.0 && rho1 <= rho2)) throw DomainError("psi_bounds_check needs 0 < rho1 <= rho2");
    if (samples < 1) throw DomainError("psi_bounds_check needs samples >= 1");
    const int m = law.dim();
    int nr = (rho1 == rho2) ? 1 : std::max(2, static_cast<int>(std::sqrt(static_cast<double>(samples))));
    int nd = std::max(1, samples / nr);
    std::vector<Vec> dirs = sphere_points(m, m == 1 ? 2 : nd);
    PsiBounds pb;
    pb.K1 = INFINITY;
    pb.K2 = 0.0;
    for (int i = 0; i < nr; ++i) {
        double rho = (nr == 1) ? rho1 : rho1 + (rho2 - rho1) * i / (nr - 1);
        for (const Vec& d : dirs) {
            double v = std::abs(log_cf(law, rho * d));
            pb.K1 = std::min(pb.K1, v);
            pb.K2 = std::max(pb.K2, v);
        }
    }
    if (!(pb.K1 > 1e-300)) throw DomainError("fullness violation: |psi| vanishes on the ring");
    return pb;
}

}  // namespace opstable
