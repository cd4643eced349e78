#include "opstable/integrand.hpp"
#include "opstable/errors.hpp"
#include "opstable/polar.hpp"

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cstdint>
#include <limits>

namespace opstable {

// ---------------------------------------------------------------- Integrand

Integrand Integrand::zeros(int m) {
    Integrand f;
    f.m = m;
    f.eval = [m](double, double) { return Mat::Zero(m, m); };
    f.lo = 0.0;
    f.hi = 0.0;
    f.zero = true;
    return f;
}

Integrand Integrand::scalar(int m, std::function<double(double)> c, double lo, double hi) {
    Integrand f;
    f.m = m;
    f.eval = [m, c = std::move(c)](double b, double o) -> Mat {
        return c(b + o) * Mat::Identity(m, m);
    };
    f.lo = lo;
    f.hi = hi;
    return f;
}

Integrand Integrand::indicator(int m, double lo, double hi) {
    return scalar(m, [](double) { return 1.0; }, lo, hi);
}

Integrand Integrand::from(int m, std::function<Mat(double)> g, double lo, double hi, double tail_hint) {
    Integrand f;
    f.m = m;
    f.eval = [g = std::move(g)](double b, double o) { return g(b + o); };
    f.lo = lo;
    f.hi = hi;
    f.tail_exponent_hint = tail_hint;
    return f;
}

Integrand Integrand::scaled(double gamma) const {
    if (gamma == 0.0) return zeros(m);
    Integrand f = *this;
    f.eval = [e = eval, gamma](double b, double o) -> Mat { return gamma * e(b, o); };
    return f;
}

Integrand Integrand::plus(const Integrand& g) const {
    if (g.m != m) throw DomainError("integrand sum: dimension mismatch");
    if (zero) return g;
    if (g.zero) return *this;
    Integrand f;
    f.m = m;
    const double alo = lo, ahi = hi, blo = g.lo, bhi = g.hi;
    f.eval = [e1 = eval, e2 = g.eval, alo, ahi, blo, bhi, m = m](double b, double o) -> Mat {
        Mat r = Mat::Zero(m, m);
        double s = b + o;
        if (s >= alo && s <= ahi) r += e1(b, o);
        if (s >= blo && s <= bhi) r += e2(b, o);
        return r;
    };
    f.lo = std::min(lo, g.lo);
    f.hi = std::max(hi, g.hi);
    f.singular = singular;
    f.singular.insert(f.singular.end(), g.singular.begin(), g.singular.end());
    f.breaks = breaks;
    f.breaks.insert(f.breaks.end(), g.breaks.begin(), g.breaks.end());
    for (double x : {lo, hi, g.lo, g.hi})
        if (std::isfinite(x)) f.breaks.push_back(x);
    f.exact_offsets = exact_offsets && g.exact_offsets;
    double p1 = std::isinf(lo) || std::isinf(hi) ? tail_exponent_hint : INFINITY;
    double p2 = std::isinf(g.lo) || std::isinf(g.hi) ? g.tail_exponent_hint : INFINITY;
    f.tail_exponent_hint = (std::isnan(p1) || std::isnan(p2)) ? NAN : std::min(p1, p2);
    if (std::isinf(f.tail_exponent_hint)) f.tail_exponent_hint = NAN;
    double h1 = std::isinf(lo) || std::isinf(hi) ? H_tail_hint : INFINITY;
    double h2 = std::isinf(g.lo) || std::isinf(g.hi) ? g.H_tail_hint : INFINITY;
    f.H_tail_hint = (std::isnan(h1) || std::isnan(h2)) ? NAN : std::min(h1, h2);
    if (std::isinf(f.H_tail_hint)) f.H_tail_hint = NAN;
    return f;
}

// --------------------------------------------------------------- LawFamily

namespace {

void check_point_bounds(const EigenDecomposition& e) {
    if (e.spectrum(0) <= 0.5)
        throw DomainError("spectral bound violation: eigenvalue of B(s) <= 1/2");
}

}  // namespace

LawFamily::LawFamily(ExponentFamily fam, SpectralMeasure sigma) : fam_(std::move(fam)), sigma_(std::move(sigma)) {
    if (fam_.d != 1) throw DomainError("law family: spatial integration is implemented for d = 1");
    if (sigma_.dim() != fam_.m) throw DomainError("law family: spectral measure dimension mismatch");
    if (fam_.constant_B) {
        const_eig_ = eigendecompose(fam_.B(Vec::Zero(1)));
        check_point_bounds(const_eig_);
    }
}

EigenDecomposition LawFamily::eig_at(double s) const {
    if (fam_.constant_B) return const_eig_;
    Vec v(1);
    v(0) = s;
    EigenDecomposition e = eigendecompose(fam_.B(v));
    check_point_bounds(e);
    return e;
}

PointLaw LawFamily::law_at(double s) const {
    Vec v(1);
    v(0) = s;
    return PointLaw(fam_.B(v), sigma_);
}

namespace {

// Lower end a of the exponent range 1 / Lambda, or 0 when unknown.
double lower_exponent(const LawFamily& law) {
    const ExponentFamily& f = law.family();
    if (f.declared_a > 0.0) return f.declared_a;
    if (f.constant_B) {
        EigenDecomposition e = law.eig_at(0.0);
        return 1.0 / e.spectrum(e.spectrum.size() - 1);
    }
    return 0.0;
}

}  // namespace

// ---------------------------------------------------------------- cube sup

CubeSup cube_sup_tau(const EigenDecomposition& B, const Mat& F, double lambda) {
    if (!(lambda > 0.0)) throw DomainError("cube_sup_tau: lambda must be positive");
    const int m = static_cast<int>(B.spectrum.size());
    if (F.rows() != m || F.cols() != m) throw DomainError("cube_sup_tau: dimension mismatch");
    if (m > 20) throw DomainError("cube_sup_tau: dimension above 20");
    CubeSup out;
    // y = O^T F^T v / lambda with v in the unit cube
    const Mat M = B.basis.transpose() * F.transpose() / lambda;
    if (M.cwiseAbs().maxCoeff() == 0.0) return out;
    // {tau <= r} = r^B (unit ball) is convex, so tau is quasi-convex and its
    // max over the cube sits at a vertex. tau(-x) = tau(x) halves the vertices.
    Vec y(m);
    const long vertices = 1L << (m - 1);
    double best = 0.0;
    for (long c = 0; c < vertices; ++c) {
        y = M.col(0);
        for (int j = 1; j < m; ++j) {
            if ((c >> (j - 1)) & 1) y -= M.col(j);
            else y += M.col(j);
        }
        best = std::max(best, tau_eigen(B.spectrum, y.data()));
    }
    out.value = out.upper = best;
    return out;
}

CubeSup cube_sup_tau(const PointLaw& law, const Mat& F, double lambda) {
    return cube_sup_tau(law.eig(), F, lambda);
}

// --------------------------------------------------------- spatial integrals

LineOptions line_options(const std::vector<const Integrand*>& fs, double power, double rel_tol,
                         bool use_H_hint) {
    LineOptions o;
    o.rel_tol = rel_tol;
    o.lo = INFINITY;
    o.hi = -INFINITY;
    o.exact_offsets = true;
    double p = INFINITY;
    bool any = false, missing_hint = false;
    for (const Integrand* f : fs) {
        if (f->zero) continue;
        any = true;
        o.lo = std::min(o.lo, f->lo);
        o.hi = std::max(o.hi, f->hi);
        o.singular.insert(o.singular.end(), f->singular.begin(), f->singular.end());
        o.breaks.insert(o.breaks.end(), f->breaks.begin(), f->breaks.end());
        for (double x : {f->lo, f->hi})
            if (std::isfinite(x)) o.breaks.push_back(x);
        o.exact_offsets = o.exact_offsets && f->exact_offsets;
        if (std::isinf(f->lo) || std::isinf(f->hi)) {
            if (use_H_hint && !std::isnan(f->H_tail_hint)) p = std::min(p, f->H_tail_hint);
            else if (std::isnan(f->tail_exponent_hint)) missing_hint = true;
            else p = std::min(p, f->tail_exponent_hint * power);
        }
    }
    if (!any) {
        o.lo = o.hi = 0.0;
        return o;
    }
    if (missing_hint) o.tail_exponent_hint = NAN;
    else if (std::isfinite(p)) o.tail_exponent_hint = p;
    return o;
}

namespace {

IntegralCheck finish(const QuadResult& q) {
    IntegralCheck c;
    c.value = q.value;
    c.error = q.error;
    c.finite = !q.divergent && std::isfinite(q.value);
    if (!c.finite) c.value = INFINITY;
    return c;
}

bool inside(const Integrand& f, double s) { return s >= f.lo && s <= f.hi; }

}  // namespace

IntegralCheck H(const Integrand& f, const LawFamily& law, const BaseMeasure& base, double lambda,
                const HOptions& opt) {
    if (!(lambda > 0.0)) throw DomainError("H: lambda must be positive");
    if (f.m != law.dim()) throw DomainError("H: dimension mismatch");
    if (f.zero) return {};
    LineOptions lo = line_options({&f}, lower_exponent(law), opt.rel_tol, true);
    LineFn g = [&](double b, double o) {
        double s = b + o;
        if (!inside(f, s)) return 0.0;
        double w = base(s);
        if (w == 0.0) return 0.0;
        return w * cube_sup_tau(law.eig_at(s), f.eval(b, o), lambda).value;
    };
    return finish(integrate_line(g, lo));
}

double norm_M(const Integrand& f, const LawFamily& law, const BaseMeasure& base) {
    if (f.zero) return 0.0;
    auto h = [&](double lam) { return H(f, law, base, lam); };
    IntegralCheck h1 = h(1.0);
    if (!h1.finite) {
        if (!h(1e3).finite) throw DomainError("not integrable: H(f, lambda) = +inf for all probed lambda");
        throw NumericalError("norm_M: H finite at lambda = 1e3 but not at 1");
    }
    if (h1.value == 0.0) return 0.0;

    // ln H(e^x) is non-increasing in x; bracket the crossing of 0.
    double xlo = 0.0, xhi = 0.0, flo = std::log(h1.value), fhi = flo;
    const double step = std::log(4.0);
    if (flo > 0.0) {
        for (int i = 0; fhi > 0.0; ++i) {
            if (i > 500) throw NumericalError("norm_M: no upper bracket");
            xhi += step;
            fhi = std::log(h(std::exp(xhi)).value);
        }
        xlo = xhi - step;
        if (xlo != 0.0) flo = std::log(h(std::exp(xlo)).value);
    } else {
        for (int i = 0; flo <= 0.0; ++i) {
            if (i > 500) return 0.0;
            xlo -= step;
            IntegralCheck c = h(std::exp(xlo));
            if (c.value == 0.0) continue;
            flo = std::log(c.value);
        }
        xhi = xlo + step;
        if (xhi != 0.0) fhi = std::log(h(std::exp(xhi)).value);
    }
    if (fhi == 0.0) return std::exp(xhi);

    auto fn = [&](double x) { return std::log(h(std::exp(x)).value); };
    auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-9; };
    std::uintmax_t iters = 200;
    auto br = boost::math::tools::toms748_solve(fn, xlo, xhi, flo, fhi, tol, iters);
    double lam = std::exp(0.5 * (br.first + br.second));
    double check = h(lam).value;
    if (std::abs(check - 1.0) > 1e-3)
        throw NumericalError("norm_M: H at the computed norm is not 1", std::abs(check - 1.0));
    return lam;
}

IntegralCheck check_Fab(const Integrand& f, const BaseMeasure& base, double a, double b) {
    if (!(a > 0.0 && a <= b)) throw DomainError("check_Fab: need 0 < a <= b");
    if (f.zero) return {};
    LineOptions lo = line_options({&f}, a, 1e-8);
    LineFn g = [&](double bs, double o) {
        double s = bs + o;
        if (!inside(f, s)) return 0.0;
        double w = base(s);
        if (w == 0.0) return 0.0;
        double n = op_norm(f.eval(bs, o));
        if (n == 0.0) return 0.0;
        return w * (std::pow(n, a) + std::pow(n, b));
    };
    return finish(integrate_line(g, lo));
}

DiagonalReport check_diagonalized(const Integrand& f, const LawFamily& law, const BaseMeasure& base) {
    if (f.m != law.dim()) throw DomainError("check_diagonalized: dimension mismatch");
    DiagonalReport rep;
    rep.columns.resize(f.m);
    if (f.zero) return rep;
    LineOptions lo = line_options({&f}, lower_exponent(law), 1e-8);
    for (int j = 0; j < f.m; ++j) {
        LineFn g = [&, j](double b, double o) {
            double s = b + o;
            if (!inside(f, s)) return 0.0;
            double w = base(s);
            if (w == 0.0) return 0.0;
            EigenDecomposition e = law.eig_at(s);
            double n = (f.eval(b, o) * e.basis.col(j)).norm();
            if (n == 0.0) return 0.0;
            return w * std::pow(n, 1.0 / e.spectrum(j));
        };
        rep.columns[j] = finish(integrate_line(g, lo));
        rep.integrable = rep.integrable && rep.columns[j].finite;
    }
    return rep;
}

namespace {

double joint_impl(const std::vector<Integrand>& fs, const std::vector<Vec>& theta, const LawFamily& law,
                  const BaseMeasure& base, const std::function<double(double)>* loc, const JointOptions& opt) {
    if (fs.size() != theta.size()) throw DomainError("joint_log_cf: need one theta per integrand");
    const int m = law.dim();
    std::vector<const Integrand*> ptr;
    for (const Integrand& f : fs) {
        if (f.m != m || theta[&f - fs.data()].size() != m) throw DomainError("joint_log_cf: dimension mismatch");
        ptr.push_back(&f);
    }
    LineOptions lo = line_options(ptr, lower_exponent(law), opt.rel_tol, true);
    if (!(lo.lo < lo.hi)) return 0.0;
    LineFn g = [&](double b, double o) {
        double s = b + o;
        double w = base(s);
        if (w == 0.0) return 0.0;
        Vec u = Vec::Zero(m);
        for (std::size_t j = 0; j < fs.size(); ++j)
            if (!fs[j].zero && inside(fs[j], s)) u.noalias() += fs[j].eval(b, o).transpose() * theta[j];
        if (u.cwiseAbs().maxCoeff() == 0.0) return 0.0;
        return w * log_cf(law.eig_at(loc ? (*loc)(s) : s), law.sigma(), u, opt.radial);
    };
    QuadResult q = integrate_line(g, lo);
    if (q.divergent || !std::isfinite(q.value)) throw NumericalError("joint_log_cf: integral diverges");
    return q.value;
}

}  // namespace

double joint_log_cf(const std::vector<Integrand>& fs, const std::vector<Vec>& theta, const LawFamily& law,
                    const BaseMeasure& base, const JointOptions& opt) {
    return joint_impl(fs, theta, law, base, nullptr, opt);
}

double joint_log_cf_at(const std::vector<Integrand>& fs, const std::vector<Vec>& theta, const LawFamily& law,
                       const std::function<double(double)>& loc, const JointOptions& opt) {
    return joint_impl(fs, theta, law, BaseMeasure{}, &loc, opt);
}

}  // namespace opstable
