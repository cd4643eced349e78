#include "opstable/fields.hpp"
#include "opstable/errors.hpp"
#include "opstable/polar.hpp"
#include "opstable/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace opstable {

namespace {

double tau_E(const SymMatrix& E, const Vec& x) {
    if (x.cwiseAbs().maxCoeff() == 0.0) return 0.0;
    return tau(E, x);
}

Vec scalar_vec(double s) {
    Vec v(1);
    v(0) = s;
    return v;
}

// Coordinate pattern search on the sphere, in the Euclidean chart.
double refine_extremum(const HomogeneousFn& phi, Vec x, double sign) {
    auto value = [&](const Vec& y) { return sign * phi(polar(phi.E, y).direction); };
    x.normalize();
    double best = value(x), step = 0.05;
    for (int it = 0; it < 80 && step > 1e-9; ++it) {
        bool improved = false;
        for (int j = 0; j < x.size(); ++j) {
            for (double dir : {1.0, -1.0}) {
                Vec y = x;
                y(j) += dir * step;
                y.normalize();
                double v = value(y);
                if (v < best) {
                    best = v;
                    x = y;
                    improved = true;
                }
            }
        }
        if (!improved) step *= 0.5;
    }
    return sign * best;
}

double spec_q(const FieldSpec& spec) { return spec.flavor == Flavor::two_sided ? spec.q() : 1.0; }
double spec_beta(const FieldSpec& spec) { return spec.flavor == Flavor::two_sided ? spec.phi.beta : 1.0; }

void require_D(const FieldSpec& spec) {
    if (!spec.family.has_D()) throw DomainError("field spec: exponent family has no D");
}

struct Extent {
    double lo = INFINITY;
    double hi = -INFINITY;
    double commute_residual = 0.0;
    bool commute = true;
};

// inf lambda / sup Lambda of M(s) over the probes
template <class MatFn>
Extent eigen_extent(const std::vector<Vec>& probes, MatFn M) {
    Extent x;
    for (const Vec& s : probes) {
        EigenDecomposition e = eigendecompose(SymMatrix(M(s)));
        x.lo = std::min(x.lo, e.spectrum(0));
        x.hi = std::max(x.hi, e.spectrum(e.spectrum.size() - 1));
    }
    return x;
}

void commute_extent(const FieldSpec& spec, const std::vector<Vec>& probes, Extent& x) {
    for (const Vec& s : probes) {
        const Mat B = spec.family.B(s).mat(), D = spec.family.D(s).mat();
        double r = (B * D - D * B).cwiseAbs().maxCoeff();
        double tol = 1e-10 * std::max(1.0, op_norm(B) * op_norm(D));
        x.commute_residual = std::max(x.commute_residual, r);
        if (r > tol) x.commute = false;
    }
}

ConditionVerdict make_verdict(std::string name, const Extent& x, double lower, double upper,
                              const SpectralBounds& sb, int probes) {
    ConditionVerdict v;
    v.name = std::move(name);
    v.inf_value = x.lo;
    v.sup_value = x.hi;
    v.lower_bound = lower;
    v.upper_bound = upper;
    v.lower_margin = x.lo - lower;
    v.upper_margin = upper - x.hi;
    v.commute = x.commute;
    v.commute_residual = x.commute_residual;
    v.a = sb.a_hat;
    v.b = sb.b_hat;
    v.probes = probes;
    v.pass = v.lower_margin > 0.0 && v.upper_margin > 0.0 && v.commute;
    std::ostringstream os;
    os << v.name << ": need " << lower << " < " << x.lo << " <= " << x.hi << " < " << upper;
    if (!x.commute) os << "; B D != D B (residual " << x.commute_residual << ")";
    v.detail = os.str();
    return v;
}

ConditionVerdict check_generic(const FieldSpec& spec, const std::string& name, bool on_D_only, double q,
                               double beta, bool commuting) {
    require_D(spec);
    std::vector<Vec> probes = probe_set(spec);
    SpectralBounds sb = spectral_bounds(spec.family, probes);
    const double a = sb.a_hat, b = sb.b_hat;
    Extent x;
    double lower, upper;
    if (on_D_only) {
        x = eigen_extent(probes, [&](const Vec& s) { return spec.family.D(s).mat(); });
        lower = 0.0;
        upper = beta;
    } else {
        x = eigen_extent(probes, [&](const Vec& s) { return Mat(spec.family.D(s).mat() - q * spec.family.B(s).mat()); });
        lower = -q / b;
        upper = beta - q / a;
    }
    if (commuting) commute_extent(spec, probes, x);
    return make_verdict(name, x, lower, upper, sb, static_cast<int>(probes.size()));
}

void require_one_sided(const FieldSpec& spec, const char* what) {
    if (spec.d != 1 || spec.flavor != Flavor::one_sided)
        throw DomainError(std::string(what) + ": needs a one-sided spec with d = 1");
}

}  // namespace

// ------------------------------------------------------------ homogeneous

std::vector<Vec> tau_sphere_points(const SymMatrix& E, int n) {
    const int d = E.dim();
    std::vector<Vec> out;
    if (d == 1) {
        for (int i = 0; i < n; ++i) out.push_back(scalar_vec(i % 2 == 0 ? 1.0 : -1.0));
        return out;
    }
    for (const Vec& x : sphere_points(d, n)) out.push_back(polar(E, x).direction);
    return out;
}

HomogeneousFn make_homogeneous(const SymMatrix& E, double beta, std::function<double(const Vec&)> phi,
                               std::string name, bool positive) {
    if (!(beta > 0.0)) throw DomainError("homogeneous function: beta must be positive");
    EigenDecomposition e = eigendecompose(E);
    if (!(e.spectrum(0) > 0.0)) throw DomainError("homogeneous function: E must be positive definite");
    HomogeneousFn h;
    h.E = E;
    h.q = E.mat().trace();
    h.beta = beta;
    h.eval = std::move(phi);
    h.positive = positive;
    h.name = std::move(name);

    const int d = E.dim();
    std::vector<Vec> pts = tau_sphere_points(E, d == 1 ? 2 : 2000 * d);
    // Directions with entries in {-1, 0, 1}: sums of powers have their kinks there.
    if (d > 1 && d <= 8) {
        long total = 1;
        for (int j = 0; j < d; ++j) total *= 3;
        for (long c = 1; c < total; ++c) {
            Vec x(d);
            long r = c;
            for (int j = 0; j < d; ++j, r /= 3) x(j) = static_cast<double>(r % 3) - 1.0;
            if (x.cwiseAbs().maxCoeff() > 0.0) pts.push_back(polar(E, x).direction);
        }
    }
    double lo = INFINITY, hi = -INFINITY;
    Vec xlo, xhi;
    for (const Vec& l : pts) {
        double v = h(l);
        if (v < lo) {
            lo = v;
            xlo = l;
        }
        if (v > hi) {
            hi = v;
            xhi = l;
        }
    }
    if (d > 1) {
        lo = std::min(lo, refine_extremum(h, xlo, 1.0));
        hi = std::max(hi, refine_extremum(h, xhi, -1.0));
    }
    h.m_phi = lo;
    h.M_phi = hi;
    if (positive && !(lo > 0.0)) throw DomainError("homogeneous function: phi vanishes on the unit sphere");
    return h;
}

HomogeneousFn phi_sum_powers(const std::vector<double>& e) {
    if (e.empty()) throw DomainError("phi_sum_powers: empty exponent list");
    for (double x : e)
        if (!(x >= 1.0)) throw DomainError("phi_sum_powers: exponents e_j must be >= 1");
    Vec ev = Eigen::Map<const Vec>(e.data(), static_cast<Eigen::Index>(e.size()));
    std::vector<double> inv(e.size());
    for (std::size_t j = 0; j < e.size(); ++j) inv[j] = 1.0 / e[j];
    auto f = [inv](const Vec& x) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < x.size(); ++j) s += std::pow(std::abs(x(j)), inv[j]);
        return s;
    };
    return make_homogeneous(SymMatrix::diag(ev), 1.0, f, "sum_powers");
}

HomogeneousFn phi_positive_part() {
    HomogeneousFn h;
    h.E = SymMatrix::identity(1);
    h.q = 1.0;
    h.beta = 1.0;
    h.eval = [](const Vec& x) { return std::max(x(0), 0.0); };
    h.m_phi = 0.0;
    h.M_phi = 1.0;
    h.positive = false;
    h.name = "positive_part";
    return h;
}

AdmissibilityProbe admissibility_probe(const HomogeneousFn& phi, int n_pairs, double A, double B,
                                       std::uint64_t seed) {
    if (!(0.0 < A && A <= B)) throw DomainError("admissibility_probe: need 0 < A <= B");
    AdmissibilityProbe out;
    out.A = A;
    out.B = B;
    out.positive = phi.positive;
    const int d = phi.dim();
    CounterRng rng(SeedSpec{seed}, 0);
    for (int i = 0; i < n_pairs; ++i) {
        Vec g(d), dir(d);
        for (int j = 0; j < d; ++j) g(j) = rng.normal();
        for (int j = 0; j < d; ++j) dir(j) = rng.normal();
        Vec theta = d == 1 ? scalar_vec(g(0) > 0 ? 1.0 : -1.0) : polar(phi.E, g).direction;
        double r = std::exp2(-20.0 * rng.uniform());
        Vec x = matrix_power(phi.E, r) * theta;
        Vec y = dir.normalized() * (A + (B - A) * rng.uniform());
        double ratio = std::abs(phi(x + y) - phi(y)) / std::pow(r, phi.beta);
        out.C = std::max(out.C, ratio);
        ++out.pairs;
    }
    return out;
}

double sphere_lipschitz_constant(const HomogeneousFn& phi, int n_pairs, std::uint64_t seed) {
    if (!phi.positive) throw DomainError("sphere_lipschitz_constant: phi must be positive off the origin");
    const int d = phi.dim();
    CounterRng rng(SeedSpec{seed}, 1);
    double C = 0.0;
    for (int i = 0; i < n_pairs; ++i) {
        Vec g(d), h(d);
        for (int j = 0; j < d; ++j) g(j) = rng.normal();
        for (int j = 0; j < d; ++j) h(j) = rng.normal();
        auto on_sphere = [&](const Vec& v) { return d == 1 ? scalar_vec(v(0) > 0 ? 1.0 : -1.0) : polar(phi.E, v).direction; };
        Vec l = on_sphere(h);
        Vec y = matrix_power(phi.E, 1.0 / phi(l)) * l;  // phi(y) = 1
        double r = std::exp2(-20.0 * rng.uniform());
        Vec x = matrix_power(phi.E, r) * on_sphere(g);
        C = std::max(C, std::abs(phi(x + y) - 1.0) / std::pow(r, phi.beta));
    }
    return C;
}

// ------------------------------------------------------------------ probes

std::vector<Vec> probe_set(const FieldSpec& spec) {
    const int d = spec.d;
    if (d < 1 || d > 12) throw DomainError("probe_set: d must be in [1, 12]");
    const double L = std::isfinite(spec.constant_radius) ? std::min(1024.0, std::max(2.0 * spec.constant_radius, 2.0))
                                                       : 1024.0;
    std::vector<double> axis{0.0};
    for (int k = -10; k <= 10; ++k) {
        double v = std::exp2(k);
        if (v <= L) {
            axis.push_back(v);
            axis.push_back(-v);
        }
    }
    std::vector<Vec> out;
    const int n = static_cast<int>(axis.size());
    if (d <= 2) {
        long total = d == 1 ? n : static_cast<long>(n) * n;
        for (long c = 0; c < total; ++c) {
            Vec s(d);
            s(0) = axis[c % n];
            if (d == 2) s(1) = axis[c / n];
            out.push_back(s);
        }
    } else {
        for (double v : axis) {
            for (int j = 0; j < d; ++j) {
                Vec s = Vec::Zero(d);
                s(j) = v;
                out.push_back(s);
            }
            out.push_back(Vec::Constant(d, v));
        }
    }
    static const unsigned primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
    for (int i = 1; i <= 1000; ++i) {
        Vec s(d);
        for (int j = 0; j < d; ++j) s(j) = L * (2.0 * radical_inverse(i, primes[j]) - 1.0);
        out.push_back(s);
    }
    return out;
}

// -------------------------------------------------------------- conditions

ConditionVerdict check_C1(const FieldSpec& spec) {
    return check_generic(spec, "C1", false, spec.q(), spec.phi.beta, false);
}

ConditionVerdict check_C2(const FieldSpec& spec) {
    return check_generic(spec, "C2", true, spec.q(), spec.phi.beta, true);
}

ConditionVerdict check_C1p(const FieldSpec& spec) {
    require_one_sided(spec, "check_C1p");
    return check_generic(spec, "C1'", false, 1.0, 1.0, false);
}

ConditionVerdict check_C2p(const FieldSpec& spec) {
    require_one_sided(spec, "check_C2p");
    return check_generic(spec, "C2'", true, 1.0, 1.0, true);
}

ConditionVerdict check_cont(const FieldSpec& spec) {
    require_one_sided(spec, "check_cont");
    ConditionVerdict v = check_generic(spec, "continuity", false, 1.0, 1.0, false);
    const double a = v.a, b = v.b;
    v.lower_bound = b / (a * a) - 1.0 / a;
    v.upper_bound = 1.0 - 1.0 / a;
    v.lower_margin = v.inf_value - v.lower_bound;
    v.upper_margin = v.upper_bound - v.sup_value;
    v.pass = a > 1.0 && v.lower_margin > 0.0 && v.upper_margin > 0.0;
    std::ostringstream os;
    os << "continuity: need " << v.lower_bound << " < " << v.inf_value << " <= " << v.sup_value << " < "
       << v.upper_bound;
    if (!(a > 1.0)) os << "; requires a > 1, got a = " << a;
    v.detail = os.str();
    return v;
}

ActiveBranch resolve_branch(const FieldSpec& spec) {
    require_D(spec);
    ActiveBranch br;
    ConditionVerdict c1, c2;
    if (spec.flavor == Flavor::two_sided) {
        c1 = check_C1(spec);
        c2 = check_C2(spec);
    } else if (spec.flavor == Flavor::one_sided) {
        c1 = check_C1p(spec);
        c2 = check_C2p(spec);
    } else {
        throw DomainError("resolve_branch: the indicator flavor has no moving-average condition");
    }
    br.q = spec_q(spec);
    br.beta = spec_beta(spec);
    br.a = c1.a;
    br.b = c1.b;
    br.verdicts = {c1, c2};
    const ExponentFamily fam = spec.family;
    const double q = br.q;
    if (c2.pass) {
        br.condition = c2.name;
        br.gamma = q;
        br.rho1 = c2.inf_value;
        br.rho2 = c2.sup_value;
        br.A = [fam](const Vec& s) { return fam.D(s); };
    } else if (c1.pass) {
        br.condition = c1.name;
        br.gamma = 0.0;
        br.rho1 = c1.inf_value;
        br.rho2 = c1.sup_value;
        br.A = [fam, q](const Vec& s) { return SymMatrix(Mat(fam.D(s).mat() - q * fam.B(s).mat())); };
    } else {
        std::ostringstream os;
        os << "condition verdict failed: " << c1.detail << " (margins " << c1.lower_margin << ", "
           << c1.upper_margin << "); " << c2.detail << " (margins " << c2.lower_margin << ", "
           << c2.upper_margin << ")";
        throw DomainError(os.str());
    }
    return br;
}

// -------------------------------------------------------------- integrands

namespace {

// Tail hints for f(t, .) on the line. ||f(s)|| decays like
// |s|^{(Lambda_{D - qB} - beta) / e}; the cube sup additionally like
// tau(s)^{a(rho2 - beta) - gamma} from the branch.
void set_hints(Integrand& f, double e, double beta, double sup_M, double a, const ActiveBranch* br) {
    double pf = (beta - sup_M) / e;
    if (pf > 0.0) f.tail_exponent_hint = pf;
    double pH = pf > 0.0 ? a * pf : NAN;
    if (br) {
        double pb = (br->gamma - br->a * (br->rho2 - br->beta)) / e;
        pH = std::isnan(pH) ? pb : std::max(pH, pb);
    }
    f.H_tail_hint = pH;
}

Integrand ma_from_branch(const FieldSpec& spec, const ActiveBranch& br, double t) {
    if (spec.d != 1) throw DomainError("ma_integrand: spatial integration is implemented for d = 1");
    if (!spec.phi.positive) throw DomainError("ma_integrand: phi is not admissible (vanishes off the origin)");
    const int m = spec.m;
    if (t == 0.0) return Integrand::zeros(m);
    const ExponentFamily fam = spec.family;
    const HomogeneousFn phi = spec.phi;
    const double q = br.q;
    Integrand f;
    f.m = m;
    f.eval = [fam, phi, q, t, m](double b, double o) -> Mat {
        Vec s = scalar_vec(b + o);
        EigenDecomposition e = eigendecompose(SymMatrix(Mat(fam.D(s).mat() - q * fam.B(s).mat())));
        double p1 = phi(scalar_vec((t - b) - o)), p2 = phi(scalar_vec(-b - o));
        Mat r = Mat::Zero(m, m);
        if (p1 > 0.0) r += matrix_power(e, p1);
        if (p2 > 0.0) r -= matrix_power(e, p2);
        return r;
    };
    f.singular = {0.0, t};
    f.exact_offsets = true;
    set_hints(f, phi.E(0, 0), br.beta, br.verdicts[0].sup_value, br.a, &br);
    return f;
}

struct OneSidedInfo {
    bool have_branch = false;
    ActiveBranch br;
    double sup_M = NAN;  // sup Lambda_{D - B}
    double a = NAN;
};

OneSidedInfo one_sided_info(const FieldSpec& spec) {
    OneSidedInfo info;
    ConditionVerdict c1 = check_C1p(spec);
    info.sup_M = c1.sup_value;
    info.a = c1.a;
    try {
        info.br = resolve_branch(spec);
        info.have_branch = true;
    } catch (const DomainError&) {
        info.have_branch = false;
    }
    return info;
}

Integrand oneside_from(const FieldSpec& spec, const OneSidedInfo& info, double t) {
    const int m = spec.m;
    if (t == 0.0) return Integrand::zeros(m);
    const ExponentFamily fam = spec.family;
    Integrand f;
    f.m = m;
    f.eval = [fam, t, m](double b, double o) -> Mat {
        Vec s = scalar_vec(b + o);
        double x1 = (t - b) - o, x2 = -b - o;
        Mat r = Mat::Zero(m, m);
        if (x1 <= 0.0 && x2 <= 0.0) return r;
        EigenDecomposition e = eigendecompose(SymMatrix(Mat(fam.D(s).mat() - fam.B(s).mat())));
        if (x1 > 0.0) r += matrix_power(e, x1);
        if (x2 > 0.0) r -= matrix_power(e, x2);
        return r;
    };
    f.hi = std::max(0.0, t);
    f.singular = {0.0, t};
    f.exact_offsets = true;
    set_hints(f, 1.0, 1.0, info.sup_M, info.a, info.have_branch ? &info.br : nullptr);
    return f;
}

}  // namespace

Integrand ma_integrand(const FieldSpec& spec, double t) {
    if (spec.flavor != Flavor::two_sided) throw DomainError("ma_integrand: needs the two-sided flavor");
    return ma_from_branch(spec, resolve_branch(spec), t);
}

Integrand oneside_integrand(const FieldSpec& spec, double t) {
    require_one_sided(spec, "oneside_integrand");
    require_D(spec);
    return oneside_from(spec, one_sided_info(spec), t);
}

Integrand indicator_integrand(const FieldSpec& spec, double t) {
    if (spec.d != 1) throw DomainError("indicator_integrand: needs d = 1");
    if (!spec.w) throw DomainError("indicator_integrand: weight function w missing");
    const int m = spec.m;
    if (t == 0.0) return Integrand::zeros(m);
    const double lo = std::min(0.0, t), hi = std::max(0.0, t);
    const double sign = t > 0.0 ? 1.0 : -1.0;
    for (int i = 0; i <= 64; ++i) {
        double s = lo + (hi - lo) * i / 64.0;
        Mat w = spec.w(s);
        if (w.rows() != m || w.cols() != m) throw DomainError("indicator_integrand: w has the wrong shape");
        Mat B = spec.family.B(scalar_vec(s)).mat();
        double r = (w * B - B * w).cwiseAbs().maxCoeff();
        if (r > 1e-10 * std::max(1.0, op_norm(w) * op_norm(B))) {
            std::ostringstream os;
            os << "indicator_integrand: commutation failure w(s) B(s) != B(s) w(s) at s=" << s
               << " (residual " << r << ")";
            throw DomainError(os.str());
        }
    }
    Integrand f;
    f.m = m;
    f.eval = [w = spec.w, sign](double b, double o) -> Mat { return sign * w(b + o); };
    f.lo = lo;
    f.hi = hi;
    return f;
}

Integrand field_integrand(const FieldSpec& spec, double t) {
    switch (spec.flavor) {
        case Flavor::two_sided: return ma_integrand(spec, t);
        case Flavor::one_sided: return oneside_integrand(spec, t);
        case Flavor::indicator: return indicator_integrand(spec, t);
    }
    throw DomainError("field_integrand: unknown flavor");
}

IntegrandFamily field_kernel(const FieldSpec& spec) {
    switch (spec.flavor) {
        case Flavor::two_sided: {
            ActiveBranch br = resolve_branch(spec);
            return [spec, br](double t) { return ma_from_branch(spec, br, t); };
        }
        case Flavor::one_sided: {
            require_one_sided(spec, "field_kernel");
            require_D(spec);
            OneSidedInfo info = one_sided_info(spec);
            return [spec, info](double t) { return oneside_from(spec, info, t); };
        }
        case Flavor::indicator:
            return [spec](double t) { return indicator_integrand(spec, t); };
    }
    throw DomainError("field_kernel: unknown flavor");
}

// ---------------------------------------------------------------- majorant

double quasi_triangle_constant(const SymMatrix& E) {
    EigenDecomposition e = eigendecompose(E);
    return std::max(1.0, std::exp2(1.0 / e.spectrum(0) - 1.0));
}

double majorant_h(const ActiveBranch& br, const FieldSpec& spec, double eta, double zeta, const Vec& t,
                  const Vec& s) {
    return majorant_h(br, spec, eta, zeta, t, s, t - s);
}

double majorant_h(const ActiveBranch& br, const FieldSpec& spec, double eta, double zeta, const Vec& t,
                  const Vec& s, const Vec& ts) {
    if (!(eta > 0.0 && zeta > 0.0)) throw DomainError("majorant_h: need eta, zeta > 0");
    const SymMatrix& E = spec.E();
    if (s.cwiseAbs().maxCoeff() == 0.0 || ts.cwiseAbs().maxCoeff() == 0.0) return 0.0;
    const double a = br.a, b = br.b, g = br.gamma;
    const double K = quasi_triangle_constant(E) * (zeta + eta);
    const double tau_s = tau_E(E, s), tau_ts = tau_E(E, ts), tau_t = tau_E(E, t);
    double h = 0.0;
    if (tau_s <= K) h += std::pow(tau_s, a * br.rho1 - g) + std::pow(tau_s, b * br.rho1 - g);
    if (tau_ts <= K) h += std::pow(tau_ts, a * br.rho1 - g) + std::pow(tau_ts, b * br.rho1 - g);
    if (tau_s > eta) {
        double lead = std::max(std::pow(tau_t, a * br.beta), std::pow(tau_t, b * br.beta));
        h += lead * std::pow(tau_s, a * (br.rho2 - br.beta) - g);
    }
    return h;
}

double majorant_h(const FieldSpec& spec, double eta, double zeta, const Vec& t, const Vec& s) {
    return majorant_h(resolve_branch(spec), spec, eta, zeta, t, s);
}

double choose_eta(const FieldSpec& spec, const Vec& t, double C6) {
    const HomogeneousFn& phi = spec.phi;
    if (!(phi.m_phi > 0.0)) throw DomainError("choose_eta: phi must be positive off the origin");
    const double tt = tau_E(phi.E, t);
    // On tau(s) > eta: phi(s) >= m_phi tau(s) > m_phi eta.
    const double need = std::max({1.0, tt, tt * std::pow(2.0 * C6, 1.0 / phi.beta)});
    double eta = std::exp2(-30.0);
    while (phi.m_phi * eta < need) eta *= 2.0;
    return eta;
}

// ------------------------------------------------------------- diagnostics

std::vector<std::pair<double, double>> dyadic_pairs(double t0, int kmin, int kmax) {
    std::vector<std::pair<double, double>> out;
    for (int k = kmin; k <= kmax; ++k) out.emplace_back(t0, t0 + std::exp2(-k));
    return out;
}

HolderReport holder_check(const FieldSpec& spec, double K, const std::vector<std::pair<double, double>>& t_pairs) {
    if (spec.d != 1) throw DomainError("holder_check: needs d = 1");
    HolderReport rep;
    std::vector<Vec> probes = probe_set(spec);
    SpectralBounds sb = spectral_bounds(spec.family, probes);
    const double a = sb.a_hat, b = sb.b_hat;
    rep.threshold = spec.d / a;
    if (spec.flavor == Flavor::one_sided) {
        ConditionVerdict c = check_C1p(spec);
        rep.xi_theory = (a * c.inf_value + 1.0) / b;
    }

    IntegrandFamily kernel = field_kernel(spec);
    LawFamily law(spec.family, spec.sigma);
    BaseMeasure base;
    for (const auto& [t1, t2] : t_pairs) {
        if (std::abs(t1) > K || std::abs(t2) > K) throw DomainError("holder_check: pair outside [-K, K]");
        if (t1 == t2) continue;
        Integrand diff = kernel(t1).plus(kernel(t2).scaled(-1.0));
        double n = norm_M(diff, law, base);
        if (n > 0.0) rep.points.emplace_back(std::log(std::abs(t1 - t2)), std::log(n));
    }
    if (rep.points.size() >= 2) {
        double mx = 0.0, my = 0.0;
        for (const auto& [x, y] : rep.points) {
            mx += x;
            my += y;
        }
        mx /= rep.points.size();
        my /= rep.points.size();
        double sxy = 0.0, sxx = 0.0;
        for (const auto& [x, y] : rep.points) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
        }
        rep.xi_hat = sxy / sxx;
    }
    if (spec.flavor == Flavor::one_sided && !(a > 1.0)) {
        rep.certificate = false;
        rep.verdict = "no Hölder certificate: a <= 1";
    } else if (std::isnan(rep.xi_hat)) {
        rep.verdict = "no Hölder certificate: fewer than two distinct pairs";
    } else {
        rep.certificate = rep.xi_hat > rep.threshold;
        rep.verdict = rep.certificate ? "Hölder certificate" : "no Hölder certificate: slope <= d/a";
    }
    return rep;
}

bool fullness_flag(const FieldSpec& spec, const std::vector<Vec>& probes) {
    require_D(spec);
    const double q = spec_q(spec);
    for (const Vec& s : probes) {
        Mat M = spec.family.D(s).mat() - q * spec.family.B(s).mat();
        if (std::abs(M.determinant()) > 1e-12) return true;
    }
    return false;
}

bool fullness_flag(const FieldSpec& spec) { return fullness_flag(spec, probe_set(spec)); }

FieldReport field_report(const FieldSpec& spec) {
    FieldReport r;
    switch (spec.flavor) {
        case Flavor::two_sided:
            r.verdicts = {check_C1(spec), check_C2(spec)};
            r.admissibility = admissibility_probe(spec.phi, 2000);
            break;
        case Flavor::one_sided:
            r.verdicts = {check_C1p(spec), check_C2p(spec), check_cont(spec)};
            break;
        case Flavor::indicator:
            return r;
    }
    // C2-type wins over C1-type
    if (r.verdicts[1].pass) r.active = r.verdicts[1].name;
    else if (r.verdicts[0].pass) r.active = r.verdicts[0].name;
    r.full = fullness_flag(spec);
    return r;
}

}  // namespace opstable
