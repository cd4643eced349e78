#include "opstable/tangent.hpp"
#include "opstable/errors.hpp"
#include "opstable/sampler.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace opstable {

namespace {

Vec scalar_vec(double s) {
    Vec v(1);
    v(0) = s;
    return v;
}

SymMatrix B_at(const ExponentFamily& fam, double s) { return fam.B(scalar_vec(s)); }
SymMatrix D_at(const ExponentFamily& fam, double s) { return fam.D(scalar_vec(s)); }

Mat identity(int m) { return Mat::Identity(m, m); }

JointOptions joint_opts(const TangentOptions& opt) {
    JointOptions j;
    // One decade below the reporting tolerance so that two evaluations stay within 2 quad_tol.
    j.rel_tol = 0.1 * opt.quad_tol;
    return j;
}

void require_ladder(int k_max) {
    if (k_max < 1) throw DomainError("convergence sweep: k_max must be at least 1");
}

void require_probe(const FddProbe& p, int m) {
    if (p.t.empty() || p.t.size() != p.theta.size()) throw DomainError("fdd probe: need one theta per time");
    for (const Vec& th : p.theta)
        if (th.size() != m) throw DomainError("fdd probe: theta has the wrong dimension");
}

void require_d1(const FieldSpec& spec, const char* what) {
    if (spec.d != 1) throw DomainError(std::string(what) + ": spatial integration is implemented for d = 1");
}

bool is_scalar_matrix(const Mat& M) {
    const double c = M(0, 0);
    return (M - c * identity(static_cast<int>(M.rows()))).cwiseAbs().maxCoeff() <= 1e-14 * std::max(1.0, std::abs(c));
}

// Locations near u where the exponent enters the rescaled integrals.
std::vector<double> local_grid(double u, double lo, double hi, int n) {
    std::vector<double> g;
    for (int i = 0; i <= n; ++i) g.push_back(u + lo + (hi - lo) * i / n);
    return g;
}

double relative_gap(double x, double limit) { return std::abs(x - limit) / std::max(1.0, std::abs(limit)); }

bool limit_law_full(const ExponentFamily& fam, const SpectralMeasure& sigma, double u) {
    PointLaw law(B_at(fam, u), sigma);
    return psi_bounds_check(law, 0.5, 2.0, 64).K1 > 0.0;
}

// B declared constant and D equal to D(0) on a dyadic grid.
bool exponents_constant(const ExponentFamily& fam) {
    if (!fam.constant_B) return false;
    if (!fam.has_D()) return true;
    const Mat D0 = D_at(fam, 0.0).mat();
    for (int j = -10; j <= 10; ++j)
        for (double s : {std::ldexp(1.0, j), -std::ldexp(1.0, j)})
            if ((D_at(fam, s).mat() - D0).cwiseAbs().maxCoeff() != 0.0) return false;
    return true;
}

}  // namespace

std::vector<FddProbe> default_probes(int m) {
    std::vector<Vec> th = sphere_points(m, 4);
    while (th.size() < 4) th.push_back(th[th.size() % 2]);
    for (Vec& v : th) v /= v.norm();
    return {FddProbe{{1.0, 2.0}, {th[0], th[1]}}, FddProbe{{-0.5, 1.0}, {th[2], th[3]}}};
}

ExponentFamily frozen_family(const ExponentFamily& fam, double u) {
    ExponentFamily f = ExponentFamily::constant(B_at(fam, u), fam.d);
    if (fam.has_D()) {
        SymMatrix D = D_at(fam, u);
        f.D = [D](const Vec&) { return D; };
    }
    return f;
}

FieldSpec frozen_spec(const FieldSpec& spec, double u) {
    FieldSpec f = spec;
    f.family = frozen_family(spec.family, u);
    f.constant_radius = 0.0;
    if (spec.w) {
        Mat wu = spec.w(u);
        f.w = [wu](double) { return wu; };
    }
    return f;
}

// ------------------------------------------------------------ measure level

bool commutation_waived(const ExponentFamily& fam, double u) {
    if (fam.m == 1) return true;
    for (double s : local_grid(u, -2.0, 2.0, 64))
        if (!is_scalar_matrix(B_at(fam, s).mat())) return false;
    return true;
}

double commutation_residual(const std::vector<Integrand>& fs, const ExponentFamily& fam, double u) {
    double worst = 0.0;
    for (const Integrand& f : fs) {
        if (f.zero) continue;
        if (!std::isfinite(f.lo) || !std::isfinite(f.hi))
            throw DomainError("rescaled measure: test functions need compact support");
        std::vector<Mat> F;
        for (int i = 0; i <= 16; ++i) {
            Mat x = f(f.lo + (f.hi - f.lo) * i / 16.0);
            if (x.allFinite()) F.push_back(x);
        }
        for (double s : local_grid(u, std::min(0.0, f.lo), std::max(0.0, f.hi), 32)) {
            Mat B = B_at(fam, s).mat();
            for (const Mat& x : F) {
                double r = (x * B - B * x).cwiseAbs().maxCoeff();
                worst = std::max(worst, r / std::max(1.0, op_norm(x) * op_norm(B)));
            }
        }
    }
    return worst;
}

namespace {

// F(x) = r^{-B(u)} g(x) r^{B(u + r x)}, so F^T theta = r^{B(u + rx)} g(x)^T r^{-B(u)} theta.
Integrand rescaled_measure_integrand(const Integrand& g, const ExponentFamily& fam, double u, double r) {
    if (g.zero) return g;
    Integrand F = g;
    const Mat P = matrix_power(B_at(fam, u), 1.0 / r);
    F.eval = [g, fam, u, r, P](double b, double o) -> Mat {
        Mat x = g.eval(b, o);
        if (x.cwiseAbs().maxCoeff() == 0.0) return x;
        double s = u + r * (b + o);
        return P * x * matrix_power(B_at(fam, s), r);
    };
    return F;
}

double rescaled_core(const LawFamily& law, double u, const std::vector<Integrand>& gs,
                     const std::vector<Vec>& theta, double r, const TangentOptions& opt) {
    const ExponentFamily& fam = law.family();
    std::vector<Integrand> Fs;
    for (const Integrand& g : gs) Fs.push_back(rescaled_measure_integrand(g, fam, u, r));
    auto loc = [u, r](double x) { return u + r * x; };
    return joint_log_cf_at(Fs, theta, law, loc, joint_opts(opt));
}

LawFamily frozen_law(const LawFamily& law, double u) {
    return LawFamily(frozen_family(law.family(), u), law.sigma());
}

}  // namespace

double rescaled_measure_logcf(const LawFamily& law, double u, const std::vector<Integrand>& fs,
                              const std::vector<Vec>& theta, double r, const TangentOptions& opt) {
    if (!(r > 0.0)) throw DomainError("rescaled measure: r must be positive");
    double res = commutation_residual(fs, law.family(), u);
    if (res > 1e-10 && !commutation_waived(law.family(), u)) {
        std::ostringstream os;
        os << "rescaled measure: commutation failure f_j(s1) B(s2) != B(s2) f_j(s1) (residual " << res << ")";
        throw DomainError(os.str());
    }
    return rescaled_core(law, u, fs, theta, r, opt);
}

double limit_logcf(const LawFamily& law, double u, const std::vector<Integrand>& fs, const std::vector<Vec>& theta,
                   const TangentOptions& opt) {
    return joint_log_cf(fs, theta, frozen_law(law, u), BaseMeasure{}, joint_opts(opt));
}

// -------------------------------------------------------------- field level

namespace {

void require_C2(const FieldSpec& spec) {
    if (spec.flavor != Flavor::two_sided) throw DomainError("rescaled field: needs the two-sided flavor");
    ConditionVerdict c2 = check_C2(spec);
    if (!c2.pass)
        throw DomainError("rescaled field: condition verdict failed: C2 is required (" + c2.detail + ")");
}

// g(s) v(r, s) with g = phi(t - s)^{M} - phi(-s)^{M}, M = D - qB at u + r^E s.
Integrand rewritten_integrand(const FieldSpec& spec, double u, double t, double r) {
    const int m = spec.m;
    if (t == 0.0) return Integrand::zeros(m);
    Integrand base = ma_integrand(spec, t);
    const ExponentFamily fam = spec.family;
    const HomogeneousFn phi = spec.phi;
    const double q = spec.q();
    const double rho = std::pow(r, spec.E()(0, 0));
    const Mat Pu = matrix_power(D_at(fam, u), 1.0 / r);
    Integrand f = base;
    f.eval = [fam, phi, q, t, m, u, r, rho, Pu](double b, double o) -> Mat {
        double sp = u + rho * (b + o);
        Vec sv = scalar_vec(sp);
        SymMatrix D = fam.D(sv);
        EigenDecomposition e = eigendecompose(SymMatrix(Mat(D.mat() - q * fam.B(sv).mat())));
        double p1 = phi(scalar_vec((t - b) - o)), p2 = phi(scalar_vec(-b - o));
        Mat g = Mat::Zero(m, m);
        if (p1 > 0.0) g += matrix_power(e, p1);
        if (p2 > 0.0) g -= matrix_power(e, p2);
        // (g v)^T = v^T g with v^T = r^{-D(u)} r^{D(s')}.
        return Pu * matrix_power(D, r) * g;
    };
    return f;
}

std::vector<Integrand> limit_field_integrands(const FieldSpec& frozen, const FddProbe& probe) {
    std::vector<Integrand> fs;
    for (double t : probe.t) fs.push_back(ma_integrand(frozen, t));
    return fs;
}

}  // namespace

double rescaled_field_logcf(const FieldSpec& spec, double u, const FddProbe& probe, double r,
                            const TangentOptions& opt) {
    require_d1(spec, "rescaled field");
    require_C2(spec);
    require_probe(probe, spec.m);
    if (!(r > 0.0)) throw DomainError("rescaled field: r must be positive");
    std::vector<Integrand> fs;
    for (double t : probe.t) fs.push_back(rewritten_integrand(spec, u, t, r));
    const double rho = std::pow(r, spec.E()(0, 0));
    auto loc = [u, rho](double s) { return u + rho * s; };
    return joint_log_cf_at(fs, probe.theta, LawFamily(spec.family, spec.sigma), loc, joint_opts(opt));
}

double rescaled_field_logcf_raw(const FieldSpec& spec, double u, const FddProbe& probe, double r,
                                const TangentOptions& opt) {
    require_d1(spec, "rescaled field");
    require_C2(spec);
    require_probe(probe, spec.m);
    const double rho = std::pow(r, spec.E()(0, 0));
    const Mat Pu = matrix_power(D_at(spec.family, u), 1.0 / r);
    Integrand fu = ma_integrand(spec, u);
    std::vector<Integrand> fs;
    for (double t : probe.t) {
        Integrand f = ma_integrand(spec, u + rho * t).plus(fu.scaled(-1.0));
        if (t == 0.0) f = Integrand::zeros(spec.m);
        if (!f.zero) {
            Integrand g = f;
            g.eval = [f, Pu](double b, double o) -> Mat { return Pu * f.eval(b, o).transpose(); };
            f = g;
        }
        fs.push_back(f);
    }
    return joint_log_cf(fs, probe.theta, LawFamily(spec.family, spec.sigma), BaseMeasure{}, joint_opts(opt));
}

double limit_field_logcf(const FieldSpec& spec, double u, const FddProbe& probe, const TangentOptions& opt) {
    require_d1(spec, "limit field");
    require_probe(probe, spec.m);
    FieldSpec fz = frozen_spec(spec, u);
    return joint_log_cf(limit_field_integrands(fz, probe), probe.theta, LawFamily(fz.family, fz.sigma),
                        BaseMeasure{}, joint_opts(opt));
}

// -------------------------------------------------------------------- OSS

OssReport oss_identity_check(const FieldSpec& spec, double u, const std::vector<double>& c_values, int n_random,
                             SeedSpec seed, const SymMatrix* D_override, const TangentOptions& opt) {
    require_d1(spec, "oss identity");
    FieldSpec fz = frozen_spec(spec, u);
    const SymMatrix D = D_override ? *D_override : D_at(fz.family, u);
    const double e = spec.E()(0, 0);
    OssReport rep;
    for (double c : c_values) {
        if (!(c > 0.0)) throw DomainError("oss identity: c must be positive");
        const Mat Pc = matrix_power(D, c);
        for (int k = 0; k < n_random; ++k) {
            CounterRng rng(seed, combine_key(static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(rep.probes)));
            FddProbe p;
            for (int j = 0; j < 2; ++j) {
                p.t.push_back(4.0 * rng.uniform() - 2.0);
                Vec th(spec.m);
                for (int i = 0; i < spec.m; ++i) th(i) = rng.normal();
                p.theta.push_back(th / th.norm());
            }
            FddProbe lhs = p, rhs = p;
            for (double& t : lhs.t) t *= std::pow(c, e);
            for (Vec& th : rhs.theta) th = Pc.transpose() * th;
            double a = limit_field_logcf(fz, u, lhs, opt), b = limit_field_logcf(fz, u, rhs, opt);
            double gap = std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
            if (a == b) gap = 0.0;
            rep.max_gap = std::max(rep.max_gap, gap);
            ++rep.probes;
        }
    }
    rep.pass = rep.max_gap <= rep.threshold;
    return rep;
}

// ------------------------------------------------------------------- trends

std::string classify_trend(const std::vector<double>& v) {
    const std::size_t n = v.size();
    if (n == 0) return "inconclusive";
    if (*std::max_element(v.begin(), v.end()) <= 1e-12) return "vanishing";
    if (v.back() <= 1e-10) return "vanishing";
    if (n < 3) return "inconclusive";
    const double vmax = *std::max_element(v.begin(), v.end());
    const bool dec = v[n - 1] < v[n - 2] && v[n - 2] < v[n - 3];
    const bool inc = v[n - 1] > v[n - 2] && v[n - 2] > v[n - 3];
    if (dec && v.back() <= 0.1 * vmax) return "vanishing";
    auto half = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    const double hmin = *std::min_element(half, v.end()), hmax = *std::max_element(half, v.end());
    if (hmax <= 1.01 * hmin) return "bounded";
    if (inc && v.back() > v.front()) return "diverging";
    if (dec) return "bounded";
    return "inconclusive";
}

namespace {

struct BranchInfo {
    bool have = false;
    double a = NAN, b = NAN, rho2 = NAN;
};

std::vector<std::pair<double, double>> log_modulus(const std::function<double(double)>& g, double u) {
    std::vector<std::pair<double, double>> out;
    const double g0 = g(u);
    for (int k = 2; k <= 48; k += 2) {
        double s = std::ldexp(1.0, -k);
        double d = std::max(std::abs(g(u + s) - g0), std::abs(g(u - s) - g0));
        out.emplace_back(s, d * std::abs(std::log(s)));
    }
    return out;
}

std::vector<double> seconds(const std::vector<std::pair<double, double>>& v) {
    std::vector<double> o;
    for (auto& p : v) o.push_back(p.second);
    return o;
}

HypothesisReport hypotheses_impl(const ExponentFamily& fam, double u, int k_max, double e, double beta,
                                 const BranchInfo& bi) {
    HypothesisReport h;
    const int m = fam.m;
    const Mat I = identity(m);
    std::vector<double> compact = local_grid(0.0, -2.0, 2.0, 40);
    std::vector<double> wide;
    for (int j = -10; j <= 10; ++j) {
        wide.push_back(std::ldexp(1.0, j));
        wide.push_back(-std::ldexp(1.0, j));
    }
    h.has_D = fam.has_D();
    const EigenDecomposition eBu = eigendecompose(B_at(fam, u));
    EigenDecomposition eDu;
    if (h.has_D) eDu = eigendecompose(D_at(fam, u));
    std::vector<double> relaxed;
    for (int k = 1; k <= k_max; ++k) {
        double r = std::ldexp(1.0, -k);
        h.r.push_back(r);
        const Mat Pb = matrix_power(eBu, 1.0 / r);
        double chi = 0.0;
        for (double s : compact) chi = std::max(chi, op_norm(matrix_power(B_at(fam, u + r * s), r) * Pb - I));
        h.chi_sup.push_back(chi);
        if (!h.has_D) continue;
        const Mat Pd = matrix_power(eDu, 1.0 / r);
        const double rho = std::pow(r, e);
        auto v = [&](double s) { return Mat(matrix_power(D_at(fam, u + rho * s), r) * Pd); };
        double dev = 0.0, nrm = 0.0, rel = 0.0;
        for (double s : compact) dev = std::max(dev, op_norm(v(s) - I));
        // Fixed s plus s = x / r^E, so far locations stay in view as r shrinks.
        std::vector<double> ws = wide;
        for (int j = -4; j <= 10; ++j) {
            ws.push_back(std::ldexp(1.0, j) / rho);
            ws.push_back(-std::ldexp(1.0, j) / rho);
        }
        for (double s : ws) {
            double n = op_norm(v(s));
            nrm = std::max(nrm, n);
            if (bi.have && std::abs(s) >= 1.0) {
                double eps = 0.5 * (beta - bi.rho2);
                double tau = std::pow(std::abs(s), 1.0 / e);
                rel = std::max(rel, n / std::pow(tau, bi.a * eps / bi.b));
            }
        }
        h.v_dev_sup.push_back(dev);
        h.v_norm_sup.push_back(nrm);
        relaxed.push_back(rel);
    }
    h.chi_to_identity = classify_trend(h.chi_sup) == "vanishing";
    if (!h.chi_to_identity) h.flags.push_back("r^{B(u + r s)} r^{-B(u)} does not approach the identity");
    if (h.has_D) {
        h.v_to_identity = classify_trend(h.v_dev_sup) == "vanishing";
        std::string vt = classify_trend(h.v_norm_sup);
        h.v_bounded = vt == "vanishing" || vt == "bounded";
        if (!h.v_to_identity) h.flags.push_back("v(r, s) does not approach the identity on compacts");
        if (!h.v_bounded) {
            h.flags.push_back("v(r, s) is not uniformly bounded");
            if (bi.have && bi.rho2 < beta) {
                h.relaxed_checked = true;
                std::string rt = classify_trend(relaxed);
                h.relaxed_holds = rt != "diverging" && rt != "inconclusive";
                h.relaxed_constant = *std::max_element(relaxed.begin(), relaxed.end());
                h.flags.push_back(h.relaxed_holds ? "relaxed bound ||v|| <= C tau^{a eps / b} holds on the grid"
                                                  : "relaxed bound ||v|| <= C tau^{a eps / b} fails on the grid");
            }
        }
    }
    h.scalar_B = true;
    for (double s : local_grid(u, -1.0, 1.0, 32))
        if (!is_scalar_matrix(B_at(fam, s).mat())) h.scalar_B = false;
    if (h.scalar_B) {
        h.alpha_ratio = log_modulus([&](double s) { return 1.0 / B_at(fam, s)(0, 0); }, u);
        h.alpha_trend = classify_trend(seconds(h.alpha_ratio));
        if (h.alpha_trend == "diverging") h.flags.push_back("log-modulus of alpha diverges at u");
    }
    if (h.has_D) {
        h.scalar_D = true;
        for (double s : local_grid(u, -1.0, 1.0, 32))
            if (!is_scalar_matrix(D_at(fam, s).mat())) h.scalar_D = false;
        if (h.scalar_D) {
            h.delta_ratio = log_modulus([&](double s) { return D_at(fam, s)(0, 0); }, u);
            h.delta_trend = classify_trend(seconds(h.delta_ratio));
            if (h.delta_trend == "diverging") h.flags.push_back("log-modulus of delta diverges at u");
        }
    }
    return h;
}

}  // namespace

HypothesisReport check_limit_hypotheses(const ExponentFamily& fam, double u, int k_max, double E, double beta) {
    return hypotheses_impl(fam, u, k_max, E, beta, BranchInfo{});
}

HypothesisReport check_limit_hypotheses(const FieldSpec& spec, double u, int k_max) {
    BranchInfo bi;
    double beta = 1.0;
    if (spec.flavor == Flavor::two_sided && spec.family.has_D()) {
        beta = spec.phi.beta;
        ConditionVerdict c2 = check_C2(spec);
        if (c2.pass) {
            bi.have = true;
            bi.a = c2.a;
            bi.b = c2.b;
            bi.rho2 = c2.sup_value;
        }
    }
    double e = spec.flavor == Flavor::two_sided ? spec.E()(0, 0) : 1.0;
    ExponentFamily fam = spec.family;
    if (spec.flavor == Flavor::indicator) fam.D = nullptr;
    return hypotheses_impl(fam, u, k_max, e, beta, bi);
}

// ------------------------------------------------------------------- sweeps

std::string sweep_verdict(const std::vector<double>& dev, bool constant_exponents, double quad_tol,
                          double final_tol) {
    const double floor = 2.0 * quad_tol;
    const std::size_t n = dev.size();
    if (n == 0) return "inconclusive";
    if (*std::max_element(dev.begin(), dev.end()) <= floor) return "converges";
    if (constant_exponents) return "non-convergent";
    if (n < 3) return dev.back() < final_tol ? "inconclusive" : "non-convergent";
    auto below = [&](std::size_t i) { return dev[i] < dev[i - 1] || (dev[i] <= floor && dev[i - 1] <= floor); };
    const bool dec = below(n - 1) && below(n - 2);
    if (dec && dev.back() < final_tol) return "converges";
    if (dev.back() >= final_tol && (!dec || dev[n - 3] - dev[n - 1] < 0.1 * dev[n - 1])) return "non-convergent";
    return "inconclusive";
}

namespace {

template <class Eval>
void run_ladder(ConvergenceReport& rep, int k_max, const std::vector<double>& limits, const TangentOptions& opt,
                Eval eval) {
    rep.r.clear();
    for (int k = 1; k <= k_max; ++k) rep.r.push_back(std::ldexp(1.0, -k));
    rep.deviation.assign(k_max, 0.0);
    rep.limit_values = limits;
    parallel_for(k_max, opt.threads, [&](int i) {
        double worst = 0.0;
        for (std::size_t p = 0; p < limits.size(); ++p) worst = std::max(worst, relative_gap(eval(p, rep.r[i]), limits[p]));
        rep.deviation[i] = worst;
    });
    rep.quad_tol = opt.quad_tol;
    rep.final_tol = opt.final_tol;
    rep.verdict = sweep_verdict(rep.deviation, rep.constant_exponents, opt.quad_tol, opt.final_tol);
}

const std::vector<FddProbe>& probes_of(const TangentSpec& ts, std::vector<FddProbe>& storage, int m) {
    if (!ts.probes.empty()) return ts.probes;
    storage = default_probes(m);
    return storage;
}

}  // namespace

ConvergenceReport convergence_sweep(const FieldSpec& spec, const TangentSpec& ts, int k_max,
                                    const TangentOptions& opt) {
    require_ladder(k_max);
    require_d1(spec, "convergence sweep");
    ConvergenceReport rep;
    rep.level = "field";
    rep.u = ts.u;
    rep.hypotheses = check_limit_hypotheses(spec, ts.u);
    require_C2(spec);
    rep.constant_exponents = exponents_constant(spec.family);
    rep.limit_full = limit_law_full(spec.family, spec.sigma, ts.u);
    std::vector<FddProbe> store;
    const std::vector<FddProbe>& probes = probes_of(ts, store, spec.m);
    std::vector<double> limits;
    for (const FddProbe& p : probes) limits.push_back(limit_field_logcf(spec, ts.u, p, opt));
    run_ladder(rep, k_max, limits, opt,
               [&](std::size_t p, double r) { return rescaled_field_logcf(spec, ts.u, probes[p], r, opt); });
    return rep;
}

ConvergenceReport measure_convergence_sweep(const LawFamily& law, double u, const MeasureProbe& probe, int k_max,
                                            const TangentOptions& opt) {
    require_ladder(k_max);
    ConvergenceReport rep;
    rep.level = "measure";
    rep.u = u;
    rep.hypotheses = check_limit_hypotheses(law.family(), u);
    rep.constant_exponents = law.family().constant_B;
    rep.limit_full = limit_law_full(law.family(), law.sigma(), u);
    double res = commutation_residual(probe.fs, law.family(), u);
    if (res > 1e-10 && !commutation_waived(law.family(), u))
        throw DomainError("measure sweep: commutation failure f_j(s1) B(s2) != B(s2) f_j(s1)");
    if (res > 1e-10) rep.notes.push_back("commutation waived: B is scalar near u");
    std::vector<double> limits;
    for (const auto& th : probe.thetas) limits.push_back(limit_logcf(law, u, probe.fs, th, opt));
    run_ladder(rep, k_max, limits, opt,
               [&](std::size_t p, double r) { return rescaled_core(law, u, probe.fs, probe.thetas[p], r, opt); });
    return rep;
}

// ---------------------------------------------------------------- additive

namespace {

void check_w_commutes(const FieldSpec& spec, double u, double lo, double hi) {
    if (!spec.w) throw DomainError("additive tangent: weight function w missing");
    for (double s : local_grid(u, lo, hi, 64)) {
        Mat w = spec.w(s);
        if (w.rows() != spec.m || w.cols() != spec.m) throw DomainError("additive tangent: w has the wrong shape");
        Mat B = B_at(spec.family, s).mat();
        double r = (w * B - B * w).cwiseAbs().maxCoeff();
        if (r > 1e-10 * std::max(1.0, op_norm(w) * op_norm(B))) {
            std::ostringstream os;
            os << "additive tangent: commutation failure w(s) B(s) != B(s) w(s) at s=" << s << " (residual " << r
               << ")";
            throw DomainError(os.str());
        }
    }
}

std::pair<double, double> probe_span(const std::vector<double>& t) {
    double lo = 0.0, hi = 0.0;
    for (double x : t) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    return {lo, hi};
}

// sign(t) 1_{[min(0,t), max(0,t)]}(x) w(u + r x)
Integrand additive_piece(const FieldSpec& spec, double u, double t, double r) {
    if (t == 0.0) return Integrand::zeros(spec.m);
    const double sign = t > 0.0 ? 1.0 : -1.0;
    Integrand f;
    f.m = spec.m;
    f.eval = [w = spec.w, u, r, sign](double b, double o) -> Mat { return sign * w(u + r * (b + o)); };
    f.lo = std::min(0.0, t);
    f.hi = std::max(0.0, t);
    return f;
}

}  // namespace

double rescaled_additive_logcf(const FieldSpec& spec, double u, const FddProbe& probe, double r,
                               const TangentOptions& opt) {
    require_probe(probe, spec.m);
    if (!(r > 0.0)) throw DomainError("additive tangent: r must be positive");
    auto [lo, hi] = probe_span(probe.t);
    check_w_commutes(spec, u, lo, hi);
    std::vector<Integrand> gs;
    for (double t : probe.t) gs.push_back(additive_piece(spec, u, t, r));
    return rescaled_core(LawFamily(spec.family, spec.sigma), u, gs, probe.theta, r, opt);
}

double limit_additive_logcf(const FieldSpec& spec, double u, const FddProbe& probe, const TangentOptions& opt) {
    require_probe(probe, spec.m);
    if (!spec.w) throw DomainError("additive tangent: weight function w missing");
    FieldSpec fz = frozen_spec(spec, u);
    std::vector<Integrand> gs;
    for (double t : probe.t) gs.push_back(additive_piece(fz, u, t, 1.0));
    return joint_log_cf(gs, probe.theta, LawFamily(fz.family, fz.sigma), BaseMeasure{}, joint_opts(opt));
}

ConvergenceReport additive_tangent_check(const FieldSpec& spec, const TangentSpec& ts, int k_max,
                                         const TangentOptions& opt) {
    require_ladder(k_max);
    ConvergenceReport rep;
    rep.level = "additive";
    rep.u = ts.u;
    rep.hypotheses = check_limit_hypotheses(spec.family, ts.u);
    std::vector<FddProbe> store;
    const std::vector<FddProbe>& probes = probes_of(ts, store, spec.m);
    for (const FddProbe& p : probes) {
        auto [lo, hi] = probe_span(p.t);
        check_w_commutes(spec, ts.u, std::min(lo, -1.0), std::max(hi, 1.0));
    }
    bool w_const = true;
    const Mat wu = spec.w(ts.u);
    for (double s : local_grid(ts.u, -1.0, 1.0, 16))
        if ((spec.w(s) - wu).cwiseAbs().maxCoeff() != 0.0) w_const = false;
    rep.constant_exponents = spec.family.constant_B && w_const;
    rep.limit_full = limit_law_full(spec.family, spec.sigma, ts.u);
    if (std::abs(wu.determinant()) > 1e-12) rep.notes.push_back("w(u) is invertible: the local form is full");
    else rep.notes.push_back("w(u) is singular: fullness of the local form is not implied");
    std::vector<double> limits;
    for (const FddProbe& p : probes) limits.push_back(limit_additive_logcf(spec, ts.u, p, opt));
    run_ladder(rep, k_max, limits, opt,
               [&](std::size_t p, double r) { return rescaled_additive_logcf(spec, ts.u, probes[p], r, opt); });
    return rep;
}

// -------------------------------------------------------------- Monte Carlo

McCompareReport two_sample_cf(const Mat& x, const Mat& y, const std::vector<Vec>& test_points) {
    if (x.cols() != y.cols()) throw DomainError("two_sample_cf: column mismatch");
    McCompareReport rep;
    rep.n = static_cast<int>(std::min(x.rows(), y.rows()));
    if (rep.n < 100) throw DomainError("two_sample_cf: need at least 100 draws per side");
    rep.threshold = 3.5 * std::sqrt(2.0 / rep.n);
    auto ecf = [](const Mat& s, const Vec& u) {
        Vec a = s * u;
        double re = 0.0, im = 0.0;
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            re += std::cos(a(i));
            im += std::sin(a(i));
        }
        return std::pair<double, double>{re / a.size(), im / a.size()};
    };
    for (const Vec& u : test_points) {
        auto [r1, i1] = ecf(x, u);
        auto [r2, i2] = ecf(y, u);
        double gap = std::max(std::abs(r1 - r2), std::abs(i1 - i2));
        rep.max_distance = std::max(rep.max_distance, gap);
        if (gap > rep.threshold) ++rep.failures;
    }
    rep.pass = rep.failures == 0;
    return rep;
}

Mat sample_additive_tangent(const FieldSpec& spec, double u, const std::vector<double>& t, double r, int n_paths,
                            SeedSpec seed, const McOptions& opt) {
    if (spec.flavor != Flavor::indicator) throw DomainError("mc tangent: needs the indicator flavor");
    if (t.empty()) throw DomainError("mc tangent: empty time list");
    if (n_paths < 0) throw DomainError("mc tangent: negative path count");
    const int m = spec.m;
    const bool limit = r == 0.0;
    FieldSpec sp = limit ? frozen_spec(spec, u) : spec;
    LawFamily law(sp.family, sp.sigma);
    // Segment ends in x coordinates; locations are u + r x (x itself on the limit side).
    std::vector<double> knots = t;
    knots.push_back(0.0);
    std::sort(knots.begin(), knots.end());
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
    const int per = limit ? 1 : std::max(1, opt.cells_per_segment);
    const double scale = limit ? 1.0 : r, origin = limit ? 0.0 : u;
    std::vector<Cell> cells;
    std::vector<double> xc;  // centers in x coordinates
    for (std::size_t i = 0; i + 1 < knots.size(); ++i)
        for (int c = 0; c < per; ++c) {
            double x0 = knots[i] + (knots[i + 1] - knots[i]) * c / per;
            double x1 = knots[i] + (knots[i + 1] - knots[i]) * (c + 1) / per;
            xc.push_back(0.5 * (x0 + x1));
            cells.push_back(Cell{origin + scale * 0.5 * (x0 + x1), scale * (x1 - x0)});
        }
    const Mat P = limit ? identity(m) : Mat(matrix_power(B_at(spec.family, u), 1.0 / r));
    // Kernel per (t_j, cell): sign 1_{between 0 and t_j} r^{-B(u)} w(location).
    std::vector<std::vector<Mat>> K(t.size(), std::vector<Mat>(cells.size()));
    for (std::size_t j = 0; j < t.size(); ++j)
        for (std::size_t i = 0; i < cells.size(); ++i) {
            double x = xc[i];
            if (!(x > std::min(0.0, t[j]) && x < std::max(0.0, t[j]))) continue;
            double sign = t[j] > 0.0 ? 1.0 : -1.0;
            K[j][i] = sign * P * sp.w(cells[i].center);
        }
    std::vector<SeriesSampler> samplers;
    for (const Cell& c : cells) samplers.emplace_back(law.eig_at(c.center), law.sigma(), opt.series, c.volume);
    Mat out = Mat::Zero(n_paths, m * static_cast<int>(t.size()));
    parallel_for(n_paths, opt.threads, [&](int p) {
        std::vector<Vec> inc;
        inc.reserve(cells.size());
        for (std::size_t i = 0; i < cells.size(); ++i) {
            CounterRng rng(seed, combine_key(static_cast<std::uint64_t>(p), i));
            inc.push_back(samplers[i].draw(rng));
        }
        for (std::size_t j = 0; j < t.size(); ++j) {
            Vec x = Vec::Zero(m);
            for (std::size_t i = 0; i < cells.size(); ++i)
                if (K[j][i].size()) x.noalias() += K[j][i] * inc[i];
            out.row(p).segment(static_cast<Eigen::Index>(j) * m, m) = x.transpose();
        }
    });
    return out;
}

McCompareReport mc_tangent_compare(const FieldSpec& spec, double u, const std::vector<double>& t, double r,
                                   int n_paths, SeedSpec seed, const McOptions& opt) {
    if (!(r > 0.0)) throw DomainError("mc tangent: r must be positive");
    auto [lo, hi] = probe_span(t);
    check_w_commutes(spec, u, r * lo, r * hi);
    Mat x = sample_additive_tangent(spec, u, t, r, n_paths, SeedSpec{combine_key(seed.master, 1)}, opt);
    Mat y = sample_additive_tangent(spec, u, t, 0.0, n_paths, SeedSpec{combine_key(seed.master, 2)}, opt);
    McCompareReport rep = two_sample_cf(x, y, gof_test_points(static_cast<int>(x.cols()), opt.test_points));
    rep.r = r;
    rep.cells = static_cast<int>(t.size()) * opt.cells_per_segment;
    return rep;
}

// -------------------------------------------------------------------- JSON

namespace {

nlohmann::json to_json(const HypothesisReport& h) {
    using nlohmann::json;
    json j;
    j["r"] = h.r;
    j["chi_sup"] = h.chi_sup;
    j["chi_to_identity"] = h.chi_to_identity;
    j["has_D"] = h.has_D;
    if (h.has_D) {
        j["v_dev_sup"] = h.v_dev_sup;
        j["v_norm_sup"] = h.v_norm_sup;
        j["v_to_identity"] = h.v_to_identity;
        j["v_bounded"] = h.v_bounded;
    }
    auto pairs = [](const std::vector<std::pair<double, double>>& v) {
        json a = json::array();
        for (auto& p : v) a.push_back({p.first, p.second});
        return a;
    };
    j["scalar_B"] = h.scalar_B;
    if (h.scalar_B) {
        j["alpha_log_modulus"] = pairs(h.alpha_ratio);
        j["alpha_trend"] = h.alpha_trend;
    }
    if (h.scalar_D) {
        j["delta_log_modulus"] = pairs(h.delta_ratio);
        j["delta_trend"] = h.delta_trend;
    }
    if (h.relaxed_checked) {
        j["relaxed_bound_holds"] = h.relaxed_holds;
        j["relaxed_constant"] = h.relaxed_constant;
    }
    j["flags"] = h.flags;
    return j;
}

}  // namespace

std::string report_json(const HypothesisReport& rep, int indent) { return to_json(rep).dump(indent); }

std::string report_json(const ConvergenceReport& rep, int indent) {
    nlohmann::json j;
    j["level"] = rep.level;
    j["u"] = rep.u;
    j["r"] = rep.r;
    j["deviation"] = rep.deviation;
    j["limit_values"] = rep.limit_values;
    j["constant_exponents"] = rep.constant_exponents;
    j["quad_tol"] = rep.quad_tol;
    j["final_tol"] = rep.final_tol;
    j["limit_full"] = rep.limit_full;
    j["hypotheses"] = to_json(rep.hypotheses);
    j["verdict"] = rep.verdict;
    j["notes"] = rep.notes;
    return j.dump(indent);
}

}  // namespace opstable
