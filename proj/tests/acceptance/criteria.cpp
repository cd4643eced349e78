#include "criteria.hpp"

#include "../oracles.hpp"
#include "opstable/cli.hpp"
#include "opstable/fields.hpp"
#include "opstable/integrand.hpp"
#include "opstable/levy_cf.hpp"
#include "opstable/polar.hpp"
#include "opstable/sampler.hpp"
#include "opstable/tangent.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <unistd.h>

namespace opstable::acceptance {

namespace {

using cd = std::complex<double>;
constexpr double kPi = std::numbers::pi;

std::string fmt(double x) {
    char b[32];
    std::snprintf(b, sizeof b, "%.3g", x);
    return b;
}

Vec vec(std::initializer_list<double> x) {
    Vec v(static_cast<Eigen::Index>(x.size()));
    int i = 0;
    for (double a : x) v(i++) = a;
    return v;
}

SymMatrix sym2(double a, double b, double c) {
    Mat m(2, 2);
    m << a, b, b, c;
    return SymMatrix(m);
}

SymMatrix rotated(double phi, double l1, double l2) {
    Mat o(2, 2);
    o << std::cos(phi), -std::sin(phi), std::sin(phi), std::cos(phi);
    Mat r = o * vec({l1, l2}).asDiagonal() * o.transpose();
    return SymMatrix(0.5 * (r + r.transpose()));
}

SymMatrix random_exponent(std::mt19937_64& g, int m, double lo, double hi) {
    std::normal_distribution<double> n;
    std::uniform_real_distribution<double> u(lo, hi);
    Mat a(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) a(i, j) = n(g);
    Mat q = Eigen::HouseholderQR<Mat>(a).householderQ();
    Vec d(m);
    for (int i = 0; i < m; ++i) d(i) = u(g);
    Mat r = q * d.asDiagonal() * q.transpose();
    return SymMatrix(0.5 * (r + r.transpose()));
}

Vec random_vec(std::mt19937_64& g, int m, double lo, double hi) {
    std::normal_distribution<double> n;
    std::uniform_real_distribution<double> ls(lo, hi);
    Vec x(m);
    for (int i = 0; i < m; ++i) x(i) = n(g);
    return x / x.norm() * std::exp(ls(g));
}

Integrand random_pieces(std::mt19937_64& rng) {
    std::normal_distribution<double> N;
    std::vector<Mat> M(3, Mat(2, 2));
    for (Mat& x : M) x << N(rng), N(rng), N(rng), N(rng);
    Integrand f = Integrand::from(2, [M](double s) -> Mat {
        int k = std::clamp(static_cast<int>(std::floor(s)), 0, 2);
        return M[k];
    }, 0.0, 3.0);
    f.breaks = {1.0, 2.0};
    return f;
}

LawFamily constant_law(const SymMatrix& B) {
    return LawFamily(ExponentFamily::constant(B), SpectralMeasure::axis(B.dim()));
}

cd ecf(const Mat& X, const Vec& u) {
    Vec a = X * u;
    cd s = 0.0;
    for (int i = 0; i < a.size(); ++i) s += cd(std::cos(a(i)), std::sin(a(i)));
    return s / static_cast<double>(a.size());
}

Mat stack(const std::vector<Vec>& v) {
    Mat m(v.size(), v[0].size());
    for (std::size_t i = 0; i < v.size(); ++i) m.row(i) = v[i].transpose();
    return m;
}

ExponentFamily with_D(ExponentFamily f, std::function<SymMatrix(const Vec&)> D) {
    f.D = std::move(D);
    return f;
}

FieldSpec ex35(const SymMatrix& D) {
    FieldSpec s;
    s.m = 2;
    s.phi = phi_sum_powers({1.0});
    s.family = with_D(ExponentFamily::constant(sym2(1.0, 0.0, 1.5)), [D](const Vec&) { return D; });
    s.sigma = SpectralMeasure::axis(2);
    return s;
}

// m = 1, stable index alpha, constant D
FieldSpec scalar_field(double alpha, double D) {
    FieldSpec s;
    s.phi = phi_sum_powers({1.0});
    s.family = with_D(ExponentFamily::constant(SymMatrix::scalar(1, 1.0 / alpha)),
                      [D](const Vec&) { return SymMatrix::scalar(1, D); });
    s.sigma = SpectralMeasure::axis(1, 0.5);
    return s;
}

LawFamily multistable_law(std::function<double(double)> alpha, double lo, double hi) {
    return LawFamily(ExponentFamily::multi_stable([alpha](const Vec& x) { return alpha(x(0)); }, 1, lo, hi),
                     SpectralMeasure::axis(1, 0.5));
}

struct Ctx {
    double scale;
    std::string work_dir;
};

// ------------------------------------------------------------------ criteria

Criterion polar_homogeneity(const Ctx& c) {
    auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 g(101);
    std::uniform_real_distribution<double> lr(std::log(1e-3), std::log(1e3));
    double worst = 0.0;
    for (int k = 0; k < 10000; ++k) {
        int m = 1 + k % 4;
        SymMatrix D = random_exponent(g, m, 0.5, 2.0);
        Vec x = random_vec(g, m, -3, 3);
        double r = std::exp(lr(g));
        double t = tau(D, x);
        worst = std::max(worst, std::abs(tau(D, matrix_power(D, r) * x) - r * t) / (r * t));
    }
    double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    Criterion r{1, "polar homogeneity", worst <= 1e-8 * c.scale && sec < 10.0,
                "10000 cases, max rel err " + fmt(worst) + " (<= 1e-8), runtime bound 10 s"};
    return r;
}

Criterion envelope(const Ctx&) {
    std::mt19937_64 g(102);
    const double a = 0.5, b = 2.0 - 1e-9;
    int contained = 0;
    const int n = 10000;
    for (int k = 0; k < n; ++k) {
        int m = 1 + k % 4;
        SymMatrix D = random_exponent(g, m, 1.0 / b, 1.0 / a);
        Vec x = random_vec(g, m, -6, 6);
        Envelope e = tau_envelope(D, x, a, b, 1.0);
        double t = tau(D, x);
        if (e.lower <= t && t <= e.upper) ++contained;
    }
    return {2, "envelope containment", contained == n, std::to_string(contained) + "/10000 draws inside"};
}

Criterion cf_closed_forms(const Ctx& c) {
    const double w = 0.8;
    double cauchy = 0.0;
    PointLaw law1(SymMatrix::scalar(1, 1.0), SpectralMeasure::axis(1, w));
    for (double u : {-4.0, -0.5, 0.5, 1.0, 2.0, 4.0})
        cauchy = std::max(cauchy, std::abs(log_cf(law1, Vec::Constant(1, u)) / (-kPi * w * std::abs(u)) - 1.0));
    double spread = 0.0, vs_oracle = 0.0;
    RadialOptions quad;
    quad.allow_closed_form = false;
    for (double alpha : {0.8, 1.5, 1.9}) {
        PointLaw law(SymMatrix::scalar(1, 1.0 / alpha), SpectralMeasure::axis(1, w));
        double K = oracle::K(alpha);
        for (const RadialOptions& ro : {RadialOptions{}, quad}) {
            std::vector<double> ratio;
            for (double u : {0.5, 1.0, 2.0, 4.0})
                ratio.push_back(log_cf(law, Vec::Constant(1, u), ro) / -std::pow(u, alpha));
            for (double q : ratio) {
                spread = std::max(spread, std::abs(q / ratio[0] - 1.0));
                vs_oracle = std::max(vs_oracle, std::abs(q / (2.0 * w * K) - 1.0));
            }
        }
    }
    bool pass = cauchy <= 1e-8 * c.scale && spread <= 1e-7 * c.scale && vs_oracle <= 1e-7 * c.scale;
    return {3, "CF closed forms", pass,
            "alpha=1 rel err " + fmt(cauchy) + " (<= 1e-8); ratio spread " + fmt(spread) + ", vs K oracle " +
                fmt(vs_oracle) + " (<= 1e-7)"};
}

Criterion cf_homogeneity(const Ctx& c) {
    std::mt19937_64 g(104);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    double worst = 0.0;
    const int n = 200;
    for (int k = 0; k < n; ++k) {
        SymMatrix B = rotated(3.0 * U(g), 0.55 + 1.3 * U(g), 0.55 + 1.3 * U(g));
        SpectralMeasure s = SpectralMeasure::planar({kPi * U(g), kPi * U(g)}, {0.2 + U(g), 0.2 + U(g)});
        PointLaw law(B, s);
        Vec u = vec({2 * U(g) - 1, 2 * U(g) - 1});
        double t = std::exp(6 * U(g) - 3);
        double p = log_cf(law, u);
        double pt = log_cf(law, matrix_power(law.eig(), t) * u);
        worst = std::max(worst, std::abs(pt - t * p) / std::abs(t * p));
    }
    return {4, "CF homogeneity", worst <= 1e-7 * c.scale,
            std::to_string(n) + " cases, max rel err " + fmt(worst) + " (<= 1e-7)"};
}

Criterion quasi_norm(const Ctx& c) {
    std::ostringstream d;
    bool pass = true;

    LawFamily law1 = constant_law(SymMatrix::scalar(1, 1.0 / 1.3));
    double zero = norm_M(Integrand::zeros(1), law1, {});
    double ind = norm_M(Integrand::indicator(1, 0.0, 1.0), law1, {});
    pass = pass && zero == 0.0 && std::abs(ind - 1.0) <= 1e-6 * c.scale;

    std::mt19937_64 rng(105);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    double homog = 0.0, hres = 0.0;
    int bracket_bad = 0;
    const int n = 200;
    for (int rep = 0; rep < n; ++rep) {
        SymMatrix B = rotated(6 * U(rng), 0.55 + U(rng), 0.55 + 1.4 * U(rng));
        EigenDecomposition e = eigendecompose(B);
        double a = 1.0 / e.spectrum(1), b = 1.0 / e.spectrum(0);
        LawFamily law = constant_law(B);
        Integrand f = random_pieces(rng);
        double nf = norm_M(f, law, {});
        hres = std::max(hres, std::abs(H(f, law, {}, nf).value - 1.0));
        if (rep % 10 == 0) {
            double gamma = 6 * U(rng) - 3;
            homog = std::max(homog, std::abs(norm_M(f.scaled(gamma), law, {}) / (std::abs(gamma) * nf) - 1.0));
        }
        for (double k : {0.2, 0.7, 1.9, 6.0}) {
            double h = H(f, law, {}, k * nf).value, r = 1.0 / k;
            double lo = std::min(std::pow(r, a), std::pow(r, b)), hi = std::max(std::pow(r, a), std::pow(r, b));
            if (h < lo * (1 - 1e-3 * c.scale) || h > hi * (1 + 1e-3 * c.scale)) ++bracket_bad;
        }
    }
    LawFamily tri = constant_law(rotated(0.5, 0.6, 1.8));
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        Integrand f1 = random_pieces(rng), f2 = random_pieces(rng);
        worst = std::max(worst, norm_M(f1.plus(f2), tri, {}) / (norm_M(f1, tri, {}) + norm_M(f2, tri, {})));
    }
    pass = pass && homog <= 1e-5 * c.scale && hres <= 1e-3 * c.scale && bracket_bad == 0 && worst < 10.0;
    d << "||0|| = " << fmt(zero) << ", indicator " << std::setprecision(10) << ind << ", homogeneity "
      << fmt(homog) << ", |H - 1| " << fmt(hres) << ", bracket misses " << bracket_bad << "/" << 4 * n
      << ", quasi-triangle max " << fmt(worst);
    return {5, "quasi-norm suite", pass, d.str()};
}

Criterion example_212(const Ctx&) {
    ExponentFamily fam;
    fam.m = 2;
    fam.B = [](const Vec& s) { return SymMatrix::diag(vec({1.0 + std::exp(-std::abs(s(0))), 2.0})); };
    fam.declared_a = 0.5;
    fam.declared_b = 1.0;
    LawFamily law(fam, SpectralMeasure::axis(2));
    auto f11 = [](double s) { return std::pow(std::abs(s), -1.5 * (1.0 + std::exp(-std::abs(s)))); };
    Integrand f = Integrand::from(2, [f11](double s) -> Mat {
        Mat r = Mat::Zero(2, 2);
        if (std::abs(s) > 1.0) {
            r(0, 0) = f11(s);
            r(1, 1) = std::pow(std::abs(s), -3.0);
        }
        return r;
    }, -INFINITY, INFINITY, 1.5);
    f.breaks = {-1.0, 1.0};
    Integrand g = Integrand::from(2, [f11](double s) -> Mat {
        return (std::abs(s) > 1.0 ? f11(s) : 0.0) * Mat::Identity(2, 2);
    }, -INFINITY, INFINITY, 1.5);
    g.breaks = {-1.0, 1.0};
    bool df = check_diagonalized(f, law, {}).integrable, dg = check_diagonalized(g, law, {}).integrable;
    bool hf = H(f, law, {}, 1.0).finite, hg = H(g, law, {}, 1.0).finite;
    return {6, "Example 2.12 integrability", df && hf && !dg && !hg,
            std::string("diagonal f: ") + (df ? "integrable" : "not integrable") + " (H " + (hf ? "finite" : "infinite") +
                "); f11 E2: " + (dg ? "integrable" : "not integrable") + " (H " + (hg ? "finite" : "infinite") + ")"};
}

Criterion example_35(const Ctx& c) {
    const double eps = std::sqrt(7.0) / 12.0;
    FieldSpec a = ex35(sym2(0.25, eps, 0.75)), b = ex35(sym2(0.25, 0.0, 0.25));
    ConditionVerdict a1 = check_C1(a), a2 = check_C2(a), b1 = check_C1(b), b2 = check_C2(b);
    double ea = std::max(std::abs(a1.inf_value - (-0.75 - eps)), std::abs(a1.sup_value - (-0.75 + eps)));
    double eb = std::abs(b1.inf_value + 1.25);
    bool pass = a1.pass && !a2.pass && ea <= 1e-12 * c.scale && b2.pass && !b1.pass && eb <= 1e-12 * c.scale &&
                std::abs(b1.lower_bound + 1.0) <= 1e-12 && b1.lower_margin < 0.0;
    std::ostringstream d;
    d << "(a) C1 " << (a1.pass ? "pass" : "fail") << ", C2 " << (a2.pass ? "pass" : "fail") << ", eigenvalue err "
      << fmt(ea) << "; (b) C1 " << (b1.pass ? "pass" : "fail") << ", C2 " << (b2.pass ? "pass" : "fail")
      << ", lambda " << b1.inf_value << " vs bound " << b1.lower_bound;
    return {7, "Example 3.5 conditions", pass, d.str()};
}

Criterion sampler_gof(const Ctx&) {
    auto t0 = std::chrono::steady_clock::now();
    SpectralMeasure sig = SpectralMeasure::planar({0.4, 1.7}, {0.25, 0.25});
    PointLaw law(SymMatrix::diag(vec({0.6, 0.8})), sig);
    // alpha_j = 1 / lambda_j shifted by 0.2
    PointLaw bad(SymMatrix::diag(vec({1.0 / (1.0 / 0.6 + 0.2), 1.0 / (1.0 / 0.8 + 0.2)})), sig);
    Mat X = sample_standard_many(law, 100000, {}, SeedSpec{8}, cli::thread_count());
    double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    auto pts = gof_test_points(2, 50);
    GofReport r = cf_gof(X, [&](const Vec& u) { return log_cf(law, u); }, pts);
    GofReport rb = cf_gof(X, [&](const Vec& u) { return log_cf(bad, u); }, pts);
    return {8, "sampler GoF", r.failures <= 2 && rb.failures >= 10 && sec < 60.0,
            "n=1e5: " + std::to_string(r.failures) + "/50 failing (<= 2); alpha+0.2 control " +
                std::to_string(rb.failures) + "/50 failing (>= 10); runtime bound 60 s"};
}

Criterion independence_scaling(const Ctx& c) {
    const int n = 20000;
    const int threads = cli::thread_count();
    // factorization over two disjoint cells
    LawFamily law(ExponentFamily::constant(rotated(0.9, 0.6, 0.8)), SpectralMeasure::planar({0.1, 1.2}, {0.5, 0.5}));
    CellPartition part = CellPartition::uniform(0.0, 2.0, 2);
    std::vector<Vec> a(n), b(n);
    parallel_for(n, threads, [&](int p) {
        auto inc = draw_increments(law, part, {}, SeedSpec{77}, p);
        a[p] = inc[0];
        b[p] = inc[1];
    });
    Mat A = stack(a), Bm = stack(b), J(n, 4);
    J << A, Bm;
    double tol = 5.0 / std::sqrt(static_cast<double>(n)) * c.scale, worst = 0.0;
    auto pts = gof_test_points(2, 12, 0.3, 2.0);
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        Vec uv(4);
        uv << pts[k], pts[k + 1];
        worst = std::max(worst, std::abs(ecf(J, uv) - ecf(A, pts[k]) * ecf(Bm, pts[k + 1])));
    }
    // mass t sigma against t^B X, and a volume-two cell
    SymMatrix B = rotated(0.5, 0.65, 0.95);
    SpectralMeasure sig = SpectralMeasure::planar({0.3, 1.6}, {0.4, 0.4});
    const double t = 2.5;
    PointLaw base(B, sig), heavy(B, sig.scaled(t));
    Mat Xt = sample_standard_many(heavy, n, {}, SeedSpec{5}, threads);
    Mat Y = sample_standard_many(base, n, {}, SeedSpec{6}, threads) * matrix_power(B, t).transpose();
    auto target = [&](const Vec& u) { return t * log_cf(base, u); };
    const auto gp = gof_test_points(2, 50);
    int f1 = cf_gof(Xt, target, gp).failures, f2 = cf_gof(Y, target, gp).failures;
    std::vector<Vec> big(n);
    PointLaw p0 = law.law_at(0.0);
    parallel_for(n, threads, [&](int i) { big[i] = sample_cell(law, {0.0, 2.0}, {}, SeedSpec{1}, i); });
    int f3 = cf_gof(stack(big), [&](const Vec& u) { return 2.0 * log_cf(p0, u); }, gp).failures;
    bool pass = worst <= tol && f1 <= 2 && f2 <= 2 && f3 <= 2;
    return {9, "independence and scaling", pass,
            "factorization gap " + fmt(worst) + " (<= " + fmt(tol) + "); scaling GoF failures mass " +
                std::to_string(f1) + ", t^B " + std::to_string(f2) + ", volume 2 " + std::to_string(f3) + " (<= 2)"};
}

bool strictly_decreasing_from(const std::vector<double>& d, std::size_t first) {
    for (std::size_t i = std::max<std::size_t>(first, 1); i < d.size(); ++i)
        if (!(d[i] < d[i - 1])) return false;
    return true;
}

Criterion tangent_sweeps(const Ctx& c) {
    auto t0 = std::chrono::steady_clock::now();
    TangentOptions opt;
    opt.threads = cli::thread_count();
    std::ostringstream d;

    // (i) constant exponents, moving average
    FieldSpec cf;
    cf.m = 2;
    cf.phi = phi_sum_powers({1.0});
    cf.family = with_D(ExponentFamily::constant(SymMatrix::diag(vec({1.0, 1.5}))),
                       [](const Vec&) { return SymMatrix::scalar(2, 0.25); });
    cf.sigma = SpectralMeasure::axis(2);
    TangentSpec ts;
    ts.u = 0.5;
    ConvergenceReport r1 = convergence_sweep(cf, ts, 8, opt);
    double m1 = *std::max_element(r1.deviation.begin(), r1.deviation.end());
    bool p1 = m1 <= 2.0 * opt.quad_tol * c.scale && m1 <= 1e-6;

    // (ii) multi-stable d = m = 1, alpha(s) = 1.2 + 0.3 / (1 + s^2), u = 0
    auto smooth = [](double s) { return 1.2 + 0.3 / (1.0 + s * s); };
    LawFamily ms = multistable_law(smooth, 1.2, 1.5);
    MeasureProbe mp{{Integrand::indicator(1, 0.0, 1.0)}, {{vec({0.8})}, {vec({-1.5})}}};
    ConvergenceReport r2 = measure_convergence_sweep(ms, 0.0, mp, 8, opt);
    bool p2 = strictly_decreasing_from(r2.deviation, 2) && r2.deviation.back() < 1e-2 * c.scale;

    // (iii) jump in alpha at u
    LawFamily jump = multistable_law([](double s) { return s < 0.0 ? 1.0 : 1.6; }, 1.0, 1.6);
    MeasureProbe jp{{Integrand::indicator(1, -1.0, 1.0)}, {{vec({0.9})}}};
    ConvergenceReport r3 = measure_convergence_sweep(jump, 0.0, jp, 8, opt);
    double floor3 = *std::min_element(r3.deviation.begin() + r3.deviation.size() / 2, r3.deviation.end());
    bool p3 = floor3 > 1e-1 && !r3.converged();

    // (iv) additive, w = identity, constant B
    FieldSpec add;
    add.m = 2;
    add.flavor = Flavor::indicator;
    add.family = ExponentFamily::constant(SymMatrix::diag(vec({0.7, 0.9})));
    add.sigma = SpectralMeasure::axis(2, 0.5);
    add.w = [](double) { return Mat(Mat::Identity(2, 2)); };
    ts.u = 0.3;
    ConvergenceReport r4 = additive_tangent_check(add, ts, 8, opt);
    double m4 = *std::max_element(r4.deviation.begin(), r4.deviation.end());
    bool p4 = m4 <= 2.0 * opt.quad_tol * c.scale;

    double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    d << "(i) max dev " << fmt(m1) << (p1 ? " ok" : " FAIL") << "; (ii) final dev " << fmt(r2.deviation.back())
      << (p2 ? " decreasing ok" : " FAIL") << "; (iii) floor " << fmt(floor3) << (p3 ? " ok" : " FAIL")
      << "; (iv) max dev " << fmt(m4) << (p4 ? " ok" : " FAIL") << "; runtime bound 300 s";
    return {10, "tangent sweeps", p1 && p2 && p3 && p4 && sec < 300.0, d.str()};
}

Criterion oss_identity(const Ctx& c) {
    FieldSpec s = scalar_field(1.5, 0.4);
    std::mt19937_64 g(111);
    std::uniform_real_distribution<double> lc(std::log(0.25), std::log(4.0));
    std::vector<double> cs;
    for (int i = 0; i < 100; ++i) cs.push_back(std::exp(lc(g)));
    OssReport ok = oss_identity_check(s, 0.0, cs, 1, SeedSpec{11});
    SymMatrix wrong = SymMatrix::scalar(1, 0.6);
    OssReport bad = oss_identity_check(s, 0.0, {cs.begin(), cs.begin() + 10}, 1, SeedSpec{12}, &wrong);
    bool pass = ok.probes == 100 && ok.max_gap <= 1e-6 * c.scale && bad.max_gap > 1e-2;
    return {11, "OSS identity", pass,
            std::to_string(ok.probes) + " probes, max gap " + fmt(ok.max_gap) + " (<= 1e-6); wrong D gap " +
                fmt(bad.max_gap) + " (> 1e-2)"};
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

Criterion determinism(const Ctx& c) {
    namespace fs = std::filesystem;
    fs::path dir = c.work_dir.empty() ? fs::temp_directory_path() / ("opstable-accept-" + std::to_string(getpid()))
                                      : fs::path(c.work_dir);
    fs::create_directories(dir);
    const cli::json doc = cli::json::parse(R"({
        "m": 2,
        "exponent": {"form": "diagonal",
                     "alpha": [{"form": "lorentzian", "c0": 1.2, "c1": 0.3}, 1.6]},
        "D": {"form": "scaled_B", "Delta": {"form": "lorentzian", "c0": 0.3, "c1": 0.4}},
        "spectral": {"form": "axis"},
        "field": {"flavor": "two_sided", "phi": {"form": "sum_powers", "e": [1.0]}},
        "seed": 2024,
        "sample": {"grid": {"lo": -1.0, "hi": 1.0, "n": 16}, "n_paths": 48,
                   "partition": {"pad": 16.0, "cells": 256}}
    })");
    cli::ModelConfig cfg = cli::parse_config(doc);

    const char* prev = std::getenv("OPSTABLE_THREADS");
    std::optional<std::string> saved = prev ? std::optional<std::string>(prev) : std::nullopt;
    std::vector<std::string> bins;
    std::size_t bytes = 0;
    for (int th : {1, 4, 16}) {
        setenv("OPSTABLE_THREADS", std::to_string(th).c_str(), 1);
        cli::Overrides ov;
        ov.out = (dir / ("threads" + std::to_string(th))).string();
        cli::cmd_sample(cfg, ov);
        bins.push_back(read_file(ov.out + ".bin") + read_file(ov.out + ".csv"));
        bytes = read_file(ov.out + ".bin").size();
    }
    if (saved) setenv("OPSTABLE_THREADS", saved->c_str(), 1);
    else unsetenv("OPSTABLE_THREADS");
    if (c.work_dir.empty()) fs::remove_all(dir);
    bool same = bins[0] == bins[1] && bins[0] == bins[2] && bytes == 48u * 16u * 2u * 8u;
    return {12, "determinism", same,
            std::to_string(bytes) + "-byte binary and CSV " + (same ? "identical" : "DIFFER") +
                " under OPSTABLE_THREADS 1, 4, 16"};
}

}  // namespace

std::vector<Criterion> run(const Options& opt, const std::vector<int>& only) {
    using Fn = Criterion (*)(const Ctx&);
    static const Fn all[] = {polar_homogeneity, envelope,         cf_closed_forms,      cf_homogeneity,
                             quasi_norm,        example_212,      example_35,           sampler_gof,
                             independence_scaling, tangent_sweeps, oss_identity,        determinism};
    Ctx ctx{opt.tol_scale, opt.work_dir};
    std::vector<Criterion> out;
    for (int id = 1; id <= 12; ++id) {
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        auto t0 = std::chrono::steady_clock::now();
        Criterion c;
        try {
            c = all[id - 1](ctx);
        } catch (const std::exception& e) {
            c = {id, "criterion " + std::to_string(id), false, std::string("error: ") + e.what()};
        }
        c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.push_back(c);
    }
    return out;
}

int print(const std::vector<Criterion>& results, std::ostream& out, bool with_time) {
    bool all = true;
    for (const Criterion& c : results) {
        out << (c.pass ? "PASS" : "FAIL") << "  " << std::setw(2) << c.id << "  " << std::left << std::setw(28)
            << c.name << std::right << "  " << c.detail;
        if (with_time) out << "  [" << std::fixed << std::setprecision(1) << c.seconds << " s]" << std::defaultfloat;
        out << "\n";
        all = all && c.pass;
    }
    out << (all ? "all criteria pass" : "some criteria FAIL") << "\n";
    return all ? 0 : 2;
}

}  // namespace opstable::acceptance
