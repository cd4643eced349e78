#pragma once

#include "opstable/fields.hpp"
#include "opstable/integrand.hpp"
#include "opstable/levy_cf.hpp"
#include "opstable/rng.hpp"
#include "opstable/sampler.hpp"

#include <string>
#include <utility>
#include <vector>

namespace opstable {

// One finite-dimensional probe: times t_j with dual vectors theta_j.
struct FddProbe {
    std::vector<double> t;
    std::vector<Vec> theta;
};

// Two times on dyadic rays, theta on the unit sphere.
std::vector<FddProbe> default_probes(int m);

// Localisation point and probes. The spatial dimension is 1 here.
struct TangentSpec {
    double u = 0.0;
    std::vector<FddProbe> probes;  // empty: default_probes
};

struct TangentOptions {
    double quad_tol = 1e-8;   // deviations below 2 quad_tol count as exact
    double final_tol = 1e-2;  // required final deviation for varying exponents
    int threads = 1;
};

// Freezes B (and D) at u.
ExponentFamily frozen_family(const ExponentFamily& fam, double u);
FieldSpec frozen_spec(const FieldSpec& spec, double u);

// ---------------------------------------------------------------- measure level

// True when f_j(s1) B(s2) = B(s2) f_j(s1) may be skipped: m = 1 or B scalar on the probes.
bool commutation_waived(const ExponentFamily& fam, double u);
// max ||f(s1) B(s2) - B(s2) f(s1)|| over support points s1 and locations s2 near u.
double commutation_residual(const std::vector<Integrand>& fs, const ExponentFamily& fam, double u);

// log E exp(i sum_j <theta_j, r^{-B(u)} int f_j((s - u) / r) M(ds)>) for compactly
// supported f_j, after the substitution s -> u + r s. Throws DomainError on a
// commutation failure without waiver.
double rescaled_measure_logcf(const LawFamily& law, double u, const std::vector<Integrand>& fs,
                              const std::vector<Vec>& theta, double r, const TangentOptions& opt = {});
// Same with the law frozen at u.
double limit_logcf(const LawFamily& law, double u, const std::vector<Integrand>& fs,
                   const std::vector<Vec>& theta, const TangentOptions& opt = {});

// ------------------------------------------------------------------ field level

// log-CF of (r^{-D(u)} (X(u + r^E t_j) - X(u)))_j for the two-sided flavor,
// integrated in the form psi_{u + r^E s}(sum_j g_j(s) v(r, s) theta_j) with
// v(r, s) = r^{D(u + r^E s)} r^{-D(u)}. Throws DomainError when C2 fails.
double rescaled_field_logcf(const FieldSpec& spec, double u, const FddProbe& probe, double r,
                            const TangentOptions& opt = {});
// The same quantity integrated in the original variable, for cross-checks.
double rescaled_field_logcf_raw(const FieldSpec& spec, double u, const FddProbe& probe, double r,
                                const TangentOptions& opt = {});
// Moving-average field with D and B frozen at u; t_j = 0 contributes nothing.
double limit_field_logcf(const FieldSpec& spec, double u, const FddProbe& probe, const TangentOptions& opt = {});

struct OssReport {
    double max_gap = 0.0;  // relative log-CF gap
    double threshold = 1e-6;
    int probes = 0;
    bool pass = true;
};

// Compares the limit log-CF at (c^E t_j, theta_j) with that at (t_j, (c^{D(u)})^T theta_j)
// over random two-point probes. D_override replaces D(u) in the identity only.
OssReport oss_identity_check(const FieldSpec& spec, double u, const std::vector<double>& c_values, int n_random,
                             SeedSpec seed, const SymMatrix* D_override = nullptr, const TangentOptions& opt = {});

// ------------------------------------------------------------------ hypotheses

struct HypothesisReport {
    std::vector<double> r;
    // sup over s in [-2, 2] of ||r^{B(u + r s)} r^{-B(u)} - I||
    std::vector<double> chi_sup;
    bool chi_to_identity = false;
    // sup over s in [-2, 2] of ||v(r, s) - I||, and sup of ||v(r, s)|| over |s| <= 2^10
    // together with s = +-2^j / r^E
    bool has_D = false;
    std::vector<double> v_dev_sup;
    std::vector<double> v_norm_sup;
    bool v_to_identity = false;
    bool v_bounded = false;
    // |alpha(u + s) - alpha(u)| |ln |s|| at s = 2^{-k}, both sides
    bool scalar_B = false;
    std::vector<std::pair<double, double>> alpha_ratio;
    std::string alpha_trend;
    bool scalar_D = false;
    std::vector<std::pair<double, double>> delta_ratio;
    std::string delta_trend;
    // ||v(r, s)|| <= C tau(s)^{a eps / b} for |s| >= 1, eps = (beta - rho2) / 2;
    // evaluated only when v is not uniformly bounded.
    bool relaxed_checked = false;
    bool relaxed_holds = false;
    double relaxed_constant = NAN;
    std::vector<std::string> flags;
};

// D is taken from fam when present; E is the 1 x 1 time scaling (identity for measures).
HypothesisReport check_limit_hypotheses(const ExponentFamily& fam, double u, int k_max = 24, double E = 1.0,
                                        double beta = 1.0);
HypothesisReport check_limit_hypotheses(const FieldSpec& spec, double u, int k_max = 24);

// "vanishing", "diverging", "bounded" or "inconclusive" for a sequence indexed toward the limit.
std::string classify_trend(const std::vector<double>& v);

// -------------------------------------------------------------------- sweeps

struct ConvergenceReport {
    std::string level;  // measure, field or additive
    double u = 0.0;
    std::vector<double> r;          // 2^{-k}, k = 1..k_max
    std::vector<double> deviation;  // max over probes of |rescaled - limit| / max(1, |limit|)
    std::vector<double> limit_values;
    bool constant_exponents = false;
    double quad_tol = 0.0;
    double final_tol = 0.0;
    bool limit_full = false;  // psi_bounds_check of the frozen law, K1 > 0
    HypothesisReport hypotheses;
    std::string verdict;  // converges, non-convergent or inconclusive
    std::vector<std::string> notes;

    bool converged() const { return verdict == "converges"; }
};

// Shared verdict rule for a finished ladder.
std::string sweep_verdict(const std::vector<double>& dev, bool constant_exponents, double quad_tol,
                          double final_tol);

ConvergenceReport convergence_sweep(const FieldSpec& spec, const TangentSpec& ts, int k_max,
                                    const TangentOptions& opt = {});

struct MeasureProbe {
    std::vector<Integrand> fs;
    std::vector<std::vector<Vec>> thetas;  // one theta list per probe
};

ConvergenceReport measure_convergence_sweep(const LawFamily& law, double u, const MeasureProbe& probe, int k_max,
                                            const TangentOptions& opt = {});

// Y(t) = int 1_{[0, t]} w dM: r^{-B(u)} (Y(u + r t) - Y(u)) against w(u) M_u([0, t]).
// Throws DomainError on w B != B w.
double rescaled_additive_logcf(const FieldSpec& spec, double u, const FddProbe& probe, double r,
                               const TangentOptions& opt = {});
double limit_additive_logcf(const FieldSpec& spec, double u, const FddProbe& probe, const TangentOptions& opt = {});
ConvergenceReport additive_tangent_check(const FieldSpec& spec, const TangentSpec& ts, int k_max,
                                         const TangentOptions& opt = {});

// ------------------------------------------------------------------ Monte Carlo

struct McCompareReport {
    int n = 0;
    double r = 0.0;
    double threshold = 0.0;  // 3.5 sqrt(2 / n)
    double max_distance = 0.0;
    int failures = 0;
    bool pass = true;
    int cells = 0;
};

struct McOptions {
    int cells_per_segment = 8;  // rescaled side; the limit side is exact with one cell
    int test_points = 24;
    SeriesOptions series;
    int threads = 1;
};

// Indicator flavor: samples r^{-B(u)} (Y(u + r t_j) - Y(u))_j and (w(u) M_u([0, t_j]))_j
// independently and compares empirical CFs.
McCompareReport mc_tangent_compare(const FieldSpec& spec, double u, const std::vector<double>& t, double r,
                                   int n_paths, SeedSpec seed, const McOptions& opt = {});
// Two-sample CF distance of row samples, max over test points of the real and imaginary gaps.
McCompareReport two_sample_cf(const Mat& x, const Mat& y, const std::vector<Vec>& test_points);

// Draws of the two sides as rows (m * t.size() columns); r = 0 gives the limit side.
Mat sample_additive_tangent(const FieldSpec& spec, double u, const std::vector<double>& t, double r, int n_paths,
                            SeedSpec seed, const McOptions& opt = {});

std::string report_json(const ConvergenceReport& rep, int indent = 2);
std::string report_json(const HypothesisReport& rep, int indent = 2);

}  // namespace opstable
