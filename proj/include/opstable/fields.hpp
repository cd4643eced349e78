#pragma once

#include "opstable/integrand.hpp"
#include "opstable/levy_cf.hpp"
#include "opstable/linalg.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace opstable {

// phi with phi(r^E x) = r phi(x).
struct HomogeneousFn {
    SymMatrix E;
    double q = 0.0;  // trace E
    double beta = 1.0;
    std::function<double(const Vec&)> eval;
    double m_phi = 0.0;  // min / max of phi on the tau_E unit sphere
    double M_phi = 0.0;
    bool positive = true;  // phi(x) > 0 for x != 0
    std::string name;

    int dim() const { return E.dim(); }
    double operator()(const Vec& x) const { return eval(x); }
};

// Fills q and the sphere extrema of a user phi.
HomogeneousFn make_homogeneous(const SymMatrix& E, double beta, std::function<double(const Vec&)> phi,
                               std::string name, bool positive = true);

// x -> sum_j |x_j|^{1/e_j}, E = diag(e), beta = 1. Needs e_j >= 1.
HomogeneousFn phi_sum_powers(const std::vector<double>& e);

// (x)_+ on the line. Homogeneous and Lipschitz but zero on x < 0, so it is
// built with positive = false.
HomogeneousFn phi_positive_part();

// Points on the tau_E unit sphere.
std::vector<Vec> tau_sphere_points(const SymMatrix& E, int n);

struct AdmissibilityProbe {
    double C = 0.0;  // max |phi(x + y) - phi(y)| / tau_E(x)^beta
    int pairs = 0;
    double A = 0.0;
    double B = 0.0;
    bool positive = true;
};

// Samples tau_E(x) <= 1 and A <= |y| <= B. A finite C is consistent with
// admissibility, not a proof of it.
AdmissibilityProbe admissibility_probe(const HomogeneousFn& phi, int n_pairs, double A = 0.5, double B = 2.0,
                                       std::uint64_t seed = 1);

enum class Flavor {
    two_sided,  // phi(t - s)^{D - qB} - phi(-s)^{D - qB}
    one_sided,  // (t - s)_+^{D - B} - (-s)_+^{D - B}, d = 1
    indicator,  // 1_{[0, t]} w, d = 1
};

struct FieldSpec {
    int d = 1;
    int m = 1;
    HomogeneousFn phi;      // one-sided and indicator flavors ignore it
    ExponentFamily family;  // B, and D for the moving-average flavors
    SpectralMeasure sigma;
    Flavor flavor = Flavor::two_sided;
    std::function<Mat(double)> w;  // indicator flavor
    // B and D are declared constant for |s|_inf > constant_radius.
    double constant_radius = INFINITY;

    const SymMatrix& E() const { return phi.E; }
    double q() const { return phi.q; }
};

// Dyadic grid {0, +-2^k : |k| <= 10}^d (axes and diagonals for d >= 3) plus
// 1000 Halton points in [-2^10, 2^10]^d, clipped to twice the constant radius.
std::vector<Vec> probe_set(const FieldSpec& spec);

struct ConditionVerdict {
    std::string name;
    bool pass = false;
    // inf lambda and sup Lambda of the tested matrix over the probes
    double inf_value = NAN;
    double sup_value = NAN;
    // required open interval
    double lower_bound = NAN;
    double upper_bound = NAN;
    double lower_margin = NAN;
    double upper_margin = NAN;
    bool commute = true;
    double commute_residual = 0.0;
    double a = NAN;
    double b = NAN;
    int probes = 0;
    std::string detail;
};

// Two-sided conditions on D - qB, resp. D with BD = DB.
ConditionVerdict check_C1(const FieldSpec& spec);
ConditionVerdict check_C2(const FieldSpec& spec);
// One-sided versions with q = beta = 1, and the continuity condition.
ConditionVerdict check_C1p(const FieldSpec& spec);
ConditionVerdict check_C2p(const FieldSpec& spec);
ConditionVerdict check_cont(const FieldSpec& spec);

// A(s) and gamma of the active condition. C2 wins when both hold.
struct ActiveBranch {
    std::string condition;
    double gamma = 0.0;
    double rho1 = NAN;  // inf lambda_A
    double rho2 = NAN;  // sup Lambda_A
    double a = NAN;
    double b = NAN;
    double q = 1.0;
    double beta = 1.0;
    std::function<SymMatrix(const Vec&)> A;
    std::vector<ConditionVerdict> verdicts;
};

// Throws DomainError("condition verdict failed: ...") when no condition holds.
ActiveBranch resolve_branch(const FieldSpec& spec);

// f(t, .) of the spec's flavor. The moving-average flavors need d = 1 here.
Integrand ma_integrand(const FieldSpec& spec, double t);
Integrand oneside_integrand(const FieldSpec& spec, double t);
// sign(t) 1_{[min(0,t), max(0,t)]} w. Throws DomainError on w B != B w.
Integrand indicator_integrand(const FieldSpec& spec, double t);
Integrand field_integrand(const FieldSpec& spec, double t);
// Resolves the conditions once.
IntegrandFamily field_kernel(const FieldSpec& spec);

// Quasi-triangle constant of tau_E: tau(x + y) <= C4 (tau(x) + tau(y)).
double quasi_triangle_constant(const SymMatrix& E);

double majorant_h(const FieldSpec& spec, double eta, double zeta, const Vec& t, const Vec& s);
double majorant_h(const ActiveBranch& br, const FieldSpec& spec, double eta, double zeta, const Vec& t,
                  const Vec& s);
// Same with t - s passed in, for s too close to t to form the difference.
double majorant_h(const ActiveBranch& br, const FieldSpec& spec, double eta, double zeta, const Vec& t,
                  const Vec& s, const Vec& t_minus_s);

// C6 with |phi(x + y) - 1| <= C6 tau(x)^beta for tau(x) <= 1, phi(y) = 1.
double sphere_lipschitz_constant(const HomogeneousFn& phi, int n_pairs = 4000, std::uint64_t seed = 7);

// Smallest dyadic eta with phi(s)^{-1} tau(t) < 1, C6 tau(t)^beta phi(-s)^{-beta} < 1/2
// and phi(-s) > 1 whenever tau(s) > eta.
double choose_eta(const FieldSpec& spec, const Vec& t, double C6);

struct HolderReport {
    double xi_hat = NAN;     // fitted slope of log |f(t1) - f(t2)|_M on log |t1 - t2|
    double threshold = NAN;  // d / a
    double xi_theory = NAN;  // (a rho1 + 1) / b, one-sided flavor
    bool certificate = false;
    std::string verdict;
    std::vector<std::pair<double, double>> points;  // (log dt, log norm)
};

HolderReport holder_check(const FieldSpec& spec, double K, const std::vector<std::pair<double, double>>& t_pairs);
// (t0, t0 + 2^{-k}) for k in [kmin, kmax]
std::vector<std::pair<double, double>> dyadic_pairs(double t0, int kmin, int kmax);

// |det(D(s) - qB(s))| > 1e-12 somewhere on the probes. With D and B
// continuous this holds on a set of positive volume.
bool fullness_flag(const FieldSpec& spec, const std::vector<Vec>& probes);
bool fullness_flag(const FieldSpec& spec);

struct FieldReport {
    std::vector<ConditionVerdict> verdicts;
    std::string active;  // empty when no condition holds
    bool full = false;
    AdmissibilityProbe admissibility;
};

FieldReport field_report(const FieldSpec& spec);

}  // namespace opstable
