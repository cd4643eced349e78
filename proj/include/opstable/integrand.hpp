#pragma once

#include "opstable/levy_cf.hpp"
#include "opstable/linalg.hpp"
#include "opstable/quadrature.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace opstable {

// s -> f(s), an m x m matrix on the real line, for one fixed t.
// eval(base, off) returns f(base + off); see LineFn for why the split matters.
struct Integrand {
    int m = 1;
    std::function<Mat(double base, double off)> eval;
    double lo = -INFINITY;  // f vanishes outside [lo, hi]
    double hi = INFINITY;
    std::vector<double> singular;  // null set where f may blow up
    std::vector<double> breaks;
    // ||f(s)|| <= C |s|^{-p} for large |s|. Required for unbounded support.
    double tail_exponent_hint = NAN;
    // Decay |s|^{-p} of the cube sup in H itself, when known sharper than
    // a * tail_exponent_hint.
    double H_tail_hint = NAN;
    bool exact_offsets = false;
    bool zero = false;

    Mat operator()(double s) const { return eval(s, 0.0); }

    static Integrand zeros(int m);
    // c(s) * identity on s in [lo, hi]
    static Integrand scalar(int m, std::function<double(double)> c, double lo, double hi);
    static Integrand indicator(int m, double lo, double hi);
    // Plain f(s); offsets are added before the call.
    static Integrand from(int m, std::function<Mat(double)> f, double lo, double hi,
                          double tail_hint = NAN);

    Integrand scaled(double gamma) const;
    Integrand plus(const Integrand& g) const;
};

using IntegrandFamily = std::function<Integrand(double t)>;

struct BaseMeasure {
    std::function<double(double)> weight;  // empty: Lebesgue
    double operator()(double s) const { return weight ? weight(s) : 1.0; }
};

// (B(s), sigma) over the line.
class LawFamily {
public:
    LawFamily() = default;
    LawFamily(ExponentFamily fam, SpectralMeasure sigma);

    int dim() const { return fam_.m; }
    const ExponentFamily& family() const { return fam_; }
    const SpectralMeasure& sigma() const { return sigma_; }
    // Checked against the PointLaw bounds on first use per location.
    EigenDecomposition eig_at(double s) const;
    PointLaw law_at(double s) const;
    bool constant() const { return fam_.constant_B; }

private:
    ExponentFamily fam_;
    SpectralMeasure sigma_;
    EigenDecomposition const_eig_;
};

struct CubeSup {
    double value = 0.0;
    double upper = 0.0;  // equal to value: the vertex maximum is exact
};

// sup of tau_B(F^T u) over |u|_inf <= 1/lambda.
CubeSup cube_sup_tau(const EigenDecomposition& B, const Mat& F, double lambda);
CubeSup cube_sup_tau(const PointLaw& law, const Mat& F, double lambda);

struct IntegralCheck {
    bool finite = true;
    double value = 0.0;
    double error = 0.0;
};

struct HOptions {
    double rel_tol = 1e-8;
};

// H(f, lambda) = int sup_{|u|_inf <= 1/lambda} tau_s(f(s)^T u) nu(ds); +inf tagged.
IntegralCheck H(const Integrand& f, const LawFamily& law, const BaseMeasure& base, double lambda,
                const HOptions& opt = {});

// inf{lambda > 0 : H(f, lambda) <= 1}
double norm_M(const Integrand& f, const LawFamily& law, const BaseMeasure& base);

// int |f|^a + |f|^b nu(ds) < inf
IntegralCheck check_Fab(const Integrand& f, const BaseMeasure& base, double a, double b);

struct DiagonalReport {
    bool integrable = true;
    std::vector<IntegralCheck> columns;
};

// Column j of g(s) = f(s) O(s)^T, O^T the eigenbasis of B(s), tested with
// exponent 1 / lambda_j(B(s)).
DiagonalReport check_diagonalized(const Integrand& f, const LawFamily& law, const BaseMeasure& base);

// int psi_s(sum_j f_j(s)^T theta_j) nu(ds)
struct JointOptions {
    double rel_tol = 1e-9;
    RadialOptions radial;
};
double joint_log_cf(const std::vector<Integrand>& fs, const std::vector<Vec>& theta, const LawFamily& law,
                    const BaseMeasure& base, const JointOptions& opt = {});
// int psi_{loc(s)}(sum_j f_j(s)^T theta_j) ds, the law read at loc(s) instead of s.
double joint_log_cf_at(const std::vector<Integrand>& fs, const std::vector<Vec>& theta, const LawFamily& law,
                       const std::function<double(double)>& loc, const JointOptions& opt = {});

// Quadrature setup shared by the spatial integrals: union of supports and
// knots, tail hint min_j p_j times `power`. With use_H_hint the per-integrand
// H_tail_hint replaces p_j * power where present.
LineOptions line_options(const std::vector<const Integrand*>& fs, double power, double rel_tol,
                         bool use_H_hint = false);

}  // namespace opstable
