#pragma once

#include "opstable/linalg.hpp"

#include <utility>
#include <vector>

namespace opstable {

struct Atom {
    Vec theta;  // unit vector
    double weight = 0.0;
};

// Finite symmetric atomic measure on the unit sphere with full linear span.
class SpectralMeasure {
public:
    SpectralMeasure() = default;
    // With symmetrize = true an atom without a mirror is split into (theta, w/2)
    // and (-theta, w/2) and was_symmetrized() reports it. Otherwise asymmetric
    // input is rejected.
    explicit SpectralMeasure(std::vector<Atom> atoms, bool symmetrize = true);

    // Unit atoms at +-e_j with weight w each.
    static SpectralMeasure axis(int m, double w = 1.0);
    // Atoms +-(cos phi_k, sin phi_k) with weight w_k each.
    static SpectralMeasure planar(const std::vector<double>& angles, const std::vector<double>& weights);

    int dim() const { return dim_; }
    const std::vector<Atom>& atoms() const { return atoms_; }
    // One representative per mirror pair carrying the weight of both atoms.
    const std::vector<Atom>& pairs() const { return pairs_; }
    double total_mass() const { return mass_; }
    bool was_symmetrized() const { return symmetrized_; }
    SpectralMeasure scaled(double t) const;

private:
    int dim_ = 0;
    std::vector<Atom> atoms_;
    std::vector<Atom> pairs_;
    double mass_ = 0.0;
    bool symmetrized_ = false;
};

// The law mu_s attached to one location: exponent B_s and spectral measure.
class PointLaw {
public:
    PointLaw() = default;
    PointLaw(const SymMatrix& B, SpectralMeasure sigma);

    const SymMatrix& B() const { return B_; }
    const EigenDecomposition& eig() const { return eig_; }
    const SpectralMeasure& sigma() const { return sigma_; }
    int dim() const { return B_.dim(); }

private:
    SymMatrix B_;
    EigenDecomposition eig_;
    SpectralMeasure sigma_;
};

// K(alpha) = alpha * int_0^inf (1 - cos v) v^{-1-alpha} dv = Gamma(1-alpha) cos(pi alpha / 2),
// continued to pi/2 at alpha = 1.
double stable_K(double alpha);

struct RadialOptions {
    bool allow_closed_form = true;  // single active eigen-mode reduces exactly
    double rel_tol = 1e-11;
};

// int_0^inf (cos <r^B theta, u> - 1) r^{-2} dr
double radial_cf_term(const EigenDecomposition& B, const Vec& theta, const Vec& u,
                      const RadialOptions& opt = {});
double radial_cf_term(const SymMatrix& B, const Vec& theta, const Vec& u,
                      const RadialOptions& opt = {});

// psi_s(u) = sum_k w_k radial(B_s, theta_k, u)
double log_cf(const PointLaw& law, const Vec& u, const RadialOptions& opt = {});
// Same without building a PointLaw; B must satisfy the PointLaw bounds.
double log_cf(const EigenDecomposition& B, const SpectralMeasure& sigma, const Vec& u,
              const RadialOptions& opt = {});

// c(s) = int min{1, |x|^2} phi(s, dx)
double concentration_c(const PointLaw& law);

// (1 / c(s), psi_s(u) / c(s))
std::pair<double, double> normalized_pair(const PointLaw& law, const Vec& u);

struct PsiBounds {
    double K1 = 0.0;
    double K2 = 0.0;
};

// min and max of |psi_s| over deterministic samples of the ring rho1 <= |u| <= rho2.
PsiBounds psi_bounds_check(const PointLaw& law, double rho1, double rho2, int samples);

// Deterministic well-spread unit vectors in R^m (m = 1: {1, -1}).
std::vector<Vec> sphere_points(int m, int n);

}  // namespace opstable
