#pragma once

#include "opstable/linalg.hpp"

namespace opstable {

struct PolarPoint {
    double tau = 0.0;
    Vec direction;
};

// tau_D(x): the unique r with |r^{-D} x| = 1.
double tau(const SymMatrix& D, const Vec& x);
double tau(const EigenDecomposition& e, const Vec& x);
// Same, with y = O^T x already rotated into the eigenbasis.
double tau_eigen(const Vec& spectrum, const double* y);

PolarPoint polar(const SymMatrix& D, const Vec& x);

struct Envelope {
    double lower = 0.0;
    double upper = 0.0;
};

// Two-sided bound  C3 min{|x|^a,|x|^b} <= tau_D(x) <= C4 max{|x|^a,|x|^b}.
// For symmetric D and the Euclidean norm the chain |r^D| <= C0 |r^D|_1 ...
// holds with C0 = C1(r0) = C2(r0) = 1, so C3 = C4 = 1 for every r0 > 0.
// Requires 1/b <= lambda_D and Lambda_D <= 1/a.
Envelope tau_envelope(const SymMatrix& D, const Vec& x, double a, double b, double r0 = 1.0);

// The sharper bracket [min, max] of |x|^{1/Lambda}, |x|^{1/lambda}.
Envelope tau_bracket(const Vec& spectrum, double norm_x);

}  // namespace opstable
