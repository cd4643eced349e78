#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace opstable {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Symmetric matrix. Inputs with asymmetry up to 1e-12 are symmetrized,
// anything worse is rejected.
class SymMatrix {
public:
    SymMatrix() = default;
    explicit SymMatrix(const Mat& m);

    static SymMatrix identity(int m);
    static SymMatrix scalar(int m, double c);
    static SymMatrix diag(const Vec& d);

    int dim() const { return static_cast<int>(m_.rows()); }
    const Mat& mat() const { return m_; }
    double operator()(int i, int j) const { return m_(i, j); }

private:
    Mat m_;
};

double max_asymmetry(const Mat& m);

struct EigenDecomposition {
    Mat basis;     // orthonormal columns
    Vec spectrum;  // ascending
};

// Cyclic Jacobi. Columns are sign-normalised so the first nonzero entry is
// positive; equal eigenvalues are ordered lexicographically by column.
EigenDecomposition eigendecompose(const SymMatrix& m);

// r^M = exp(ln r * M) = O diag(r^lambda) O^T.
Mat matrix_power(const SymMatrix& m, double r);
Mat matrix_power(const EigenDecomposition& e, double r);

// Spectral norm of a general matrix.
double op_norm(const Mat& m);

bool commute_check(const SymMatrix& a, const SymMatrix& b, double tol);

// s in R^d  ->  B(s) (and optionally D(s)) in the symmetric m x m matrices.
struct ExponentFamily {
    int d = 1;
    int m = 1;
    std::function<SymMatrix(const Vec&)> B;
    std::function<SymMatrix(const Vec&)> D;  // empty when absent
    double declared_a = 0.0;
    double declared_b = 0.0;
    bool constant_B = false;

    bool has_D() const { return static_cast<bool>(D); }

    static ExponentFamily constant(const SymMatrix& B, int d = 1);
    // B(s) = alpha(s)^{-1} * identity
    static ExponentFamily multi_stable(std::function<double(const Vec&)> alpha, int m,
                                       double alpha_min, double alpha_max, int d = 1);
};

struct SpectralBounds {
    double a_hat = 0.0;
    double b_hat = 0.0;
    bool outside_declared = false;
    bool outside_range = false;
};

// a_hat = min over probes of 1/Lambda(s), b_hat = max over probes of 1/lambda(s).
// Throws DomainError("spectral bound violation") if some eigenvalue is <= 1/2.
SpectralBounds spectral_bounds(const ExponentFamily& fam, const std::vector<Vec>& probes);

}  // namespace opstable
