#include "opstable/linalg.hpp"
#include "opstable/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace opstable {

double max_asymmetry(const Mat& m) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = i + 1; j < m.cols(); ++j)
            worst = std::max(worst, std::abs(m(i, j) - m(j, i)));
    return worst;
}

SymMatrix::SymMatrix(const Mat& m) {
    if (m.rows() != m.cols() || m.rows() < 1)
        throw DomainError("symmetric matrix must be square with dim >= 1");
    if (!m.allFinite()) throw DomainError("matrix has non-finite entries");
    double asym = max_asymmetry(m);
    if (asym > 1e-12) {
        std::ostringstream os;
        os << "matrix is not symmetric (max asymmetry " << asym << ")";
        throw DomainError(os.str());
    }
    m_ = 0.5 * (m + m.transpose());
}

SymMatrix SymMatrix::identity(int m) { return SymMatrix(Mat::Identity(m, m)); }
SymMatrix SymMatrix::scalar(int m, double c) { return SymMatrix(c * Mat::Identity(m, m)); }
SymMatrix SymMatrix::diag(const Vec& d) { return SymMatrix(Mat(d.asDiagonal())); }

EigenDecomposition eigendecompose(const SymMatrix& sm) {
    const int n = sm.dim();
    Mat a = sm.mat();
    Mat v = Mat::Identity(n, n);

    // Cyclic sweeps until the off-diagonal mass is negligible.
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0, diag = 0.0;
        for (int i = 0; i < n; ++i) {
            diag += a(i, i) * a(i, i);
            for (int j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        }
        if (off == 0.0 || off <= 1e-34 * diag) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = a(p, q);
                if (apq == 0.0) continue;
                double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < n; ++k) {
                    double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = a(q, p) = 0.0;
                for (int k = 0; k < n; ++k) {
                    double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            if (std::abs(v(i, j)) > 1e-14) {
                if (v(i, j) < 0) v.col(j) *= -1.0;
                break;
            }
        }
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
        if (a(x, x) != a(y, y)) return a(x, x) < a(y, y);
        for (int i = 0; i < n; ++i)
            if (v(i, x) != v(i, y)) return v(i, x) > v(i, y);
        return false;
    });

    EigenDecomposition out;
    out.basis.resize(n, n);
    out.spectrum.resize(n);
    for (int j = 0; j < n; ++j) {
        out.basis.col(j) = v.col(order[j]);
        out.spectrum(j) = a(order[j], order[j]);
    }
    return out;
}

Mat matrix_power(const EigenDecomposition& e, double r) {
    if (!(r > 0.0)) throw DomainError("matrix_power requires r > 0");
    const double lr = std::log(r);
    Vec p = (lr * e.spectrum.array()).exp();
    return e.basis * p.asDiagonal() * e.basis.transpose();
}

Mat matrix_power(const SymMatrix& m, double r) {
    if (!(r > 0.0)) throw DomainError("matrix_power requires r > 0");
    if (r == 1.0) return Mat::Identity(m.dim(), m.dim());
    return matrix_power(eigendecompose(m), r);
}

double op_norm(const Mat& m) {
    if (m.size() == 0) return 0.0;
    if (m.rows() == 1 || m.cols() == 1) return m.norm();
    Mat g = m.transpose() * m;
    EigenDecomposition e = eigendecompose(SymMatrix(0.5 * (g + g.transpose())));
    return std::sqrt(std::max(0.0, e.spectrum(e.spectrum.size() - 1)));
}

bool commute_check(const SymMatrix& a, const SymMatrix& b, double tol) {
    if (a.dim() != b.dim()) throw DomainError("commute_check: dimension mismatch");
    Mat c = a.mat() * b.mat() - b.mat() * a.mat();
    return c.cwiseAbs().maxCoeff() <= tol;
}

ExponentFamily ExponentFamily::constant(const SymMatrix& B, int d) {
    ExponentFamily f;
    f.d = d;
    f.m = B.dim();
    f.B = [B](const Vec&) { return B; };
    EigenDecomposition e = eigendecompose(B);
    f.declared_a = 1.0 / e.spectrum(e.spectrum.size() - 1);
    f.declared_b = 1.0 / e.spectrum(0);
    f.constant_B = true;
    return f;
}

ExponentFamily ExponentFamily::multi_stable(std::function<double(const Vec&)> alpha, int m,
                                            double alpha_min, double alpha_max, int d) {
    ExponentFamily f;
    f.d = d;
    f.m = m;
    f.B = [alpha, m](const Vec& s) { return SymMatrix::scalar(m, 1.0 / alpha(s)); };
    f.declared_a = alpha_min;
    f.declared_b = alpha_max;
    return f;
}

SpectralBounds spectral_bounds(const ExponentFamily& fam, const std::vector<Vec>& probes) {
    if (probes.empty()) throw DomainError("spectral_bounds: empty probe set");
    SpectralBounds sb;
    sb.a_hat = INFINITY;
    sb.b_hat = 0.0;
    for (const Vec& s : probes) {
        EigenDecomposition e = eigendecompose(fam.B(s));
        double lo = e.spectrum(0), hi = e.spectrum(e.spectrum.size() - 1);
        if (lo <= 0.5) {
            std::ostringstream os;
            os << "spectral bound violation: eigenvalue " << lo << " <= 1/2 at s=" << s.transpose();
            throw DomainError(os.str());
        }
        sb.a_hat = std::min(sb.a_hat, 1.0 / hi);
        sb.b_hat = std::max(sb.b_hat, 1.0 / lo);
    }
    const double slack = 1e-12;
    sb.outside_range = !(sb.a_hat > 0.0 && sb.b_hat < 2.0);
    if (fam.declared_a > 0.0 && fam.declared_b > 0.0)
        sb.outside_declared = sb.a_hat < fam.declared_a * (1 - slack) ||
                              sb.b_hat > fam.declared_b * (1 + slack);
    return sb;
}

}  // namespace opstable
