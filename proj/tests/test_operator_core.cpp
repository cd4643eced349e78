#include "doctest.h"
#include "opstable/errors.hpp"
#include "opstable/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace opstable;

namespace {

Mat random_sym(std::mt19937_64& g, int m) {
    std::normal_distribution<double> n;
    Mat a(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) a(i, j) = n(g);
    return 0.5 * (a + a.transpose());
}

Mat random_spd(std::mt19937_64& g, int m, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Mat q = Eigen::HouseholderQR<Mat>(random_sym(g, m)).householderQ();
    Vec d(m);
    for (int i = 0; i < m; ++i) d(i) = u(g);
    Mat r = q * d.asDiagonal() * q.transpose();
    return 0.5 * (r + r.transpose());
}

}  // namespace

TEST_CASE("eigendecompose diagonal and identity") {
    EigenDecomposition e = eigendecompose(SymMatrix::diag(Vec::LinSpaced(2, 1, 2)));
    CHECK((e.basis - Mat::Identity(2, 2)).norm() == 0.0);
    CHECK(e.spectrum(0) == 1.0);
    CHECK(e.spectrum(1) == 2.0);
    EigenDecomposition i3 = eigendecompose(SymMatrix::identity(3));
    for (int j = 0; j < 3; ++j) CHECK(i3.spectrum(j) == 1.0);
}

TEST_CASE("eigendecompose D - qB of the mixed example") {
    const double eps = std::sqrt(7.0) / 12.0;
    Mat B(2, 2), D(2, 2);
    B << 1.0, 0.0, 0.0, 1.5;
    D << 0.25, eps, eps, 0.75;
    EigenDecomposition e = eigendecompose(SymMatrix(D - B));
    CHECK(std::abs(e.spectrum(0) - (-0.75 - eps)) <= 1e-12);
    CHECK(std::abs(e.spectrum(1) - (-0.75 + eps)) <= 1e-12);
}

TEST_CASE("eigendecompose rejects asymmetric input") {
    Mat a(2, 2);
    a << 1.0, 0.1, 0.0, 1.0;
    CHECK_THROWS_AS(SymMatrix{a}, DomainError);
    try {
        SymMatrix s(a);
    } catch (const DomainError& ex) {
        CHECK(std::string(ex.what()).find("asymmetry") != std::string::npos);
    }
    Mat b(2, 2);
    b << 1.0, 0.3, 0.3 + 1e-14, 1.0;
    SymMatrix s(b);
    CHECK(s(0, 1) == s(1, 0));
}

TEST_CASE("eigendecompose reconstruction, orthogonality, determinism") {
    std::mt19937_64 g(7);
    for (int trial = 0; trial < 200; ++trial) {
        int m = 1 + trial % 6;
        Mat a = random_sym(g, m);
        SymMatrix s(a);
        EigenDecomposition e = eigendecompose(s);
        CHECK((e.basis * e.basis.transpose() - Mat::Identity(m, m)).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((e.basis * e.spectrum.asDiagonal() * e.basis.transpose() - a).cwiseAbs().maxCoeff() <= 1e-10);
        for (int j = 1; j < m; ++j) CHECK(e.spectrum(j - 1) <= e.spectrum(j));
        EigenDecomposition e2 = eigendecompose(s);
        CHECK((e.basis - e2.basis).norm() == 0.0);
        CHECK((e.spectrum - e2.spectrum).norm() == 0.0);
    }
}

TEST_CASE("matrix_power basics") {
    Mat p = matrix_power(SymMatrix::diag(Vec::LinSpaced(2, 1, 2)), 3.0);
    CHECK(std::abs(p(0, 0) - 3.0) <= 1e-14);
    CHECK(std::abs(p(1, 1) - 9.0) <= 1e-13);
    CHECK(std::abs(p(0, 1)) <= 1e-15);
    std::mt19937_64 g(11);
    SymMatrix any(random_sym(g, 3));
    CHECK((matrix_power(any, 1.0) - Mat::Identity(3, 3)).norm() == 0.0);
    CHECK_THROWS_AS(matrix_power(any, 0.0), DomainError);
    CHECK_THROWS_AS(matrix_power(any, -1.0), DomainError);
}

TEST_CASE("matrix_power group property and spectral mapping") {
    std::mt19937_64 g(3);
    std::uniform_real_distribution<double> lr(-3.0, 3.0);
    for (int trial = 0; trial < 200; ++trial) {
        int m = 1 + trial % 4;
        SymMatrix s(random_spd(g, m, -1.5, 1.5));
        double r = std::exp(lr(g)), t = std::exp(lr(g));
        Mat lhs = matrix_power(s, r * t);
        Mat rhs = matrix_power(s, r) * matrix_power(s, t);
        CHECK((lhs - rhs).norm() <= 1e-9 * lhs.norm());
        CHECK((matrix_power(s, r) * matrix_power(s, 1.0 / r) - Mat::Identity(m, m)).norm() <= 1e-10 * std::exp(10.0));
        EigenDecomposition e = eigendecompose(s);
        EigenDecomposition ep = eigendecompose(SymMatrix(lhs));
        std::vector<double> want;
        for (int j = 0; j < m; ++j) want.push_back(std::pow(r * t, e.spectrum(j)));
        std::sort(want.begin(), want.end());
        for (int j = 0; j < m; ++j)
            CHECK(std::abs(ep.spectrum(j) - want[j]) <= 1e-9 * std::max(1.0, want.back()));
    }
}

TEST_CASE("spectral_bounds") {
    ExponentFamily f = ExponentFamily::constant(SymMatrix::scalar(2, 1.0 / 1.5));
    std::vector<Vec> probes;
    for (int i = -10; i <= 10; ++i) probes.push_back(Vec::Constant(1, i));
    SpectralBounds sb = spectral_bounds(f, probes);
    CHECK(std::abs(sb.a_hat - 1.5) <= 1e-14);
    CHECK(std::abs(sb.b_hat - 1.5) <= 1e-14);
    CHECK_FALSE(sb.outside_declared);
    CHECK_FALSE(sb.outside_range);

    ExponentFamily ex;
    ex.d = 1;
    ex.m = 2;
    ex.B = [](const Vec& s) {
        Vec d(2);
        d << 1.0 + std::exp(-std::abs(s(0))), 2.0;
        return SymMatrix::diag(d);
    };
    ex.declared_a = 0.5;
    ex.declared_b = 1.0;
    sb = spectral_bounds(ex, probes);
    CHECK(sb.a_hat == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(sb.b_hat == doctest::Approx(1.0).epsilon(1e-4));
    CHECK_FALSE(sb.outside_declared);

    ExponentFamily bad = ExponentFamily::constant(SymMatrix::diag(Vec::LinSpaced(2, 0.4, 1.0)));
    CHECK_THROWS_WITH_AS(spectral_bounds(bad, probes), doctest::Contains("spectral bound violation"), DomainError);
    CHECK_THROWS_AS(spectral_bounds(f, {}), DomainError);
}

TEST_CASE("commute_check") {
    const double eps = std::sqrt(7.0) / 12.0;
    Mat B(2, 2), D(2, 2);
    B << 1.0, 0.0, 0.0, 1.5;
    D << 0.25, eps, eps, 0.75;
    CHECK_FALSE(commute_check(SymMatrix(B), SymMatrix(D), 1e-12));
    std::mt19937_64 g(5);
    SymMatrix r(random_sym(g, 2));
    CHECK(commute_check(r, SymMatrix::identity(2), 1e-12));
    CHECK(commute_check(SymMatrix::diag(Vec::LinSpaced(2, 1, 3)), SymMatrix::diag(Vec::LinSpaced(2, 5, -1)), 0.0));
    CHECK_THROWS_AS(commute_check(r, SymMatrix::identity(3), 1e-12), DomainError);
}
