#include "doctest.h"
#include "opstable/errors.hpp"
#include "opstable/quadrature.hpp"

#include <cmath>
#include <numbers>

using namespace opstable;

TEST_CASE("finite smooth integral") {
    LineOptions o;
    o.lo = 0.0;
    o.hi = std::numbers::pi;
    QuadResult q = integrate_line([](double b, double x) { return std::sin(b + x); }, o);
    CHECK(q.value == doctest::Approx(2.0).epsilon(1e-12));
    CHECK_FALSE(q.divergent);
}

TEST_CASE("integrable endpoint singularity") {
    LineOptions o;
    o.lo = 0.0;
    o.hi = 1.0;
    o.singular = {0.0};
    QuadResult q = integrate_line([](double b, double x) { return std::pow(b + x, -0.7); }, o);
    CHECK(q.value == doctest::Approx(1.0 / 0.3).epsilon(1e-9));
}

TEST_CASE("interior singularity with exact offsets") {
    LineOptions o;
    o.lo = 0.0;
    o.hi = 3.0;
    o.singular = {1.0};
    o.exact_offsets = true;
    // |s - 1|^{-1/2} formed from the offset directly
    QuadResult q = integrate_line([](double b, double x) { return b == 1.0 ? std::pow(std::abs(x), -0.5) : std::pow(std::abs(b + x - 1.0), -0.5); }, o);
    CHECK(q.value == doctest::Approx(2.0 + 2.0 * std::sqrt(2.0)).epsilon(1e-9));
}

TEST_CASE("power-law tails converge and diverge") {
    LineOptions o;
    o.tail_exponent_hint = 1.5;
    QuadResult q = integrate_line([](double b, double x) { return std::pow(1.0 + std::abs(b + x), -1.5); }, o);
    CHECK(q.value == doctest::Approx(4.0).epsilon(1e-8));
    o.tail_exponent_hint = 0.75;
    QuadResult d = integrate_line([](double b, double x) { return std::pow(1.0 + std::abs(b + x), -0.75); }, o);
    CHECK(d.divergent);
    CHECK(std::isinf(d.value));
}

TEST_CASE("non-integrable singularity is reported divergent") {
    LineOptions o;
    o.lo = 0.0;
    o.hi = 1.0;
    o.singular = {0.0};
    QuadResult d = integrate_line([](double b, double x) { return 1.0 / (b + x); }, o);
    CHECK(d.divergent);
}

TEST_CASE("unbounded domain needs a certificate") {
    LineOptions o;
    CHECK_THROWS_WITH_AS(integrate_line([](double, double) { return 0.0; }, o),
                         doctest::Contains("cannot certify tail"), NumericalError);
    o.require_tail_certificate = false;
    QuadResult q = integrate_line([](double b, double x) { return std::exp(-(b + x) * (b + x)); }, o);
    CHECK(q.value == doctest::Approx(std::sqrt(std::numbers::pi)).epsilon(1e-10));
}

TEST_CASE("Wynn epsilon accelerates an alternating series") {
    WynnEpsilon w;
    double s = 0.0;
    for (int k = 1; k <= 20; ++k) {
        s += ((k % 2) ? 1.0 : -1.0) / k;
        w.push(s);
    }
    CHECK(std::abs(w.estimate() - std::log(2.0)) <= 1e-12);
    CHECK(w.error() <= 1e-10);
}
