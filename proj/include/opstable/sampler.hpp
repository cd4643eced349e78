#pragma once

#include "opstable/integrand.hpp"
#include "opstable/levy_cf.hpp"
#include "opstable/rng.hpp"

#include <functional>
#include <string>
#include <vector>

namespace opstable {

enum class SeriesTail {
    gaussian,  // conditional Gaussian with the covariance of the dropped terms
    truncate,  // drop the terms beyond N
};

struct SeriesOptions {
    int n_terms = 0;  // 0: smallest N >= 16 meeting tail_tol
    SeriesTail tail = SeriesTail::gaussian;
    // Bound on the fourth cumulant of the dropped terms, per unit volume.
    double tail_tol = 1e-4;
    int max_terms = 1 << 20;
};

// LePage series for the law with Levy measure volume * phi, phi the
// operator-stable Levy measure of (B, sigma). A draw is
//   volume^B sum_{i<=N} (Gamma_i / mass)^{-B} theta_i  (+ Gaussian tail term)
// with Gamma_i unit-rate arrival times and theta_i ~ sigma / mass.
class SeriesSampler {
public:
    SeriesSampler(const EigenDecomposition& B, const SpectralMeasure& sigma, const SeriesOptions& opt = {},
                  double volume = 1.0);
    SeriesSampler(const PointLaw& law, const SeriesOptions& opt = {}, double volume = 1.0);

    int n_terms() const { return n_; }
    // Trace of the covariance of the dropped terms at Gamma_N = N.
    double dropped_variance() const { return dropped_var_; }
    Vec draw(CounterRng& rng) const;

private:
    int m_ = 0;
    int n_ = 0;
    double mass_ = 0.0;
    double volume_ = 1.0;
    SeriesTail tail_ = SeriesTail::gaussian;
    Vec lam_;
    Mat V_;
    std::vector<Vec> coords_;  // atoms in the eigenbasis
    std::vector<double> cum_;  // cumulative atom weights / mass
    Mat tail_factor_;          // L with L L^T = sum_k w_k a a^T / (lam_i + lam_j - 1)
    double dropped_var_ = 0.0;
};

Vec sample_standard(const PointLaw& law, const SeriesOptions& opt, SeedSpec seed, std::uint64_t stream = 0);
// n draws as rows; draw i uses stream i, so the result does not depend on threads.
Mat sample_standard_many(const PointLaw& law, int n, const SeriesOptions& opt, SeedSpec seed, int threads = 1);

struct Cell {
    double center = 0.0;
    double volume = 0.0;
};

struct CellPartition {
    std::vector<Cell> cells;
    double lo = 0.0;
    double hi = 0.0;

    // n equal cells on [lo, hi]
    static CellPartition uniform(double lo, double hi, int n);
};

// M(A) for one cell, B frozen at the center.
Vec sample_cell(const LawFamily& law, const Cell& cell, const SeriesOptions& opt, SeedSpec seed,
                std::uint64_t stream = 0);

// Independent increments M(A_i) of one realization; cell i of path p uses
// the stream combine_key(p, i).
std::vector<Vec> draw_increments(const LawFamily& law, const CellPartition& part, const SeriesOptions& opt,
                                 SeedSpec seed, std::uint64_t path);

struct IntegrateResult {
    Vec value;
    double missing_mass = 0.0;  // H(f 1_{outside}, 1)
    std::string warning;
};

// f restricted to [lo, hi]
Integrand restricted(const Integrand& f, double lo, double hi);
// H(f 1_{R \ [lo, hi]}, 1)
double coverage_gap(const Integrand& f, const LawFamily& law, double lo, double hi);

// sum_i f(center_i) M(A_i)
Vec integrate(const Integrand& f, const CellPartition& part, const std::vector<Vec>& increments);
IntegrateResult integrate(const Integrand& f, const CellPartition& part, const LawFamily& law,
                          const SeriesOptions& opt, SeedSpec seed, std::uint64_t path = 0,
                          bool check_coverage = true);

struct FieldSample {
    std::vector<double> grid;
    int n_paths = 0;
    int m = 0;
    std::vector<double> values;  // [path][t_index][component]
    // provenance
    SeedSpec seed;
    CellPartition partition;
    SeriesOptions series;
    double missing_mass = 0.0;
    std::string warning;

    double at(int path, int k, int c) const {
        return values[(static_cast<std::size_t>(path) * grid.size() + k) * m + c];
    }
};

// X(t_k) = sum_i kernel(t_k)(center_i) M(A_i) with one ISRM realization per path.
FieldSample sample_field(const IntegrandFamily& kernel, const std::vector<double>& grid, int n_paths,
                         const CellPartition& part, const LawFamily& law, const SeriesOptions& opt, SeedSpec seed,
                         int threads = 1, bool check_coverage = true);

struct GofPoint {
    Vec u;
    double re_gap = 0.0;
    double im_gap = 0.0;
    bool pass = true;
};

struct GofReport {
    int n = 0;
    double threshold = 0.0;
    int failures = 0;
    std::vector<GofPoint> points;
};

// |empirical CF - exp(log_cf(u))| per part against 3.5 / sqrt(n).
GofReport cf_gof(const Mat& sample, const std::function<double(const Vec&)>& log_cf_theoretical,
                 const std::vector<Vec>& test_points, double threshold_scale = 3.5);

// Quasi-random points with rmin <= |u| <= rmax.
std::vector<Vec> gof_test_points(int m, int count, double rmin = 0.25, double rmax = 2.5);

// Runs fn(i) for i in [0, n) on `threads` workers; fn must write only to slot i.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace opstable
