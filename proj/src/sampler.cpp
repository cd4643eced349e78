#include "opstable/sampler.hpp"
#include "opstable/errors.hpp"

#include <algorithm>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <thread>

namespace opstable {

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(threads);
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (int i = w * n / threads; i < (w + 1) * n / threads; ++i) fn(i);
            } catch (...) {
                errs[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
}

// ------------------------------------------------------------ series sampler

SeriesSampler::SeriesSampler(const EigenDecomposition& B, const SpectralMeasure& sigma, const SeriesOptions& opt,
                             double volume)
    : m_(static_cast<int>(B.spectrum.size())), volume_(volume), tail_(opt.tail), lam_(B.spectrum), V_(B.basis) {
    if (sigma.dim() != m_) throw DomainError("sampler: spectral measure dimension mismatch");
    if (!(volume > 0.0)) throw DomainError("sampler: cell volume must be positive");
    if (m_ > 16) throw DomainError("sampler: dimension above 16 not supported");
    const double lmin = lam_(0);
    if (lmin <= 0.5) throw DomainError("spectral bound violation: eigenvalue <= 1/2, series not square-summable");
    mass_ = sigma.total_mass();

    double acc = 0.0;
    for (const Atom& a : sigma.atoms()) {
        coords_.push_back(V_.transpose() * a.theta);
        acc += a.weight;
        cum_.push_back(acc / mass_);
    }
    cum_.back() = 1.0;

    Mat C0 = Mat::Zero(m_, m_);
    for (const Atom& a : sigma.pairs()) {
        Vec y = V_.transpose() * a.theta;
        for (int i = 0; i < m_; ++i)
            for (int j = 0; j < m_; ++j) C0(i, j) += a.weight * y(i) * y(j) / (lam_(i) + lam_(j) - 1.0);
    }
    EigenDecomposition c = eigendecompose(SymMatrix(0.5 * (C0 + C0.transpose())));
    tail_factor_ = c.basis * c.spectrum.cwiseMax(0.0).cwiseSqrt().asDiagonal();

    if (opt.n_terms > 0) {
        n_ = opt.n_terms;
    } else {
        // Fourth cumulant of the dropped part, mass (N / mass)^{1 - 4 lmin} / (4 lmin - 1),
        // after scaling by volume^B, against tail_tol * volume.
        const double k = 4.0 * lmin - 1.0;
        double vs = std::max(std::pow(volume, 4.0 * lmin), std::pow(volume, 4.0 * lam_(m_ - 1)));
        double need = mass_ * std::pow(vs * mass_ / (k * opt.tail_tol * volume), 1.0 / k);
        n_ = static_cast<int>(std::min<double>(opt.max_terms, std::max(16.0, std::ceil(need))));
    }
    const double x0 = n_ / mass_;
    for (int i = 0; i < m_; ++i)
        dropped_var_ += C0(i, i) * std::pow(x0, 1.0 - 2.0 * lam_(i)) * std::pow(volume, 2.0 * lam_(i));
}

SeriesSampler::SeriesSampler(const PointLaw& law, const SeriesOptions& opt, double volume)
    : SeriesSampler(law.eig(), law.sigma(), opt, volume) {}

Vec SeriesSampler::draw(CounterRng& rng) const {
    double y[16] = {0.0};
    double G = 0.0;
    for (int i = 0; i < n_; ++i) {
        G += rng.exponential();
        const double lx = std::log(G / mass_);
        const double u = rng.uniform();
        std::size_t k = std::upper_bound(cum_.begin(), cum_.end(), u) - cum_.begin();
        if (k >= coords_.size()) k = coords_.size() - 1;
        const Vec& a = coords_[k];
        for (int j = 0; j < m_; ++j) y[j] += std::exp(-lam_(j) * lx) * a(j);
    }
    if (tail_ == SeriesTail::gaussian) {
        const double lx0 = std::log(G / mass_);
        double z[16];
        for (int j = 0; j < m_; ++j) z[j] = rng.normal();
        for (int i = 0; i < m_; ++i) {
            double s = 0.0;
            for (int j = 0; j < m_; ++j) s += tail_factor_(i, j) * z[j];
            y[i] += std::exp((0.5 - lam_(i)) * lx0) * s;
        }
    }
    Vec e(m_);
    for (int j = 0; j < m_; ++j) e(j) = y[j] * std::pow(volume_, lam_(j));
    return V_ * e;
}

Vec sample_standard(const PointLaw& law, const SeriesOptions& opt, SeedSpec seed, std::uint64_t stream) {
    SeriesSampler s(law, opt);
    CounterRng rng(seed, stream);
    return s.draw(rng);
}

Mat sample_standard_many(const PointLaw& law, int n, const SeriesOptions& opt, SeedSpec seed, int threads) {
    if (n < 0) throw DomainError("sample_standard_many: negative count");
    SeriesSampler s(law, opt);
    Mat out(n, law.dim());
    parallel_for(n, threads, [&](int i) {
        CounterRng rng(seed, static_cast<std::uint64_t>(i));
        out.row(i) = s.draw(rng).transpose();
    });
    return out;
}

// --------------------------------------------------------------------- cells

CellPartition CellPartition::uniform(double lo, double hi, int n) {
    if (!(hi > lo) || n < 1) throw DomainError("cell partition: need lo < hi and n >= 1");
    CellPartition p;
    p.lo = lo;
    p.hi = hi;
    const double h = (hi - lo) / n;
    for (int i = 0; i < n; ++i) p.cells.push_back({lo + (i + 0.5) * h, h});
    return p;
}

Vec sample_cell(const LawFamily& law, const Cell& cell, const SeriesOptions& opt, SeedSpec seed,
                std::uint64_t stream) {
    SeriesSampler s(law.eig_at(cell.center), law.sigma(), opt, cell.volume);
    CounterRng rng(seed, stream);
    return s.draw(rng);
}

namespace {

// One sampler per cell; constant exponents share one per distinct volume.
std::vector<const SeriesSampler*> cell_samplers(const LawFamily& law, const CellPartition& part,
                                                const SeriesOptions& opt, std::vector<SeriesSampler>& store,
                                                int threads) {
    const std::size_t nc = part.cells.size();
    std::vector<const SeriesSampler*> out(nc, nullptr);
    if (law.constant()) {
        std::map<double, std::size_t> index;
        for (const Cell& c : part.cells)
            if (index.emplace(c.volume, store.size()).second)
                store.emplace_back(law.eig_at(c.center), law.sigma(), opt, c.volume);
        for (std::size_t i = 0; i < nc; ++i) out[i] = &store[index.at(part.cells[i].volume)];
        return out;
    }
    std::vector<std::optional<SeriesSampler>> built(nc);
    parallel_for(static_cast<int>(nc), threads, [&](int i) {
        const Cell& c = part.cells[i];
        built[i].emplace(law.eig_at(c.center), law.sigma(), opt, c.volume);
    });
    store.reserve(nc);
    for (auto& b : built) store.push_back(std::move(*b));
    for (std::size_t i = 0; i < nc; ++i) out[i] = &store[i];
    return out;
}

std::vector<Vec> draw_with(const std::vector<const SeriesSampler*>& samplers, SeedSpec seed, std::uint64_t path) {
    std::vector<Vec> out;
    out.reserve(samplers.size());
    for (std::size_t i = 0; i < samplers.size(); ++i) {
        CounterRng rng(seed, combine_key(path, i));
        out.push_back(samplers[i]->draw(rng));
    }
    return out;
}

}  // namespace

std::vector<Vec> draw_increments(const LawFamily& law, const CellPartition& part, const SeriesOptions& opt,
                                 SeedSpec seed, std::uint64_t path) {
    std::vector<SeriesSampler> store;
    return draw_with(cell_samplers(law, part, opt, store, 1), seed, path);
}

// ----------------------------------------------------------------- integrals

Integrand restricted(const Integrand& f, double lo, double hi) {
    Integrand g = f;
    g.lo = std::max(f.lo, lo);
    g.hi = std::min(f.hi, hi);
    if (!(g.lo < g.hi) || f.zero) return Integrand::zeros(f.m);
    return g;
}

double coverage_gap(const Integrand& f, const LawFamily& law, double lo, double hi) {
    Integrand out = restricted(f, -INFINITY, lo).plus(restricted(f, hi, INFINITY));
    if (out.zero) return 0.0;
    IntegralCheck h = H(out, law, {}, 1.0);
    return h.value;
}

Vec integrate(const Integrand& f, const CellPartition& part, const std::vector<Vec>& increments) {
    if (increments.size() != part.cells.size()) throw DomainError("integrate: one increment per cell required");
    Vec s = Vec::Zero(f.m);
    if (f.zero) return s;
    for (std::size_t i = 0; i < part.cells.size(); ++i) {
        double c = part.cells[i].center;
        if (c < f.lo || c > f.hi) continue;
        s.noalias() += f(c) * increments[i];
    }
    return s;
}

namespace {

std::string coverage_warning(double gap) {
    std::ostringstream os;
    os << "coverage deficiency: partition misses mass of the integrand, H(f 1_outside, 1) = " << gap;
    return os.str();
}

}  // namespace

IntegrateResult integrate(const Integrand& f, const CellPartition& part, const LawFamily& law,
                          const SeriesOptions& opt, SeedSpec seed, std::uint64_t path, bool check_coverage) {
    IntegrateResult r;
    r.value = integrate(f, part, draw_increments(law, part, opt, seed, path));
    if (check_coverage && !f.zero && (f.lo < part.lo || f.hi > part.hi)) {
        r.missing_mass = coverage_gap(f, law, part.lo, part.hi);
        if (r.missing_mass > 1e-3) r.warning = coverage_warning(r.missing_mass);
    }
    return r;
}

FieldSample sample_field(const IntegrandFamily& kernel, const std::vector<double>& grid, int n_paths,
                         const CellPartition& part, const LawFamily& law, const SeriesOptions& opt, SeedSpec seed,
                         int threads, bool check_coverage) {
    if (n_paths < 0) throw DomainError("sample_field: negative path count");
    const int m = law.dim();
    const std::size_t nc = part.cells.size(), nt = grid.size();
    FieldSample out;
    out.grid = grid;
    out.n_paths = n_paths;
    out.m = m;
    out.seed = seed;
    out.partition = part;
    out.series = opt;
    out.values.assign(static_cast<std::size_t>(n_paths) * nt * m, 0.0);

    // Kernel matrices per (t, cell); empty marks a vanishing entry.
    std::vector<std::vector<Mat>> K(nt, std::vector<Mat>(nc));
    std::vector<Integrand> fs;
    for (std::size_t k = 0; k < nt; ++k) {
        fs.push_back(kernel(grid[k]));
        const Integrand& f = fs.back();
        if (f.zero) continue;
        for (std::size_t i = 0; i < nc; ++i) {
            double c = part.cells[i].center;
            if (c < f.lo || c > f.hi) continue;
            Mat F = f(c);
            if (F.cwiseAbs().maxCoeff() != 0.0) K[k][i] = F;
        }
    }
    if (check_coverage && nt > 0) {
        std::size_t kmax = 0;
        for (std::size_t k = 1; k < nt; ++k)
            if (std::abs(grid[k]) > std::abs(grid[kmax])) kmax = k;
        const Integrand& f = fs[kmax];
        if (!f.zero && (f.lo < part.lo || f.hi > part.hi)) {
            out.missing_mass = coverage_gap(f, law, part.lo, part.hi);
            if (out.missing_mass > 1e-3) out.warning = coverage_warning(out.missing_mass);
        }
    }

    std::vector<SeriesSampler> store;
    auto samplers = cell_samplers(law, part, opt, store, threads);
    parallel_for(n_paths, threads, [&](int p) {
        std::vector<Vec> inc = draw_with(samplers, seed, static_cast<std::uint64_t>(p));
        for (std::size_t k = 0; k < nt; ++k) {
            Vec x = Vec::Zero(m);
            for (std::size_t i = 0; i < nc; ++i)
                if (K[k][i].size()) x.noalias() += K[k][i] * inc[i];
            for (int c = 0; c < m; ++c) out.values[(static_cast<std::size_t>(p) * nt + k) * m + c] = x(c);
        }
    });
    return out;
}

// ----------------------------------------------------------------------- GoF

GofReport cf_gof(const Mat& sample, const std::function<double(const Vec&)>& log_cf_theoretical,
                 const std::vector<Vec>& test_points, double threshold_scale) {
    const int n = static_cast<int>(sample.rows());
    if (n < 100) throw DomainError("cf_gof: need at least 100 draws");
    GofReport r;
    r.n = n;
    r.threshold = threshold_scale / std::sqrt(static_cast<double>(n));
    for (const Vec& u : test_points) {
        if (u.size() != sample.cols()) throw DomainError("cf_gof: test point dimension mismatch");
        Vec arg = sample * u;
        double re = 0.0, im = 0.0;
        for (int i = 0; i < n; ++i) {
            re += std::cos(arg(i));
            im += std::sin(arg(i));
        }
        re /= n;
        im /= n;
        GofPoint g;
        g.u = u;
        g.re_gap = std::abs(re - std::exp(log_cf_theoretical(u)));
        g.im_gap = std::abs(im);
        g.pass = g.re_gap <= r.threshold && g.im_gap <= r.threshold;
        if (!g.pass) ++r.failures;
        r.points.push_back(g);
    }
    return r;
}

std::vector<Vec> gof_test_points(int m, int count, double rmin, double rmax) {
    if (m < 1 || count < 0 || !(0.0 < rmin && rmin <= rmax)) throw DomainError("gof_test_points: bad arguments");
    std::vector<Vec> dirs;
    if (m > 2) dirs = sphere_points(m, count);
    std::vector<Vec> out;
    for (int i = 0; i < count; ++i) {
        double r = rmin + (rmax - rmin) * radical_inverse(i + 1, 2);
        Vec u(m);
        if (m == 1) {
            u(0) = (i % 2 == 0 ? r : -r);
        } else if (m == 2) {
            double phi = 2.0 * std::numbers::pi * radical_inverse(i + 1, 3);
            u << r * std::cos(phi), r * std::sin(phi);
        } else {
            u = r * dirs[i];
        }
        out.push_back(u);
    }
    return out;
}

}  // namespace opstable
