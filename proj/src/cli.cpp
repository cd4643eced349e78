#include "opstable/cli.hpp"

#include "opstable/integrand.hpp"
#include "opstable/levy_cf.hpp"
#include "opstable/linalg.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace opstable::cli {

namespace {

// ------------------------------------------------------------ config reading

class Node {
public:
    Node(const json& j, std::string path) : j_(&j), path_(std::move(path)) {}

    const json& raw() const { return *j_; }
    const std::string& path() const { return path_; }

    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(path_ + ": " + msg); }

    bool has(const char* k) const { return j_->is_object() && j_->contains(k); }
    Node at(const char* k) const {
        object();
        if (!j_->contains(k)) Node(*j_, path_ + "." + k).fail("missing");
        return Node((*j_)[k], path_ + "." + k);
    }
    Node at(std::size_t i) const { return Node((*j_)[i], path_ + "[" + std::to_string(i) + "]"); }
    std::size_t size() const {
        array();
        return j_->size();
    }

    void object() const {
        if (!j_->is_object()) fail("expected an object");
    }
    void array() const {
        if (!j_->is_array()) fail("expected an array");
    }
    void allow(std::initializer_list<const char*> keys) const {
        object();
        for (auto it = j_->begin(); it != j_->end(); ++it) {
            bool ok = false;
            for (const char* k : keys) ok = ok || it.key() == k;
            if (!ok) Node(it.value(), path_ + "." + it.key()).fail("unknown field");
        }
    }

    double num() const {
        if (!j_->is_number()) fail("expected a number");
        double v = j_->get<double>();
        if (!std::isfinite(v)) fail("expected a finite number");
        return v;
    }
    int integer() const {
        if (!j_->is_number_integer()) fail("expected an integer");
        auto v = j_->get<long long>();
        if (v < -(1LL << 30) || v > (1LL << 30)) fail("integer out of range");
        return static_cast<int>(v);
    }
    std::uint64_t u64() const {
        if (j_->is_number_unsigned()) return j_->get<std::uint64_t>();
        if (j_->is_number_integer() && j_->get<long long>() >= 0) return static_cast<std::uint64_t>(j_->get<long long>());
        fail("expected a non-negative integer");
    }
    std::string str() const {
        if (!j_->is_string()) fail("expected a string");
        return j_->get<std::string>();
    }
    bool boolean() const {
        if (!j_->is_boolean()) fail("expected true or false");
        return j_->get<bool>();
    }
    double num(const char* k, double def) const { return has(k) ? at(k).num() : def; }
    int integer(const char* k, int def) const { return has(k) ? at(k).integer() : def; }
    std::string str(const char* k, const std::string& def) const { return has(k) ? at(k).str() : def; }

    std::vector<double> numbers() const {
        std::vector<double> v;
        for (std::size_t i = 0; i < size(); ++i) v.push_back(at(i).num());
        return v;
    }
    Vec vec(int dim) const {
        std::vector<double> v = numbers();
        if (static_cast<int>(v.size()) != dim) fail("expected " + std::to_string(dim) + " entries");
        return Eigen::Map<Vec>(v.data(), dim);
    }
    SymMatrix matrix(int m) const {
        if (static_cast<int>(size()) != m) fail("expected " + std::to_string(m) + " rows");
        Mat a(m, m);
        for (int i = 0; i < m; ++i) a.row(i) = at(i).vec(m).transpose();
        try {
            return SymMatrix(a);
        } catch (const DomainError& e) {
            fail(e.what());
        }
    }

private:
    const json* j_;
    std::string path_;
};

// Scalar function of s with known range [lo, hi].
struct ScalarFn {
    std::function<double(const Vec&)> f;
    double lo = 0.0;
    double hi = 0.0;
    bool constant = false;
};

std::pair<double, double> span(double c0, double c1) { return {std::min(c0, c0 + c1), std::max(c0, c0 + c1)}; }

ScalarFn scalar_fn(const Node& n) {
    if (n.raw().is_number()) {
        double c = n.num();
        return {[c](const Vec&) { return c; }, c, c, true};
    }
    n.object();
    std::string form = n.at("form").str();
    ScalarFn r;
    if (form == "constant") {
        n.allow({"form", "value"});
        double c = n.at("value").num();
        return {[c](const Vec&) { return c; }, c, c, true};
    }
    if (form == "lorentzian" || form == "gaussian" || form == "exp_decay") {
        n.allow({"form", "c0", "c1", "width"});
        double c0 = n.at("c0").num(), c1 = n.at("c1").num(), w = n.num("width", 1.0);
        if (!(w > 0.0)) n.at("width").fail("must be positive");
        if (form == "lorentzian")
            r.f = [=](const Vec& s) { return c0 + c1 / (1.0 + s.squaredNorm() / (w * w)); };
        else if (form == "gaussian")
            r.f = [=](const Vec& s) { return c0 + c1 * std::exp(-s.squaredNorm() / (w * w)); };
        else
            r.f = [=](const Vec& s) { return c0 + c1 * std::exp(-s.norm() / w); };
        std::tie(r.lo, r.hi) = span(c0, c1);
        r.constant = c1 == 0.0;
        return r;
    }
    if (form == "step") {
        n.allow({"form", "left", "right", "at"});
        double a = n.at("left").num(), b = n.at("right").num(), at = n.num("at", 0.0);
        r.f = [=](const Vec& s) { return s(0) < at ? a : b; };
        r.lo = std::min(a, b);
        r.hi = std::max(a, b);
        r.constant = a == b;
        return r;
    }
    if (form == "sine") {
        n.allow({"form", "c0", "c1", "freq", "phase"});
        double c0 = n.at("c0").num(), c1 = n.at("c1").num(), k = n.num("freq", 1.0), ph = n.num("phase", 0.0);
        r.f = [=](const Vec& s) { return c0 + c1 * std::sin(k * s(0) + ph); };
        r.lo = c0 - std::abs(c1);
        r.hi = c0 + std::abs(c1);
        r.constant = c1 == 0.0 || k == 0.0;
        return r;
    }
    n.at("form").fail("unknown function form '" + form + "'");
}

std::vector<ScalarFn> scalar_fns(const Node& n, int m) {
    if (static_cast<int>(n.size()) != m) n.fail("expected " + std::to_string(m) + " functions");
    std::vector<ScalarFn> v;
    for (int i = 0; i < m; ++i) v.push_back(scalar_fn(n.at(i)));
    return v;
}

ExponentFamily parse_exponent(const Node& n, int m, int d) {
    std::string form = n.at("form").str();
    double lam_min = INFINITY, lam_max = -INFINITY;
    auto bound = [&](const Node& where, double lo, double hi) {
        if (!(lo > 0.5)) where.fail("exponent eigenvalues must exceed 1/2 (stable index below 2)");
        lam_min = std::min(lam_min, lo);
        lam_max = std::max(lam_max, hi);
    };
    ExponentFamily f;
    if (form == "constant") {
        n.allow({"form", "matrix"});
        SymMatrix B = n.at("matrix").matrix(m);
        Vec ev = eigendecompose(B).spectrum;
        bound(n.at("matrix"), ev.minCoeff(), ev.maxCoeff());
        f = ExponentFamily::constant(B, d);
    } else if (form == "diagonal") {
        n.allow({"form", "lambda", "alpha"});
        if (n.has("lambda") == n.has("alpha")) n.fail("give exactly one of lambda or alpha");
        bool by_alpha = n.has("alpha");
        Node list = n.at(by_alpha ? "alpha" : "lambda");
        std::vector<ScalarFn> fs = scalar_fns(list, m);
        bool constant = true;
        for (int i = 0; i < m; ++i) {
            const ScalarFn& g = fs[i];
            if (by_alpha) {
                if (!(g.lo > 0.0 && g.hi < 2.0)) list.at(i).fail("alpha must lie in (0, 2)");
                bound(list.at(i), 1.0 / g.hi, 1.0 / g.lo);
            } else {
                bound(list.at(i), g.lo, g.hi);
            }
            constant = constant && g.constant;
        }
        f.d = d;
        f.m = m;
        f.B = [fs, by_alpha, m](const Vec& s) {
            Vec l(m);
            for (int i = 0; i < m; ++i) l(i) = by_alpha ? 1.0 / fs[i].f(s) : fs[i].f(s);
            return SymMatrix::diag(l);
        };
        f.constant_B = constant;
    } else if (form == "multi_stable") {
        n.allow({"form", "alpha"});
        ScalarFn a = scalar_fn(n.at("alpha"));
        if (!(a.lo > 0.0 && a.hi < 2.0)) n.at("alpha").fail("alpha must lie in (0, 2)");
        bound(n.at("alpha"), 1.0 / a.hi, 1.0 / a.lo);
        f = ExponentFamily::multi_stable(a.f, m, a.lo, a.hi, d);
        f.constant_B = a.constant;
    } else {
        n.at("form").fail("unknown exponent form '" + form + "'");
    }
    f.declared_a = 1.0 / lam_max;
    f.declared_b = 1.0 / lam_min;
    return f;
}

std::function<SymMatrix(const Vec&)> parse_D(const Node& n, const ExponentFamily& fam) {
    const int m = fam.m;
    std::string form = n.at("form").str();
    if (form == "constant") {
        n.allow({"form", "matrix"});
        SymMatrix D = n.at("matrix").matrix(m);
        return [D](const Vec&) { return D; };
    }
    if (form == "diagonal") {
        n.allow({"form", "lambda"});
        std::vector<ScalarFn> fs = scalar_fns(n.at("lambda"), m);
        return [fs, m](const Vec& s) {
            Vec l(m);
            for (int i = 0; i < m; ++i) l(i) = fs[i].f(s);
            return SymMatrix::diag(l);
        };
    }
    if (form == "scalar") {
        n.allow({"form", "delta"});
        ScalarFn g = scalar_fn(n.at("delta"));
        return [g, m](const Vec& s) { return SymMatrix::scalar(m, g.f(s)); };
    }
    if (form == "scaled_B") {
        n.allow({"form", "Delta"});
        ScalarFn g = scalar_fn(n.at("Delta"));
        auto B = fam.B;
        return [g, B](const Vec& s) { return SymMatrix(g.f(s) * B(s).mat()); };
    }
    n.at("form").fail("unknown D form '" + form + "'");
}

SpectralMeasure parse_spectral(const Node& n, int m) {
    std::string form = n.at("form").str();
    try {
        if (form == "axis") {
            n.allow({"form", "weight"});
            double w = n.num("weight", 1.0);
            if (!(w > 0.0)) n.at("weight").fail("must be positive");
            return SpectralMeasure::axis(m, w);
        }
        if (form == "planar") {
            n.allow({"form", "angles", "weights"});
            if (m != 2) n.fail("planar atoms need m = 2");
            std::vector<double> a = n.at("angles").numbers(), w = n.at("weights").numbers();
            if (a.size() != w.size()) n.at("weights").fail("one weight per angle");
            return SpectralMeasure::planar(a, w);
        }
        if (form == "atoms") {
            n.allow({"form", "atoms", "symmetrize"});
            Node list = n.at("atoms");
            std::vector<Atom> atoms;
            for (std::size_t i = 0; i < list.size(); ++i) {
                Node a = list.at(i);
                a.allow({"theta", "weight"});
                Vec th = a.at("theta").vec(m);
                if (std::abs(th.norm() - 1.0) > 1e-12) a.at("theta").fail("must be a unit vector");
                atoms.push_back({th, a.at("weight").num()});
            }
            bool sym = n.has("symmetrize") ? n.at("symmetrize").boolean() : true;
            return SpectralMeasure(std::move(atoms), sym);
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const DomainError& e) {
        n.fail(e.what());
    }
    n.at("form").fail("unknown spectral form '" + form + "'");
}

FddProbe parse_probe(const Node& p, int m) {
    p.allow({"t", "theta"});
    FddProbe fp;
    fp.t = p.at("t").numbers();
    if (fp.t.empty()) p.at("t").fail("at least one time");
    Node th = p.at("theta");
    if (th.size() != fp.t.size()) th.fail("one theta per time");
    for (std::size_t j = 0; j < th.size(); ++j) fp.theta.push_back(th.at(j).vec(m));
    return fp;
}

std::vector<FddProbe> parse_probes(const Node& n, int m) {
    std::vector<FddProbe> out;
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(parse_probe(n.at(i), m));
    return out;
}

void parse_field(const Node& n, ModelConfig& c, int m) {
    n.allow({"flavor", "phi", "w", "constant_radius"});
    FieldSpec& s = c.spec;
    std::string flavor = n.str("flavor", "two_sided");
    if (flavor == "two_sided") s.flavor = Flavor::two_sided;
    else if (flavor == "one_sided") s.flavor = Flavor::one_sided;
    else if (flavor == "indicator") s.flavor = Flavor::indicator;
    else n.at("flavor").fail("unknown flavor '" + flavor + "'");

    if (n.has("phi")) {
        Node p = n.at("phi");
        std::string form = p.at("form").str();
        if (form == "sum_powers") {
            p.allow({"form", "e"});
            std::vector<double> e = p.at("e").numbers();
            if (e.empty()) p.at("e").fail("at least one exponent");
            try {
                s.phi = phi_sum_powers(e);
            } catch (const DomainError& err) {
                p.at("e").fail(err.what());
            }
        } else if (form == "positive_part") {
            p.allow({"form"});
            s.phi = phi_positive_part();
        } else {
            p.at("form").fail("unknown phi form '" + form + "'");
        }
    } else {
        s.phi = phi_sum_powers({1.0});
    }
    s.d = s.phi.dim();
    if (s.flavor != Flavor::two_sided && s.d != 1) n.at("phi").fail("this flavor needs d = 1");

    if (n.has("w")) {
        if (s.flavor != Flavor::indicator) n.at("w").fail("w applies to the indicator flavor only");
        Node w = n.at("w");
        std::string form = w.at("form").str();
        if (form == "identity") {
            w.allow({"form"});
            s.w = [m](double) -> Mat { return Mat::Identity(m, m); };
        } else if (form == "constant") {
            w.allow({"form", "matrix"});
            Mat W = w.at("matrix").matrix(m).mat();
            s.w = [W](double) { return W; };
        } else if (form == "scalar") {
            w.allow({"form", "c"});
            ScalarFn g = scalar_fn(w.at("c"));
            s.w = [g, m](double x) -> Mat { return g.f(Vec::Constant(1, x)) * Mat::Identity(m, m); };
        } else {
            w.at("form").fail("unknown w form '" + form + "'");
        }
    } else if (s.flavor == Flavor::indicator) {
        s.w = [m](double) -> Mat { return Mat::Identity(m, m); };
    }
    if (n.has("constant_radius")) {
        double r = n.at("constant_radius").num();
        if (!(r > 0.0)) n.at("constant_radius").fail("must be positive");
        s.constant_radius = r;
    }
}

void parse_sample(const Node& n, ModelConfig& c) {
    n.allow({"grid", "n_paths", "partition", "series"});
    SampleSettings& s = c.sample;
    if (n.has("grid")) {
        Node g = n.at("grid");
        if (g.raw().is_array()) {
            s.grid = g.numbers();
        } else {
            g.allow({"lo", "hi", "n"});
            double lo = g.at("lo").num(), hi = g.at("hi").num();
            int k = g.at("n").integer();
            if (k < 1) g.at("n").fail("at least one point");
            if (k > 1 && !(hi > lo)) g.fail("need hi > lo");
            for (int i = 0; i < k; ++i) s.grid.push_back(k == 1 ? lo : lo + (hi - lo) * i / (k - 1));
        }
    } else {
        for (int i = 0; i < 64; ++i) s.grid.push_back(i / 63.0);
    }
    s.n_paths = n.integer("n_paths", s.n_paths);
    if (s.n_paths < 0) n.at("n_paths").fail("must be non-negative");
    if (n.has("partition")) {
        Node p = n.at("partition");
        p.allow({"lo", "hi", "pad", "cells"});
        if (p.has("lo")) s.lo = p.at("lo").num();
        if (p.has("hi")) s.hi = p.at("hi").num();
        s.pad = p.num("pad", s.pad);
        s.cells = p.integer("cells", s.cells);
        if (s.cells < 1) p.at("cells").fail("at least one cell");
        if (!(s.pad >= 0.0)) p.at("pad").fail("must be non-negative");
        if (s.lo && s.hi && !(*s.hi > *s.lo)) p.fail("need hi > lo");
    }
    if (n.has("series")) {
        Node p = n.at("series");
        p.allow({"n_terms", "tail", "tail_tol"});
        s.series.n_terms = p.integer("n_terms", 0);
        if (s.series.n_terms < 0) p.at("n_terms").fail("must be non-negative");
        std::string tail = p.str("tail", "gaussian");
        if (tail == "gaussian") s.series.tail = SeriesTail::gaussian;
        else if (tail == "truncate") s.series.tail = SeriesTail::truncate;
        else p.at("tail").fail("gaussian or truncate");
        s.series.tail_tol = p.num("tail_tol", s.series.tail_tol);
        if (!(s.series.tail_tol > 0.0)) p.at("tail_tol").fail("must be positive");
    }
}

// --------------------------------------------------------------- integrands

Integrand norm_integrand(const ModelConfig& c, double t) {
    Node n(c.norm.integrand, "$.norm.integrand");
    const int m = c.spec.m;
    std::string form = n.str("form", "field");
    if (form == "field") {
        n.allow({"form"});
        return field_integrand(c.spec, t);
    }
    if (form == "indicator") {
        n.allow({"form", "lo", "hi", "scale"});
        double lo = n.at("lo").num(), hi = n.at("hi").num(), k = n.num("scale", 1.0);
        if (!(hi > lo)) n.fail("need hi > lo");
        return Integrand::indicator(m, lo, hi).scaled(k);
    }
    if (form == "exponent_power") {
        // f_kk(s) = |s|^{-c_k B_jj(s)} with j = use_k, for |s| > cutoff
        n.allow({"form", "c", "use", "cutoff"});
        std::vector<double> cs = n.at("c").numbers();
        if (static_cast<int>(cs.size()) != m) n.at("c").fail("expected " + std::to_string(m) + " entries");
        std::vector<int> use;
        if (n.has("use")) {
            Node u = n.at("use");
            if (static_cast<int>(u.size()) != m) u.fail("expected " + std::to_string(m) + " entries");
            for (int k = 0; k < m; ++k) {
                int j = u.at(k).integer();
                if (j < 0 || j >= m) u.at(k).fail("index out of range");
                use.push_back(j);
            }
        } else {
            for (int k = 0; k < m; ++k) use.push_back(k);
        }
        double cut = n.num("cutoff", 1.0);
        if (!(cut > 0.0)) n.at("cutoff").fail("must be positive");
        if (c.spec.d != 1) n.fail("needs d = 1");
        auto B = c.spec.family.B;
        double hint = INFINITY;
        for (int k = 0; k < m; ++k) {
            if (!(cs[k] > 0.0)) n.at("c").at(k).fail("must be positive");
            hint = std::min(hint, cs[k] / c.spec.family.declared_b);
        }
        Integrand f = Integrand::from(m, [=](double s) -> Mat {
            Mat r = Mat::Zero(m, m);
            if (std::abs(s) <= cut) return r;
            Mat b = B(Vec::Constant(1, s)).mat();
            for (int k = 0; k < m; ++k) r(k, k) = std::pow(std::abs(s), -cs[k] * b(use[k], use[k]));
            return r;
        }, -INFINITY, INFINITY, hint);
        f.breaks = {-cut, cut};
        return f;
    }
    n.at("form").fail("unknown integrand form '" + form + "'");
}

json verdict_json(const ConditionVerdict& v) {
    return {{"name", v.name},
            {"pass", v.pass},
            {"inf", v.inf_value},
            {"sup", v.sup_value},
            {"lower_bound", v.lower_bound},
            {"upper_bound", v.upper_bound},
            {"lower_margin", v.lower_margin},
            {"upper_margin", v.upper_margin},
            {"commute", v.commute},
            {"commute_residual", v.commute_residual},
            {"a", v.a},
            {"b", v.b},
            {"probes", v.probes},
            {"detail", v.detail}};
}

LawFamily law_of(const ModelConfig& c) { return LawFamily(c.spec.family, c.spec.sigma); }

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << text;
    if (!f) throw std::runtime_error("write failed: " + path);
}

std::string flavor_name(Flavor f) {
    switch (f) {
        case Flavor::two_sided: return "two_sided";
        case Flavor::one_sided: return "one_sided";
        case Flavor::indicator: return "indicator";
    }
    return "";
}

int env_int(const char* name, int def, int lo, int hi) {
    const char* v = std::getenv(name);
    if (!v) return def;
    int x = 0;
    const char* end = v + std::strlen(v);
    auto [p, ec] = std::from_chars(v, end, x);
    if (ec != std::errc() || p != end || x < lo || x > hi)
        throw ConfigError(std::string(name) + ": expected an integer in [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + "], got '" + v + "'");
    return x;
}

}  // namespace

// ------------------------------------------------------------------ config

ModelConfig parse_config(const json& doc) {
    Node root(doc, "$");
    root.object();
    if (doc.empty()) root.fail("empty config");
    root.allow({"name", "description", "d", "m", "exponent", "D", "spectral", "field", "require", "quadrature",
                "seed", "sample", "tangent", "norm", "cf"});
    ModelConfig c;
    c.doc = doc;
    const int m = root.at("m").integer();
    if (m < 1 || m > 16) root.at("m").fail("must lie in [1, 16]");
    c.spec.m = m;

    if (root.has("field")) parse_field(root.at("field"), c, m);
    else c.spec.phi = phi_sum_powers({1.0}), c.spec.d = 1;
    if (c.spec.flavor == Flavor::indicator && !c.spec.w) c.spec.w = [m](double) -> Mat { return Mat::Identity(m, m); };
    if (root.has("d") && root.at("d").integer() != c.spec.d)
        root.at("d").fail("does not match the dimension of phi (" + std::to_string(c.spec.d) + ")");

    c.spec.family = parse_exponent(root.at("exponent"), m, c.spec.d);
    if (root.has("D")) {
        if (c.spec.flavor == Flavor::indicator) root.at("D").fail("the indicator flavor takes no D");
        c.spec.family.D = parse_D(root.at("D"), c.spec.family);
    } else if (c.spec.flavor != Flavor::indicator) {
        root.at("D");  // throws "missing"
    }
    c.spec.sigma = parse_spectral(root.at("spectral"), m);

    if (root.has("require")) {
        Node r = root.at("require");
        c.require.clear();
        for (std::size_t i = 0; i < r.size(); ++i) {
            std::string name = r.at(i).str();
            static const char* known[] = {"any", "C1", "C2", "C1'", "C2'", "cont"};
            if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return name == k; }) ==
                std::end(known))
                r.at(i).fail("unknown condition '" + name + "'");
            c.require.push_back(name);
        }
    }
    if (root.has("quadrature")) {
        Node q = root.at("quadrature");
        q.allow({"tol"});
        c.tol = q.num("tol", c.tol);
        if (!(c.tol > 0.0 && c.tol < 1.0)) q.at("tol").fail("must lie in (0, 1)");
    }
    if (root.has("seed")) c.seed = root.at("seed").u64();
    if (root.has("sample")) parse_sample(root.at("sample"), c);
    else parse_sample(Node(json::object(), "$.sample"), c);
    if (root.has("tangent")) {
        Node t = root.at("tangent");
        t.allow({"u", "k_max", "level", "probes", "final_tol", "support"});
        c.tangent.u = t.num("u", 0.0);
        c.tangent.k_max = t.integer("k_max", c.tangent.k_max);
        c.tangent.level = t.str("level", "auto");
        if (c.tangent.level != "auto" && c.tangent.level != "field" && c.tangent.level != "additive" &&
            c.tangent.level != "measure")
            t.at("level").fail("auto, field, additive or measure");
        c.tangent.final_tol = t.num("final_tol", c.tangent.final_tol);
        if (!(c.tangent.final_tol > 0.0)) t.at("final_tol").fail("must be positive");
        if (t.has("probes")) c.tangent.probes = parse_probes(t.at("probes"), m);
        if (t.has("support")) {
            std::vector<double> sup = t.at("support").numbers();
            if (sup.size() != 2 || !(sup[1] > sup[0])) t.at("support").fail("expected [lo, hi] with lo < hi");
            c.tangent.support_lo = sup[0];
            c.tangent.support_hi = sup[1];
        }
    }
    if (root.has("norm")) {
        Node n = root.at("norm");
        n.allow({"integrand", "t"});
        if (n.has("integrand")) {
            n.at("integrand").object();
            c.norm.integrand = n.at("integrand").raw();
        }
        c.norm.t = n.num("t", c.norm.t);
    }
    if (root.has("cf")) {
        c.cf = parse_probe(root.at("cf"), m);
    }
    return c;
}

ModelConfig load_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError(path + ": cannot open");
    std::stringstream ss;
    ss << f.rdbuf();
    std::string text = ss.str();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw ConfigError(path + ": empty config");
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        // byte offset to line / column
        std::size_t off = std::min<std::size_t>(e.byte, text.size()), line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < off; ++i) {
            if (text[i] == '\n') ++line, col = 1;
            else ++col;
        }
        throw ConfigError(path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
    }
    return parse_config(doc);
}

int thread_count() {
    unsigned hw = std::thread::hardware_concurrency();
    return env_int("OPSTABLE_THREADS", hw ? static_cast<int>(hw) : 1, 1, 1024);
}

double tol_scale() {
    const char* v = std::getenv("OPSTABLE_TOL_SCALE");
    if (!v) return 1.0;
    double x = 0.0;
    const char* end = v + std::strlen(v);
    auto [p, ec] = std::from_chars(v, end, x);
    if (ec != std::errc() || p != end || !std::isfinite(x) || !(x > 0.0) || x > 1e6)
        throw ConfigError(std::string("OPSTABLE_TOL_SCALE: expected a positive number, got '") + v + "'");
    return x;
}

// ---------------------------------------------------------------- commands

CommandResult cmd_check(const ModelConfig& cfg, const Overrides&) {
    const FieldSpec& s = cfg.spec;
    CommandResult r;
    json& j = r.report;
    j["command"] = "check";
    j["flavor"] = flavor_name(s.flavor);
    j["d"] = s.d;
    j["m"] = s.m;

    std::vector<ConditionVerdict> verdicts;
    if (s.flavor == Flavor::indicator) {
        ConditionVerdict v;
        v.name = "commute_wB";
        try {
            indicator_integrand(s, 1.0);
            v.pass = true;
        } catch (const DomainError& e) {
            v.pass = false;
            v.commute = false;
            v.detail = e.what();
        }
        verdicts.push_back(v);
        j["active"] = v.pass ? "commute_wB" : "";
    } else {
        FieldReport fr = field_report(s);
        verdicts = fr.verdicts;
        j["active"] = fr.active;
        j["full"] = fr.full;
        if (s.flavor == Flavor::two_sided)
            j["admissibility"] = {{"C", fr.admissibility.C}, {"pairs", fr.admissibility.pairs},
                                  {"positive", fr.admissibility.positive}};
    }
    for (const auto& v : verdicts) j["verdicts"].push_back(verdict_json(v));

    if (s.d == 1) {
        try {
            j["hypotheses"] = json::parse(report_json(check_limit_hypotheses(s, cfg.tangent.u), -1));
            j["hypotheses"]["u"] = cfg.tangent.u;
        } catch (const DomainError& e) {
            j["hypotheses"] = {{"error", e.what()}};
        }
    }

    bool all = true;
    for (const std::string& name : cfg.require) {
        bool ok = false;
        if (name == "any") {
            ok = !j["active"].get<std::string>().empty();
        } else {
            auto it = std::find_if(verdicts.begin(), verdicts.end(), [&](const auto& v) { return v.name == name; });
            if (it == verdicts.end())
                throw ConfigError("$.require: condition '" + name + "' does not apply to the " +
                                  flavor_name(s.flavor) + " flavor");
            ok = it->pass;
        }
        j["required"].push_back({{"name", name}, {"pass", ok}});
        all = all && ok;
    }
    j["pass"] = all;
    r.code = all ? 0 : 2;
    return r;
}

CommandResult cmd_norm(const ModelConfig& cfg, const Overrides& ov) {
    double t = ov.t.value_or(cfg.norm.t);
    Integrand f = norm_integrand(cfg, t);
    LawFamily law = law_of(cfg);
    CommandResult r;
    json& j = r.report;
    j["command"] = "norm";
    j["t"] = t;
    j["integrand"] = cfg.norm.integrand;
    if (f.zero) {
        j["integrable"] = true;
        j["norm"] = 0.0;
        j["H_residual"] = 0.0;
        return r;
    }
    bool integrable = true;
    if (Node(cfg.norm.integrand, "").str("form", "field") == "exponent_power") {
        DiagonalReport d = check_diagonalized(f, law, {});
        for (const auto& col : d.columns) j["diagonal_columns"].push_back({{"finite", col.finite}, {"value", col.value}});
        integrable = d.integrable;
    }
    IntegralCheck h1 = H(f, law, {}, 1.0);
    integrable = integrable && h1.finite;
    j["integrable"] = integrable;
    if (!integrable) {
        j["verdict"] = "not integrable";
        r.code = 2;
        return r;
    }
    double nv = norm_M(f, law, {});
    IntegralCheck hn = H(f, law, {}, nv);
    j["norm"] = nv;
    j["H_at_norm"] = hn.value;
    j["H_residual"] = hn.value - 1.0;
    return r;
}

CommandResult cmd_cf(const ModelConfig& cfg, const Overrides& ov) {
    FddProbe p = cfg.cf ? *cfg.cf : default_probes(cfg.spec.m).front();
    std::vector<Integrand> fs;
    for (double t : p.t) fs.push_back(field_integrand(cfg.spec, t));
    JointOptions jo;
    jo.rel_tol = ov.tol.value_or(cfg.tol);
    double v = joint_log_cf(fs, p.theta, law_of(cfg), {}, jo);
    CommandResult r;
    r.report = {{"command", "cf"}, {"t", p.t}, {"log_cf", v}, {"cf", std::exp(v)}};
    for (const Vec& th : p.theta) r.report["theta"].push_back(std::vector<double>(th.data(), th.data() + th.size()));
    return r;
}

CommandResult cmd_tangent(const ModelConfig& cfg, const Overrides& ov) {
    const FieldSpec& s = cfg.spec;
    int k_max = ov.k_max.value_or(cfg.tangent.k_max);
    if (k_max < 1) throw DomainError("tangent: k_max must be at least 1");
    TangentOptions opt;
    opt.quad_tol = ov.tol.value_or(cfg.tol);
    opt.final_tol = cfg.tangent.final_tol;
    opt.threads = thread_count();
    TangentSpec ts;
    ts.u = ov.u.value_or(cfg.tangent.u);
    ts.probes = cfg.tangent.probes;

    std::string level = cfg.tangent.level;
    if (level == "auto")
        level = s.flavor == Flavor::two_sided ? "field" : s.flavor == Flavor::indicator ? "additive" : "measure";
    ConvergenceReport rep;
    if (level == "field") {
        if (s.flavor != Flavor::two_sided) throw ConfigError("$.tangent.level: field level needs the two_sided flavor");
        rep = convergence_sweep(s, ts, k_max, opt);
    } else if (level == "additive") {
        if (s.flavor != Flavor::indicator)
            throw ConfigError("$.tangent.level: additive level needs the indicator flavor");
        rep = additive_tangent_check(s, ts, k_max, opt);
    } else {
        MeasureProbe mp;
        mp.fs = {Integrand::indicator(s.m, cfg.tangent.support_lo, cfg.tangent.support_hi)};
        for (const Vec& th : sphere_points(s.m, 4)) mp.thetas.push_back({th});
        rep = measure_convergence_sweep(law_of(cfg), ts.u, mp, k_max, opt);
    }
    CommandResult r;
    r.report = json::parse(report_json(rep, -1));
    r.report["command"] = "tangent";
    r.code = rep.converged() ? 0 : 2;
    return r;
}

FieldSample run_sample(const ModelConfig& cfg, const Overrides& ov) {
    const FieldSpec& s = cfg.spec;
    const SampleSettings& ss = cfg.sample;
    if (ss.grid.empty()) throw ConfigError("$.sample.grid: empty grid");
    int n_paths = ov.paths.value_or(ss.n_paths);
    if (n_paths < 0) throw ConfigError("--paths: must be non-negative");
    auto [gmin, gmax] = std::minmax_element(ss.grid.begin(), ss.grid.end());
    double lo = ss.lo.value_or(std::min(*gmin, 0.0) - ss.pad);
    double hi = ss.hi.value_or(std::max(*gmax, 0.0) + ss.pad);
    if (!(hi > lo)) throw ConfigError("$.sample.partition: empty range");
    CellPartition part = CellPartition::uniform(lo, hi, ss.cells);

    IntegrandFamily kernel;
    if (s.flavor == Flavor::indicator) {
        indicator_integrand(s, 1.0);  // commutation precondition
        kernel = [s](double t) { return indicator_integrand(s, t); };
    } else {
        kernel = field_kernel(s);
    }
    SeedSpec seed{ov.seed.value_or(cfg.seed)};
    return sample_field(kernel, ss.grid, n_paths, part, law_of(cfg), ss.series, seed, thread_count());
}

void write_csv(const FieldSample& s, std::ostream& out) {
    out << "path,t_index,component,value\n";
    char buf[64];
    for (int p = 0; p < s.n_paths; ++p)
        for (std::size_t k = 0; k < s.grid.size(); ++k)
            for (int c = 0; c < s.m; ++c) {
                auto res = std::to_chars(buf, buf + sizeof buf, s.at(p, static_cast<int>(k), c));
                out << p << ',' << k << ',' << c << ',' << std::string_view(buf, res.ptr - buf) << '\n';
            }
}

json sample_sidecar(const FieldSample& s, const ModelConfig& cfg) {
    json j;
    j["format"] = "opstable-field-sample";
    j["dtype"] = "float64";
    j["byte_order"] = "little";
    j["layout"] = {"path", "t_index", "component"};
    j["shape"] = {s.n_paths, s.grid.size(), s.m};
    j["grid"] = s.grid;
    j["seed"] = s.seed.master;
    j["flavor"] = flavor_name(cfg.spec.flavor);
    j["partition"] = {{"lo", s.partition.lo}, {"hi", s.partition.hi}, {"cells", s.partition.cells.size()}};
    j["series"] = {{"n_terms", s.series.n_terms},
                   {"tail", s.series.tail == SeriesTail::gaussian ? "gaussian" : "truncate"},
                   {"tail_tol", s.series.tail_tol}};
    j["missing_mass"] = s.missing_mass;
    j["warning"] = s.warning.empty() ? json(nullptr) : json(s.warning);
    j["config"] = cfg.doc;
    return j;
}

void write_sample(const FieldSample& s, const ModelConfig& cfg, const std::string& base) {
    std::ostringstream csv;
    write_csv(s, csv);
    write_text(base + ".csv", csv.str());

    std::string bin(s.values.size() * 8, '\0');
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        auto u = std::bit_cast<std::uint64_t>(s.values[i]);
        for (int b = 0; b < 8; ++b) bin[i * 8 + b] = static_cast<char>((u >> (8 * b)) & 0xff);
    }
    write_text(base + ".bin", bin);
    write_text(base + ".json", sample_sidecar(s, cfg).dump(2) + "\n");
}

CommandResult cmd_sample(const ModelConfig& cfg, const Overrides& ov) {
    if (ov.out.empty()) throw ConfigError("sample: --out BASE is required");
    FieldSample s = run_sample(cfg, ov);
    write_sample(s, cfg, ov.out);
    CommandResult r;
    r.report = {{"command", "sample"},
                {"csv", ov.out + ".csv"},
                {"bin", ov.out + ".bin"},
                {"sidecar", ov.out + ".json"},
                {"n_paths", s.n_paths},
                {"grid_points", s.grid.size()},
                {"missing_mass", s.missing_mass},
                {"warning", s.warning.empty() ? json(nullptr) : json(s.warning)}};
    return r;
}

// ---------------------------------------------------------------- dispatch

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err, const SelftestFn& selftest) {
    CLI::App app{"Operator-stable random fields: condition checks, norms, sampling and tangent sweeps"};
    app.require_subcommand(1, 1);
    std::string config;
    Overrides ov;

    auto add_common = [&](CLI::App* sub, bool with_config) {
        if (with_config) sub->add_option("--config", config, "JSON model config")->required();
        sub->add_option("--out", ov.out, "output path");
        sub->add_option("--seed", ov.seed, "master seed");
        sub->add_option("--tol", ov.tol, "quadrature tolerance");
        sub->add_option("--kmax", ov.k_max, "ladder length k_max");
    };
    CLI::App* check = app.add_subcommand("check", "condition verdicts and limit hypotheses");
    CLI::App* norm = app.add_subcommand("norm", "quasi-norm of an integrand");
    CLI::App* sample = app.add_subcommand("sample", "field paths on a grid (writes BASE.csv, .bin, .json)");
    CLI::App* cf = app.add_subcommand("cf", "joint log-CF of the field at one probe");
    CLI::App* tangent = app.add_subcommand("tangent", "tangent convergence sweep");
    CLI::App* self = app.add_subcommand("selftest", "acceptance corpus");
    for (CLI::App* s : {check, norm, sample, cf, tangent}) add_common(s, true);
    add_common(self, false);
    norm->add_option("--t", ov.t, "time of the field integrand");
    tangent->add_option("--u", ov.u, "localisation point");
    sample->add_option("--paths", ov.paths, "number of paths");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (ov.tol && !(*ov.tol > 0.0 && *ov.tol < 1.0)) throw ConfigError("--tol: must lie in (0, 1)");
        thread_count();  // fail early on a bad environment
        if (self->parsed()) {
            tol_scale();
            if (!selftest) throw std::runtime_error("selftest: not available in this build");
            return selftest(out);
        }
        ModelConfig cfg = load_config(config);
        CommandResult r;
        if (check->parsed()) r = cmd_check(cfg, ov);
        else if (norm->parsed()) r = cmd_norm(cfg, ov);
        else if (sample->parsed()) r = cmd_sample(cfg, ov);
        else if (cf->parsed()) r = cmd_cf(cfg, ov);
        else r = cmd_tangent(cfg, ov);
        std::string text = r.report.dump(2) + "\n";
        if (!ov.out.empty() && !sample->parsed()) write_text(ov.out, text);
        out << text;
        if (r.code == 2 && r.report.contains("verdict") && r.report["verdict"].is_string())
            err << r.report["verdict"].get<std::string>() << "\n";
        return r.code;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace opstable::cli
