#include "doctest.h"
#include "opstable/cli.hpp"

#include <bit>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <unistd.h>

using namespace opstable;
using namespace opstable::cli;
namespace fs = std::filesystem;

namespace {

const std::string kConfigs = OPSTABLE_CONFIG_DIR;

std::string config(const std::string& name) { return kConfigs + "/" + name + ".json"; }

struct Run {
    int code;
    std::string out, err;
};

Run invoke(std::vector<std::string> args, const SelftestFn& selftest = {}) {
    args.insert(args.begin(), "opstable");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int code = run(static_cast<int>(argv.size()), argv.data(), out, err, selftest);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

json load_json(const std::string& path) { return json::parse(slurp(path)); }

// Runs parse_config on doc and returns the diagnostic.
std::string diagnostic(const json& doc) {
    try {
        parse_config(doc);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

fs::path scratch() {
    fs::path d = fs::temp_directory_path() / ("opstable-test-cli-" + std::to_string(getpid()));
    fs::create_directories(d);
    return d;
}

struct EnvGuard {
    std::string name;
    std::optional<std::string> saved;
    EnvGuard(const char* n, const char* value) : name(n) {
        if (const char* v = std::getenv(n)) saved = v;
        setenv(n, value, 1);
    }
    ~EnvGuard() {
        if (saved) setenv(name.c_str(), saved->c_str(), 1);
        else unsetenv(name.c_str());
    }
};

}  // namespace

TEST_CASE("config diagnostics name the offending field") {
    json base = load_json(config("ex35c"));
    CHECK(diagnostic(base).empty());

    json j = base;
    j["exponent"]["form"] = "banana";
    CHECK(diagnostic(j).find("$.exponent.form: unknown exponent form") == 0);

    j = base;
    j["sample"]["typo"] = 1;
    CHECK(diagnostic(j) == "$.sample.typo: unknown field");

    j = base;
    j["exponent"]["alpha"][1] = 2.0;
    CHECK(diagnostic(j).find("$.exponent.alpha[1]: alpha must lie in (0, 2)") == 0);

    j = base;
    j.erase("D");
    CHECK(diagnostic(j) == "$.D: missing");

    j = base;
    j["spectral"] = {{"form", "atoms"}, {"atoms", {{{"theta", {1.0, 0.0}}, {"weight", 1.0}}}}};
    CHECK(diagnostic(j).find("$.spectral:") == 0);  // one direction does not span R^2

    j = base;
    j["d"] = 2;
    CHECK(diagnostic(j).find("$.d: does not match") == 0);

    j = base;
    j["exponent"] = {{"form", "constant"}, {"matrix", {{0.4, 0.0}, {0.0, 1.0}}}};
    CHECK(diagnostic(j).find("$.exponent.matrix: exponent eigenvalues must exceed 1/2") == 0);

    CHECK(diagnostic(json::object()) == "$: empty config");
    CHECK(diagnostic(json::array()) == "$: expected an object");
}

TEST_CASE("config files: syntax errors carry line and column, empty files fail") {
    fs::path d = scratch();
    std::ofstream(d / "bad.json") << "{\n  \"m\": 2,\n  \"exponent\": [1,\n}\n";
    std::ofstream(d / "blank.json") << "  \n";
    Run bad = invoke({"check", "--config", (d / "bad.json").string()});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("bad.json:4:") != std::string::npos);
    Run blank = invoke({"check", "--config", (d / "blank.json").string()});
    CHECK(blank.code == 1);
    CHECK(blank.err.find("empty config") != std::string::npos);
    CHECK(invoke({"check", "--config", (d / "missing.json").string()}).code == 1);
    fs::remove_all(d);
}

TEST_CASE("check: exit codes follow the required verdicts") {
    Run a = invoke({"check", "--config", config("ex35a")});
    CHECK(a.code == 2);
    json ra = json::parse(a.out);
    CHECK(ra["verdicts"][0]["name"] == "C1");
    CHECK(ra["verdicts"][0]["pass"] == true);
    CHECK(ra["verdicts"][1]["name"] == "C2");
    CHECK(ra["verdicts"][1]["pass"] == false);
    CHECK(ra["verdicts"][1]["commute"] == false);
    CHECK(ra["verdicts"][0].contains("lower_margin"));

    // the same model only asked for some sufficient condition
    json doc = load_json(config("ex35a"));
    doc.erase("require");
    CHECK(cmd_check(parse_config(doc)).code == 0);
    doc["require"] = {"C1"};
    CHECK(cmd_check(parse_config(doc)).code == 0);
    doc["require"] = {"C1'"};
    CHECK_THROWS_AS(cmd_check(parse_config(doc)), ConfigError);

    Run c = invoke({"check", "--config", config("ex35c")});
    CHECK(c.code == 0);
    json rc = json::parse(c.out);
    CHECK(rc["pass"] == true);
    CHECK(rc["active"] == "C2");
    CHECK(rc["full"] == true);
    CHECK(rc["hypotheses"]["chi_to_identity"] == true);

    Run e = invoke({"check", "--config", config("empty")});
    CHECK(e.code == 1);
    CHECK(e.err.find("empty config") != std::string::npos);

    // idempotent
    CHECK(invoke({"check", "--config", config("ex35c")}).out == c.out);
}

TEST_CASE("norm: indicator, t = 0 and a non-integrable integrand") {
    Run ind = invoke({"norm", "--config", config("scalar_indicator")});
    CHECK(ind.code == 0);
    json r = json::parse(ind.out);
    CHECK(std::abs(r["norm"].get<double>() - 1.0) <= 1e-6);
    CHECK(std::abs(r["H_residual"].get<double>()) <= 1e-3);

    Run zero = invoke({"norm", "--config", config("constant"), "--t", "0"});
    CHECK(zero.code == 0);
    CHECK(json::parse(zero.out)["norm"] == 0.0);

    Run f = invoke({"norm", "--config", config("ex212_f")});
    CHECK(f.code == 0);
    CHECK(json::parse(f.out)["integrable"] == true);

    Run g = invoke({"norm", "--config", config("ex212_g")});
    CHECK(g.code == 2);
    CHECK(g.err.find("not integrable") != std::string::npos);
    CHECK(json::parse(g.out)["verdict"] == "not integrable");
}

TEST_CASE("cf: the t = 0 term drops and the value is a log-CF") {
    ModelConfig c = load_config(config("constant"));
    c.cf = FddProbe{{1.0, 0.0}, {Vec::Ones(2), Vec::Ones(2)}};
    double both = cmd_cf(c).report["log_cf"];
    c.cf = FddProbe{{1.0}, {Vec::Ones(2)}};
    double one = cmd_cf(c).report["log_cf"];
    CHECK(both < 0.0);
    CHECK(std::abs(both - one) <= 1e-9 * std::abs(one));
}

TEST_CASE("sample: files, header-only output, determinism") {
    fs::path d = scratch();
    json doc = load_json(config("ex35c"));
    doc["sample"] = {{"grid", {{"lo", -1.0}, {"hi", 1.0}, {"n", 5}}},
                     {"n_paths", 6},
                     {"partition", {{"pad", 8.0}, {"cells", 64}}}};
    std::ofstream(d / "small.json") << doc.dump();

    std::string base = (d / "a").string();
    Run a = invoke({"sample", "--config", (d / "small.json").string(), "--out", base, "--seed", "11"});
    REQUIRE(a.code == 0);
    std::string bin = slurp(base + ".bin"), csv = slurp(base + ".csv");
    CHECK(bin.size() == 6u * 5u * 2u * 8u);
    json side = load_json(base + ".json");
    CHECK(side["shape"] == json::array({6, 5, 2}));
    CHECK(side["byte_order"] == "little");
    CHECK(side["seed"] == 11);
    CHECK(side["partition"]["cells"] == 64);
    CHECK(side["warning"].is_string());  // pad 8 misses tail mass
    CHECK(side["missing_mass"].get<double>() > 1e-3);

    // little-endian values agree with the CSV
    std::istringstream rows(csv);
    std::string line;
    std::getline(rows, line);
    CHECK(line == "path,t_index,component,value");
    int n = 0;
    while (std::getline(rows, line)) {
        double v = std::stod(line.substr(line.rfind(',') + 1));
        std::uint64_t u = 0;
        for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(static_cast<unsigned char>(bin[n * 8 + b])) << (8 * b);
        CHECK(std::bit_cast<double>(u) == v);
        ++n;
    }
    CHECK(n == 60);

    // same seed twice, and under a different thread count
    {
        EnvGuard g("OPSTABLE_THREADS", "3");
        Run b = invoke({"sample", "--config", (d / "small.json").string(), "--out", (d / "b").string(), "--seed", "11"});
        CHECK(b.code == 0);
    }
    CHECK(slurp(d / "b.bin") == bin);
    CHECK(slurp(d / "b.csv") == csv);
    invoke({"sample", "--config", (d / "small.json").string(), "--out", (d / "c").string(), "--seed", "12"});
    CHECK(slurp(d / "c.bin") != bin);

    Run z = invoke({"sample", "--config", (d / "small.json").string(), "--out", (d / "z").string(), "--paths", "0"});
    CHECK(z.code == 0);
    CHECK(slurp(d / "z.csv") == "path,t_index,component,value\n");
    CHECK(slurp(d / "z.bin").empty());

    CHECK(invoke({"sample", "--config", (d / "small.json").string()}).code == 1);  // no --out
    fs::remove_all(d);
}

TEST_CASE("tangent: constant converges, jump does not, k_max = 0 is an error") {
    Run c = invoke({"tangent", "--config", config("constant"), "--kmax", "2"});
    CHECK(c.code == 0);
    json rc = json::parse(c.out);
    CHECK(rc["verdict"] == "converges");
    CHECK(rc["level"] == "field");
    CHECK(rc["deviation"].size() == 2);

    Run j = invoke({"tangent", "--config", config("jump_alpha")});
    CHECK(j.code == 2);
    CHECK(json::parse(j.out)["verdict"] == "non-convergent");

    Run m = invoke({"tangent", "--config", config("multistable")});
    CHECK(m.code == 0);

    Run z = invoke({"tangent", "--config", config("constant"), "--kmax", "0"});
    CHECK(z.code == 1);
    CHECK(z.err.find("k_max") != std::string::npos);
}

TEST_CASE("dispatch: usage errors, environment and selftest hook") {
    CHECK(invoke({}).code == 1);
    CHECK(invoke({"frobnicate"}).code == 1);
    CHECK(invoke({"check"}).code == 1);  // --config required
    CHECK(invoke({"check", "--config", config("ex35c"), "--tol", "abc"}).code == 1);
    CHECK(invoke({"check", "--config", config("ex35c"), "--tol", "2"}).code == 1);
    Run h = invoke({"--help"});
    CHECK(h.code == 0);
    CHECK(h.out.find("tangent") != std::string::npos);

    {
        EnvGuard g("OPSTABLE_THREADS", "many");
        Run r = invoke({"check", "--config", config("ex35c")});
        CHECK(r.code == 1);
        CHECK(r.err.find("OPSTABLE_THREADS") != std::string::npos);
    }
    {
        EnvGuard g("OPSTABLE_THREADS", "0");
        CHECK_THROWS_AS(thread_count(), ConfigError);
    }

    int calls = 0;
    SelftestFn stub = [&](std::ostream& out) {
        ++calls;
        out << "table\n";
        return 0;
    };
    CHECK(invoke({"selftest"}, stub).code == 0);
    CHECK(calls == 1);
    {
        EnvGuard g("OPSTABLE_TOL_SCALE", "1e-3x");
        Run r = invoke({"selftest"}, stub);
        CHECK(r.code == 1);
        CHECK(r.err.find("OPSTABLE_TOL_SCALE") != std::string::npos);
        CHECK(calls == 1);
    }
    {
        EnvGuard g("OPSTABLE_TOL_SCALE", "-1");
        CHECK(invoke({"selftest"}, stub).code == 1);
    }
    CHECK(invoke({"selftest"}).code == 1);  // no corpus linked
}
