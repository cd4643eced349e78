#pragma once

#include "opstable/errors.hpp"
#include "opstable/fields.hpp"
#include "opstable/sampler.hpp"
#include "opstable/tangent.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace opstable::cli {

using json = nlohmann::json;

// Config problems; the message starts with the JSON path of the offending field.
struct ConfigError : DomainError {
    using DomainError::DomainError;
};

struct SampleSettings {
    std::vector<double> grid;
    int n_paths = 100;
    std::optional<double> lo, hi;  // partition; default grid range padded by `pad`
    double pad = 64.0;
    int cells = 1024;
    SeriesOptions series;
};

struct TangentSettings {
    double u = 0.0;
    int k_max = 8;
    std::string level = "auto";  // auto, field, additive or measure
    std::vector<FddProbe> probes;
    double final_tol = 1e-2;
    double support_lo = -1.0;  // measure level: f = 1_{[lo, hi]}
    double support_hi = 1.0;
};

struct NormSettings {
    json integrand = {{"form", "field"}};
    double t = 1.0;
};

struct ModelConfig {
    json doc;
    FieldSpec spec;
    std::vector<std::string> require{"any"};
    double tol = 1e-8;
    std::uint64_t seed = 1;
    SampleSettings sample;
    TangentSettings tangent;
    NormSettings norm;
    std::optional<FddProbe> cf;
};

ModelConfig parse_config(const json& doc);
// Reads and parses; syntax errors are reported with line and column.
ModelConfig load_config(const std::string& path);

// Command-line values that take precedence over the config.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<double> tol;
    std::optional<int> k_max;
    std::optional<double> t;
    std::optional<double> u;
    std::optional<int> paths;
    std::string out;
};

// OPSTABLE_THREADS, default std::thread::hardware_concurrency. Bad values throw ConfigError.
int thread_count();
// OPSTABLE_TOL_SCALE multiplies every selftest tolerance; default 1. Bad values throw ConfigError.
double tol_scale();

struct CommandResult {
    int code = 0;  // 0 pass, 2 negative verdict
    json report;
};

CommandResult cmd_check(const ModelConfig& cfg, const Overrides& ov = {});
CommandResult cmd_norm(const ModelConfig& cfg, const Overrides& ov = {});
CommandResult cmd_cf(const ModelConfig& cfg, const Overrides& ov = {});
CommandResult cmd_tangent(const ModelConfig& cfg, const Overrides& ov = {});

// The field sample of the config; files are written only by write_sample.
FieldSample run_sample(const ModelConfig& cfg, const Overrides& ov = {});
// base.csv, base.bin and base.json
void write_sample(const FieldSample& s, const ModelConfig& cfg, const std::string& base);
void write_csv(const FieldSample& s, std::ostream& out);
json sample_sidecar(const FieldSample& s, const ModelConfig& cfg);
CommandResult cmd_sample(const ModelConfig& cfg, const Overrides& ov = {});

// Prints a table to `out` and returns the exit code.
using SelftestFn = std::function<int(std::ostream& out)>;

// Full dispatch: parses argv, runs the verb, maps errors to exit code 1.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err, const SelftestFn& selftest = {});

}  // namespace opstable::cli
