#pragma once
// Batch driver: config parsing, the group -> psmeasure -> nu -> fourier stages, artifact
// bookkeeping and the verification suites that run against persisted artifacts.

#include "pslab/errors.hpp"
#include "pslab/fourier.hpp"
#include "pslab/stationary.hpp"

#include "json.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pslab {

inline constexpr const char* kVersion = "0.4.0";

struct PhaseSpaceConfig {
    bool enabled = true;
    int depth = 4;
    int time_steps = 256;
    double zeta_min = 4.0;
    double zeta_max = 256.0;
    double bump_radius = 0.3;
    double bump_alpha = 0.5;
};

struct RunConfig {
    SchottkySpec group = reference_spec();
    PotentialConfig potential;
    double enumeration_kappa = 24.0;  // Poincare series cutoff for the critical exponent
    int patterson_depth = 10;
    int n_max = 3;
    int shadow_max_length = 6;
    std::optional<double> c_gamma;
    std::optional<double> beta;
    std::optional<double> eps0;
    double s_offset = 0.0;
    double alpha = 0.5;
    double c_gamma_start = 1.0;
    int controls = 20;
    double xi_min = 16.0;
    double xi_max = 0.0;  // 0: the atomic resolution cutoff
    int directions = 32;
    int radii_per_band = 4;
    PhaseSpaceConfig phase_space;
    std::string output = "runs";
    std::uint64_t seed = 7;
};

/// Throws ConfigError on malformed or out-of-range values.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
nlohmann::json to_json(const RunConfig& c);
void validate(const RunConfig& c);

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t h);
/// FNV-1a of the canonical config dump (seed and version included).
std::string config_hash(const RunConfig& c);

inline const std::vector<std::string>& stage_names()
{
    static const std::vector<std::string> names = {"group", "psmeasure", "nu", "fourier"};
    return names;
}
std::vector<std::string> parse_stage_list(const std::string& list);

struct FileEntry {
    std::string name;
    std::uintmax_t bytes;
    std::string hash;
};

struct StageRecord {
    std::string name;
    std::string input_hash;
    std::vector<std::string> outputs;
    bool skipped = false;  // up to date, not rerun
};

struct RunManifest {
    std::string config_hash;
    std::string version = kVersion;
    std::uint64_t seed = 0;
    std::string run_dir;
    std::vector<StageRecord> stages;
    nlohmann::json constants = nlohmann::json::object();
    std::vector<FileEntry> files;
    std::map<std::string, double> timings;  // seconds, written to timings.json only

    nlohmann::json to_json() const;
    std::string hash() const;  // FNV-1a of the manifest JSON
};

RunManifest read_manifest(const std::string& run_dir);

/// Executes the requested stages (and any missing predecessors) in dependency order under
/// <config.output>/<config hash>. A stage whose inputs and outputs are unchanged is skipped.
/// Stage failures are rethrown as StageError.
RunManifest run(const RunConfig& config, const std::vector<std::string>& stages = stage_names(), bool quiet = true);

struct StageError : Error {
    StageError(const std::string& stage, const std::string& what)
        : Error("stage " + stage + ": " + what), stage(stage)
    {
    }
    std::string stage;
};

/// Missing or unreadable artifacts.
struct InventoryError : Error {
    using Error::Error;
};

struct SuiteResult {
    std::string name;
    bool pass = false;
    std::string message;
    nlohmann::json details = nlohmann::json::object();
};

inline const std::vector<std::string>& suite_names()
{
    static const std::vector<std::string> names = {"cocycle", "shadow", "covering", "stationarity", "decay"};
    return names;
}
/// "all" expands to every registered suite.
std::vector<std::string> parse_suite_list(const std::string& list);

/// Runs the suites against the artifacts of a completed run.
std::vector<SuiteResult> verify(const std::string& run_dir, const std::vector<std::string>& suites);
nlohmann::json to_json(const SuiteResult& r);

// Suite bodies, shared with the acceptance run.

struct CocycleSuiteOptions {
    int configs = 200;
    double horizon = 64.0;
    double tol = 1e-5;
    double ball_radius = 0.9;
    std::uint64_t seed = 1;
};
/// Additivity and letter equivariance of the Gibbs cocycle for F, and agreement with the
/// Busemann closed form for the constant part alone, on sampled (x, y, z, xi).
SuiteResult cocycle_suite(const SchottkySystem& G, const Potential& F, const CocycleSuiteOptions& o = {});
/// Ratios mu(B_gamma) / w_gamma over word lengths 2..max_length (strict band comparison).
SuiteResult shadow_suite(const DiscreteBoundaryMeasure& mu, const CocycleTables& tables, double c_gamma,
                         int max_length = 6);
SuiteResult covering_suite(const CocycleTables& tables, double c_gamma, int n_max);
/// Residual <= 0.05, below every shuffled control, and sup R_n <= (1 - beta/A^2)^n at every n.
SuiteResult stationarity_suite(const NuMeasure& nu, const DiscreteBoundaryMeasure& mu, const SchottkySystem& G,
                               const std::vector<double>& sup_R, int controls, std::uint64_t seed);
SuiteResult decay_suite(const DiscreteBoundaryMeasure& mu, double xi_min, const DecayOptions& o, double threshold = 0.05);

/// Largest |log(r_gamma^F f_gamma(xi))| over grid points xi in B_gamma, members of S_1..S_n_max.
double measured_c0(const StationaryContext& ctx);

}  // namespace pslab
