#include "pslab/pipeline.hpp"

#include "pslab/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace pslab {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_json(const fs::path& path, const json& j)
{
    std::ofstream out(path);
    if (!out) throw ResourceError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

json read_json(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw InventoryError("missing artifact " + path.filename().string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError(path.filename().string() + ": " + e.what());
    }
}

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string file_hash(const fs::path& path) { return hex64(fnv1a(read_file(path))); }

std::vector<std::string> split(const std::string& list)
{
    std::vector<std::string> out;
    std::stringstream s(list);
    for (std::string item; std::getline(s, item, ',');) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <class T>
std::optional<T> optional_value(const json& j, const char* key)
{
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<T>();
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where)
{
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// Group, potential and tables rebuilt from the config. Tables for a bump potential take a few
// seconds, so they are built once per process and only on demand.
class Session {
public:
    explicit Session(RunConfig c) : cfg(std::move(c)), G(build_schottky(cfg.group)) {}

    const CocycleTables& tables()
    {
        if (!tables_) {
            const Potential raw = make_potential(cfg.potential, G);
            CocycleTables raw_tables(G, raw, raw.is_constant() ? 0 : 4096);
            if (cfg.potential.normalization == "auto") {
                normalized_ = normalize_potential(raw_tables);
                tables_ = std::make_unique<CocycleTables>(raw_tables.shifted(normalized_->delta));
            } else {
                tables_ = std::make_unique<CocycleTables>(std::move(raw_tables));
            }
        }
        return *tables_;
    }

    const CocycleTables& flipped_tables()
    {
        if (!flipped_) {
            const Potential& F = tables().potential();
            flipped_ = std::make_unique<CocycleTables>(G, F.flip(), F.is_constant() ? 0 : 4096);
        }
        return *flipped_;
    }

    json potential_json()
    {
        tables();
        json j = to_json(cfg.potential);
        j["description"] = tables_->potential().describe();
        if (normalized_) {
            j["delta"] = normalized_->delta;
            j["delta_ci"] = normalized_->delta_ci;
            j["condition_R"] = {{"sup_F", normalized_->condition.sup_F},
                                {"delta", normalized_->condition.delta},
                                {"margin", normalized_->condition.margin},
                                {"pass", normalized_->condition.pass}};
        }
        j["shift"] = tables_->potential().normalization_shift();
        return j;
    }

    RunConfig cfg;
    SchottkySystem G;

private:
    std::unique_ptr<CocycleTables> tables_, flipped_;
    std::optional<NormalizedPotential> normalized_;
};

DecayOptions decay_options(const RunConfig& c)
{
    DecayOptions o;
    o.directions = c.directions;
    o.radii_per_band = c.radii_per_band;
    return o;
}

json decay_summary(const DecayReport& r)
{
    return {{"exponent", r.fitted_exponent}, {"stderr", r.exponent_stderr}, {"residual", r.fit_residual},
            {"xi_min", r.xi_min},            {"xi_max", r.xi_max},          {"bands", r.bands.size()}};
}

// Stage bodies. Each writes its files into dir and returns their names.

std::vector<std::string> stage_group(Session& s, const fs::path& dir)
{
    const Enumeration E = enumerate_elements(s.G, s.cfg.enumeration_kappa, s.cfg.group.budget);
    const CriticalExponent c = critical_exponent(E, 2.0);
    const auto limit = sample_limit_set(s.G, 8, s.G.dim == 2 ? (1u << 20) : (1u << 16));
    const BoxCounting box = box_counting_dimension(limit, 0.125, s.G.dim == 2 ? 1e-5 : 1e-3);

    json letters = json::array();
    for (const auto& l : s.G.letters)
        letters.push_back({{"name", std::string(1, l.name)},
                           {"kappa", l.map.displacement()},
                           {"cap_center", std::vector<double>(l.cap.center.coords().begin(), l.cap.center.coords().end())},
                           {"cap_radius", l.cap.radius}});
    json j = {{"spec", to_json(s.cfg.group)},
              {"letters", letters},
              {"cap_gap", s.G.gap},
              {"elements", E.elements.size()},
              {"critical_exponent", {{"delta", c.delta}, {"ci", c.ci}, {"window", 2.0}}},
              {"box_counting", {{"dimension", box.dimension}, {"residual", box.residual}}}};
    write_json(dir / "group.json", j);

    std::ofstream csv(dir / "poincare.csv");
    csv << "window_end,log_sum\n";
    csv.precision(17);
    for (std::size_t k = 0; k < c.window_ends.size(); ++k) csv << c.window_ends[k] << ',' << c.log_sums[k] << '\n';
    return {"group.json", "poincare.csv"};
}

std::vector<std::string> stage_psmeasure(Session& s, const fs::path& dir)
{
    const DiscreteBoundaryMeasure mu = patterson_measure(s.tables(), s.cfg.patterson_depth, s.cfg.s_offset);
    write_csv(mu, (dir / "patterson.csv").string());
    const RegularityFit reg = regularity_exponent(mu);
    json j = {{"potential", s.potential_json()},
              {"depth", s.cfg.patterson_depth},
              {"atoms", mu.size()},
              {"total_mass", mu.total_mass()},
              {"regularity", {{"exponent", reg.exponent}, {"constant", reg.constant}, {"residual", reg.residual}}}};
    write_json(dir / "psmeasure.json", j);
    return {"patterson.csv", "psmeasure.json"};
}

std::vector<std::string> stage_nu(Session& s, const fs::path& dir)
{
    const auto& T = s.tables();
    const json ps = read_json(dir / "psmeasure.json");
    const double delta_reg = ps["regularity"]["exponent"].get<double>();
    const DiscreteBoundaryMeasure mu = read_csv((dir / "patterson.csv").string());

    std::optional<StationaryContext> ctx;
    std::optional<AMeasurement> A;
    json search = json::object();
    if (s.cfg.c_gamma) {
        const double c = *s.cfg.c_gamma;
        ctx = make_context(T, c, s.cfg.n_max, make_limit_grid(s.G, grid_depth_for(s.G, c, s.cfg.n_max)));
        A = measure_A(*ctx, 1, s.cfg.n_max);
        search = {{"override", c}};
    } else {
        CGammaSearch r = search_c_gamma(T, s.cfg.n_max, s.cfg.c_gamma_start);
        search = {{"tried", r.tried}, {"reasons", r.reasons}};
        ctx = std::move(r.context);
        A = std::move(r.A);
    }
    const double c_gamma = ctx->c_gamma;
    const double eps0_fraction = s.cfg.eps0 ? *s.cfg.eps0 / delta_reg : 0.5;
    const StationaryConstants k = choose_constants(c_gamma, s.cfg.alpha, delta_reg, eps0_fraction);
    const double beta = s.cfg.beta.value_or(k.beta);

    const NuBuild b = build_nu(*ctx, beta, A->A);
    write_json(dir / "nu.json", to_json(b.nu));
    write_history_csv(b.history, (dir / "history.csv").string());

    const MomentReport m0 = exponential_moment(b.nu, 0.0);
    const MomentReport half = exponential_moment(b.nu, 0.5 * m0.eps_star);
    const GenerationReport gen = support_generates(b.nu, s.G);
    std::vector<double> sup_R;
    for (const auto& h : b.history) sup_R.push_back(h.sup_norm);
    const double shrink = 1.0 - beta / (A->A * A->A);

    json j = {{"c_gamma", c_gamma},
              {"search", search},
              {"A", A->A},
              {"A_n", A->A_n},
              {"C0", measured_c0(*ctx)},
              {"alpha", s.cfg.alpha},
              {"delta_reg", delta_reg},
              {"beta", beta},
              {"beta_capped", k.beta_capped},
              {"eps0", s.cfg.eps0.value_or(k.eps0)},
              {"n_max", s.cfg.n_max},
              {"support", b.nu.entries.size()},
              {"total", b.nu.total()},
              {"truncation_defect", b.nu.truncation_defect},
              {"sup_R", sup_R},
              {"contraction", shrink},
              {"eps_star", m0.eps_star},
              {"moment_half", {{"eps", half.eps}, {"ratio", half.ratio}, {"annulus_sums", half.annulus_sums},
                               {"converges", half.converges}, {"monotone", half.monotone}}},
              {"generates", gen.generates},
              {"witnesses", gen.witnesses}};
    write_json(dir / "nu_report.json", j);
    return {"nu.json", "history.csv", "nu_report.json"};
}

std::vector<std::string> stage_fourier(Session& s, const fs::path& dir)
{
    const DiscreteBoundaryMeasure mu = read_csv((dir / "patterson.csv").string());
    const DecayOptions o = decay_options(s.cfg);
    const DecayReport r = s.cfg.xi_max > 0.0 ? decay_fit(mu, s.cfg.xi_min, s.cfg.xi_max, o)
                                             : resolved_decay_fit(mu, s.cfg.xi_min, o);
    const AtomicScale scale = atomic_scale(mu);
    json j = to_json(r);
    j["atomic_scale"] = {{"min_gap", scale.min_gap},
                         {"max_gap", scale.max_gap},
                         {"cutoff", scale.cutoff},
                         {"stall_frequency", scale.stall_frequency},
                         {"random_phase_floor", scale.random_phase_floor}};
    write_json(dir / "decay.json", j);
    write_decay_csv(r, (dir / "decay.csv").string());
    write_decay_svg(r, (dir / "decay.svg").string());
    std::vector<std::string> files = {"decay.json", "decay.csv", "decay.svg"};

    const PhaseSpaceConfig& p = s.cfg.phase_space;
    if (p.enabled && s.G.dim == 2) {
        const DiscreteBoundaryMeasure plus = patterson_measure(s.tables(), p.depth, s.cfg.s_offset);
        const DiscreteBoundaryMeasure minus = s.tables().potential().is_constant()
                                                  ? plus
                                                  : patterson_measure(s.flipped_tables(), p.depth, s.cfg.s_offset);
        EquilibriumOptions eo;
        eo.time_steps = p.time_steps;
        const DiscretePhaseSpaceMeasure m = equilibrium_measure(plus, minus, s.tables().potential(), eo);
        // bump around the heaviest pair at t = 0
        const auto heaviest = std::max_element(m.pairs.begin(), m.pairs.end(),
                                               [](const auto& a, const auto& b) { return a.weight < b.weight; });
        const HopfPoint centre{m.v_plus[heaviest->i], m.v_minus[heaviest->j], 0.0};
        const HopfChart chart = tangent_chart(hopf_to_tangent(centre).direction);
        const HopfFunction chi = chart_bump(chart, chart(centre), p.bump_radius, p.bump_alpha);
        const PhaseSpaceDecayReport ps = equilibrium_decay_check(m, chart, chi, p.zeta_min, p.zeta_max);
        json pj = to_json(ps);
        pj["measure"] = {{"depth", p.depth},
                         {"pairs", m.pairs.size()},
                         {"time_steps", m.times.size()},
                         {"raw_total", m.raw_total},
                         {"excluded_pairs", m.excluded_pairs}};
        pj["chart"] = "tangent";
        pj["bump"] = {{"radius", p.bump_radius}, {"alpha", p.bump_alpha}};
        write_json(dir / "phase_space.json", pj);
        files.push_back("phase_space.json");
    }
    return files;
}

using StageFn = std::vector<std::string> (*)(Session&, const fs::path&);

StageFn stage_fn(const std::string& name)
{
    if (name == "group") return stage_group;
    if (name == "psmeasure") return stage_psmeasure;
    if (name == "nu") return stage_nu;
    return stage_fourier;
}

std::vector<std::string> stage_inputs(const std::string& name)
{
    if (name == "psmeasure") return {};
    if (name == "nu") return {"psmeasure.json", "patterson.csv"};
    if (name == "fourier") return {"patterson.csv"};
    return {};
}

std::vector<std::string> predecessors(const std::string& name)
{
    if (name == "psmeasure") return {"group"};
    if (name == "nu") return {"group", "psmeasure"};
    if (name == "fourier") return {"group", "psmeasure"};
    return {};
}

json stage_json(const StageRecord& r)
{
    return {{"name", r.name}, {"input_hash", r.input_hash}, {"outputs", r.outputs}};
}

json constants_from(const fs::path& dir)
{
    json c = json::object();
    auto load = [&](const char* f) { return fs::exists(dir / f) ? read_json(dir / f) : json(nullptr); };
    const json g = load("group.json"), p = load("psmeasure.json"), n = load("nu_report.json"),
               d = load("decay.json"), ps = load("phase_space.json");
    if (!g.is_null()) {
        c["delta_hat_F0"] = g["critical_exponent"]["delta"];
        c["box_dimension"] = g["box_counting"]["dimension"];
    }
    if (!p.is_null()) {
        if (p["potential"].contains("delta")) c["delta_hat"] = p["potential"]["delta"];
        c["delta_reg"] = p["regularity"]["exponent"];
    }
    if (!n.is_null()) {
        for (const char* k : {"A", "C0", "c_gamma", "beta", "eps0", "eps_star"}) c[k] = n[k];
    }
    if (!d.is_null()) c["decay_exponent"] = d["fitted_exponent"];
    if (!ps.is_null()) c["phase_space_exponent"] = ps["sphere"]["fitted_exponent"];
    return c;
}

}  // namespace

// ---- config ----

RunConfig parse_run_config(const json& j)
{
    RunConfig c;
    try {
        check_keys(j, {"group", "potential", "depths", "constants", "fourier", "controls", "output", "seed"}, "config");
        if (j.contains("group")) {
            if (j["group"].is_string()) {
                if (j["group"] != "reference") throw ConfigError("unknown group preset " + j["group"].dump());
            } else {
                c.group = parse_schottky_spec(j["group"]);
            }
        }
        if (j.contains("potential")) c.potential = parse_potential_config(j["potential"]);
        if (j.contains("depths")) {
            const json& d = j["depths"];
            check_keys(d, {"enumeration_kappa", "patterson", "n_max", "shadow_max_length"}, "depths");
            c.enumeration_kappa = d.value("enumeration_kappa", c.enumeration_kappa);
            c.patterson_depth = d.value("patterson", c.patterson_depth);
            c.n_max = d.value("n_max", c.n_max);
            c.shadow_max_length = d.value("shadow_max_length", c.shadow_max_length);
        }
        if (j.contains("constants")) {
            const json& k = j["constants"];
            check_keys(k, {"C_Gamma", "C_Gamma_start", "beta", "eps0", "s_offset", "alpha"}, "constants");
            c.c_gamma = optional_value<double>(k, "C_Gamma");
            c.beta = optional_value<double>(k, "beta");
            c.eps0 = optional_value<double>(k, "eps0");
            c.c_gamma_start = k.value("C_Gamma_start", c.c_gamma_start);
            c.s_offset = k.value("s_offset", c.s_offset);
            c.alpha = k.value("alpha", c.alpha);
        }
        if (j.contains("fourier")) {
            const json& f = j["fourier"];
            check_keys(f, {"xi_min", "xi_max", "directions", "radii_per_band", "phase_space"}, "fourier");
            c.xi_min = f.value("xi_min", c.xi_min);
            c.xi_max = f.value("xi_max", c.xi_max);
            c.directions = f.value("directions", c.directions);
            c.radii_per_band = f.value("radii_per_band", c.radii_per_band);
            if (f.contains("phase_space")) {
                const json& p = f["phase_space"];
                check_keys(p, {"enabled", "depth", "time_steps", "zeta_min", "zeta_max", "bump_radius", "bump_alpha"},
                           "phase_space");
                auto& q = c.phase_space;
                q.enabled = p.value("enabled", q.enabled);
                q.depth = p.value("depth", q.depth);
                q.time_steps = p.value("time_steps", q.time_steps);
                q.zeta_min = p.value("zeta_min", q.zeta_min);
                q.zeta_max = p.value("zeta_max", q.zeta_max);
                q.bump_radius = p.value("bump_radius", q.bump_radius);
                q.bump_alpha = p.value("bump_alpha", q.bump_alpha);
            }
        }
        c.controls = j.value("controls", c.controls);
        c.output = j.value("output", c.output);
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    validate(c);
    return c;
}

RunConfig load_run_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_run_config(j);
}

json to_json(const RunConfig& c)
{
    const auto& p = c.phase_space;
    return {{"group", to_json(c.group)},
            {"potential", to_json(c.potential)},
            {"depths",
             {{"enumeration_kappa", c.enumeration_kappa},
              {"patterson", c.patterson_depth},
              {"n_max", c.n_max},
              {"shadow_max_length", c.shadow_max_length}}},
            {"constants",
             {{"C_Gamma", optional_json(c.c_gamma)},
              {"C_Gamma_start", c.c_gamma_start},
              {"beta", optional_json(c.beta)},
              {"eps0", optional_json(c.eps0)},
              {"s_offset", c.s_offset},
              {"alpha", c.alpha}}},
            {"fourier",
             {{"xi_min", c.xi_min},
              {"xi_max", c.xi_max},
              {"directions", c.directions},
              {"radii_per_band", c.radii_per_band},
              {"phase_space",
               {{"enabled", p.enabled},
                {"depth", p.depth},
                {"time_steps", p.time_steps},
                {"zeta_min", p.zeta_min},
                {"zeta_max", p.zeta_max},
                {"bump_radius", p.bump_radius},
                {"bump_alpha", p.bump_alpha}}}}},
            {"controls", c.controls},
            {"output", c.output},
            {"seed", c.seed}};
}

void validate(const RunConfig& c)
{
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError(what);
    };
    require(c.c_gamma.value_or(1.0) > 0.0, "C_Gamma must be positive");
    require(c.c_gamma_start > 0.0, "C_Gamma_start must be positive");
    require(c.enumeration_kappa > 0.0, "enumeration_kappa must be positive");
    require(c.patterson_depth > 0, "patterson depth must be positive");
    require(c.n_max > 0, "n_max must be positive");
    require(c.shadow_max_length >= 4, "shadow_max_length must be at least 4");
    require(!c.beta || (*c.beta > 0.0 && *c.beta < 0.5), "beta must lie in (0, 1/2)");
    require(c.eps0.value_or(1.0) > 0.0, "eps0 must be positive");
    require(c.s_offset >= 0.0, "s_offset must be non-negative");
    require(c.alpha > 0.0 && c.alpha <= 1.0, "alpha must lie in (0, 1]");
    require(c.xi_min > 0.0, "xi_min must be positive");
    require(c.xi_max == 0.0 || c.xi_max >= 64.0 * c.xi_min, "xi_max must be 0 (auto) or at least 64 xi_min");
    require(c.directions > 0 && c.radii_per_band > 0, "direction and radius counts must be positive");
    require(c.controls > 0, "controls must be positive");
    const auto& p = c.phase_space;
    require(p.depth > 0 && p.time_steps > 0, "phase_space depth and time_steps must be positive");
    require(p.zeta_min > 0.0 && p.zeta_max >= 64.0 * p.zeta_min, "phase_space zeta range must span 64");
    require(p.bump_radius > 0.0 && p.bump_alpha > 0.0, "phase_space bump must have positive radius and alpha");
    require(!c.output.empty(), "output directory must be set");
}

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h)
{
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t h)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string config_hash(const RunConfig& c)
{
    json j = to_json(c);
    j.erase("output");  // where a run lives does not change what it computes
    return hex64(fnv1a(j.dump() + "|" + kVersion));
}

std::vector<std::string> parse_stage_list(const std::string& list)
{
    const auto items = split(list);
    if (items.size() == 1 && items[0] == "all") return stage_names();
    for (const auto& s : items)
        if (std::find(stage_names().begin(), stage_names().end(), s) == stage_names().end())
            throw ConfigError("unknown stage " + s);
    if (items.empty()) throw ConfigError("empty stage list");
    return items;
}

std::vector<std::string> parse_suite_list(const std::string& list)
{
    const auto items = split(list);
    if (items.size() == 1 && items[0] == "all") return suite_names();
    for (const auto& s : items)
        if (std::find(suite_names().begin(), suite_names().end(), s) == suite_names().end())
            throw ConfigError("unknown suite " + s);
    return items;
}

// ---- manifest ----

json RunManifest::to_json() const
{
    json stages_j = json::array();
    for (const auto& s : stages) stages_j.push_back(stage_json(s));
    json files_j = json::array();
    for (const auto& f : files) files_j.push_back({{"name", f.name}, {"bytes", f.bytes}, {"hash", f.hash}});
    return {{"config_hash", config_hash}, {"version", version}, {"seed", seed},
            {"stages", stages_j},         {"constants", constants}, {"files", files_j}};
}

std::string RunManifest::hash() const { return hex64(fnv1a(to_json().dump())); }

RunManifest read_manifest(const std::string& run_dir)
{
    const json j = read_json(fs::path(run_dir) / "manifest.json");
    RunManifest m;
    try {
        m.config_hash = j.at("config_hash");
        m.version = j.at("version");
        m.seed = j.at("seed");
        m.run_dir = run_dir;
        for (const auto& s : j.at("stages"))
            m.stages.push_back({s.at("name"), s.at("input_hash"), s.at("outputs").get<std::vector<std::string>>()});
        m.constants = j.at("constants");
        for (const auto& f : j.at("files")) m.files.push_back({f.at("name"), f.at("bytes"), f.at("hash")});
    } catch (const json::exception& e) {
        throw ValidationError(std::string("manifest.json: ") + e.what());
    }
    return m;
}

RunManifest run(const RunConfig& config, const std::vector<std::string>& stages, bool quiet)
{
    validate(config);
    RunManifest m;
    m.config_hash = config_hash(config);
    m.seed = config.seed;
    const fs::path dir = fs::path(config.output) / m.config_hash;
    m.run_dir = dir.string();
    fs::create_directories(dir);

    std::optional<RunManifest> previous;
    if (fs::exists(dir / "manifest.json")) {
        try {
            previous = read_manifest(dir.string());
        } catch (const Error&) {
            // unreadable manifest: every stage reruns
        }
    }
    auto previous_stage = [&](const std::string& name) -> const StageRecord* {
        if (!previous) return nullptr;
        for (const auto& s : previous->stages)
            if (s.name == name) return &s;
        return nullptr;
    };
    auto previous_file_hash = [&](const std::string& name) -> std::string {
        if (!previous) return "";
        for (const auto& f : previous->files)
            if (f.name == name) return f.hash;
        return "";
    };

    write_json(dir / "config.json", to_json(config));

    std::set<std::string> wanted(stages.begin(), stages.end());
    for (const auto& s : stages)
        for (const auto& p : predecessors(s)) wanted.insert(p);

    Session session(config);
    const std::string config_dump = to_json(config).dump();
    std::map<std::string, double> timings;
    for (const auto& name : stage_names()) {
        if (!wanted.count(name)) {
            // keep the record of a stage that ran before, if its files are still there
            if (const StageRecord* old = previous_stage(name)) {
                bool intact = true;
                for (const auto& f : old->outputs) intact = intact && fs::exists(dir / f);
                if (intact) {
                    StageRecord kept = *old;
                    kept.skipped = true;
                    m.stages.push_back(kept);
                }
            }
            continue;
        }
        std::string inputs = config_dump + "|" + name;
        for (const auto& f : stage_inputs(name)) {
            if (!fs::exists(dir / f)) throw StageError(name, "missing input " + f);
            inputs += "|" + f + ":" + file_hash(dir / f);
        }
        StageRecord rec{name, hex64(fnv1a(inputs)), {}};

        if (const StageRecord* old = previous_stage(name); old && old->input_hash == rec.input_hash) {
            bool intact = !old->outputs.empty();
            for (const auto& f : old->outputs)
                intact = intact && fs::exists(dir / f) && file_hash(dir / f) == previous_file_hash(f);
            if (intact) {
                rec.outputs = old->outputs;
                rec.skipped = true;
                m.stages.push_back(rec);
                if (!quiet) std::cerr << "[" << name << "] up to date\n";
                continue;
            }
        }
        if (!quiet) std::cerr << "[" << name << "] running\n";
        const auto t0 = std::chrono::steady_clock::now();
        try {
            rec.outputs = stage_fn(name)(session, dir);
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(name, e.what());
        }
        timings[name] = seconds_since(t0);
        if (!quiet) std::cerr << "[" << name << "] done in " << timings[name] << " s\n";
        m.stages.push_back(rec);
    }

    std::vector<std::string> names = {"config.json"};
    for (const auto& s : m.stages) names.insert(names.end(), s.outputs.begin(), s.outputs.end());
    std::sort(names.begin(), names.end());
    for (const auto& f : names) m.files.push_back({f, fs::file_size(dir / f), file_hash(dir / f)});
    m.constants = constants_from(dir);
    m.timings = timings;

    write_json(dir / "manifest.json", m.to_json());
    // stages skipped this time keep their last measured time
    json t = fs::exists(dir / "timings.json") ? read_json(dir / "timings.json") : json::object();
    for (const auto& [k, v] : timings) t[k] = v;
    write_json(dir / "timings.json", t);
    return m;
}

// ---- suites ----

double measured_c0(const StationaryContext& ctx)
{
    const CocycleTables& T = *ctx.tables;
    const SchottkySystem& G = T.group();
    double c0 = 0.0;
    for (std::size_t m = 0; m < ctx.size(); ++m) {
        const GroupElement& g = ctx.element(m);
        for (std::size_t i = 0; i < ctx.grid.points.size(); i += 7) {
            const BoundaryPoint xi = G.apply_word(g.word, ctx.grid.points[i]);
            if (!ctx.shadow[m].contains(xi)) continue;
            c0 = std::max(c0, std::abs(ctx.log_w[m] + T.log_f(g.word, xi)));
        }
    }
    return c0;
}

SuiteResult cocycle_suite(const SchottkySystem& G, const Potential& F, const CocycleSuiteOptions& o)
{
    std::mt19937_64 rng(o.seed);
    std::normal_distribution<double> N;
    std::uniform_real_distribution<double> U(0.0, 1.0);
    auto random_ball = [&] {
        Vec v(G.dim);
        for (int k = 0; k < G.dim; ++k) v[k] = N(rng);
        v *= o.ball_radius * std::pow(U(rng), 1.0 / G.dim) / v.norm();
        return BallPoint(v);
    };
    const auto limit = sample_limit_set(G, 10, 4096);
    std::uniform_int_distribution<std::size_t> pick(0, limit.size() - 1);
    CocycleOptions co;
    co.max_horizon = o.horizon;
    co.full_horizon = true;
    const Potential constant = Potential::constant(G.dim, F.constant_part());

    double additivity = 0.0, equivariance = 0.0, busemann_gap = 0.0;
    for (int i = 0; i < o.configs; ++i) {
        const BallPoint x = random_ball(), y = random_ball(), z = random_ball();
        const BoundaryPoint xi = limit[pick(rng)];
        const double xy = gibbs_cocycle(F, xi, x, y, co).value;
        const double yz = gibbs_cocycle(F, xi, y, z, co).value;
        const double xz = gibbs_cocycle(F, xi, x, z, co).value;
        additivity = std::max(additivity, std::abs(xz - xy - yz));
        for (const auto& l : G.letters) {
            const double moved = gibbs_cocycle(F, l.map.apply(xi), l.map.apply(x), l.map.apply(y), co).value;
            equivariance = std::max(equivariance, std::abs(moved - xy));
        }
        const double closed = constant.constant_part() * (busemann(xi, y) - busemann(xi, x));
        busemann_gap = std::max(busemann_gap, std::abs(gibbs_cocycle(constant, xi, x, y, co).value - closed));
    }
    SuiteResult r;
    r.name = "cocycle";
    r.pass = additivity <= o.tol && equivariance <= o.tol && busemann_gap <= o.tol;
    r.details = {{"configs", o.configs},   {"horizon", o.horizon},         {"tolerance", o.tol},
                 {"additivity", additivity}, {"equivariance", equivariance}, {"busemann", busemann_gap}};
    std::ostringstream msg;
    msg << "max defects: additivity " << additivity << ", equivariance " << equivariance << ", Busemann "
        << busemann_gap;
    r.message = msg.str();
    return r;
}

SuiteResult shadow_suite(const DiscreteBoundaryMeasure& mu, const CocycleTables& tables, double c_gamma,
                         int max_length)
{
    Enumeration E = enumerate_words(tables.group(), max_length);
    tables.assign_weights(E);
    std::vector<GroupElement> elements;
    for (const auto& e : E.elements)
        if (e.length() >= 2) elements.push_back(e);
    const ShadowLemmaReport rep = shadow_lemma_report(mu, elements, c_gamma);
    SuiteResult r;
    r.name = "shadow";
    r.pass = rep.pass;
    r.details = {{"c_gamma", c_gamma},         {"elements", elements.size()}, {"min_ratio", rep.min_ratio},
                 {"max_ratio", rep.max_ratio}, {"spread", rep.spread},         {"band_short", rep.band_short},
                 {"band_long", rep.band_long}, {"empty_caps", rep.empty_caps}};
    std::ostringstream msg;
    msg.precision(10);
    msg << "spread " << rep.spread << ", band 2-4 " << rep.band_short << ", band 4-6 " << rep.band_long;
    r.message = msg.str();
    return r;
}

SuiteResult covering_suite(const CocycleTables& tables, double c_gamma, int n_max)
{
    const SchottkySystem& G = tables.group();
    const StationaryContext ctx = make_context(tables, c_gamma, n_max, make_limit_grid(G, grid_depth_for(G, c_gamma, n_max)));
    const CoveringReport rep = covering_report(ctx.elements, ctx.annuli, ctx.grid.points);
    SuiteResult r;
    r.name = "covering";
    r.pass = rep.covered;
    json levels = json::array();
    for (const auto& l : rep.levels)
        levels.push_back({{"n", l.n}, {"elements", l.elements}, {"uncovered", l.uncovered},
                          {"min_multiplicity", l.min_multiplicity}, {"max_multiplicity", l.max_multiplicity}});
    r.details = {{"c_gamma", c_gamma}, {"samples", ctx.grid.points.size()}, {"levels", levels},
                 {"max_multiplicity", rep.max_multiplicity}};
    r.message = rep.covered ? "every grid point covered at every level" : "uncovered grid points";
    return r;
}

SuiteResult stationarity_suite(const NuMeasure& nu, const DiscreteBoundaryMeasure& mu, const SchottkySystem& G,
                               const std::vector<double>& sup_R, int controls, std::uint64_t seed)
{
    const auto shuffled = shuffled_controls(nu, controls, seed);
    std::vector<std::vector<double>> ws{nu.weights()};
    for (const auto& c : shuffled) ws.push_back(c.weights());
    const auto res = stationarity_residuals(nu, ws, mu, G);
    double best_control = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < res.size(); ++k) best_control = std::min(best_control, res[k].value);

    const double shrink = 1.0 - nu.beta / (nu.A * nu.A);
    bool bound = true;
    json bound_j = json::array();
    for (std::size_t n = 0; n < sup_R.size(); ++n) {
        const double b = std::pow(shrink, static_cast<double>(n));
        bound = bound && sup_R[n] <= b * (1 + 1e-12);
        bound_j.push_back({{"n", n}, {"sup_R", sup_R[n]}, {"bound", b}});
    }
    SuiteResult r;
    r.name = "stationarity";
    r.pass = res[0].value <= 0.05 && res[0].value < best_control && bound;
    r.details = {{"residual", res[0].value}, {"cap_distance", res[0].cap_distance},
                 {"tent_distance", res[0].tent_distance}, {"best_control", best_control},
                 {"controls", controls}, {"sup_R_bound", bound_j}};
    std::ostringstream msg;
    msg << "residual " << res[0].value << ", best of " << controls << " controls " << best_control
        << ", sup R_n bound " << (bound ? "holds" : "violated");
    r.message = msg.str();
    return r;
}

SuiteResult decay_suite(const DiscreteBoundaryMeasure& mu, double xi_min, const DecayOptions& o, double threshold)
{
    const DecayReport rep = resolved_decay_fit(mu, xi_min, o);
    SuiteResult r;
    r.name = "decay";
    r.pass = rep.fitted_exponent >= threshold;
    r.details = decay_summary(rep);
    r.details["threshold"] = threshold;
    std::ostringstream msg;
    msg << "exponent " << rep.fitted_exponent << " +- " << rep.exponent_stderr << " on [" << rep.xi_min << ", "
        << rep.xi_max << "]";
    r.message = msg.str();
    return r;
}

json to_json(const SuiteResult& r)
{
    return {{"suite", r.name}, {"pass", r.pass}, {"message", r.message}, {"details", r.details}};
}

std::vector<SuiteResult> verify(const std::string& run_dir, const std::vector<std::string>& suites)
{
    const fs::path dir(run_dir);
    const RunManifest m = read_manifest(run_dir);
    const RunConfig cfg = parse_run_config(read_json(dir / "config.json"));
    Session session(cfg);

    auto require = [&](const std::vector<std::string>& files) {
        for (const auto& f : files) {
            if (!fs::exists(dir / f)) throw InventoryError("missing artifact " + f + " in " + run_dir);
            const auto it = std::find_if(m.files.begin(), m.files.end(), [&](const auto& e) { return e.name == f; });
            if (it == m.files.end()) throw InventoryError(f + " is not in the manifest inventory");
        }
    };
    // an artifact whose bytes changed since the run is reported against its file name
    auto tampered = [&](const std::vector<std::string>& files) -> std::string {
        for (const auto& f : files) {
            const auto it = std::find_if(m.files.begin(), m.files.end(), [&](const auto& e) { return e.name == f; });
            if (file_hash(dir / f) != it->hash) return f;
        }
        return "";
    };

    std::vector<SuiteResult> out;
    for (const auto& name : suites) {
        std::vector<std::string> needs;
        if (name == "shadow") needs = {"nu_report.json", "patterson.csv"};
        if (name == "stationarity") needs = {"nu.json", "nu_report.json", "patterson.csv"};
        if (name == "decay") needs = {"patterson.csv", "decay.json"};
        if (name == "covering") needs = {"nu_report.json"};
        require(needs);

        SuiteResult r;
        r.name = name;
        if (const std::string bad = tampered(needs); !bad.empty()) {
            r.message = bad + ": contents differ from the manifest";
            out.push_back(r);
            continue;
        }
        std::string current;
        try {
            if (name == "cocycle") {
                CocycleSuiteOptions o;
                o.seed = cfg.seed;
                r = cocycle_suite(session.G, session.tables().potential(), o);
            } else if (name == "shadow") {
                current = "nu_report.json";
                const double c = read_json(dir / current).at("c_gamma").get<double>();
                current = "patterson.csv";
                const auto mu = read_csv((dir / current).string());
                current.clear();
                r = shadow_suite(mu, session.tables(), c, cfg.shadow_max_length);
            } else if (name == "covering") {
                current = "nu_report.json";
                const json n = read_json(dir / current);
                current.clear();
                r = covering_suite(session.tables(), n.at("c_gamma").get<double>(), n.at("n_max").get<int>());
            } else if (name == "stationarity") {
                current = "nu.json";
                const NuMeasure nu = nu_from_json(read_json(dir / current));
                current = "nu_report.json";
                const auto sup_R = read_json(dir / current).at("sup_R").get<std::vector<double>>();
                current = "patterson.csv";
                const auto mu = read_csv((dir / current).string());
                current.clear();
                r = stationarity_suite(nu, mu, session.G, sup_R, cfg.controls, cfg.seed);
            } else if (name == "decay") {
                current = "patterson.csv";
                const auto mu = read_csv((dir / current).string());
                current.clear();
                r = decay_suite(mu, cfg.xi_min, decay_options(cfg));
            }
        } catch (const InventoryError&) {
            throw;
        } catch (const std::exception& e) {
            r.name = name;
            r.pass = false;
            r.message = current.empty() ? std::string(e.what()) : current + ": " + e.what();
        }
        out.push_back(r);
    }
    return out;
}

}  // namespace pslab
