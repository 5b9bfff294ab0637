// pslab: run the group -> psmeasure -> nu -> fourier pipeline and verify its artifacts.
//
//   pslab --config run.json --stages all --verify all
//   pslab nu --config run.json --out runs
//   pslab verify --run runs/<hash> --verify stationarity,decay
//   pslab report --run runs/<hash>

#include "pslab/pipeline.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace fs = std::filesystem;
using namespace pslab;

namespace {

enum Exit { kOk = 0, kSuiteFailed = 1, kConfigError = 2, kStageError = 3, kInventoryError = 4 };

struct Options {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string stages = "all";
    std::string suites;
    std::string run_dir;
    bool quiet = false;
};

RunConfig resolve_config(const Options& o)
{
    RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
    if (!o.out.empty()) c.output = o.out;
    if (o.seed) c.seed = *o.seed;
    validate(c);
    return c;
}

std::string resolve_run_dir(const Options& o)
{
    if (!o.run_dir.empty()) return o.run_dir;
    const RunConfig c = resolve_config(o);
    return (fs::path(c.output) / config_hash(c)).string();
}

void print_manifest(const RunManifest& m, std::ostream& out)
{
    out << "run " << m.run_dir << "\n";
    out << "  config hash   " << m.config_hash << "\n";
    out << "  manifest hash " << m.hash() << "\n";
    for (const auto& s : m.stages) out << "  stage " << std::left << std::setw(10) << s.name << (s.skipped ? "up to date" : "ok") << "\n";
    for (auto it = m.constants.begin(); it != m.constants.end(); ++it)
        out << "  " << std::left << std::setw(22) << it.key() << it.value().dump() << "\n";
}

int run_suites(const std::string& dir, const std::string& list)
{
    const auto results = verify(dir, parse_suite_list(list));
    nlohmann::json j = nlohmann::json::array();
    bool all = true;
    for (const auto& r : results) {
        std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << ": " << r.message << "\n";
        j.push_back(to_json(r));
        all = all && r.pass;
    }
    std::ofstream(fs::path(dir) / "verify.json") << j.dump(2) << '\n';
    return all ? kOk : kSuiteFailed;
}

int do_run(const Options& o, const std::vector<std::string>& stages)
{
    const RunConfig c = resolve_config(o);
    const RunManifest m = run(c, stages, o.quiet);
    print_manifest(m, std::cout);
    if (!o.suites.empty()) return run_suites(m.run_dir, o.suites);
    return kOk;
}

int do_report(const Options& o)
{
    const std::string dir = resolve_run_dir(o);
    print_manifest(read_manifest(dir), std::cout);
    const fs::path v = fs::path(dir) / "verify.json";
    if (fs::exists(v)) {
        std::ifstream in(v);
        for (const auto& r : nlohmann::json::parse(in))
            std::cout << "  " << (r["pass"].get<bool>() ? "PASS " : "FAIL ") << r["suite"].get<std::string>() << ": "
                      << r["message"].get<std::string>() << "\n";
    }
    const fs::path t = fs::path(dir) / "timings.json";
    if (fs::exists(t)) {
        std::ifstream in(t);
        std::cout << "  timings " << nlohmann::json::parse(in).dump() << "\n";
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Patterson-Sullivan laboratory: Schottky groups, stationary measures and Fourier decay"};
    app.fallthrough();
    Options o;
    app.add_option("--config", o.config, "run configuration (JSON); defaults to the reference group")->check(CLI::ExistingFile);
    app.add_option("--out", o.out, "output root, one directory per config hash");
    app.add_option("--seed", o.seed, "seed for every sampled choice");
    app.add_option("--stages", o.stages, "comma list of group,psmeasure,nu,fourier or all");
    app.add_option("--verify", o.suites, "comma list of cocycle,shadow,covering,stationarity,decay or all");
    app.add_option("--run", o.run_dir, "existing run directory (verify, report)");
    app.add_flag("-q,--quiet", o.quiet, "no stage progress on stderr");

    std::vector<CLI::App*> stage_cmds;
    for (const auto& s : stage_names()) stage_cmds.push_back(app.add_subcommand(s, "run the " + s + " stage and its predecessors"));
    CLI::App* verify_cmd = app.add_subcommand("verify", "run property suites against a completed run");
    CLI::App* report_cmd = app.add_subcommand("report", "print the manifest, constants and verdicts of a run");
    app.require_subcommand(0, 1);

    CLI11_PARSE(app, argc, argv);

    try {
        for (std::size_t k = 0; k < stage_cmds.size(); ++k)
            if (stage_cmds[k]->parsed()) return do_run(o, {stage_names()[k]});
        if (verify_cmd->parsed()) return run_suites(resolve_run_dir(o), o.suites.empty() ? "all" : o.suites);
        if (report_cmd->parsed()) return do_report(o);
        return do_run(o, parse_stage_list(o.stages));
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const StageError& e) {
        std::cerr << e.what() << "\n";
        return kStageError;
    } catch (const InventoryError& e) {
        std::cerr << "inventory error: " << e.what() << "\n";
        return kInventoryError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kStageError;
    }
}
