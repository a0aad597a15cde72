// qksa: tomography benchmarks, population runs and config validation.
//
//   qksa tomo --method sqpt --env h1q.cfg --shots 10000 --out out/h
//   qksa run --config acceptance_run.cfg --out out/run [--steps N] [--seed S]
//   qksa validate seed.gene
//
// Exit status: 0 success, 1 runtime failure, 2 configuration or validation
// error. Seeds: --seed, then QKSA_SEED, then the config file.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qksa/config.hpp"
#include "qksa/environment.hpp"
#include "qksa/hypervisor.hpp"
#include "qksa/metrics.hpp"
#include "qksa/tomography.hpp"

namespace fs = std::filesystem;
using namespace qksa;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeFailure = 1;
constexpr int kConfigFailure = 2;

// Configuration problems found before any output is written.
struct Invalid
{
    std::string message;
};

std::optional<std::uint64_t> seed_from_env()
{
    const char* text = std::getenv("QKSA_SEED");
    if (!text || !*text)
        return std::nullopt;
    auto const v = parse_integer(text);
    if (!v || *v < 0)
        throw Invalid{"QKSA_SEED must be a non-negative integer, got '" + std::string(text) + "'"};
    return static_cast<std::uint64_t>(*v);
}

std::uint64_t pick_seed(const std::optional<std::uint64_t>& flag, std::uint64_t from_config)
{
    if (flag)
        return *flag;
    if (auto env = seed_from_env())
        return *env;
    return from_config;
}

long parse_shots(const std::string& text)
{
    if (text == "exact")
        return kExactShots;
    auto const v = parse_integer(text);
    if (!v || *v < 1)
        throw Invalid{"--shots must be 'exact' or a positive integer, got '" + text + "'"};
    return static_cast<long>(*v);
}

// Loads an env config and checks that its channel is a valid CPTP map.
QuantumEnvConfig load_checked_env(const fs::path& path)
{
    QuantumEnvConfig config = load_env_config(path);
    try {
        resolve_channel(config);
    } catch (const QuantumError& e) {
        throw ConfigError(e.what(), path.string());
    } catch (const EnvironmentError& e) {
        throw ConfigError(e.what(), path.string());
    }
    return config;
}

TomographyReport reconstruct(const QuantumEnvConfig& config, Method method, long shots, std::size_t prep,
                             RandomSource& rng)
{
    QuantumEnvironment env(config);
    TomographyReport report;
    report.method = method;
    report.n_qubits = env.n_qubits();
    report.shots_per_setting = shots;
    if (method == Method::qst) {
        auto const r = qst(env, prep, shots, rng);
        DensityMatrix const truth = env.channel().apply(pauli_eigenstate(prep, env.n_qubits()));
        report.settings_count = r.budget.settings_count();
        report.reconstructed = r.state.matrix();
        report.trace_distance = trace_distance(truth.matrix(), report.reconstructed);
    } else {
        auto const r = method == Method::sqpt ? sqpt(env, shots, rng) : eapt(env, shots, rng);
        report.settings_count = r.budget.settings_count();
        report.reconstructed = r.channel.choi().matrix();
        report.trace_distance = trace_distance(env.channel().choi().matrix(), report.reconstructed);
    }
    return report;
}

struct TomoArgs
{
    std::string method;
    std::string env;
    std::string shots = "exact";
    std::string out;
    std::size_t prep = 0;
    std::optional<std::uint64_t> seed;
    std::vector<long> sweep = {100, 1000, 10000};
};

int cmd_tomo(const TomoArgs& args)
{
    auto const method = parse_method(args.method);
    if (!method)
        throw Invalid{"unknown method '" + args.method + "' (expected qst, sqpt or eapt)"};
    long const shots = parse_shots(args.shots);
    for (long s : args.sweep)
        if (s < 1)
            throw Invalid{"--sweep entries must be positive"};
    QuantumEnvConfig const config = load_checked_env(args.env);
    if (*method == Method::qst && args.prep >= int_pow(6, config.n_qubits))
        throw Invalid{"--prep must be below " + std::to_string(int_pow(6, config.n_qubits))};
    if (*method == Method::eapt && !config.entangled_mode)
        throw Invalid{"eapt needs entangled_mode = true in " + args.env};
    std::uint64_t const seed = pick_seed(args.seed, config.seed);

    RandomSource rng(seed);
    TomographyReport const report = reconstruct(config, *method, shots, args.prep, rng);

    // one fresh stream per sweep point so rows do not depend on each other
    std::string csv = "shots,trace_distance\n";
    for (std::size_t k = 0; k < args.sweep.size(); ++k) {
        RandomSource sweep_rng(mix_seed(seed + k + 1));
        auto const row = reconstruct(config, *method, args.sweep[k], args.prep, sweep_rng);
        csv += std::to_string(args.sweep[k]) + ',' + format_double17(*row.trace_distance) + '\n';
    }

    fs::path const out(args.out);
    fs::create_directories(out);
    Hypervisor::write_file(out / "report.txt", report.format());
    Hypervisor::write_file(out / "trace_distance.csv", csv);
    std::cout << "settings_count = " << report.settings_count
              << "\ntrace_distance = " << format_double17(*report.trace_distance) << "\nwrote " << out.string()
              << "\n";
    return kOk;
}

struct RunArgs
{
    std::string config;
    std::string out;
    std::optional<long> steps;
    std::optional<std::uint64_t> seed;
};

int cmd_run(const RunArgs& args)
{
    if (args.steps && *args.steps < 0)
        throw Invalid{"--steps must be non-negative"};
    auto const file = KeyValueFile::load(args.config);
    RunConfig config = parse_run_config(file);
    load_checked_env(file.get_path("env_file"));
    config.master_seed = pick_seed(args.seed, config.master_seed);

    Hypervisor h(std::move(config));
    h.run(args.steps);
    h.write_outputs(args.out);
    std::size_t children = 0;
    for (const auto& r : h.lineage())
        children += r.parent_id.has_value();
    std::cout << "steps = " << h.steps_done() << "\nagents = " << h.lineage().size()
              << "\nreplications = " << children << "\nrejections = " << h.rejections().size() << "\nwrote "
              << args.out << "\n";
    return kOk;
}

// Config kind is told apart by its keys.
int cmd_validate(const std::string& path)
{
    auto const file = KeyValueFile::load(path);
    std::string kind;
    if (file.has("population_cap")) {
        kind = "run config";
        parse_run_config(file);
        load_checked_env(file.get_path("env_file"));
    } else if (file.has("cost")) {
        kind = "gene";
        Gene::from_file(file);
    } else if (file.has("n_qubits")) {
        kind = "environment";
        load_checked_env(path);
    } else {
        throw Invalid{path + ": not a run config, gene or environment file"};
    }
    std::cout << path << ": ok (" << kind << ")\n";
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Quantum knowledge-seeking agents: tomography and population runs"};
    app.require_subcommand(1);

    TomoArgs tomo;
    auto* tomo_cmd = app.add_subcommand("tomo", "reconstruct a hidden channel or output state");
    tomo_cmd->add_option("--method", tomo.method, "qst, sqpt or eapt")->required();
    tomo_cmd->add_option("--env", tomo.env, "environment config")->required();
    tomo_cmd->add_option("--shots", tomo.shots, "shots per setting, or 'exact'");
    tomo_cmd->add_option("--out", tomo.out, "output directory")->required();
    tomo_cmd->add_option("--prep", tomo.prep, "input preparation index for qst");
    tomo_cmd->add_option("--seed", tomo.seed, "RNG seed");
    tomo_cmd->add_option("--sweep", tomo.sweep, "shot counts for trace_distance.csv")->delimiter(',');

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "evolve a population from a run config");
    run_cmd->add_option("--config", run.config, "run config")->required();
    run_cmd->add_option("--out", run.out, "output directory")->required();
    run_cmd->add_option("--steps", run.steps, "override step_budget");
    run_cmd->add_option("--seed", run.seed, "override master_seed");

    std::string validate_path;
    auto* validate_cmd = app.add_subcommand("validate", "check a run config, gene or environment file");
    validate_cmd->add_option("path", validate_path, "file to check")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigFailure;
    }

    try {
        if (*tomo_cmd)
            return cmd_tomo(tomo);
        if (*run_cmd)
            return cmd_run(run);
        return cmd_validate(validate_path);
    } catch (const Invalid& e) {
        std::cerr << "error: " << e.message << "\n";
        return kConfigFailure;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigFailure;
    } catch (const std::exception& e) {
        std::cerr << "failed: " << e.what() << "\n";
        return kRuntimeFailure;
    }
}
