#include "roughsync/acceptance.hpp"
#include "roughsync/experiment.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace roughsync;

namespace {

enum Exit { kOk = 0, kValidation = 1, kCheckFailure = 2, kDivergence = 3 };

constexpr const char* kOutEnv = "ROUGHSYNC_OUT";

struct Common {
    std::string config_path;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
};

ExperimentConfig resolve_config(const Common& c) {
    ExperimentConfig config = c.config_path.empty() ? ExperimentConfig{} : load_config(c.config_path);
    if (c.seed) config.seeds = {*c.seed};
    if (c.jobs) config.jobs = *c.jobs;
    config.validate();
    return config;
}

/// --out beats the environment variable, which beats the config file.
fs::path resolve_out(const Common& c, const ExperimentConfig& config) {
    if (!c.out.empty()) return c.out;
    if (const char* env = std::getenv(kOutEnv); env != nullptr && *env != '\0') return env;
    return config.output_dir;
}

void print_files(const CommandResult& r) {
    for (const auto& f : r.files) std::cout << f.string() << '\n';
}

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config_path, "Configuration file (defaults reproduce the double-well experiment)");
    sub->add_option("--out", c.out, fmt::format("Output directory (overrides ${} and the config)", kOutEnv));
    sub->add_option("--seed", c.seed, "Run a single seed instead of the config's seed list");
    sub->add_option("--jobs", c.jobs, "Worker threads for independent runs")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"roughsync: synchronization of coupled fBm-driven SDEs via the Doss-Sussmann transformation"};
    app.require_subcommand(1);
    Common common;
    std::optional<double> kappa;
    bool acceptance = false;
    std::vector<int> criteria;

    auto* gen = app.add_subcommand("generate", "Write fBm paths (and areas in the rough regime)");
    add_common(gen, common);
    auto* sim = app.add_subcommand("simulate", "One coupled run per seed at a single kappa");
    add_common(sim, common);
    sim->add_option("--kappa", kappa, "Coupling strength (default: first entry of the kappa list)");
    auto* sweep = app.add_subcommand("sweep", "kappa x seed sweep with table and plot data");
    add_common(sweep, common);
    sweep->add_option("--kappa", kappa, "Sweep this single kappa instead of the list");
    auto* verify = app.add_subcommand("verify", "Run every certificate; nonzero exit on any FAIL");
    add_common(verify, common);
    verify->add_flag("--acceptance", acceptance, "Run the acceptance criteria instead of the config checks");
    verify->add_option("--criterion", criteria, "Restrict --acceptance to these criterion ids");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kValidation;
    }

    try {
        ExperimentConfig config = resolve_config(common);
        const fs::path out = resolve_out(common, config);
        fs::create_directories(out);
        if (gen->parsed()) {
            print_files(cmd_generate(config, out));
            return kOk;
        }
        if (sim->parsed()) {
            if (!kappa && config.kappas.empty()) throw ValidationError("no kappa given and the kappa list is empty");
            const CommandResult r = cmd_simulate(config, kappa ? *kappa : config.kappas.front(), out);
            print_files(r);
            return r.passed ? kOk : kCheckFailure;
        }
        if (sweep->parsed()) {
            if (kappa) config.kappas = {*kappa};
            const CommandResult r = cmd_sweep(config, out);
            print_files(r);
            return r.passed ? kOk : kCheckFailure;
        }
        if (acceptance) {
            bool all = true;
            for (int id : criteria.empty() ? acceptance_ids() : criteria) {
                const CriterionOutcome o = run_criterion(id, out / "acceptance");
                std::cout << format_outcome(o) << std::endl;
                all = all && o.passed;
            }
            return all ? kOk : kCheckFailure;
        }
        const CommandResult r = cmd_verify(config, out);
        for (const auto& rep : r.reports) std::cout << "[" << rep.status() << "] " << rep.name << '\n';
        std::cout << (r.passed ? "PASS" : "FAIL") << " (" << r.reports.size() << " checks; report in "
                  << (out / "verify_report.txt").string() << ")\n";
        return r.passed ? kOk : kCheckFailure;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << '\n';
        return kDivergence;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kValidation;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kValidation;
    }
}
