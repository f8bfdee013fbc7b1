#include "roughsync/experiment.hpp"

#include "roughsync/integrate.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <openssl/sha.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

namespace roughsync {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (t.empty() || used != t.size() || !std::isfinite(v))
        throw ValidationError(fmt::format("config key '{}': '{}' is not a finite number", key, text));
    return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos)
        throw ValidationError(fmt::format("config key '{}': '{}' is not a nonnegative integer", key, text));
    try {
        return std::stoull(t);
    } catch (const std::exception&) {
        throw ValidationError(fmt::format("config key '{}': '{}' is out of range", key, text));
    }
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<double> parse_doubles(const std::string& key, const std::string& text) {
    std::vector<double> out;
    for (const auto& item : split_list(text)) out.push_back(parse_double(key, item));
    return out;
}

/// Comma list of integers; "lo..hi" expands to the inclusive range.
std::vector<std::uint64_t> parse_seeds(const std::string& key, const std::string& text) {
    std::vector<std::uint64_t> out;
    for (const auto& item : split_list(text)) {
        const auto dots = item.find("..");
        if (dots == std::string::npos) {
            out.push_back(parse_uint(key, item));
            continue;
        }
        const auto lo = parse_uint(key, item.substr(0, dots));
        const auto hi = parse_uint(key, item.substr(dots + 2));
        if (hi < lo || hi - lo > 1000000) throw ValidationError(fmt::format("config key '{}': bad range '{}'", key, item));
        for (auto s = lo; s <= hi; ++s) out.push_back(s);
    }
    return out;
}

YoungScheme parse_scheme(const std::string& text) {
    const std::string t = trim(text);
    if (t == "milstein") return YoungScheme::Milstein;
    if (t == "euler") return YoungScheme::Euler;
    throw ValidationError(fmt::format("young_scheme must be 'milstein' or 'euler', got '{}'", text));
}

template <class T>
std::string join(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + fmt::format("{}", v[i]);
    return out;
}

Vec to_vec(const std::vector<double>& v) {
    Vec out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
    return out;
}

std::ofstream open_out(const fs::path& path) {
    fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError(fmt::format("cannot write '{}'", path.string()));
    return os;
}

std::string kappa_tag(double kappa) { return fmt::format("{}", kappa); }

/// Canonical config text followed by a [manifest] section.
void write_manifest(const fs::path& path, const ExperimentConfig& config, const std::string& command,
                    const std::vector<std::pair<std::string, std::string>>& extra, CommandResult& result) {
    auto os = open_out(path);
    os << "; run manifest: the sections above [manifest] re-run this command\n";
    os << to_config_text(config);
    os << "\n[manifest]\n";
    os << "command = " << command << '\n';
    os << "config_hash = " << config_hash(config) << '\n';
    os << "regime = " << (HurstParam(config.hurst).regime() == Regime::Young ? "young" : "rough") << '\n';
    os << fmt::format("effective_p = {}\n", config.effective_p());
    for (const auto& [k, v] : extra) os << k << " = " << v << '\n';
    result.files.push_back(path);
}

}  // namespace

double ExperimentConfig::effective_p() const {
    if (p) return *p;
    const HurstParam h(hurst);
    const double margin = h.regime() == Regime::Young ? std::min(0.15, (hurst - 0.5) / 2.0)
                                                      : std::min(0.05, (hurst - 1.0 / 3.0) / 2.0);
    return 1.0 / (hurst - margin);
}

void ExperimentConfig::validate() const {
    const HurstParam h(hurst);
    if (n_steps == 0) throw ValidationError("grid.n_steps must be positive");
    if (!(b > a)) throw ValidationError("grid needs a < b");
    if (c_sigma && !(*c_sigma > 0.0)) throw ValidationError("model.c_sigma must be positive");
    const ModelSpec spec = make_model(model);  // throws for unknown names
    if (y1.size() != spec.sigma.m() || y2.size() != spec.sigma.m())
        throw ValidationError(fmt::format("initial data must have dimension {}", spec.sigma.m()));
    for (double k : kappas)
        if (!(k >= 0.0)) throw ValidationError(fmt::format("kappa must be >= 0, got {}", k));
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
        throw ValidationError("seeds must be distinct");
    if (!(lambda > 0.0 && lambda < 1.0)) throw ValidationError("sync.lambda must lie in (0, 1)");
    if (!(generic_c > 0.0)) throw ValidationError("sync.generic_c must be positive");
    if (p && !(*p >= 1.0)) throw ValidationError("sync.p must be >= 1");
    const double pe = effective_p();
    if (h.regime() == Regime::Young && !(pe < 2.0)) throw ValidationError("Young regime needs p < 2");
    if (h.regime() == Regime::Rough && !(pe >= 2.0 && pe < 3.0)) throw ValidationError("rough regime needs p in [2, 3)");
    if (!(window_fraction >= 0.0 && window_fraction < 1.0))
        throw ValidationError("sync.window_fraction must lie in [0, 1)");
    if (!(blowup_cap > 0.0)) throw ValidationError("solver.blowup_cap must be positive");
    if (!(tolerances.inverse_jacobian > 0.0)) throw ValidationError("tolerances.inverse_jacobian must be positive");
    if (jobs == 0) throw ValidationError("output.jobs must be positive");
}

ExperimentConfig parse_config(std::istream& is) {
    pt::ptree tree;
    try {
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ValidationError(fmt::format("config syntax error: {}", e.what()));
    }
    ExperimentConfig c;
    using Setter = std::function<void(const std::string&, const std::string&)>;
    const std::map<std::string, std::map<std::string, Setter>> schema{
        {"experiment",
         {{"hurst", [&](auto& k, auto& v) { c.hurst = parse_double(k, v); }},
          {"model", [&](auto&, auto& v) { c.model = trim(v); }},
          {"c_sigma", [&](auto& k, auto& v) { c.c_sigma = parse_double(k, v); }}}},
        {"grid",
         {{"a", [&](auto& k, auto& v) { c.a = parse_double(k, v); }},
          {"b", [&](auto& k, auto& v) { c.b = parse_double(k, v); }},
          {"n_steps", [&](auto& k, auto& v) { c.n_steps = parse_uint(k, v); }}}},
        {"initial",
         {{"y1", [&](auto& k, auto& v) { c.y1 = parse_doubles(k, v); }},
          {"y2", [&](auto& k, auto& v) { c.y2 = parse_doubles(k, v); }}}},
        {"sync",
         {{"kappas", [&](auto& k, auto& v) { c.kappas = parse_doubles(k, v); }},
          {"seeds", [&](auto& k, auto& v) { c.seeds = parse_seeds(k, v); }},
          {"lambda", [&](auto& k, auto& v) { c.lambda = parse_double(k, v); }},
          {"generic_c", [&](auto& k, auto& v) { c.generic_c = parse_double(k, v); }},
          {"p", [&](auto& k, auto& v) { c.p = parse_double(k, v); }},
          {"window_fraction", [&](auto& k, auto& v) { c.window_fraction = parse_double(k, v); }}}},
        {"solver",
         {{"young_scheme", [&](auto&, auto& v) { c.young_scheme = parse_scheme(v); }},
          {"blowup_cap", [&](auto& k, auto& v) { c.blowup_cap = parse_double(k, v); }}}},
        {"tolerances",
         {{"inverse_jacobian", [&](auto& k, auto& v) { c.tolerances.inverse_jacobian = parse_double(k, v); }},
          {"frechet_min_order", [&](auto& k, auto& v) { c.tolerances.frechet_min_order = parse_double(k, v); }},
          {"consistency_min_order",
           [&](auto& k, auto& v) { c.tolerances.consistency_min_order = parse_double(k, v); }}}},
        {"output",
         {{"dir", [&](auto&, auto& v) { c.output_dir = trim(v); }},
          {"jobs", [&](auto& k, auto& v) { c.jobs = parse_uint(k, v); }}}},
    };
    for (const auto& [section, body] : tree) {
        if (section == "manifest") continue;
        const auto sec = schema.find(section);
        if (sec == schema.end() || body.empty())
            throw ValidationError(fmt::format("unknown config section or top-level key '{}'", section));
        for (const auto& [key, node] : body) {
            const auto it = sec->second.find(key);
            if (it == sec->second.end())
                throw ValidationError(fmt::format("unknown config key '{}.{}'", section, key));
            it->second(section + "." + key, node.data());
        }
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError(fmt::format("cannot open config '{}'", path.string()));
    return parse_config(is);
}

std::string to_config_text(const ExperimentConfig& c) {
    std::string s;
    s += fmt::format("[experiment]\nhurst = {}\nmodel = {}\n", c.hurst, c.model);
    if (c.c_sigma) s += fmt::format("c_sigma = {}\n", *c.c_sigma);
    s += fmt::format("\n[grid]\na = {}\nb = {}\nn_steps = {}\n", c.a, c.b, c.n_steps);
    s += fmt::format("\n[initial]\ny1 = {}\ny2 = {}\n", join(c.y1), join(c.y2));
    s += fmt::format("\n[sync]\nkappas = {}\nseeds = {}\nlambda = {}\ngeneric_c = {}\n", join(c.kappas),
                     join(c.seeds), c.lambda, c.generic_c);
    if (c.p) s += fmt::format("p = {}\n", *c.p);
    s += fmt::format("window_fraction = {}\n", c.window_fraction);
    s += fmt::format("\n[solver]\nyoung_scheme = {}\nblowup_cap = {}\n",
                     c.young_scheme == YoungScheme::Milstein ? "milstein" : "euler", c.blowup_cap);
    s += fmt::format("\n[tolerances]\ninverse_jacobian = {}\nfrechet_min_order = {}\nconsistency_min_order = {}\n",
                     c.tolerances.inverse_jacobian, c.tolerances.frechet_min_order,
                     c.tolerances.consistency_min_order);
    return s;
}

std::string config_hash(const ExperimentConfig& config) {
    const std::string text = to_config_text(config);
    const std::string blob = "blob " + std::to_string(text.size()) + '\0' + text;
    unsigned char digest[SHA_DIGEST_LENGTH];
    SHA1(reinterpret_cast<const unsigned char*>(blob.data()), blob.size(), digest);
    std::string out;
    for (unsigned char b : digest) out += fmt::format("{:02x}", b);
    return out;
}

SweepSetup make_setup(const ExperimentConfig& config) {
    config.validate();
    ModelSpec model = make_model(config.model);
    if (config.c_sigma) model.sigma = model.sigma.with_c_sigma(*config.c_sigma);
    SweepSetup setup{std::move(model), config.hurst, config.grid(), {to_vec(config.y1), to_vec(config.y2)}, {}};
    setup.options.flow.young_scheme = config.young_scheme;
    setup.options.flow.blowup_cap = config.blowup_cap;
    setup.options.constants.p = config.effective_p();
    setup.options.constants.generic_c = config.generic_c;
    setup.options.lambda = config.lambda;
    setup.options.window_fraction = config.window_fraction;
    return setup;
}

// ---------------------------------------------------------------------------
// Commands

CommandResult cmd_generate(const ExperimentConfig& config, const fs::path& out) {
    const SweepSetup setup = make_setup(config);
    CommandResult result;
    std::vector<std::pair<std::string, std::string>> extra;
    for (std::uint64_t seed : config.seeds) {
        const Driver drv = make_driver(setup.hurst, setup.grid, setup.model.sigma.d(), seed);
        {
            const fs::path p = out / "paths" / fmt::format("fbm_seed{}.csv", seed);
            auto os = open_out(p);
            write_path_csv(os, drv.path());
            result.files.push_back(p);
        }
        if (drv.lift()) {
            const fs::path p = out / "paths" / fmt::format("area_seed{}.csv", seed);
            auto os = open_out(p);
            write_area_csv(os, *drv.lift());
            result.files.push_back(p);
        }
        extra.emplace_back(fmt::format("driver_seed_{}", seed), drv.id());
    }
    write_manifest(out / "manifest_generate.txt", config, "generate", extra, result);
    return result;
}

namespace {

/// Shared body of simulate and sweep: runs the sweep, writes per-run artifacts
/// and the table. plot receives the first seed's trajectories per kappa.
CommandResult run_sweep_command(const ExperimentConfig& config, const std::vector<double>& kappas,
                                const fs::path& out, const std::string& command, const fs::path& table_name,
                                bool plot) {
    const SweepSetup setup = make_setup(config);
    CommandResult result;
    std::mutex mutex;
    std::map<std::uint64_t, std::string> driver_refs;
    std::map<double, std::pair<GridPath, GridPath>> plot_runs;  // kappa -> (y1|y2, ybar)
    std::map<std::pair<double, std::uint64_t>, std::vector<fs::path>> run_files;
    const std::uint64_t plot_seed = config.seeds.empty() ? 0 : config.seeds.front();

    auto sink = [&](const SyncRunResult& res, std::uint64_t seed) {
        const std::string stem = fmt::format("k{}_s{}", kappa_tag(res.kappa), seed);
        const fs::path traj = out / "runs" / ("run_" + stem + ".csv");
        const fs::path rep = out / "runs" / ("report_" + stem + ".txt");
        {
            auto os = open_out(traj);
            write_run_csv(os, res);
        }
        {
            auto os = open_out(rep);
            os << fmt::format("kappa = {}\nseed = {}\ndriver = {}\nsync_error = {:.17g}\nn_greedy = {}\n"
                              "gamma = {:.17g}\nrk_substeps = {}\n",
                              res.kappa, seed, res.driver_ref, res.sync_error, res.n_greedy, res.gamma,
                              res.rk_substeps);
            for (const auto& r : res.reports) write_report(os, r);
        }
        std::lock_guard lock(mutex);
        driver_refs[seed] = res.driver_ref;
        run_files[{res.kappa, seed}] = {traj, rep};
        if (plot && seed == plot_seed) {
            GridPath both(res.y1.grid(), 2 * res.y1.dim());
            for (std::size_t i = 0; i < both.n_points(); ++i)
                for (std::size_t k = 0; k < res.y1.dim(); ++k) {
                    both(i, k) = res.y1(i, k);
                    both(i, res.y1.dim() + k) = res.y2(i, k);
                }
            plot_runs.emplace(res.kappa, std::make_pair(std::move(both), *res.ybar));
        }
    };
    const auto rows = kappa_sweep(setup, kappas, config.seeds, config.jobs, sink);
    for (const auto& row : rows) {
        for (const auto& f : run_files[{row.kappa, row.seed}]) result.files.push_back(f);
        if (!row.bounds_passed) result.passed = false;
    }
    {
        const fs::path p = out / table_name;
        auto os = open_out(p);
        write_sweep_csv(os, rows);
        result.files.push_back(p);
    }
    if (plot && !plot_runs.empty()) {
        const fs::path p = out / "plot_data.csv";
        auto os = open_out(p);
        const std::size_t m = setup.model.sigma.m();
        os << "t";
        for (const auto& [kappa, runs] : plot_runs)
            for (const char* name : {"y1", "y2", "ybar"})
                for (std::size_t k = 0; k < m; ++k) os << fmt::format(",{}_{}_kappa{}", name, k, kappa_tag(kappa));
        os << '\n';
        for (std::size_t i = 0; i < setup.grid.n_points(); ++i) {
            os << fmt::format("{:.17g}", setup.grid.time(i));
            for (const auto& [kappa, runs] : plot_runs) {
                for (std::size_t k = 0; k < 2 * m; ++k) os << fmt::format(",{:.17g}", runs.first(i, k));
                for (std::size_t k = 0; k < m; ++k) os << fmt::format(",{:.17g}", runs.second(i, k));
            }
            os << '\n';
        }
        result.files.push_back(p);
    }
    std::vector<std::pair<std::string, std::string>> extra;
    extra.emplace_back("kappas_run", join(kappas));
    for (const auto& [seed, ref] : driver_refs) extra.emplace_back(fmt::format("driver_seed_{}", seed), ref);
    write_manifest(out / fmt::format("manifest_{}.txt", command), config, command, extra, result);
    return result;
}

}  // namespace

CommandResult cmd_simulate(const ExperimentConfig& config, double kappa, const fs::path& out) {
    if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw ValidationError("kappa must be finite and >= 0");
    return run_sweep_command(config, {kappa}, out, "simulate",
                             fmt::format("simulate_k{}.csv", kappa_tag(kappa)), false);
}

CommandResult cmd_sweep(const ExperimentConfig& config, const fs::path& out) {
    if (config.kappas.empty()) throw ValidationError("sweep needs a nonempty kappa list");
    return run_sweep_command(config, config.kappas, out, "sweep", "sweep.csv", true);
}

CommandResult cmd_verify(const ExperimentConfig& config, const fs::path& out) {
    const SweepSetup setup = make_setup(config);
    const ModelSpec& model = setup.model;
    const Tolerances& tol = config.tolerances;
    CommandResult result;
    auto add = [&](CheckReport r) {
        if (!r.passed && !r.skipped) result.passed = false;
        result.reports.push_back(std::move(r));
    };
    const std::uint64_t probe_seed = config.seeds.empty() ? 0 : config.seeds.front();
    add(check_a1(model.f, 2000, probe_seed));
    add(check_a1(model.g, 2000, probe_seed + 1));
    add(check_a2(model.sigma, 400, probe_seed));

    const std::size_t n = setup.grid.n_steps();
    for (std::uint64_t seed : config.seeds) {
        const Driver drv = make_driver(setup.hurst, setup.grid, model.sigma.d(), seed);
        const GreedyPartition part = sync_greedy_partition(model.sigma, drv, setup.options);
        CheckReport count = drv.lift() ? check_greedy_count_bound(*drv.lift(), part)
                                       : check_greedy_count_bound(drv.path(), part);
        count.name += fmt::format(":seed{}", seed);
        add(std::move(count));
        if (drv.lift()) {
            const std::size_t last = std::min<std::size_t>(n, 64);
            CheckReport chen(fmt::format("chen_relation:seed{}", seed));
            chen.set("chen_residual", chen_residual(*drv.lift(), {0, last}));
            chen.set("symmetric_residual", symmetric_part_residual(*drv.lift(), {0, last}));
            chen.passed = chen.get("chen_residual") <= 1e-12 && chen.get("symmetric_residual") <= 1e-12;
            add(std::move(chen));
        }
        CheckReport inv = flow_inverse_jacobian_check(model.sigma, drv, setup.y0.y1, n, setup.options.flow);
        inv.passed = inv.get("deviation_frobenius") <= tol.inverse_jacobian;
        inv.name += fmt::format(":seed{}", seed);
        add(std::move(inv));
        CheckReport fr = frechet_remainder_check(model.sigma, drv, setup.y0.y1, Vec::Constant(setup.y0.y1.size(), 0.1),
                                                 n, setup.options.flow);
        if (fr.notes.empty()) fr.passed = std::isfinite(fr.get("fitted_order")) && fr.get("fitted_order") >= tol.frechet_min_order;
        fr.name += fmt::format(":seed{}", seed);
        add(std::move(fr));
    }

    double ds_kappa = 10.0;
    for (double k : config.kappas)
        if (k > 0.0) {
            ds_kappa = k;
            break;
        }
    if (n % 4 == 0 && n >= 32 && !config.seeds.empty()) {
        CheckReport ds = doss_sussmann_consistency_check(setup, config.seeds.front(), ds_kappa, {n / 4, n / 2, n});
        ds.passed = std::isfinite(ds.get("fitted_order")) && ds.get("fitted_order") > tol.consistency_min_order;
        add(std::move(ds));
    }

    std::mutex mutex;
    std::map<std::pair<double, std::uint64_t>, std::vector<CheckReport>> run_reports;
    kappa_sweep(setup, config.kappas, config.seeds, config.jobs, [&](const SyncRunResult& res, std::uint64_t seed) {
        std::vector<CheckReport> reps = res.reports;
        for (auto& r : reps) r.name += fmt::format(":kappa{}:seed{}", kappa_tag(res.kappa), seed);
        std::lock_guard lock(mutex);
        run_reports[{res.kappa, seed}] = std::move(reps);
    });
    for (double k : config.kappas)
        for (std::uint64_t seed : config.seeds)
            for (auto& r : run_reports[{k, seed}]) add(std::move(r));

    const fs::path p = out / "verify_report.txt";
    auto os = open_out(p);
    std::size_t failed = 0;
    for (const auto& r : result.reports) {
        write_report(os, r);
        if (!r.passed && !r.skipped) ++failed;
    }
    os << fmt::format("\n{} checks, {} failed: {}\n", result.reports.size(), failed, result.passed ? "PASS" : "FAIL");
    result.files.push_back(p);
    std::vector<std::pair<std::string, std::string>> extra{{"checks", std::to_string(result.reports.size())},
                                                           {"failed", std::to_string(failed)}};
    write_manifest(out / "manifest_verify.txt", config, "verify", extra, result);
    return result;
}

}  // namespace roughsync
