#include "roughsync/experiment.hpp"

#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace roughsync;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = ROUGHSYNC_SOURCE_DIR;

ExperimentConfig parse(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is);
}

ExperimentConfig small_config() {
    return parse("[grid]\nn_steps = 256\n[sync]\nkappas = 0, 10\nseeds = 1..2\n");
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("roughsync_test_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::size_t count_lines(const fs::path& p) {
    const std::string s = slurp(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

/// Exit status of a shell command.
int run(const std::string& cmd) {
    const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

/// Oracle for the config hash: git itself, when available.
std::string git_hash_object(const std::string& text) {
    const fs::path tmp = fresh_dir("hash_input");
    fs::create_directories(tmp);
    const fs::path file = tmp / "config.txt";
    std::ofstream(file, std::ios::binary) << text;
    FILE* pipe = popen(("git hash-object " + file.string() + " 2>/dev/null").c_str(), "r");
    if (pipe == nullptr) return {};
    std::array<char, 128> buf{};
    std::string out;
    while (fgets(buf.data(), buf.size(), pipe) != nullptr) out += buf.data();
    pclose(pipe);
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    return out;
}

}  // namespace

TEST_CASE("shipped configs") {
    const ExperimentConfig def = load_config(kSource / "configs" / "default.ini");
    CHECK(to_config_text(def) == to_config_text(ExperimentConfig{}));
    CHECK(def.output_dir == "out");
    CHECK(def.effective_p() < 2.0);

    const ExperimentConfig rough = load_config(kSource / "configs" / "rough.ini");
    CHECK(rough.hurst == 0.4);
    CHECK(rough.effective_p() >= 2.0);
    CHECK(rough.effective_p() < 3.0);

    const ExperimentConfig reg = load_config(kSource / "configs" / "regression.ini");
    CHECK(reg.n_steps == 1024);
    CHECK(reg.seeds == std::vector<std::uint64_t>{1, 2, 3});
}

TEST_CASE("effective variation exponent") {
    ExperimentConfig c;
    CHECK(c.effective_p() == doctest::Approx(1.0 / 0.6));
    c.hurst = 0.55;
    CHECK(c.effective_p() == doctest::Approx(1.0 / 0.525));
    c.hurst = 0.4;
    CHECK(c.effective_p() == doctest::Approx(1.0 / (0.4 - (0.4 - 1.0 / 3.0) / 2.0)));
    c.p = 2.5;
    CHECK(c.effective_p() == 2.5);
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS(parse("[grid]\nn_steps = 0\n"), ValidationError);
    CHECK_THROWS_AS(parse("[grid]\na = 1\nb = 1\n"), ValidationError);
    CHECK_THROWS_AS(parse("[experiment]\nmodel = nope\n"), ValidationError);
    CHECK_THROWS_AS(parse("[experiment]\nhurst = 0.2\n"), ValidationError);
    CHECK_THROWS_AS(parse("[sync]\nseeds = 1, 2, 2\n"), ValidationError);
    CHECK_THROWS_AS(parse("[sync]\nkappas = 0, -1\n"), ValidationError);
    CHECK_THROWS_AS(parse("[sync]\nwindow_fraction = 1\n"), ValidationError);
    CHECK_THROWS_AS(parse("[sync]\nlambda = 1\n"), ValidationError);
    CHECK_THROWS_AS(parse("[sync]\nbogus = 1\n"), ValidationError);
    CHECK_THROWS_AS(parse("[nosuch]\nx = 1\n"), ValidationError);
    CHECK_THROWS_AS(parse("[grid]\nn_steps = many\n"), ValidationError);
    CHECK_THROWS_AS(parse("[initial]\ny1 = 1, 2\n"), ValidationError);
    CHECK_THROWS_AS(parse("[solver]\nyoung_scheme = heun\n"), ValidationError);
    CHECK_THROWS_AS(parse("[output]\njobs = 0\n"), ValidationError);
    CHECK_THROWS_AS(load_config(kSource / "configs" / "missing.ini"), ValidationError);
}

TEST_CASE("config parsing details") {
    const ExperimentConfig c = parse("[sync]\nseeds = 3..5, 9\nkappas = 1e2, 0.5\n[manifest]\ncommand = sweep\n");
    CHECK(c.seeds == std::vector<std::uint64_t>{3, 4, 5, 9});
    CHECK(c.kappas == std::vector<double>{100.0, 0.5});
    CHECK(parse("[solver]\nyoung_scheme = euler\n").young_scheme == YoungScheme::Euler);
}

TEST_CASE("canonical text round trip and hash") {
    ExperimentConfig c = parse("[experiment]\nhurst = 0.45\nc_sigma = 1.5\n[sync]\np = 2.4\nkappas = 0.1, 3\n");
    const std::string text = to_config_text(c);
    CHECK(to_config_text(parse(text)) == text);
    CHECK(config_hash(parse(text)) == config_hash(c));

    ExperimentConfig d = c;
    d.output_dir = "elsewhere";
    d.jobs = 7;
    CHECK(config_hash(d) == config_hash(c));
    d.kappas.push_back(5.0);
    CHECK(config_hash(d) != config_hash(c));

    CHECK(config_hash(c).size() == 40);
    const std::string git = git_hash_object(text);
    if (!git.empty()) CHECK(config_hash(c) == git);
}

TEST_CASE("generate writes paths, areas and a manifest") {
    const fs::path out = fresh_dir("generate");
    ExperimentConfig c = small_config();
    const CommandResult r = cmd_generate(c, out);
    CHECK(fs::exists(out / "paths" / "fbm_seed1.csv"));
    CHECK(fs::exists(out / "paths" / "fbm_seed2.csv"));
    CHECK_FALSE(fs::exists(out / "paths" / "area_seed1.csv"));
    CHECK(count_lines(out / "paths" / "fbm_seed1.csv") == 258);
    const std::string first = slurp(out / "paths" / "fbm_seed1.csv");

    // The manifest re-runs to identical outputs.
    const ExperimentConfig again = load_config(out / "manifest_generate.txt");
    CHECK(config_hash(again) == config_hash(c));
    const fs::path out2 = fresh_dir("generate2");
    cmd_generate(again, out2);
    CHECK(slurp(out2 / "paths" / "fbm_seed1.csv") == first);
    CHECK(slurp(out2 / "manifest_generate.txt") == slurp(out / "manifest_generate.txt"));

    c.hurst = 0.4;
    const fs::path out3 = fresh_dir("generate3");
    cmd_generate(c, out3);
    CHECK(fs::exists(out3 / "paths" / "area_seed1.csv"));
    CHECK(slurp(out3 / "manifest_generate.txt").find("regime = rough") != std::string::npos);
    CHECK(r.files.size() == 3);
}

TEST_CASE("simulate and sweep outputs") {
    const ExperimentConfig c = small_config();
    const fs::path out = fresh_dir("sweep");
    const CommandResult s = cmd_simulate(c, 10.0, out);
    CHECK(s.passed);
    CHECK(fs::exists(out / "runs" / "run_k10_s1.csv"));
    CHECK(fs::exists(out / "runs" / "report_k10_s2.txt"));
    CHECK(count_lines(out / "simulate_k10.csv") == 3);

    const CommandResult w = cmd_sweep(c, out);
    CHECK(w.passed);
    CHECK(count_lines(out / "sweep.csv") == 1 + 2 * 2);
    const std::string plot = slurp(out / "plot_data.csv");
    CHECK(plot.substr(0, plot.find('\n')).find("ybar_0_kappa10") != std::string::npos);
    CHECK(fs::exists(out / "manifest_sweep.txt"));

    ExperimentConfig empty = c;
    empty.kappas.clear();
    CHECK_THROWS_AS(cmd_sweep(empty, out), ValidationError);

    ExperimentConfig rough = c;
    rough.hurst = 0.4;
    const fs::path out_r = fresh_dir("sweep_rough");
    cmd_sweep(rough, out_r);
    const std::string a = slurp(out / "sweep.csv"), b = slurp(out_r / "sweep.csv");
    CHECK(a.substr(0, a.find('\n')) == b.substr(0, b.find('\n')));
}

TEST_CASE("default setting without coupling stays separated") {
    ExperimentConfig c;
    const fs::path out = fresh_dir("separated");
    cmd_simulate(c, 0.0, out);
    std::ifstream is(out / "simulate_k0.csv");
    std::string line;
    std::getline(is, line);
    REQUIRE(line.rfind("kappa,seed,sync_error", 0) == 0);
    std::size_t separated = 0, rows = 0;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string kappa, seed, err;
        std::getline(ls, kappa, ',');
        std::getline(ls, seed, ',');
        std::getline(ls, err, ',');
        ++rows;
        if (std::stod(err) > 0.5) ++separated;
    }
    CHECK(rows == 10);
    CHECK(separated >= 8);
}

TEST_CASE("verify") {
    SUBCASE("regression config passes and creates the output directory") {
        const fs::path out = fresh_dir("verify") / "nested";
        const CommandResult r = cmd_verify(load_config(kSource / "configs" / "regression.ini"), out);
        CHECK(r.passed);
        CHECK(fs::exists(out / "verify_report.txt"));
        CHECK(fs::exists(out / "manifest_verify.txt"));
    }
    SUBCASE("understated C_sigma fails the diffusion certificate") {
        ExperimentConfig c = small_config();
        c.c_sigma = 0.5;
        const CommandResult r = cmd_verify(c, fresh_dir("verify_bad"));
        CHECK_FALSE(r.passed);
        bool a2_failed = false;
        for (const auto& rep : r.reports)
            if (rep.name.rfind("assumption_a2", 0) == 0) a2_failed = !rep.passed;
        CHECK(a2_failed);
    }
}

TEST_CASE("command line exit codes") {
    const std::string cli = ROUGHSYNC_CLI_PATH;
    const fs::path dir = fresh_dir("cli");
    fs::create_directories(dir);
    const auto write = [&](const std::string& name, const std::string& text) {
        std::ofstream(dir / name) << text;
        return (dir / name).string();
    };
    const std::string small = write("small.ini", "[grid]\nn_steps = 128\n[sync]\nkappas = 0, 10\nseeds = 1\n");
    CHECK(run(cli + " generate --config " + small + " --out " + (dir / "ok").string()) == 0);
    CHECK(fs::exists(dir / "ok" / "paths" / "fbm_seed1.csv"));
    CHECK(run(cli + " simulate --config " + small + " --kappa 10 --seed 2 --out " + (dir / "ok").string()) == 0);
    CHECK(fs::exists(dir / "ok" / "runs" / "run_k10_s2.csv"));

    CHECK(run(cli + " generate --config " + write("bad.ini", "[experiment]\nmodel = nope\n")) == 1);
    CHECK(run(cli + " bogus") == 1);
    const std::string understated =
        write("understated.ini", "[experiment]\nc_sigma = 0.5\n[grid]\nn_steps = 128\n[sync]\nseeds = 1\n");
    CHECK(run(cli + " verify --config " + understated + " --out " + (dir / "v").string()) == 2);
    const std::string runaway = write("runaway.ini", "[grid]\nn_steps = 128\n[sync]\nseeds = 1\n[solver]\nblowup_cap = 2\n");
    CHECK(run(cli + " simulate --config " + runaway + " --kappa 0 --out " + (dir / "d").string()) == 3);

    // The environment variable sits between --out and the config.
    const fs::path env_out = dir / "from_env";
    CHECK(run("ROUGHSYNC_OUT=" + env_out.string() + " " + cli + " generate --config " + small) == 0);
    CHECK(fs::exists(env_out / "manifest_generate.txt"));
    CHECK(run("ROUGHSYNC_OUT=" + env_out.string() + " " + cli + " generate --config " + small + " --out " +
              (dir / "flag").string()) == 0);
    CHECK(fs::exists(dir / "flag" / "manifest_generate.txt"));
}
