#include "roughsync/acceptance.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Acceptance suite: one PASS/FAIL line per criterion"};
    std::vector<int> criteria;
    std::string scratch = (std::filesystem::temp_directory_path() / "roughsync_acceptance").string();
    app.add_option("--criterion", criteria, "Criterion ids to run (default: all)");
    app.add_option("--scratch", scratch, "Directory for files written by the criteria");
    CLI11_PARSE(app, argc, argv);

    bool all = true;
    for (int id : criteria.empty() ? roughsync::acceptance_ids() : criteria) {
        const auto outcome = roughsync::run_criterion(id, scratch);
        std::cout << roughsync::format_outcome(outcome) << std::endl;
        all = all && outcome.passed;
    }
    return all ? 0 : 1;
}
