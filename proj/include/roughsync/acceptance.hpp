#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace roughsync {

struct CriterionOutcome {
    int id = 0;
    std::string title;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

/// Criterion ids, 1..12.
std::vector<int> acceptance_ids();

/// Runs one acceptance criterion. scratch receives any files the criterion writes.
/// Criterion 11 reuses the runs of criterion 9 when both execute in one process.
CriterionOutcome run_criterion(int id, const std::filesystem::path& scratch);

/// "PASS criterion N: title (detail) [s]".
std::string format_outcome(const CriterionOutcome& outcome);

}  // namespace roughsync
