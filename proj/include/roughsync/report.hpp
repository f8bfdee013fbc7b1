#pragma once

#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace roughsync {

/// Outcome of a numerical certificate. Every *_check operation returns one.
struct CheckReport {
    CheckReport() = default;
    explicit CheckReport(std::string n) : name(std::move(n)) {}

    std::string name;
    bool passed = true;
    bool skipped = false;
    std::vector<std::pair<std::string, double>> values;
    std::vector<std::string> notes;

    CheckReport& set(std::string key, double value) {
        values.emplace_back(std::move(key), value);
        return *this;
    }
    CheckReport& note(std::string text) {
        notes.push_back(std::move(text));
        return *this;
    }
    /// Value stored under `key`; throws std::out_of_range if absent.
    double get(const std::string& key) const;
    bool has(const std::string& key) const;

    std::string status() const { return skipped ? "SKIP" : (passed ? "PASS" : "FAIL"); }
};

/// Plain-text summary: "[PASS] name" followed by one indented key = value line each.
void write_report(std::ostream& os, const CheckReport& report);
std::string to_text(const CheckReport& report);

}  // namespace roughsync
