#include "roughsync/report.hpp"

#include <fmt/format.h>

#include <sstream>
#include <stdexcept>

namespace roughsync {

double CheckReport::get(const std::string& key) const {
    for (const auto& [k, v] : values)
        if (k == key) return v;
    throw std::out_of_range("report '" + name + "' has no value '" + key + "'");
}

bool CheckReport::has(const std::string& key) const {
    for (const auto& kv : values)
        if (kv.first == key) return true;
    return false;
}

void write_report(std::ostream& os, const CheckReport& report) {
    os << '[' << report.status() << "] " << report.name << '\n';
    for (const auto& [k, v] : report.values) os << fmt::format("    {} = {:.10g}\n", k, v);
    for (const auto& n : report.notes) os << "    # " << n << '\n';
}

std::string to_text(const CheckReport& report) {
    std::ostringstream os;
    write_report(os, report);
    return os.str();
}

}  // namespace roughsync
