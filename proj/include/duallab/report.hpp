#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "duallab/errors.hpp"

namespace duallab {

// Fixed-format double rendering: CSV bodies must be byte-identical across
// reruns with the same seed, so all numeric output funnels through here.
inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Check {
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    std::string cmp = "<="; // "<=" or ">="
    bool pass = false;

    static Check at_most(std::string name, double value, double threshold) {
        Check c{std::move(name), value, threshold, "<=", value <= threshold};
        return c;
    }
    static Check at_least(std::string name, double value, double threshold) {
        Check c{std::move(name), value, threshold, ">=", value >= threshold};
        return c;
    }
};

struct RunSummary {
    std::string command;
    nlohmann::ordered_json params;
    std::vector<Check> checks;
    std::vector<std::pair<std::string, double>> key_figures; // sweep row material
    std::vector<std::string> artifacts;

    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["command"] = command;
        j["params"] = params;
        auto arr = nlohmann::ordered_json::array();
        for (const auto& c : checks)
            arr.push_back({{"name", c.name},
                           {"value", c.value},
                           {"threshold", c.threshold},
                           {"cmp", c.cmp},
                           {"pass", c.pass}});
        j["checks"] = std::move(arr);
        auto figs = nlohmann::ordered_json::object();
        for (const auto& [k, v] : key_figures) figs[k] = v;
        j["key_figures"] = std::move(figs);
        j["artifacts"] = artifacts;
        j["pass"] = all_pass();
        return j;
    }
};

class CsvTable {
  public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    void add_row(const std::vector<std::string>& cells) {
        if (cells.size() != header_.size())
            throw std::invalid_argument("CSV row width does not match header");
        rows_.push_back(cells);
    }

    void add_numeric_row(const std::vector<double>& cells) {
        std::vector<std::string> row;
        row.reserve(cells.size());
        for (double v : cells) row.push_back(format_number(v));
        add_row(row);
    }

    std::string body() const {
        std::string out;
        for (std::size_t i = 0; i < header_.size(); ++i)
            out += (i ? "," : "") + header_[i];
        out += "\n";
        for (const auto& row : rows_) {
            for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + row[i];
            out += "\n";
        }
        return out;
    }

    void write(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw config_error("cannot write " + path.string());
        out << body();
    }

  private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

inline void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

// Timestamps and other run-identifying noise live here and only here, so
// every other artifact is reproducible byte for byte.
inline void write_metadata(const std::filesystem::path& dir, const RunSummary& summary) {
    nlohmann::ordered_json j;
    const auto now = std::chrono::system_clock::now();
    j["timestamp_unix_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
    j["command"] = summary.command;
    write_json_file(dir / "metadata.json", j);
}

} // namespace duallab
