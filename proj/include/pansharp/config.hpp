#pragma once

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pansharp/types.hpp"

namespace pansharp {

// Flat key-value run configuration: UTF-8 "key = value" lines, '#' comments.
// Unknown keys are rejected against the caller's key set; command-line flags
// override file values.

struct RunConfig {
    std::map<std::string, std::string> values;

    static RunConfig load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw FormatError("cannot open config: " + path);
        RunConfig cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t\r");
                const auto e = s.find_last_not_of(" \t\r");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            const std::string t = trim(line);
            if (t.empty()) continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw FormatError("config line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(t.substr(0, eq));
            const std::string value = trim(t.substr(eq + 1));
            if (key.empty()) throw FormatError("config line " + std::to_string(lineno) + ": empty key");
            cfg.values[key] = value;
        }
        return cfg;
    }

    void reject_unknown(const std::set<std::string>& known) const {
        std::string bad;
        for (const auto& [k, v] : values)
            if (!known.count(k)) bad += (bad.empty() ? "" : ", ") + k;
        if (!bad.empty()) throw FormatError("unknown config keys: " + bad);
    }

    bool has(const std::string& key) const { return values.count(key) > 0; }
    std::string get(const std::string& key, const std::string& fallback = "") const {
        auto it = values.find(key);
        return it == values.end() ? fallback : it->second;
    }
};

}  // namespace pansharp
