#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace okapi {

// Flat key=value configuration. '#' starts a comment, blank lines are
// skipped, and `include <path>` splices another file (path relative to the
// including file). Later assignments win, so includes act as defaults when
// they come first.
struct FlatConfig {
    std::map<std::string, std::string> values;
    std::vector<std::string> sources;

    bool has(const std::string& key) const { return values.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { values[key] = value; }

    std::string get(const std::string& key, const std::string& fallback) const;
    std::string require(const std::string& key) const;
    int get_int(const std::string& key, int fallback) const;
    uint64_t get_u64(const std::string& key, uint64_t fallback) const;
    double get_real(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    // Canonical sorted key=value rendering; what manifests hash.
    std::string render() const;
};

FlatConfig load_config_file(const std::string& path);

// origin names the text in error messages and anchors relative includes.
FlatConfig parse_config_text(const std::string& text, const std::string& origin);

} // namespace okapi
