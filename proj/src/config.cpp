#include "okapi/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <set>

#include "okapi/errors.hpp"
#include "okapi/util.hpp"

namespace fs = std::filesystem;

namespace okapi {

namespace {

void parse_into(FlatConfig& cfg, const std::string& text, const std::string& origin,
                std::set<std::string>& active) {
    int lineno = 0;
    for (const std::string& raw : split_lines(text)) {
        ++lineno;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        const std::string where = origin + ":" + std::to_string(lineno);

        if (starts_with(line, "include ") || line == "include") {
            std::string target = trim(line.substr(7));
            if (target.empty()) throw ConfigError(where + ": include needs a path");
            fs::path p(target);
            if (p.is_relative()) p = fs::path(origin).parent_path() / p;
            std::string canon = p.lexically_normal().string();
            if (active.count(canon))
                throw ConfigError(where + ": include cycle through " + canon);
            if (!fs::exists(p)) throw ConfigError(where + ": include not found: " + canon);
            active.insert(canon);
            parse_into(cfg, read_file(canon), canon, active);
            active.erase(canon);
            cfg.sources.push_back(canon);
            continue;
        }

        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(where + ": expected key=value, got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(where + ": empty key");
        cfg.values[key] = value;
    }
}

} // namespace

std::string FlatConfig::get(const std::string& key, const std::string& fallback) const {
    auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
}

std::string FlatConfig::require(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) throw ConfigError("missing config key '" + key + "'");
    return it->second;
}

int FlatConfig::get_int(const std::string& key, int fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    try {
        size_t pos = 0;
        int v = std::stoi(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' is not an integer: '" + it->second + "'");
    }
}

uint64_t FlatConfig::get_u64(const std::string& key, uint64_t fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    try {
        size_t pos = 0;
        unsigned long long v = std::stoull(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return static_cast<uint64_t>(v);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' is not an unsigned integer: '" + it->second +
                          "'");
    }
}

double FlatConfig::get_real(const std::string& key, double fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    try {
        size_t pos = 0;
        double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' is not a number: '" + it->second + "'");
    }
}

bool FlatConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    std::string v = to_lower(it->second);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "' is not a boolean: '" + it->second + "'");
}

std::string FlatConfig::render() const {
    std::string out;
    for (const auto& [k, v] : values) out += k + "=" + v + "\n";
    return out;
}

FlatConfig load_config_file(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
    FlatConfig cfg;
    std::set<std::string> active;
    std::string canon = fs::path(path).lexically_normal().string();
    active.insert(canon);
    parse_into(cfg, read_file(path), canon, active);
    cfg.sources.push_back(canon);
    return cfg;
}

FlatConfig parse_config_text(const std::string& text, const std::string& origin) {
    FlatConfig cfg;
    std::set<std::string> active;
    parse_into(cfg, text, origin, active);
    return cfg;
}

} // namespace okapi
