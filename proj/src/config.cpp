#include "smim/config.hpp"

#include <cstdlib>
#include <fstream>

namespace smim {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    Config cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::string text = trim(line);
        if (text.empty()) continue;
        if (text.front() == '[') {
            if (text.back() != ']') {
                throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                                  ": unterminated section header");
            }
            continue;  // sections are documentation only; keys are global
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                              ": expected key = value");
        }
        const std::string key = trim(text.substr(0, eq));
        const std::string value = trim(text.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": empty key");
        }
        cfg.values_[key] = value;
    }
    return cfg;
}

void Config::set(const std::string& key, const std::string& value) {
    values_[key] = value;
}

bool Config::has(const std::string& key) const {
    return values_.count(key) != 0;
}

std::string Config::get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing required config key '" + key + "'");
    return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) const {
    return has(key) ? get_size(key) : fallback;
}

std::size_t Config::get_size(const std::string& key) const {
    const std::string v = get_string(key);
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + v + "' is not a count");
    }
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key);
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
    }
}

double Config::get_double(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key);
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size() || v.empty()) {
        throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
    }
    return d;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : get_string(key)) {
        if (ch == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (ch != ' ' && ch != '\t') {
            cur += ch;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::vector<std::uint64_t> Config::get_u64_list(const std::string& key) const {
    std::vector<std::uint64_t> out;
    for (const auto& item : get_list(key)) {
        try {
            out.push_back(std::stoull(item));
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': '" + item + "' is not an integer");
        }
    }
    return out;
}

std::vector<std::size_t> Config::get_size_list(const std::string& key) const {
    std::vector<std::size_t> out;
    for (auto v : get_u64_list(key)) out.push_back(static_cast<std::size_t>(v));
    return out;
}

void Config::require_known(const std::set<std::string>& known) const {
    for (const auto& [key, value] : values_) {
        if (known.count(key) == 0) {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
}

}  // namespace smim
