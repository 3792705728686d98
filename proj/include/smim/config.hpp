#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "smim/common.hpp"

namespace smim {

/// Flat key=value experiment configuration. Files use the same keys the CLI
/// accepts as --key value overrides; '#' starts a comment and [section]
/// headers are organizational only. Unknown keys are hard errors so typos
/// cannot silently change an experiment.
class Config {
public:
    Config() = default;

    static Config from_file(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const;

    std::string get_string(const std::string& key) const;  // throws if missing
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::size_t get_size(const std::string& key, std::size_t fallback) const;
    std::size_t get_size(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& key) const;          // comma-split
    std::vector<std::uint64_t> get_u64_list(const std::string& key) const;
    std::vector<std::size_t> get_size_list(const std::string& key) const;

    /// Rejects any key outside `known` with a ConfigError naming it.
    void require_known(const std::set<std::string>& known) const;

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace smim
