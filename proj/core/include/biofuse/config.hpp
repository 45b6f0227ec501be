#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace biofuse::config {

// Flat `key value...` text configuration with '#' comments. Every getter
// raises ConfigError naming the missing or malformed field, and
// check_schema rejects unknown keys outright.
class KeyValueConfig {
public:
    static KeyValueConfig parse_file(const std::string& path);
    static KeyValueConfig parse_string(const std::string& text, const std::string& origin = "");

    bool has(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key) const;
    long long get_int(const std::string& key, long long fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<long long> get_int_list(const std::string& key) const;  // comma separated
    std::vector<std::string> get_string_list(const std::string& key) const;

    // Unknown keys (not in required or optional) and missing required keys
    // are configuration errors with field-level diagnostics.
    void check_schema(const std::vector<std::string>& required,
                      const std::vector<std::string>& optional) const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::string describe(const std::string& key) const;

    std::map<std::string, std::string> values_;
    std::map<std::string, int> lines_;
    std::string origin_;
};

}  // namespace biofuse::config
