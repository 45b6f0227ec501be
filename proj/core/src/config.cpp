#include "biofuse/config.hpp"

#include <fstream>
#include <sstream>

#include "biofuse/errors.hpp"

namespace biofuse::config {

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str(), path);
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text, const std::string& origin) {
    KeyValueConfig cfg;
    cfg.origin_ = origin.empty() ? "<config>" : origin;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        std::string rest;
        std::getline(ls, rest);
        const auto start = rest.find_first_not_of(" \t");
        rest = start == std::string::npos ? "" : rest.substr(start);
        const auto end = rest.find_last_not_of(" \t\r");
        rest = end == std::string::npos ? "" : rest.substr(0, end + 1);
        if (rest.empty()) {
            throw ConfigError(cfg.origin_ + ":" + std::to_string(line_no) + ": field '" + key +
                              "' has no value");
        }
        if (cfg.values_.count(key)) {
            throw ConfigError(cfg.origin_ + ":" + std::to_string(line_no) + ": duplicate field '" +
                              key + "'");
        }
        cfg.values_[key] = rest;
        cfg.lines_[key] = line_no;
    }
    return cfg;
}

bool KeyValueConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string KeyValueConfig::describe(const std::string& key) const {
    const auto it = lines_.find(key);
    if (it == lines_.end()) return origin_ + ": field '" + key + "'";
    return origin_ + ":" + std::to_string(it->second) + ": field '" + key + "'";
}

std::string KeyValueConfig::get_string(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        throw ConfigError(origin_ + ": missing required field '" + key + "'");
    }
    return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) const {
    return has(key) ? values_.at(key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key) const {
    const std::string v = get_string(key);
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(describe(key) + ": '" + v + "' is not a number");
    }
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

long long KeyValueConfig::get_int(const std::string& key) const {
    const std::string v = get_string(key);
    try {
        std::size_t used = 0;
        const long long i = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError(describe(key) + ": '" + v + "' is not an integer");
    }
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
    return has(key) ? get_int(key) : fallback;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key);
    try {
        std::size_t used = 0;
        const std::uint64_t i = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError(describe(key) + ": '" + v + "' is not an unsigned integer");
    }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(describe(key) + ": '" + v + "' is not a boolean");
}

std::vector<long long> KeyValueConfig::get_int_list(const std::string& key) const {
    const std::string v = get_string(key);
    std::vector<long long> out;
    std::istringstream is(v);
    std::string item;
    while (std::getline(is, item, ',')) {
        try {
            std::size_t used = 0;
            const auto start = item.find_first_not_of(" \t");
            const auto end = item.find_last_not_of(" \t");
            if (start == std::string::npos) throw std::invalid_argument(item);
            item = item.substr(start, end - start + 1);
            out.push_back(std::stoll(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError(describe(key) + ": '" + item + "' is not an integer");
        }
    }
    if (out.empty()) throw ConfigError(describe(key) + ": empty list");
    return out;
}

std::vector<std::string> KeyValueConfig::get_string_list(const std::string& key) const {
    const std::string v = get_string(key);
    std::vector<std::string> out;
    std::istringstream is(v);
    std::string item;
    while (std::getline(is, item, ',')) {
        const auto start = item.find_first_not_of(" \t");
        const auto end = item.find_last_not_of(" \t");
        if (start == std::string::npos) continue;
        out.push_back(item.substr(start, end - start + 1));
    }
    if (out.empty()) throw ConfigError(describe(key) + ": empty list");
    return out;
}

void KeyValueConfig::check_schema(const std::vector<std::string>& required,
                                  const std::vector<std::string>& optional) const {
    std::set<std::string> allowed(required.begin(), required.end());
    allowed.insert(optional.begin(), optional.end());
    for (const auto& [key, value] : values_) {
        if (!allowed.count(key)) {
            throw ConfigError(describe(key) + " is not a recognized field");
        }
    }
    for (const auto& key : required) {
        if (!has(key)) throw ConfigError(origin_ + ": missing required field '" + key + "'");
    }
}

}  // namespace biofuse::config
