#include "biofuse/jsonl.hpp"

#include <charconv>
#include <cmath>

namespace biofuse::jsonl {

std::string format_double(double v) {
    if (std::isnan(v)) return "null";
    if (std::isinf(v)) return v > 0 ? "1e999" : "-1e999";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, res.ptr);
    // bare integers stay parseable as numbers either way; keep as-is
    return s;
}

std::string escape(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (const char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    return out;
}

void Record::key_prefix(std::string_view key) {
    if (!body_.empty()) body_ += ',';
    body_ += '"';
    body_ += escape(key);
    body_ += "\":";
}

Record& Record::field(std::string_view key, double v) {
    key_prefix(key);
    body_ += format_double(v);
    return *this;
}

Record& Record::field(std::string_view key, std::int64_t v) {
    key_prefix(key);
    body_ += std::to_string(v);
    return *this;
}

Record& Record::field(std::string_view key, bool v) {
    key_prefix(key);
    body_ += v ? "true" : "false";
    return *this;
}

Record& Record::field(std::string_view key, std::string_view v) {
    key_prefix(key);
    body_ += '"';
    body_ += escape(v);
    body_ += '"';
    return *this;
}

Record& Record::field_array(std::string_view key, const std::vector<double>& v) {
    key_prefix(key);
    body_ += '[';
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) body_ += ',';
        body_ += format_double(v[i]);
    }
    body_ += ']';
    return *this;
}

Record& Record::field_array(std::string_view key, const std::vector<int>& v) {
    key_prefix(key);
    body_ += '[';
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) body_ += ',';
        body_ += std::to_string(v[i]);
    }
    body_ += ']';
    return *this;
}

std::string Record::str() const { return "{" + body_ + "}"; }

}  // namespace biofuse::jsonl
