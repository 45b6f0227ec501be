#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace biofuse::jsonl {

// Shortest round-trip decimal text for a double, locale-independent, so
// repeated runs emit byte-identical artifacts.
std::string format_double(double v);

// Flat one-line JSON object builder preserving insertion order.
class Record {
public:
    Record& field(std::string_view key, double v);
    Record& field(std::string_view key, std::int64_t v);
    Record& field(std::string_view key, int v) { return field(key, static_cast<std::int64_t>(v)); }
    Record& field(std::string_view key, bool v);
    Record& field(std::string_view key, std::string_view v);
    Record& field(std::string_view key, const char* v) { return field(key, std::string_view(v)); }
    Record& field_array(std::string_view key, const std::vector<double>& v);
    Record& field_array(std::string_view key, const std::vector<int>& v);

    std::string str() const;

private:
    void key_prefix(std::string_view key);
    std::string body_;
};

std::string escape(std::string_view s);

}  // namespace biofuse::jsonl
