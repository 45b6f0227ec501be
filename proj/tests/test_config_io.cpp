#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "biofuse/config.hpp"
#include "biofuse/errors.hpp"
#include "biofuse/jsonl.hpp"
#include "helpers.hpp"

using namespace biofuse;
using config::KeyValueConfig;

TEST_CASE("key-value config parses values, lists, comments") {
    const auto cfg = KeyValueConfig::parse_string(
        "# comment line\n"
        "classes 8\n"
        "lr 4e-5\n"
        "seeds 1,2,3\n"
        "name synth run  # trailing comment\n"
        "flag true\n");
    CHECK(cfg.get_int("classes") == 8);
    CHECK(cfg.get_double("lr") == doctest::Approx(4e-5));
    CHECK(cfg.get_int_list("seeds") == std::vector<long long>{1, 2, 3});
    CHECK(cfg.get_string("name") == "synth run");
    CHECK(cfg.get_bool("flag", false));
    CHECK(cfg.get_int("missing", 42) == 42);
}

TEST_CASE("missing required field names the field") {
    const auto cfg = KeyValueConfig::parse_string("a 1\n");
    CHECK_THROWS_WITH_AS(cfg.get_string("dataset"), doctest::Contains("dataset"), ConfigError);
}

TEST_CASE("unknown keys are rejected with the offending key named") {
    const auto cfg = KeyValueConfig::parse_string("classes 8\nmystery 3\n", "test.cfg");
    try {
        cfg.check_schema({"classes"}, {});
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("mystery") != std::string::npos);
        CHECK(msg.find("test.cfg") != std::string::npos);
    }
}

TEST_CASE("malformed values and duplicates are config errors") {
    CHECK_THROWS_AS(KeyValueConfig::parse_string("a 1\na 2\n"), ConfigError);
    const auto cfg = KeyValueConfig::parse_string("n abc\nf 1.2.3\nempty_list ,\n");
    CHECK_THROWS_AS(cfg.get_int("n"), ConfigError);
    CHECK_THROWS_AS(cfg.get_double("f"), ConfigError);
    CHECK_THROWS_AS(cfg.get_int_list("empty_list"), ConfigError);
}

TEST_CASE("jsonl doubles use shortest round-trip text") {
    CHECK(jsonl::format_double(0.5) == "0.5");
    CHECK(jsonl::format_double(1.0 / 3.0) == "0.3333333333333333");
    const double v = 0.1 + 0.2;
    const std::string s = jsonl::format_double(v);
    CHECK(std::stod(s) == v);  // round trip exact
}

TEST_CASE("jsonl records are stable flat objects") {
    jsonl::Record r;
    r.field("schema_version", 1)
        .field("name", "cell \"x\"")
        .field("acc", 0.75)
        .field("ok", true)
        .field_array("accs", std::vector<double>{0.5, 0.25});
    CHECK(r.str() ==
          "{\"schema_version\":1,\"name\":\"cell \\\"x\\\"\",\"acc\":0.75,\"ok\":true,"
          "\"accs\":[0.5,0.25]}");
}
