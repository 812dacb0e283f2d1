#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nebula/ingest.hpp"

#include "test_support.hpp"

using namespace nebula;
using test_support::TempDir;

TEST_CASE("parse_report accepts minimal and rejects truncated documents") {
    const RawReport minimal = parse_report(R"({"apis":[]})");
    CHECK(minimal.root.contains("apis"));
    CHECK(minimal.root["apis"].is_array());
    CHECK(minimal.root["apis"].empty());

    const RawReport one = parse_report(
        R"({"apis":[{"api_name":"kernel32.GetProcAddress","ret_val":"0x0","args":["0x1"]}]})");
    CHECK(one.root["apis"].size() == 1);
    CHECK(one.root["apis"][0]["api_name"] == "kernel32.GetProcAddress");

    CHECK_THROWS_AS(parse_report(R"({"apis":)"), MalformedJson);
    CHECK_THROWS_AS(parse_report("not json at all"), MalformedJson);
}

TEST_CASE("field filter: redacted report fixture reduces to its filtered counterpart") {
    const RawReport left =
        parse_report(test_support::slurp(test_support::data_dir() / "filter_golden_raw.json"));
    const ojson right =
        ojson::parse(test_support::slurp(test_support::data_dir() / "filter_golden_filtered.json"));

    const FieldFilter filter = load_filter_profile("speakeasy");
    const RawReport filtered = apply_field_filter(left, filter);
    // dump() respects document order, so this checks structure and order.
    CHECK(filtered.root.dump(1) == right.dump(1));
    CHECK_FALSE(filtered.root.contains("apihash"));
    CHECK_FALSE(filtered.root.contains("start_addr"));
    CHECK_FALSE(filtered.root.contains("ep_type"));
    CHECK_FALSE(filtered.root.contains("error"));
}

TEST_CASE("field filter: four retained field groups on the full fixture") {
    const RawReport left =
        parse_report(test_support::slurp(test_support::data_dir() / "speakeasy_full_left.json"));
    const ojson right = ojson::parse(
        test_support::slurp(test_support::data_dir() / "speakeasy_full_right.json"));
    const RawReport filtered = apply_field_filter(left, load_filter_profile("speakeasy"));
    CHECK(filtered.root.dump(1) == right.dump(1));
}

TEST_CASE("field filter: empty and identity rules") {
    const RawReport report = parse_report(R"({"a":{"b":1},"c":[2,3]})");
    const RawReport none = apply_field_filter(report, FieldFilter{});
    CHECK(none.root.empty());

    const RawReport same = apply_field_filter(report, FieldFilter::identity());
    CHECK(same.root == report.root);
}

TEST_CASE("field filter: idempotence and order preservation") {
    const RawReport left =
        parse_report(test_support::slurp(test_support::data_dir() / "speakeasy_full_left.json"));
    const FieldFilter filter = load_filter_profile("speakeasy");
    const RawReport once = apply_field_filter(left, filter);
    const RawReport twice = apply_field_filter(once, filter);
    CHECK(once.root.dump() == twice.root.dump());

    // Array order must match the raw report.
    const RawReport multi = parse_report(R"({"apis":[
        {"ret_val":"0x1","args":[],"api_name":"first"},
        {"ret_val":"0x2","args":[],"api_name":"second"},
        {"ret_val":"0x3","args":[],"api_name":"third"}]})");
    const RawReport filtered = apply_field_filter(multi, filter);
    REQUIRE(filtered.root["apis"].size() == 3);
    CHECK(filtered.root["apis"][0]["api_name"] == "first");
    CHECK(filtered.root["apis"][1]["api_name"] == "second");
    CHECK(filtered.root["apis"][2]["api_name"] == "third");
}

TEST_CASE("flatten: single record joins values with spaces, lowercased") {
    const RawReport report = parse_report(
        R"({"apis":[{"ret_val":"0x0","args":["0x1"],"api_name":"kernel32.GetProcAddress"}]})");
    const CleanReport clean = flatten_to_text(report);
    CHECK(clean.text == "0x0 0x1 kernel32.getprocaddress");
    CHECK(clean.record_count == 1);
}

TEST_CASE("flatten: empty tree") {
    const CleanReport clean = flatten_to_text(RawReport{ojson::object(), ""});
    CHECK(clean.text.empty());
    CHECK(clean.record_count == 0);
}

TEST_CASE("flatten: two records give two newline-separated lines in order") {
    // Hand-traced: record one emits ret_val, args, api_name in document
    // order; record two follows on its own line.
    const RawReport report = parse_report(R"({"apis":[
        {"ret_val":"0x0","args":["0x1"],"api_name":"kernel32.GetProcAddress"},
        {"ret_val":"0x1000","args":["0xfa"],"api_name":"kernel32.TlsGetValue"}]})");
    const CleanReport clean = flatten_to_text(report);
    CHECK(clean.text ==
          "0x0 0x1 kernel32.getprocaddress\n0x1000 0xfa kernel32.tlsgetvalue");
    CHECK(clean.record_count == 2);
}

TEST_CASE("flatten: numbers, booleans and nulls") {
    const RawReport report =
        parse_report(R"({"r":[{"port":443,"fast":true,"gone":null,"ratio":0.5}]})");
    const CleanReport clean = flatten_to_text(report);
    CHECK(clean.text == "443 true 0.5");
}

TEST_CASE("flatten: deterministic on repeated runs") {
    const std::string bytes =
        test_support::slurp(test_support::data_dir() / "speakeasy_full_left.json");
    const FieldFilter filter = load_filter_profile("speakeasy");
    const CleanReport a = flatten_to_text(apply_field_filter(parse_report(bytes), filter));
    const CleanReport b = flatten_to_text(apply_field_filter(parse_report(bytes), filter));
    CHECK(a.text == b.text);
    CHECK(a.record_count == b.record_count);
}

TEST_CASE("manifest loading and dataset streaming") {
    TempDir dir;
    test_support::spit(dir.path() / "a.json", R"({"apis":[]})");
    test_support::spit(dir.path() / "b.json", R"({"apis":[]})");
    test_support::spit(dir.path() / "c.json", R"({"apis":[]})");

    SUBCASE("three entries stream in order") {
        test_support::spit(dir.path() / "m.jsonl",
                           "{\"path\": \"a.json\", \"label\": 0}\n"
                           "{\"path\": \"b.json\", \"label\": 1}\n"
                           "{\"path\": \"c.json\", \"label\": 1}\n");
        const auto records = load_dataset(dir.path() / "m.jsonl");
        REQUIRE(records.size() == 3);
        CHECK(records[0].id == "a.json");
        CHECK(records[0].label == 0);
        CHECK(records[1].label == 1);
        CHECK(records[2].label == 1);
    }

    SUBCASE("missing file is reported") {
        test_support::spit(dir.path() / "m.jsonl", "{\"path\": \"ghost.json\", \"label\": 0}\n");
        CHECK_THROWS_AS(load_dataset(dir.path() / "m.jsonl"), MissingFile);
    }

    SUBCASE("bad labels are rejected with the line number") {
        test_support::spit(dir.path() / "m.jsonl",
                           "{\"path\": \"a.json\", \"label\": 0}\n"
                           "{\"path\": \"b.json\", \"label\": \"trojan\"}\n");
        CHECK_THROWS_AS(load_manifest(dir.path() / "m.jsonl"), BadLabel);
        test_support::spit(dir.path() / "neg.jsonl", "{\"path\": \"a.json\", \"label\": -1}\n");
        CHECK_THROWS_AS(load_manifest(dir.path() / "neg.jsonl"), BadLabel);
    }

    SUBCASE("eight-class manifest keeps labels 0..7") {
        std::string manifest;
        for (int c = 0; c < 8; ++c)
            manifest += "{\"path\": \"a.json\", \"label\": " + std::to_string(c) + "}\n";
        test_support::spit(dir.path() / "m8.jsonl", manifest);
        const auto entries = load_manifest(dir.path() / "m8.jsonl");
        REQUIRE(entries.size() == 8);
        for (int c = 0; c < 8; ++c) CHECK(entries[static_cast<std::size_t>(c)].label == c);
    }

    SUBCASE("csv manifests work too") {
        test_support::spit(dir.path() / "m.csv", "path,label\na.json,0\nb.json,1\n");
        const auto entries = load_manifest(dir.path() / "m.csv");
        REQUIRE(entries.size() == 2);
        CHECK(entries[1].path == "b.json");
        CHECK(entries[1].label == 1);
    }
}

TEST_CASE("filter profiles resolve by name or path") {
    CHECK_FALSE(load_filter_profile("speakeasy").empty());
    CHECK_FALSE(load_filter_profile("cape").empty());
    CHECK_FALSE(load_filter_profile("api_only").empty());

    TempDir dir;
    test_support::spit(dir.path() / "custom.json",
                       R"({"name": "custom", "rules": ["apis.*.api_name"]})");
    const FieldFilter custom = load_filter_profile((dir.path() / "custom.json").string());
    REQUIRE(custom.rules().size() == 1);
    CHECK(custom.rules()[0] == "apis.*.api_name");

    CHECK_THROWS_AS(load_filter_profile((dir.path() / "nope.json").string()), MissingFile);
}
