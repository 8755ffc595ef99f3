#include "doctest.h"
#include "support/support.hpp"

#include "patternbench/serialize.hpp"

using namespace pbtest;

TEST_CASE("empty model document") {
    auto doc = model_to_json(new_empty());
    CHECK(doc["format"] == "patternbench-model");
    CHECK(doc["version"] == 1);
    CHECK(doc["root"]["kind"] == "sequence");
    CHECK(doc["root"]["children"].empty());
}

TEST_CASE("model round trip on random models") {
    std::mt19937 rng(17);
    RandomSpec spec;
    spec.max_activities = 7;
    spec.max_depth = 3;
    spec.two_branch_xor = false;
    for (int i = 0; i < 1000; ++i) {
        auto m = TreeGen(rng, spec).model();
        auto back = deserialize(serialize(m));
        REQUIRE(canonicalize(back).digest == canonicalize(m).digest);
    }
}

TEST_CASE("parallel of arity one is an invariant violation") {
    const std::string text = R"({"format":"patternbench-model","version":1,"root":
        {"id":0,"kind":"sequence","children":[{"id":1,"kind":"parallel","children":[
            {"id":2,"kind":"activity","label":"A","children":[]}]}]}})";
    CHECK_THROWS_AS(deserialize(text), InvariantViolation);
}

TEST_CASE("parse errors carry a location") {
    try {
        deserialize("{\n  \"format\": \"patternbench-model\",\n  \"version\": 1,\n  \"root\": {]\n}");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.location() == "4:12");
    }
    try {
        deserialize(R"({"format":"patternbench-model","version":1,"root":{"id":0,"kind":"sequence","colour":"red"}})");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.location() == "/root");
        CHECK(std::string(e.what()).find("colour") != std::string::npos);
    }
    CHECK_THROWS_AS(deserialize(R"({"format":"other","version":1,"root":{}})"), ParseError);
    CHECK_THROWS_AS(deserialize(R"({"format":"patternbench-model","version":1,"root":{"id":0,"kind":"blob"}})"),
                    ParseError);
}

TEST_CASE("non-sequence root is wrapped") {
    auto m = deserialize(R"({"format":"patternbench-model","version":1,
        "root":{"id":5,"kind":"activity","label":"A"}})");
    CHECK(m.root().kind == NodeKind::Sequence);
    CHECK(canonically_equal(m, make_model(S({A("A")}))));
}

TEST_CASE("pattern wire form round trips") {
    std::mt19937 rng(23);
    for (int i = 0; i < 200; ++i) {
        auto m = TreeGen(rng, {}).model();
        for (const auto& p : applicable_patterns(m, Vocabulary{std::set<std::string>{"A"}, std::set<std::string>{"c"}, true})) {
            auto back = pattern_from_json(parse_json(pattern_to_json(p).dump()));
            REQUIRE(back == p);
        }
    }
}

TEST_CASE("pattern wire form shape") {
    auto p = PatternInstance::serial_insert("A", {Position::Kind::Gap, {0}, 0});
    CHECK(pattern_to_json(p).dump() ==
          R"({"kind":"serial_insert","params":{"label":"A","position":{"gap":{"sequence":[0],"index":0}}}})");
    auto u = PatternInstance::update_condition({0, 1, 2}, std::nullopt);
    CHECK(pattern_to_json(u).dump() == R"({"kind":"update_condition","params":{"branch":[0,1,2],"condition":null}})");
    CHECK_THROWS_AS(pattern_from_json(parse_json(R"({"kind":"teleport","params":{}})")), ParseError);
    CHECK_THROWS_AS(pattern_from_json(parse_json(R"({"kind":"delete_fragment","params":{"target":"x"}})")), ParseError);
}

TEST_CASE("regions document") {
    RegionMap r{{"R4", {0, 3}}, {"R7", {0}}};
    auto back = regions_from_json(parse_json(regions_to_json(r).dump()));
    CHECK(back == r);
    CHECK_THROWS_AS(regions_from_json(parse_json(R"({"format":"patternbench-regions","version":1,"regions":{"R":1}})")),
                    ParseError);
}
