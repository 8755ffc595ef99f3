#include "doctest.h"
#include "support/support.hpp"

#include <set>

using namespace pbtest;

namespace {

Position gap(const ProcessModel& m, std::size_t index) { return {Position::Kind::Gap, {m.root().id}, index}; }

/// Every instance formable from the model's node paths and the vocabulary.
std::vector<PatternInstance> syntactic_instances(const ProcessModel& m, const std::set<std::string>& labels,
                                                 const std::vector<Condition>& values) {
    std::vector<NodePath> paths;
    std::function<void(const Node&, NodePath)> walk = [&](const Node& n, NodePath p) {
        p.push_back(n.id);
        paths.push_back(p);
        for (const auto& c : n.children) walk(c, p);
    };
    walk(m.root(), {});
    std::vector<PatternInstance> out;
    for (const auto& p : paths) {
        for (const auto& l : labels) {
            for (std::size_t i = 0; i <= m.resolve(p)->children.size() + 1; ++i) {
                out.push_back(PatternInstance::serial_insert(l, {Position::Kind::Gap, p, i}));
            }
            for (auto k : {Position::Kind::Before, Position::Kind::After, Position::Kind::Skip}) {
                out.push_back(PatternInstance::serial_insert(l, {k, p, 0}));
            }
            out.push_back(PatternInstance::parallel_insert(l, p));
        }
        out.push_back(PatternInstance::delete_fragment(p));
        out.push_back(PatternInstance::embed_in_conditional(p));
        for (const auto& c : values) {
            out.push_back(PatternInstance::embed_in_loop(p, c));
            out.push_back(PatternInstance::update_condition(p, c));
        }
    }
    return out;
}

}  // namespace

TEST_CASE("serial insert into the empty model") {
    auto m = new_empty();
    auto r = apply_pattern(m, PatternInstance::serial_insert("A", gap(m, 0)));
    CHECK(canonically_equal(r, make_model(S({A("A")}))));
    CHECK(canonical_key(m) == canonical_key(new_empty()));
}

TEST_CASE("embed in conditional makes an activity optional") {
    auto m = make_model(S({A("A")}));
    auto r = apply_pattern(m, PatternInstance::embed_in_conditional(path_of_label(m, "A")));
    CHECK(canonically_equal(r, make_model(S({X({A("A"), K()})}))));
}

TEST_CASE("R4 four-step construction") {
    auto m = new_empty();
    m = apply_pattern(m, PatternInstance::serial_insert("X", gap(m, 0)));
    m = apply_pattern(m, PatternInstance::embed_in_conditional(path_of_label(m, "X")));
    const auto& xor_node = m.root().children.at(0);
    NodePath skip{m.root().id, xor_node.id, xor_node.children.at(1).id};
    m = apply_pattern(m, PatternInstance::serial_insert("Y", {Position::Kind::Skip, skip, 0}));
    m = apply_pattern(m, PatternInstance::update_condition(path_of_label(m, "X"), "c"));
    CHECK(canonically_equal(m, make_model(X({when(A("X"), "c"), A("Y")}))));
    CHECK(check_soundness(to_graph(m)).sound);
}

TEST_CASE("delete the only activity") {
    auto m = make_model(S({A("A")}));
    auto r = apply_pattern(m, PatternInstance::delete_fragment(path_of_label(m, "A")));
    CHECK(canonically_equal(r, new_empty()));
}

TEST_CASE("precondition failures") {
    auto m = make_model(S({A("A"), P({A("B"), A("C")})}));
    auto code = [&](const PatternInstance& p) {
        auto e = check_pattern(m, p);
        REQUIRE(e.has_value());
        return e->code();
    };
    CHECK(code(PatternInstance::update_condition({m.root().id}, "c")) == PatternErrorCode::PreconditionViolated);
    CHECK(code(PatternInstance::update_condition(path_of_label(m, "A"), "c")) == PatternErrorCode::PreconditionViolated);
    CHECK(code(PatternInstance::delete_fragment({m.root().id, 999})) == PatternErrorCode::UnknownRef);
    CHECK(code(PatternInstance::serial_insert("", gap(m, 0))) == PatternErrorCode::PreconditionViolated);
    CHECK(code(PatternInstance::serial_insert("Z", gap(m, 3))) == PatternErrorCode::PreconditionViolated);
    CHECK(code(PatternInstance::serial_insert("Z", {Position::Kind::Before, path_of_label(m, "A"), 0})) ==
          PatternErrorCode::PreconditionViolated);
    const auto& par = m.root().children.at(1);
    CHECK(code(PatternInstance::parallel_insert("Z", {m.root().id, par.id})) == PatternErrorCode::PreconditionViolated);
    CHECK_THROWS_AS(apply_pattern(new_empty(), PatternInstance::update_condition({0}, "c")), PatternError);

    auto looped = make_model(L(when(A("A"), "c")));
    auto again = PatternInstance::embed_in_loop(path_of_label(looped, "A"), "c");
    CHECK(check_pattern(looped, again).has_value());
    CHECK_FALSE(check_pattern(looped, PatternInstance::embed_in_loop(path_of_label(looped, "A"), "d")).has_value());
}

TEST_CASE("parallel insert appends to an existing parallel block") {
    auto m = make_model(P({A("B"), A("C")}));
    auto r = apply_pattern(m, PatternInstance::parallel_insert("D", path_of_label(m, "B")));
    CHECK(canonically_equal(r, make_model(P({A("B"), A("C"), A("D")}))));
}

TEST_CASE("applicable patterns on the empty model") {
    auto list = applicable_patterns(new_empty(), Vocabulary{std::set<std::string>{"A"}, {}, true});
    REQUIRE(list.size() == 1);
    CHECK(list[0] == PatternInstance::serial_insert("A", gap(new_empty(), 0)));
}

TEST_CASE("applicable patterns on a one-activity model") {
    auto m = make_model(S({A("A")}));
    auto list = applicable_patterns(m, Vocabulary{std::set<std::string>{"B"}, {}, true});
    auto a = path_of_label(m, "A");
    auto has = [&](const PatternInstance& p) { return std::find(list.begin(), list.end(), p) != list.end(); };
    CHECK(has(PatternInstance::serial_insert("B", gap(m, 0))));
    CHECK(has(PatternInstance::serial_insert("B", gap(m, 1))));
    CHECK(has(PatternInstance::parallel_insert("B", a)));
    CHECK(has(PatternInstance::embed_in_loop(a, std::nullopt)));
    CHECK(has(PatternInstance::embed_in_conditional(a)));
    CHECK(has(PatternInstance::delete_fragment(a)));
    CHECK(std::is_sorted(list.begin(), list.end()));
}

TEST_CASE("enumeration matches brute force over syntactic instances") {
    std::mt19937 rng(21);
    RandomSpec spec;
    spec.two_branch_xor = false;
    const std::set<std::string> labels{"A", "B"};
    const std::vector<Condition> values{std::nullopt, "c1", "c2"};
    for (int i = 0; i < 150; ++i) {
        auto m = TreeGen(rng, spec).model();
        std::set<PatternInstance> brute;
        for (const auto& p : syntactic_instances(m, labels, values)) {
            if (!check_pattern(m, p)) brute.insert(p);
        }
        auto listed = applicable_patterns(m, Vocabulary{labels, std::set<std::string>{"c1", "c2"}, true});
        std::set<PatternInstance> got(listed.begin(), listed.end());
        REQUIRE(got.size() == listed.size());
        CHECK_MESSAGE(got == brute, structural_key(m.root()));
    }
}

TEST_CASE("failed applications leave the model untouched") {
    auto m = make_model(S({A("A"), X({A("B"), K()})}));
    const auto before = canonicalize(m).digest;
    CHECK_THROWS_AS(apply_pattern(m, PatternInstance::update_condition({m.root().id}, "c")), PatternError);
    CHECK(canonicalize(m).digest == before);
}

TEST_CASE("primitive expansion of serial insert into the empty model") {
    auto m = new_empty();
    auto prims = expand_to_primitives(m, PatternInstance::serial_insert("A", gap(m, 0)));
    const auto act = activity_node_id(m.next_id());
    std::vector<Primitive> expected{Primitive::delete_edge(kStartId, kEndId),
                                    Primitive::add_node({act, GraphNodeKind::Activity, "A"}),
                                    Primitive::add_edge(kStartId, act), Primitive::add_edge(act, kEndId)};
    CHECK(prims == expected);
}

TEST_CASE("primitive expansion of update condition is a singleton") {
    auto m = make_model(X({A("A"), K()}));
    auto prims = expand_to_primitives(m, PatternInstance::update_condition(path_of_label(m, "A"), "c"));
    REQUIRE(prims.size() == 1);
    CHECK(prims[0].op == PrimitiveOp::UpdateEdgeCondition);
}

TEST_CASE("primitive expansion is coherent with the pattern") {
    std::mt19937 rng(5);
    RandomSpec spec;
    spec.two_branch_xor = false;
    spec.max_activities = 5;
    for (int i = 0; i < 120; ++i) {
        auto m = TreeGen(rng, spec).model();
        for (const auto& p : applicable_patterns(m, Vocabulary{std::set<std::string>{"A", "Z"}, std::set<std::string>{"c1"}, true})) {
            auto after = apply_pattern(m, p);
            auto folded = fold(to_graph(m), expand_to_primitives(m, p));
            REQUIRE_MESSAGE(check_soundness(folded).sound, structural_key(m.root()) << " " << describe(p));
            CHECK_MESSAGE(canonicalize(from_graph(folded)).key == canonicalize(after).key,
                          structural_key(m.root()) << " " << describe(p));
            CHECK_MESSAGE(isomorphic(folded, to_graph(after)), structural_key(m.root()) << " " << describe(p));
        }
    }
}

TEST_CASE("invert restores the canonical digest") {
    std::mt19937 rng(9);
    RandomSpec spec;
    spec.max_activities = 5;
    spec.max_depth = 3;
    for (int i = 0; i < 150; ++i) {
        auto m = TreeGen(rng, spec).model();
        for (const auto& p : applicable_patterns(m, Vocabulary{std::set<std::string>{"A", "Z"}, std::set<std::string>{"c1"}, true})) {
            auto after = apply_pattern(m, p);
            std::vector<PatternInstance> undo;
            try {
                undo = invert(m, p);
            } catch (const PatternError& e) {
                FAIL_CHECK(structural_key(m.root()) << " " << describe(p) << ": " << std::string(e.what()));
                continue;
            }
            auto back = apply_sequence(after, undo).back();
            CHECK_MESSAGE(canonicalize(back).digest == canonicalize(m).digest,
                          structural_key(m.root()) << " " << describe(p));
        }
    }
}

TEST_CASE("invert of serial insert and update condition") {
    auto m = new_empty();
    auto p = PatternInstance::serial_insert("A", gap(m, 0));
    auto inv = invert(m, p);
    REQUIRE(inv.size() == 1);
    CHECK(inv[0].kind == PatternKind::DeleteFragment);

    auto x = make_model(X({A("A"), K()}));
    auto upd = PatternInstance::update_condition(path_of_label(x, "A"), "x>5");
    auto inv2 = invert(x, upd);
    REQUIRE(inv2.size() == 1);
    CHECK(inv2[0] == PatternInstance::update_condition(path_of_label(x, "A"), std::nullopt));
}

TEST_CASE("build from empty reproduces random models") {
    std::mt19937 rng(13);
    RandomSpec spec;
    spec.max_activities = 6;
    spec.max_depth = 3;
    for (int i = 0; i < 300; ++i) {
        auto m = TreeGen(rng, spec).model();
        auto path = build_from_empty(m);
        auto built = apply_sequence(new_empty(), path).back();
        CHECK_MESSAGE(canonically_equal(built, m), structural_key(m.root()));
    }
}
