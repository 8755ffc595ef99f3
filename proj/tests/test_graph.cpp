#include "doctest.h"
#include "support/support.hpp"
#include "support/tree_enum.hpp"

#include <set>

using namespace pbtest;

namespace {

bool has_code(const SoundnessReport& r, const std::string& code) {
    for (const auto& v : r.violations) {
        if (v.code == code) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("empty model lowers to start->end") {
    auto g = to_graph(new_empty());
    CHECK(g.nodes.size() == 2);
    CHECK(g.edges.size() == 1);
    CHECK(g.edges.count({kStartId, kEndId}));
    CHECK(from_graph(g).root().children.empty());
}

TEST_CASE("optional activity lowering") {
    auto m = make_model(X({A("A"), K()}));
    auto g = to_graph(m);
    // start, end, split, join, A
    CHECK(g.nodes.size() == 5);
    // start->split, split->A, A->join, split->join, join->end
    CHECK(g.edges.size() == 5);
    const auto& xor_node = m.root().children[0];
    CHECK(g.edges.count({split_node_id(xor_node.id), join_node_id(xor_node.id)}));
    auto report = check_soundness(g);
    CHECK(report.sound);
    CHECK(report.warnings.size() == 2);
}

TEST_CASE("parallel lowering") {
    auto m = make_model(P({A("A"), A("B")}));
    auto g = to_graph(m);
    int splits = 0, joins = 0;
    for (const auto& [id, n] : g.nodes) {
        splits += n.kind == GraphNodeKind::AndSplit;
        joins += n.kind == GraphNodeKind::AndJoin;
    }
    CHECK(splits == 1);
    CHECK(joins == 1);
    CHECK(check_soundness(g).sound);
    CHECK(check_soundness(g).warnings.empty());
}

TEST_CASE("loop lowering carries the loop condition on the back edge") {
    auto m = make_model(L(when(A("A"), "again")));
    auto g = to_graph(m);
    const auto& loop = m.root().children[0];
    CHECK(g.edges.at({split_node_id(loop.id), join_node_id(loop.id)}) == Condition("again"));
    CHECK(canonically_equal(from_graph(g), m));
}

TEST_CASE("primitives") {
    auto g = to_graph(new_empty());
    auto with_x = apply_primitive(g, Primitive::add_node({"x", GraphNodeKind::Activity, "X"}));
    CHECK(with_x.nodes.size() == 3);
    CHECK_FALSE(check_soundness(with_x).sound);
    CHECK(has_code(check_soundness(with_x), "DANGLING_NODE"));

    auto wired = apply_primitive(with_x, Primitive::delete_edge(kStartId, kEndId));
    wired = apply_primitive(wired, Primitive::add_edge(kStartId, "x"));
    wired = apply_primitive(wired, Primitive::add_edge("x", kEndId));
    CHECK(check_soundness(wired).sound);
    CHECK(activities(from_graph(wired)) == std::vector<std::string>{"X"});

    CHECK_THROWS_AS(apply_primitive(g, Primitive::delete_node("nope")), UnknownNode);
    CHECK_THROWS_AS(apply_primitive(g, Primitive::delete_edge("start", "nope")), UnknownEdge);
    CHECK_THROWS_AS(apply_primitive(g, Primitive::add_node({"start", GraphNodeKind::Activity, "S"})), DuplicateId);
    CHECK_THROWS_AS(apply_primitive(g, Primitive::add_edge(kStartId, kEndId)), DuplicateId);
    CHECK_THROWS_AS(apply_primitive(g, Primitive::add_edge(kStartId, "nope")), UnknownNode);
    CHECK_THROWS_AS(apply_primitive(g, Primitive::update_edge_condition("end", "start", "c")), UnknownEdge);

    auto dropped = apply_primitive(wired, Primitive::delete_node("x"));
    CHECK(dropped.edges.empty());
}

TEST_CASE("xor split closed by and join is a mismatched block") {
    FlatGraph g;
    g.nodes = {{"start", {"start", GraphNodeKind::Start, ""}},
               {"end", {"end", GraphNodeKind::End, ""}},
               {"s", {"s", GraphNodeKind::XorSplit, ""}},
               {"j", {"j", GraphNodeKind::AndJoin, ""}},
               {"a", {"a", GraphNodeKind::Activity, "A"}},
               {"b", {"b", GraphNodeKind::Activity, "B"}}};
    for (auto [f, t] : std::vector<std::pair<std::string, std::string>>{
             {"start", "s"}, {"s", "a"}, {"s", "b"}, {"a", "j"}, {"b", "j"}, {"j", "end"}}) {
        g.edges[{f, t}] = std::nullopt;
    }
    auto report = check_soundness(g);
    CHECK_FALSE(report.sound);
    CHECK(has_code(report, "MISMATCHED_BLOCK"));
    CHECK_FALSE(reconstructible(g));
    CHECK_THROWS_AS(from_graph(g), NotBlockStructured);
}

TEST_CASE("overlapping blocks are not block structured") {
    // s1 -> a -> s2 ... crossing: AND(a, XOR) interleaved
    FlatGraph g;
    auto node = [&](std::string id, GraphNodeKind k, std::string label = "") { g.nodes[id] = {id, k, label}; };
    node("start", GraphNodeKind::Start);
    node("end", GraphNodeKind::End);
    node("s1", GraphNodeKind::AndSplit);
    node("s2", GraphNodeKind::AndSplit);
    node("j1", GraphNodeKind::AndJoin);
    node("j2", GraphNodeKind::AndJoin);
    node("a", GraphNodeKind::Activity, "A");
    node("b", GraphNodeKind::Activity, "B");
    node("c", GraphNodeKind::Activity, "C");
    for (auto [f, t] : std::vector<std::pair<std::string, std::string>>{
             {"start", "s1"}, {"s1", "a"}, {"s1", "s2"}, {"s2", "b"}, {"s2", "c"}, {"a", "j1"}, {"b", "j1"},
             {"j1", "j2"}, {"c", "j2"}, {"j2", "end"}}) {
        g.edges[{f, t}] = std::nullopt;
    }
    auto report = check_soundness(g);
    CHECK_FALSE(report.sound);
    CHECK(has_code(report, "NOT_BLOCK_STRUCTURED"));
    CHECK_FALSE(reconstructible(g));
}

TEST_CASE("lowering is sound and round trips on random models") {
    std::mt19937 rng(3);
    RandomSpec spec;
    spec.max_activities = 6;
    spec.max_depth = 3;
    spec.two_branch_xor = false;
    for (int i = 0; i < 500; ++i) {
        auto m = TreeGen(rng, spec).model();
        auto g = to_graph(m);
        auto report = check_soundness(g);
        REQUIRE_MESSAGE(report.sound, structural_key(m.root()));
        CHECK(canonicalize(from_graph(g)).key == canonicalize(m).key);
    }
}

TEST_CASE("reduction checker agrees with tree enumeration on small graphs") {
    // Seeds: lowerings of every small tree over distinct labels; then every
    // graph reachable by up to two further primitives from a small
    // alphabet. Conditions are left UNSET throughout.
    std::vector<FlatGraph> seeds{to_graph(new_empty())};
    {
        TreeEnumerator trees({"A", "B"});
        for (unsigned mask : {1u, 3u}) {
            for (int a = 0; a <= 1; ++a) {
                for (int x = 0; x <= 1; ++x) {
                    for (const auto& frag : trees.fragments(mask, a, x)) {
                        auto m = make_model(frag);
                        try {
                            m.validate();
                        } catch (const InvariantViolation&) {
                            continue;
                        }
                        auto g = to_graph(m);
                        if (g.nodes.size() <= 8) seeds.push_back(g);
                    }
                }
            }
        }
    }
    const std::vector<GraphNode> pool{{"p:a", GraphNodeKind::Activity, "Z"},
                                      {"p:s", GraphNodeKind::XorSplit, ""},
                                      {"p:j", GraphNodeKind::XorJoin, ""},
                                      {"p:as", GraphNodeKind::AndSplit, ""},
                                      {"p:aj", GraphNodeKind::AndJoin, ""}};
    auto moves = [&](const FlatGraph& g) {
        std::vector<Primitive> out;
        for (const auto& n : pool) {
            if (!g.nodes.count(n.id) && g.nodes.size() < 8) out.push_back(Primitive::add_node(n));
        }
        for (const auto& [id, n] : g.nodes) {
            if (n.kind != GraphNodeKind::Start && n.kind != GraphNodeKind::End) out.push_back(Primitive::delete_node(id));
            for (const auto& [to, m] : g.nodes) {
                if (g.edges.count({id, to})) {
                    out.push_back(Primitive::delete_edge(id, to));
                } else if (id != to) {
                    out.push_back(Primitive::add_edge(id, to));
                }
            }
        }
        return out;
    };
    std::set<std::map<EdgeKey, Condition>> seen_edges;
    std::vector<FlatGraph> frontier = seeds;
    std::vector<FlatGraph> all;
    for (int depth = 0; depth <= 2; ++depth) {
        std::vector<FlatGraph> next;
        for (const auto& g : frontier) {
            all.push_back(g);
            if (depth == 2) continue;
            for (const auto& p : moves(g)) next.push_back(apply_primitive(g, p));
        }
        frontier = std::move(next);
    }
    std::size_t sound = 0, checked = 0;
    std::set<std::string> visited;
    for (const auto& g : all) {
        std::string sig;
        for (const auto& [id, n] : g.nodes) sig += id + "=" + n.label + ",";
        sig += "|";
        for (const auto& [k, c] : g.edges) sig += k.first + ">" + k.second + ",";
        if (!visited.insert(sig).second) continue;
        ++checked;
        bool ours = check_soundness(g).sound;
        bool oracle = reconstructible(g);
        REQUIRE_MESSAGE(ours == oracle, sig);
        sound += ours;
    }
    MESSAGE("graphs checked: " << checked << ", sound: " << sound);
    CHECK(sound >= seeds.size());
}
