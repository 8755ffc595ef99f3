#pragma once

// Shared test helpers: compact tree builders, random generators and the
// brute-force oracles the analysis and graph code are checked against.

#include "patternbench/graph.hpp"
#include "patternbench/model.hpp"
#include "patternbench/patterns.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace pbtest {

using namespace patternbench;

// ---- builders -------------------------------------------------------------

inline Node A(std::string label) {
    Node n;
    n.kind = NodeKind::Activity;
    n.label = std::move(label);
    return n;
}
inline Node K() {
    Node n;
    n.kind = NodeKind::Skip;
    return n;
}
inline Node block(NodeKind kind, std::vector<Node> children) {
    Node n;
    n.kind = kind;
    n.children = std::move(children);
    return n;
}
inline Node S(std::vector<Node> c) { return block(NodeKind::Sequence, std::move(c)); }
inline Node P(std::vector<Node> c) { return block(NodeKind::Parallel, std::move(c)); }
inline Node X(std::vector<Node> c) { return block(NodeKind::Conditional, std::move(c)); }
inline Node L(Node body) { return block(NodeKind::Loop, {std::move(body)}); }
inline Node when(Node n, std::string c) {
    n.condition = std::move(c);
    return n;
}

/// Assigns preorder ids and wraps a non-sequence root.
inline ProcessModel make_model(Node root) {
    if (root.kind != NodeKind::Sequence) root = S({std::move(root)});
    NodeId next = 0;
    std::function<void(Node&)> number = [&](Node& n) {
        n.id = next++;
        for (auto& c : n.children) number(c);
    };
    number(root);
    return ProcessModel(std::move(root), next);
}

inline const Node* find_label(const Node& n, const std::string& label) {
    if (n.kind == NodeKind::Activity && n.label == label) return &n;
    for (const auto& c : n.children) {
        if (auto* hit = find_label(c, label)) return hit;
    }
    return nullptr;
}

inline NodePath path_of_label(const ProcessModel& m, const std::string& label) {
    return *m.path_to(find_label(m.root(), label)->id);
}

// ---- independent structural key -------------------------------------------

/// Order-insensitive rendering written separately from the library's
/// canonical form; used to deduplicate oracle states.
inline std::string oracle_key(const Node& n) {
    std::string c = n.condition ? "[" + *n.condition + "]" : "";
    switch (n.kind) {
    case NodeKind::Activity: return c + "a:" + n.label;
    case NodeKind::Skip: return c + "skip";
    default: break;
    }
    std::vector<std::string> parts;
    for (const auto& ch : n.children) parts.push_back(oracle_key(ch));
    if (n.kind == NodeKind::Parallel || n.kind == NodeKind::Conditional) std::sort(parts.begin(), parts.end());
    std::string out = c + to_string(n.kind) + "{";
    for (const auto& p : parts) out += p + ",";
    return out + "}";
}

inline std::string oracle_key(const ProcessModel& m) { return oracle_key(m.root()); }

// ---- random models -----------------------------------------------------------

struct RandomSpec {
    std::vector<std::string> labels{"A", "B", "C", "D"};
    std::vector<std::string> conditions{"c1", "c2"};
    std::size_t max_activities = 4;
    std::size_t max_depth = 2;
    bool two_branch_xor = true;
    bool allow_loops = true;
    bool allow_conditions = true;
};

/// Generates a random valid tree directly (not through patterns).
class TreeGen {
public:
    TreeGen(std::mt19937& rng, RandomSpec spec) : rng_(rng), spec_(std::move(spec)) {}

    ProcessModel model() {
        std::size_t budget = pick(0, spec_.max_activities);
        std::vector<Node> top;
        while (budget > 0) {
            std::size_t take = pick(1, budget);
            top.push_back(fragment(take, 0));
            budget -= take;
        }
        ProcessModel m = make_model(S(std::move(top)));
        m.normalize();
        m.validate();
        return m;
    }

private:
    std::size_t pick(std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
    }

    Condition cond() {
        if (!spec_.allow_conditions || spec_.conditions.empty() || pick(0, 2) == 0) return std::nullopt;
        return spec_.conditions[pick(0, spec_.conditions.size() - 1)];
    }

    /// A fragment holding exactly `acts` activities.
    Node fragment(std::size_t acts, std::size_t depth) {
        if (acts == 1 && (depth >= spec_.max_depth || pick(0, 2) > 0)) {
            return A(spec_.labels[pick(0, spec_.labels.size() - 1)]);
        }
        if (depth >= spec_.max_depth) {
            std::vector<Node> kids;
            for (std::size_t i = 0; i < acts; ++i) kids.push_back(A(spec_.labels[pick(0, spec_.labels.size() - 1)]));
            return S(std::move(kids));
        }
        std::size_t choice = pick(0, spec_.allow_loops ? 3 : 2);
        if (acts == 1 && choice == 0) choice = 2;
        switch (choice) {
        case 0:
        case 1: {
            auto parts = split(acts, 2);
            std::vector<Node> kids;
            for (auto p : parts) kids.push_back(fragment(p, depth + 1));
            return choice == 0 ? S(std::move(kids)) : P(std::move(kids));
        }
        case 2: {
            Node first = fragment(acts, depth + 1);
            first.condition = cond();
            std::size_t extra = spec_.two_branch_xor ? 0 : pick(0, 1);
            std::vector<Node> kids{std::move(first)};
            for (std::size_t i = 0; i <= extra; ++i) {
                Node skip = K();
                skip.condition = cond();
                kids.push_back(std::move(skip));
            }
            if (acts >= 2 && pick(0, 1) == 0) {
                // two non-empty branches
                auto parts = split(acts, 2);
                kids.clear();
                for (auto p : parts) {
                    Node b = fragment(p, depth + 1);
                    b.condition = cond();
                    kids.push_back(std::move(b));
                }
            }
            return X(std::move(kids));
        }
        default: {
            Node body = fragment(acts, depth + 1);
            body.condition = cond();
            return L(std::move(body));
        }
        }
    }

    std::vector<std::size_t> split(std::size_t acts, std::size_t min_parts) {
        std::vector<std::size_t> parts;
        if (acts < min_parts) return {acts};
        std::size_t first = pick(1, acts - 1);
        parts.push_back(first);
        parts.push_back(acts - first);
        return parts;
    }

    std::mt19937& rng_;
    RandomSpec spec_;
};

/// Random walk through applicable patterns from `start`.
inline std::vector<ProcessModel> random_walk(std::mt19937& rng, ProcessModel start, std::size_t length,
                                             const Vocabulary& vocab) {
    std::vector<ProcessModel> states{start};
    for (std::size_t i = 0; i < length; ++i) {
        auto moves = applicable_patterns(states.back(), vocab);
        if (moves.empty()) break;
        const auto& p = moves[std::uniform_int_distribution<std::size_t>(0, moves.size() - 1)(rng)];
        states.push_back(apply_pattern(states.back(), p));
    }
    return states;
}

// ---- graph isomorphism ---------------------------------------------------------

/// Backtracking isomorphism test respecting node kinds, labels and edge
/// conditions. Fine for the graph sizes used in tests.
inline bool isomorphic(const FlatGraph& a, const FlatGraph& b) {
    if (a.nodes.size() != b.nodes.size() || a.edges.size() != b.edges.size()) return false;
    auto signature = [](const FlatGraph& g, const GraphNodeId& id) {
        std::multiset<std::string> out_c, in_c;
        for (const auto& [k, c] : g.edges) {
            if (k.first == id) out_c.insert(c.value_or("\x01"));
            if (k.second == id) in_c.insert(c.value_or("\x01"));
        }
        const auto& n = g.nodes.at(id);
        std::string s = std::string(to_string(n.kind)) + "|" + n.label + "|";
        for (const auto& c : out_c) s += c + ";";
        s += "|";
        for (const auto& c : in_c) s += c + ";";
        return s;
    };
    std::vector<GraphNodeId> order;
    std::map<GraphNodeId, std::string> sig_a, sig_b;
    for (const auto& [id, n] : a.nodes) sig_a[id] = signature(a, id);
    for (const auto& [id, n] : b.nodes) sig_b[id] = signature(b, id);
    {
        std::multiset<std::string> sa, sb;
        for (auto& [k, v] : sig_a) sa.insert(v);
        for (auto& [k, v] : sig_b) sb.insert(v);
        if (sa != sb) return false;
    }
    // Visit in BFS order from start so neighbours are mapped early.
    std::set<GraphNodeId> seen;
    std::vector<GraphNodeId> queue;
    for (const auto& [id, n] : a.nodes) {
        if (seen.count(id)) continue;
        queue.push_back(id);
        seen.insert(id);
        for (std::size_t i = order.size(); i < queue.size(); ++i) {
            order.push_back(queue[i]);
            for (const auto& [k, c] : a.edges) {
                for (const auto& next : {k.first == queue[i] ? k.second : "", k.second == queue[i] ? k.first : ""}) {
                    if (!next.empty() && !seen.count(next)) {
                        seen.insert(next);
                        queue.push_back(next);
                    }
                }
            }
        }
    }
    std::map<GraphNodeId, GraphNodeId> map;
    std::set<GraphNodeId> used;
    std::function<bool(std::size_t)> extend = [&](std::size_t i) {
        if (i == order.size()) return true;
        const auto& u = order[i];
        for (const auto& [v, n] : b.nodes) {
            if (used.count(v) || sig_b[v] != sig_a[u]) continue;
            bool ok = true;
            for (const auto& [k, c] : a.edges) {
                if (k.first == u && map.count(k.second)) {
                    auto it = b.edges.find({v, map[k.second]});
                    if (it == b.edges.end() || it->second != c) ok = false;
                }
                if (k.second == u && map.count(k.first)) {
                    auto it = b.edges.find({map[k.first], v});
                    if (it == b.edges.end() || it->second != c) ok = false;
                }
                if (k.first == u && k.second == u) {
                    if (!b.edges.count({v, v})) ok = false;
                }
                if (!ok) break;
            }
            if (!ok) continue;
            map[u] = v;
            used.insert(v);
            if (extend(i + 1)) return true;
            map.erase(u);
            used.erase(v);
        }
        return false;
    };
    return extend(0);
}

inline FlatGraph fold(FlatGraph g, const std::vector<Primitive>& prims) {
    for (const auto& p : prims) g = apply_primitive(std::move(g), p);
    return g;
}

}  // namespace pbtest
