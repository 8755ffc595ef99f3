#pragma once

// Brute-force block reconstructibility: enumerate every block tree over a
// fixed set of distinct activity labels and gateway budget, lower each one,
// and look for an isomorphic lowering.

#include "support/support.hpp"

#include <map>
#include <tuple>

namespace pbtest {

class TreeEnumerator {
public:
    explicit TreeEnumerator(std::vector<std::string> labels) : labels_(std::move(labels)) {}

    /// All fragments using exactly the labels in `mask`, `ands` parallel
    /// blocks and `xors` conditional-or-loop blocks.
    const std::vector<Node>& fragments(unsigned mask, int ands, int xors) {
        auto key = std::make_tuple(mask, ands, xors);
        if (auto it = memo_.find(key); it != memo_.end()) return it->second;
        std::vector<Node> out;
        if (mask && __builtin_popcount(mask) == 1 && ands == 0 && xors == 0) {
            out.push_back(A(labels_[__builtin_ctz(mask)]));
        }
        for (auto kind : {NodeKind::Sequence, NodeKind::Parallel}) {
            const int need_and = kind == NodeKind::Parallel ? 1 : 0;
            if (ands < need_and) continue;
            for (auto& parts : partitions(mask, ands - need_and, xors)) {
                if (parts.size() < 2) continue;
                combine(parts, 0, {}, [&](std::vector<Node> kids) {
                    for (const auto& k : kids) {
                        if (k.kind == kind) return;
                    }
                    out.push_back(block(kind, std::move(kids)));
                });
            }
        }
        if (xors >= 1) {
            for (auto& parts : partitions(mask, ands, xors - 1)) {
                combine(parts, 0, {}, [&](std::vector<Node> kids) {
                    if (kids.size() >= 2) out.push_back(block(NodeKind::Conditional, kids));
                    kids.push_back(K());
                    out.push_back(block(NodeKind::Conditional, std::move(kids)));
                });
            }
            for (const auto& body : fragments(mask, ands, xors - 1)) out.push_back(L(body));
        }
        return memo_[key] = std::move(out);
    }

    /// Ordered lists of (mask, ands, xors) parts, each with at least one label.
    std::vector<std::vector<std::tuple<unsigned, int, int>>> partitions(unsigned mask, int ands, int xors) {
        std::vector<std::vector<std::tuple<unsigned, int, int>>> out;
        std::vector<std::tuple<unsigned, int, int>> cur;
        std::function<void(unsigned, int, int)> rec = [&](unsigned rest, int a, int x) {
            if (!rest) {
                if (a == 0 && x == 0 && !cur.empty()) out.push_back(cur);
                return;
            }
            for (unsigned sub = rest; sub; sub = (sub - 1) & rest) {
                for (int pa = 0; pa <= a; ++pa) {
                    for (int px = 0; px <= x; ++px) {
                        cur.emplace_back(sub, pa, px);
                        rec(rest & ~sub, a - pa, x - px);
                        cur.pop_back();
                    }
                }
            }
        };
        rec(mask, ands, xors);
        return out;
    }

    template <class F>
    void combine(const std::vector<std::tuple<unsigned, int, int>>& parts, std::size_t i, std::vector<Node> acc, F&& f) {
        if (i == parts.size()) {
            f(std::move(acc));
            return;
        }
        auto [m, a, x] = parts[i];
        for (const auto& frag : fragments(m, a, x)) {
            auto next = acc;
            next.push_back(frag);
            combine(parts, i + 1, std::move(next), f);
        }
    }

private:
    std::vector<std::string> labels_;
    std::map<std::tuple<unsigned, int, int>, std::vector<Node>> memo_;
};

/// True when some block tree lowers to a graph isomorphic to `g`.
/// Activity labels of `g` must be distinct.
inline bool reconstructible(const FlatGraph& g) {
    std::vector<std::string> labels;
    int and_splits = 0, and_joins = 0, xor_splits = 0, xor_joins = 0, starts = 0, ends = 0;
    for (const auto& [id, n] : g.nodes) {
        switch (n.kind) {
        case GraphNodeKind::Activity: labels.push_back(n.label); break;
        case GraphNodeKind::AndSplit: ++and_splits; break;
        case GraphNodeKind::AndJoin: ++and_joins; break;
        case GraphNodeKind::XorSplit: ++xor_splits; break;
        case GraphNodeKind::XorJoin: ++xor_joins; break;
        case GraphNodeKind::Start: ++starts; break;
        case GraphNodeKind::End: ++ends; break;
        }
    }
    if (starts != 1 || ends != 1 || and_splits != and_joins || xor_splits != xor_joins) return false;
    std::sort(labels.begin(), labels.end());
    if (std::adjacent_find(labels.begin(), labels.end()) != labels.end()) return false;
    if (labels.empty()) {
        return and_splits == 0 && xor_splits == 0 && isomorphic(g, to_graph(new_empty()));
    }
    TreeEnumerator trees(labels);
    const unsigned all = (1u << labels.size()) - 1;
    for (const auto& frag : trees.fragments(all, and_splits, xor_splits)) {
        ProcessModel m = make_model(frag);
        // Skip trees the model invariants reject (e.g. a conditional of skips).
        try {
            m.validate();
        } catch (const InvariantViolation&) {
            continue;
        }
        if (isomorphic(to_graph(m), g)) return true;
    }
    return false;
}

}  // namespace pbtest
