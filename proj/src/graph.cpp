#include "patternbench/graph.hpp"

#include <algorithm>
#include <deque>
#include <set>

namespace patternbench {

const char* to_string(GraphNodeKind kind) {
    switch (kind) {
    case GraphNodeKind::Activity: return "activity";
    case GraphNodeKind::Start: return "start";
    case GraphNodeKind::End: return "end";
    case GraphNodeKind::AndSplit: return "and-split";
    case GraphNodeKind::AndJoin: return "and-join";
    case GraphNodeKind::XorSplit: return "xor-split";
    case GraphNodeKind::XorJoin: return "xor-join";
    }
    return "?";
}

std::optional<GraphNodeKind> graph_node_kind_from_string(const std::string& text) {
    for (auto k : {GraphNodeKind::Activity, GraphNodeKind::Start, GraphNodeKind::End, GraphNodeKind::AndSplit,
                   GraphNodeKind::AndJoin, GraphNodeKind::XorSplit, GraphNodeKind::XorJoin}) {
        if (text == to_string(k)) return k;
    }
    return std::nullopt;
}

GraphNodeId activity_node_id(NodeId id) { return "act:" + std::to_string(id); }
GraphNodeId split_node_id(NodeId id) { return "split:" + std::to_string(id); }
GraphNodeId join_node_id(NodeId id) { return "join:" + std::to_string(id); }

namespace {

GraphNodeId entry_of(const Node& n) {
    switch (n.kind) {
    case NodeKind::Activity: return activity_node_id(n.id);
    case NodeKind::Sequence: return entry_of(n.children.front());
    case NodeKind::Loop: return join_node_id(n.id);
    default: return split_node_id(n.id);
    }
}

GraphNodeId exit_of(const Node& n) {
    switch (n.kind) {
    case NodeKind::Activity: return activity_node_id(n.id);
    case NodeKind::Sequence: return exit_of(n.children.back());
    case NodeKind::Loop: return split_node_id(n.id);
    default: return join_node_id(n.id);
    }
}

void add_edge(FlatGraph& g, const GraphNodeId& from, const GraphNodeId& to, const Condition& c) {
    g.edges[{from, to}] = c;
}

void lower(const Node& n, const GraphNodeId& pred, const GraphNodeId& succ, const Condition& entry, FlatGraph& g) {
    switch (n.kind) {
    case NodeKind::Activity: {
        auto id = activity_node_id(n.id);
        g.nodes[id] = GraphNode{id, GraphNodeKind::Activity, n.label};
        add_edge(g, pred, id, entry);
        add_edge(g, id, succ, std::nullopt);
        return;
    }
    case NodeKind::Skip:
        add_edge(g, pred, succ, entry);
        return;
    case NodeKind::Sequence: {
        if (n.children.empty()) {
            add_edge(g, pred, succ, entry);
            return;
        }
        const auto k = n.children.size();
        for (std::size_t i = 0; i < k; ++i) {
            const GraphNodeId from = i == 0 ? pred : exit_of(n.children[i - 1]);
            const GraphNodeId to = i + 1 == k ? succ : entry_of(n.children[i + 1]);
            lower(n.children[i], from, to, i == 0 ? entry : std::nullopt, g);
        }
        return;
    }
    case NodeKind::Parallel:
    case NodeKind::Conditional: {
        const bool xor_block = n.kind == NodeKind::Conditional;
        auto s = split_node_id(n.id);
        auto j = join_node_id(n.id);
        g.nodes[s] = GraphNode{s, xor_block ? GraphNodeKind::XorSplit : GraphNodeKind::AndSplit, {}};
        g.nodes[j] = GraphNode{j, xor_block ? GraphNodeKind::XorJoin : GraphNodeKind::AndJoin, {}};
        add_edge(g, pred, s, entry);
        add_edge(g, j, succ, std::nullopt);
        for (const auto& c : n.children) lower(c, s, j, xor_block ? c.condition : std::nullopt, g);
        return;
    }
    case NodeKind::Loop: {
        auto j = join_node_id(n.id);
        auto s = split_node_id(n.id);
        g.nodes[j] = GraphNode{j, GraphNodeKind::XorJoin, {}};
        g.nodes[s] = GraphNode{s, GraphNodeKind::XorSplit, {}};
        add_edge(g, pred, j, entry);
        add_edge(g, s, succ, std::nullopt);
        const Node& body = n.children.front();
        add_edge(g, s, j, body.condition);
        lower(body, j, s, std::nullopt, g);
        return;
    }
    }
}

}  // namespace

GraphNodeId graph_entry(const Node& node) { return entry_of(node); }
GraphNodeId graph_exit(const Node& node) { return exit_of(node); }

std::vector<GraphNodeId> graph_nodes_of(const Node& node) {
    std::vector<GraphNodeId> out;
    switch (node.kind) {
    case NodeKind::Activity: out.push_back(activity_node_id(node.id)); break;
    case NodeKind::Parallel:
    case NodeKind::Conditional:
    case NodeKind::Loop:
        out.push_back(split_node_id(node.id));
        out.push_back(join_node_id(node.id));
        break;
    default: break;
    }
    for (const auto& c : node.children) {
        auto sub = graph_nodes_of(c);
        out.insert(out.end(), sub.begin(), sub.end());
    }
    return out;
}

FlatGraph to_graph(const ProcessModel& model) {
    ProcessModel work = model;
    work.normalize();
    FlatGraph g;
    g.nodes[kStartId] = GraphNode{kStartId, GraphNodeKind::Start, {}};
    g.nodes[kEndId] = GraphNode{kEndId, GraphNodeKind::End, {}};
    lower(work.root(), kStartId, kEndId, std::nullopt, g);
    return g;
}

const char* to_string(PrimitiveOp op) {
    switch (op) {
    case PrimitiveOp::AddNode: return "ADD_NODE";
    case PrimitiveOp::DeleteNode: return "DELETE_NODE";
    case PrimitiveOp::AddEdge: return "ADD_EDGE";
    case PrimitiveOp::DeleteEdge: return "DELETE_EDGE";
    case PrimitiveOp::UpdateEdgeCondition: return "UPDATE_EDGE_CONDITION";
    }
    return "?";
}

Primitive Primitive::add_node(GraphNode n) {
    Primitive p;
    p.op = PrimitiveOp::AddNode;
    p.node = std::move(n);
    return p;
}

Primitive Primitive::delete_node(GraphNodeId id) {
    Primitive p;
    p.op = PrimitiveOp::DeleteNode;
    p.node.id = std::move(id);
    return p;
}

Primitive Primitive::add_edge(GraphNodeId from, GraphNodeId to, Condition c) {
    Primitive p;
    p.op = PrimitiveOp::AddEdge;
    p.edge = {std::move(from), std::move(to)};
    p.condition = std::move(c);
    return p;
}

Primitive Primitive::delete_edge(GraphNodeId from, GraphNodeId to) {
    Primitive p;
    p.op = PrimitiveOp::DeleteEdge;
    p.edge = {std::move(from), std::move(to)};
    return p;
}

Primitive Primitive::update_edge_condition(GraphNodeId from, GraphNodeId to, Condition c) {
    Primitive p;
    p.op = PrimitiveOp::UpdateEdgeCondition;
    p.edge = {std::move(from), std::move(to)};
    p.condition = std::move(c);
    return p;
}

std::string describe(const Primitive& p) {
    std::string out = to_string(p.op);
    switch (p.op) {
    case PrimitiveOp::AddNode:
        out += "(" + std::string(to_string(p.node.kind)) + " " + p.node.id;
        if (!p.node.label.empty()) out += " \"" + p.node.label + "\"";
        out += ")";
        break;
    case PrimitiveOp::DeleteNode: out += "(" + p.node.id + ")"; break;
    default:
        out += "(" + p.edge.first + "->" + p.edge.second;
        if (p.op != PrimitiveOp::DeleteEdge && p.condition) out += " [" + *p.condition + "]";
        out += ")";
    }
    return out;
}

FlatGraph apply_primitive(FlatGraph graph, const Primitive& p) {
    auto require_node = [&](const GraphNodeId& id) {
        if (!graph.nodes.count(id)) throw UnknownNode("unknown graph node " + id);
    };
    switch (p.op) {
    case PrimitiveOp::AddNode:
        if (p.node.id.empty()) throw DuplicateId("empty graph node id");
        if (graph.nodes.count(p.node.id)) throw DuplicateId("graph node " + p.node.id + " already exists");
        graph.nodes[p.node.id] = p.node;
        break;
    case PrimitiveOp::DeleteNode:
        require_node(p.node.id);
        graph.nodes.erase(p.node.id);
        std::erase_if(graph.edges, [&](const auto& e) {
            return e.first.first == p.node.id || e.first.second == p.node.id;
        });
        break;
    case PrimitiveOp::AddEdge:
        require_node(p.edge.first);
        require_node(p.edge.second);
        if (graph.edges.count(p.edge)) {
            throw DuplicateId("edge " + p.edge.first + "->" + p.edge.second + " already exists");
        }
        graph.edges[p.edge] = p.condition;
        break;
    case PrimitiveOp::DeleteEdge:
        if (!graph.edges.erase(p.edge)) throw UnknownEdge("unknown edge " + p.edge.first + "->" + p.edge.second);
        break;
    case PrimitiveOp::UpdateEdgeCondition: {
        auto it = graph.edges.find(p.edge);
        if (it == graph.edges.end()) throw UnknownEdge("unknown edge " + p.edge.first + "->" + p.edge.second);
        it->second = p.condition;
        break;
    }
    }
    return graph;
}

namespace {

struct ReductionEdge {
    GraphNodeId from;
    GraphNodeId to;
    Condition condition;
    std::vector<Node> fragment;
    bool alive = true;
};

bool is_split(GraphNodeKind k) { return k == GraphNodeKind::AndSplit || k == GraphNodeKind::XorSplit; }
bool is_join(GraphNodeKind k) { return k == GraphNodeKind::AndJoin || k == GraphNodeKind::XorJoin; }

/// Reduces recognised blocks until only start->end remains.
class Reducer {
public:
    Reducer(const FlatGraph& g, SoundnessReport& report) : graph_(g), report_(report) {
        for (const auto& [key, cond] : g.edges) edges_.push_back({key.first, key.second, cond, {}, true});
    }

    std::optional<Node> run() {
        bool progress = true;
        while (progress) {
            progress = false;
            for (const auto& [id, node] : graph_.nodes) {
                if (removed_.count(id)) continue;
                bool step = false;
                switch (node.kind) {
                case GraphNodeKind::Activity: step = reduce_activity(node); break;
                case GraphNodeKind::AndSplit:
                case GraphNodeKind::XorSplit: step = reduce_block(node); break;
                case GraphNodeKind::XorJoin: step = reduce_loop(node); break;
                default: break;
                }
                if (failed_) return std::nullopt;
                progress = progress || step;
            }
        }
        auto remaining = alive_edges();
        if (remaining.size() == 1 && edges_[remaining[0]].from == kStartId && edges_[remaining[0]].to == kEndId &&
            removed_.size() + 2 == graph_.nodes.size()) {
            Node root;
            root.kind = NodeKind::Sequence;
            root.children = std::move(edges_[remaining[0]].fragment);
            return root;
        }
        diagnose_stall();
        return std::nullopt;
    }

private:
    std::vector<std::size_t> alive_edges() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < edges_.size(); ++i) {
            if (edges_[i].alive) out.push_back(i);
        }
        return out;
    }
    std::vector<std::size_t> incoming(const GraphNodeId& id) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < edges_.size(); ++i) {
            if (edges_[i].alive && edges_[i].to == id) out.push_back(i);
        }
        return out;
    }
    std::vector<std::size_t> outgoing(const GraphNodeId& id) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < edges_.size(); ++i) {
            if (edges_[i].alive && edges_[i].from == id) out.push_back(i);
        }
        return out;
    }

    Node fresh(NodeKind kind) {
        Node n;
        n.id = next_id_++;
        n.kind = kind;
        return n;
    }

    Node branch_from(std::vector<Node> fragment) {
        if (fragment.size() == 1) return std::move(fragment.front());
        Node seq = fresh(NodeKind::Sequence);
        seq.children = std::move(fragment);
        return seq;
    }

    void fail(std::string code, std::vector<std::string> refs, std::string message) {
        report_.violations.push_back({std::move(code), std::move(refs), std::move(message)});
        failed_ = true;
    }

    void splice(std::size_t in, std::size_t out, Node middle) {
        ReductionEdge merged;
        merged.from = edges_[in].from;
        merged.to = edges_[out].to;
        merged.condition = edges_[in].condition;
        merged.fragment = std::move(edges_[in].fragment);
        merged.fragment.push_back(std::move(middle));
        for (auto& n : edges_[out].fragment) merged.fragment.push_back(std::move(n));
        edges_[in].alive = false;
        edges_[out].alive = false;
        edges_.push_back(std::move(merged));
    }

    bool reduce_activity(const GraphNode& node) {
        auto in = incoming(node.id);
        auto out = outgoing(node.id);
        if (in.size() != 1 || out.size() != 1) return false;
        Node act = fresh(NodeKind::Activity);
        act.label = node.label;
        splice(in[0], out[0], std::move(act));
        removed_.insert(node.id);
        return true;
    }

    bool reduce_block(const GraphNode& split) {
        auto in = incoming(split.id);
        auto out = outgoing(split.id);
        if (in.size() != 1 || out.size() < 2) return false;
        const GraphNodeId join = edges_[out[0]].to;
        for (auto e : out) {
            if (edges_[e].to != join) return false;
        }
        auto join_it = graph_.nodes.find(join);
        if (join_it == graph_.nodes.end() || !is_join(join_it->second.kind)) return false;
        auto join_in = incoming(join);
        auto join_out = outgoing(join);
        if (join_in.size() != out.size() || join_out.size() != 1) return false;
        const bool xor_split = split.kind == GraphNodeKind::XorSplit;
        const bool xor_join = join_it->second.kind == GraphNodeKind::XorJoin;
        if (xor_split != xor_join) return false;  // reported as MISMATCHED_BLOCK on stall

        Node block = fresh(xor_split ? NodeKind::Conditional : NodeKind::Parallel);
        for (auto e : out) {
            auto& edge = edges_[e];
            if (edge.fragment.empty()) {
                if (!xor_split) {
                    fail("EMPTY_PARALLEL_BRANCH", {split.id, join}, "parallel branch without activities");
                    return false;
                }
                Node skip = fresh(NodeKind::Skip);
                skip.condition = edge.condition;
                block.children.push_back(std::move(skip));
            } else {
                if (!xor_split && edge.condition) {
                    fail("CONDITION_ON_PARALLEL", {split.id}, "parallel branch carries a condition");
                    return false;
                }
                Node branch = branch_from(std::move(edge.fragment));
                if (xor_split) branch.condition = edge.condition;
                block.children.push_back(std::move(branch));
            }
            if (xor_split && !edge.condition) {
                report_.warnings.push_back({"UNSET_CONDITION", {split.id}, "conditional branch without condition"});
            }
            edge.alive = false;
        }
        splice(in[0], join_out[0], std::move(block));
        removed_.insert(split.id);
        removed_.insert(join);
        return true;
    }

    bool reduce_loop(const GraphNode& join) {
        auto in = incoming(join.id);
        auto out = outgoing(join.id);
        if (in.size() != 2 || out.size() != 1) return false;
        const auto body_edge = out[0];
        const GraphNodeId split = edges_[body_edge].to;
        auto split_it = graph_.nodes.find(split);
        if (split_it == graph_.nodes.end() || split_it->second.kind != GraphNodeKind::XorSplit) return false;
        auto split_in = incoming(split);
        auto split_out = outgoing(split);
        if (split_in.size() != 1 || split_out.size() != 2) return false;
        std::optional<std::size_t> back, exit, entry;
        for (auto e : split_out) (edges_[e].to == join.id ? back : exit) = e;
        for (auto e : in) {
            if (edges_[e].from != split) entry = e;
        }
        if (!back || !exit || !entry) return false;
        if (edges_[body_edge].fragment.empty()) {
            fail("EMPTY_LOOP", {join.id, split}, "loop without a body");
            return false;
        }
        Node loop = fresh(NodeKind::Loop);
        Node body = branch_from(std::move(edges_[body_edge].fragment));
        body.condition = edges_[*back].condition;
        if (!body.condition) {
            report_.warnings.push_back({"UNSET_CONDITION", {split}, "loop back edge without condition"});
        }
        loop.children.push_back(std::move(body));
        edges_[body_edge].alive = false;
        edges_[*back].alive = false;
        splice(*entry, *exit, std::move(loop));
        removed_.insert(join.id);
        removed_.insert(split);
        return true;
    }

    void diagnose_stall() {
        for (const auto& [id, node] : graph_.nodes) {
            if (removed_.count(id) || !is_split(node.kind)) continue;
            auto out = outgoing(id);
            if (out.size() < 2) continue;
            const GraphNodeId target = edges_[out[0]].to;
            if (!std::all_of(out.begin(), out.end(), [&](auto e) { return edges_[e].to == target; })) continue;
            auto it = graph_.nodes.find(target);
            if (it == graph_.nodes.end() || !is_join(it->second.kind)) continue;
            const bool same_family = (node.kind == GraphNodeKind::XorSplit) == (it->second.kind == GraphNodeKind::XorJoin);
            if (!same_family) {
                fail("MISMATCHED_BLOCK", {id, target},
                     std::string(to_string(node.kind)) + " closed by " + to_string(it->second.kind));
                return;
            }
        }
        fail("NOT_BLOCK_STRUCTURED", {}, "gateways do not form properly nested blocks");
    }

    const FlatGraph& graph_;
    SoundnessReport& report_;
    std::vector<ReductionEdge> edges_;
    std::set<GraphNodeId> removed_;
    NodeId next_id_ = 1;
    bool failed_ = false;
};

void check_basic(const FlatGraph& g, SoundnessReport& report) {
    std::map<GraphNodeId, int> in_degree, out_degree;
    for (const auto& [key, cond] : g.edges) {
        ++out_degree[key.first];
        ++in_degree[key.second];
    }
    std::vector<GraphNodeId> starts, ends;
    for (const auto& [id, node] : g.nodes) {
        if (node.kind == GraphNodeKind::Start) starts.push_back(id);
        if (node.kind == GraphNodeKind::End) ends.push_back(id);
    }
    if (starts.empty()) report.violations.push_back({"NO_START", {}, "graph has no start event"});
    if (starts.size() > 1) report.violations.push_back({"MULTIPLE_START", starts, "graph has several start events"});
    if (ends.empty()) report.violations.push_back({"NO_END", {}, "graph has no end event"});
    if (ends.size() > 1) report.violations.push_back({"MULTIPLE_END", ends, "graph has several end events"});

    for (const auto& [id, node] : g.nodes) {
        const int in = in_degree[id];
        const int out = out_degree[id];
        bool ok = true;
        switch (node.kind) {
        case GraphNodeKind::Start: ok = in == 0 && out == 1; break;
        case GraphNodeKind::End: ok = in == 1 && out == 0; break;
        case GraphNodeKind::Activity:
            if (in == 0 || out == 0) {
                report.violations.push_back({"DANGLING_NODE", {id}, "activity lacks an incoming or outgoing edge"});
                continue;
            }
            ok = in == 1 && out == 1;
            if (node.label.empty()) report.violations.push_back({"EMPTY_LABEL", {id}, "activity without label"});
            break;
        case GraphNodeKind::AndSplit:
        case GraphNodeKind::XorSplit:
            if (in == 0 || out == 0) {
                report.violations.push_back({"DANGLING_NODE", {id}, "split lacks an incoming or outgoing edge"});
                continue;
            }
            ok = in == 1 && out >= 2;
            break;
        case GraphNodeKind::AndJoin:
        case GraphNodeKind::XorJoin:
            if (in == 0 || out == 0) {
                report.violations.push_back({"DANGLING_NODE", {id}, "join lacks an incoming or outgoing edge"});
                continue;
            }
            ok = in >= 2 && out == 1;
            break;
        }
        if (!ok) {
            report.violations.push_back({"INVALID_DEGREE", {id},
                                         std::string(to_string(node.kind)) + " has in=" + std::to_string(in) +
                                             " out=" + std::to_string(out)});
        }
    }

    if (starts.size() != 1 || ends.size() != 1) return;
    std::map<GraphNodeId, std::vector<GraphNodeId>> succ, pred;
    for (const auto& [key, cond] : g.edges) {
        succ[key.first].push_back(key.second);
        pred[key.second].push_back(key.first);
    }
    auto reach = [](const GraphNodeId& from, auto& adj) {
        std::set<GraphNodeId> seen{from};
        std::deque<GraphNodeId> queue{from};
        while (!queue.empty()) {
            auto cur = queue.front();
            queue.pop_front();
            for (const auto& nxt : adj[cur]) {
                if (seen.insert(nxt).second) queue.push_back(nxt);
            }
        }
        return seen;
    };
    auto forward = reach(starts[0], succ);
    auto backward = reach(ends[0], pred);
    for (const auto& [id, node] : g.nodes) {
        if (!forward.count(id) || !backward.count(id)) {
            report.violations.push_back({"NOT_ON_PATH", {id}, "node is not on a path from start to end"});
        }
    }
}

std::optional<Node> reduce_graph(const FlatGraph& g, SoundnessReport& report) {
    check_basic(g, report);
    if (!report.violations.empty()) return std::nullopt;
    Reducer reducer(g, report);
    return reducer.run();
}

}  // namespace

SoundnessReport check_soundness(const FlatGraph& graph) {
    SoundnessReport report;
    reduce_graph(graph, report);
    report.sound = report.violations.empty();
    return report;
}

ProcessModel from_graph(const FlatGraph& graph) {
    SoundnessReport report;
    auto root = reduce_graph(graph, report);
    if (!root || !report.violations.empty()) {
        std::string msg = "graph is not block structured";
        for (const auto& v : report.violations) msg += "; " + v.code + ": " + v.message;
        throw NotBlockStructured(msg);
    }
    root->id = 0;
    ProcessModel model(std::move(*root), 1);
    model.normalize();
    return model;
}

}  // namespace patternbench
