#include "patternbench/patterns.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

namespace patternbench {

const char* to_string(PatternKind kind) {
    switch (kind) {
    case PatternKind::SerialInsert: return "serial_insert";
    case PatternKind::ParallelInsert: return "parallel_insert";
    case PatternKind::DeleteFragment: return "delete_fragment";
    case PatternKind::EmbedInLoop: return "embed_in_loop";
    case PatternKind::EmbedInConditional: return "embed_in_conditional";
    case PatternKind::UpdateCondition: return "update_condition";
    }
    return "?";
}

std::optional<PatternKind> pattern_kind_from_string(const std::string& text) {
    for (auto k : {PatternKind::SerialInsert, PatternKind::ParallelInsert, PatternKind::DeleteFragment,
                   PatternKind::EmbedInLoop, PatternKind::EmbedInConditional, PatternKind::UpdateCondition}) {
        if (text == to_string(k)) return k;
    }
    return std::nullopt;
}

const char* to_string(PatternErrorCode code) {
    switch (code) {
    case PatternErrorCode::PreconditionViolated: return "PRECONDITION_VIOLATED";
    case PatternErrorCode::UnknownRef: return "UNKNOWN_REF";
    case PatternErrorCode::WouldBreakStructure: return "WOULD_BREAK_STRUCTURE";
    }
    return "?";
}

std::optional<PatternErrorCode> pattern_error_from_string(const std::string& text) {
    for (auto c : {PatternErrorCode::PreconditionViolated, PatternErrorCode::UnknownRef,
                   PatternErrorCode::WouldBreakStructure}) {
        if (text == to_string(c)) return c;
    }
    return std::nullopt;
}

PatternError::PatternError(PatternErrorCode code, const std::string& detail)
    : Error(std::string(to_string(code)) + ": " + detail), code_(code) {}

PatternInstance PatternInstance::serial_insert(std::string label, Position at) {
    PatternInstance p;
    p.kind = PatternKind::SerialInsert;
    p.label = std::move(label);
    p.position = std::move(at);
    return p;
}

PatternInstance PatternInstance::parallel_insert(std::string label, NodePath target) {
    PatternInstance p;
    p.kind = PatternKind::ParallelInsert;
    p.label = std::move(label);
    p.target = std::move(target);
    return p;
}

PatternInstance PatternInstance::delete_fragment(NodePath target) {
    PatternInstance p;
    p.kind = PatternKind::DeleteFragment;
    p.target = std::move(target);
    return p;
}

PatternInstance PatternInstance::embed_in_loop(NodePath target, Condition c) {
    PatternInstance p;
    p.kind = PatternKind::EmbedInLoop;
    p.target = std::move(target);
    p.condition = std::move(c);
    return p;
}

PatternInstance PatternInstance::embed_in_conditional(NodePath target) {
    PatternInstance p;
    p.kind = PatternKind::EmbedInConditional;
    p.target = std::move(target);
    return p;
}

PatternInstance PatternInstance::update_condition(NodePath branch, Condition c) {
    PatternInstance p;
    p.kind = PatternKind::UpdateCondition;
    p.target = std::move(branch);
    p.condition = std::move(c);
    return p;
}

namespace {

std::string path_text(const NodePath& path) {
    std::string out;
    for (std::size_t i = 0; i < path.size(); ++i) {
        if (i) out += "/";
        out += std::to_string(path[i]);
    }
    return out;
}

std::string condition_text(const Condition& c) { return c ? "\"" + *c + "\"" : "UNSET"; }

[[noreturn]] void precondition(const std::string& detail) {
    throw PatternError(PatternErrorCode::PreconditionViolated, detail);
}

const Node& resolve_or_throw(const ProcessModel& model, const NodePath& path) {
    const Node* node = model.resolve(path);
    if (!node) throw PatternError(PatternErrorCode::UnknownRef, "no node at path " + path_text(path));
    return *node;
}

NodePath path_of(const ProcessModel& model, NodeId id) {
    auto path = model.path_to(id);
    if (!path) throw PatternError(PatternErrorCode::UnknownRef, "no node " + std::to_string(id));
    return *path;
}

Node make_activity(ProcessModel& model, const std::string& label) {
    Node n;
    n.id = model.allocate_id();
    n.kind = NodeKind::Activity;
    n.label = label;
    return n;
}

Node make_block(ProcessModel& model, NodeKind kind) {
    Node n;
    n.id = model.allocate_id();
    n.kind = kind;
    return n;
}

/// Replaces `slot` in place by `wrapper` holding the old node; the slot's
/// incoming condition moves to the wrapper.
void wrap(Node& slot, Node wrapper, bool append_after, std::optional<Node> extra = std::nullopt) {
    Node old = std::move(slot);
    wrapper.condition = old.condition;
    old.condition.reset();
    if (extra && !append_after) wrapper.children.push_back(std::move(*extra));
    wrapper.children.push_back(std::move(old));
    if (extra && append_after) wrapper.children.push_back(std::move(*extra));
    slot = std::move(wrapper);
}

bool root_fragment_ok(const Node& target, const ProcessModel& model) {
    return target.id != model.root().id || target.children.size() >= 2;
}

void require_fragment(const ProcessModel& model, const Node& target, bool allow_skip) {
    if (!allow_skip && target.kind == NodeKind::Skip) precondition("an empty branch is not a fragment");
    if (target.id == model.root().id && target.children.size() < 2) {
        precondition("the whole model is a fragment only with at least two top-level nodes");
    }
}

/// Moves all children of the root into a fresh inner sequence.
Node take_root_body(ProcessModel& model, NodeId body_id) {
    Node body;
    body.id = body_id;
    body.kind = NodeKind::Sequence;
    body.children = std::move(model.mutable_root().children);
    model.mutable_root().children.clear();
    return body;
}

ProcessModel apply_impl(const ProcessModel& model, const PatternInstance& p) {
    ProcessModel out = model;
    const NodeId root_id = model.root().id;

    switch (p.kind) {
    case PatternKind::SerialInsert: {
        if (p.label.empty()) precondition("activity label must not be empty");
        const Node& anchor = resolve_or_throw(model, p.position.node);
        switch (p.position.kind) {
        case Position::Kind::Gap: {
            if (anchor.kind != NodeKind::Sequence) precondition("gap reference must address a sequence");
            if (p.position.index > anchor.children.size()) precondition("gap index out of range");
            Node act = make_activity(out, p.label);
            Node* seq = out.find_mutable(anchor.id);
            seq->children.insert(seq->children.begin() + static_cast<std::ptrdiff_t>(p.position.index),
                                 std::move(act));
            break;
        }
        case Position::Kind::Before:
        case Position::Kind::After: {
            if (anchor.id == root_id) precondition("use a gap of the root sequence");
            if (anchor.kind == NodeKind::Skip) precondition("insert into an empty branch with a skip position");
            if (anchor.kind == NodeKind::Sequence) precondition("use a gap of the sequence");
            const Node* parent = model.parent_of(anchor.id);
            if (parent->kind == NodeKind::Sequence) precondition("use a gap of the enclosing sequence");
            Node act = make_activity(out, p.label);
            Node seq = make_block(out, NodeKind::Sequence);
            wrap(*out.find_mutable(anchor.id), std::move(seq), p.position.kind == Position::Kind::After,
                 std::move(act));
            break;
        }
        case Position::Kind::Skip: {
            if (anchor.kind != NodeKind::Skip) precondition("skip position must address an empty branch");
            Node act = make_activity(out, p.label);
            Node* slot = out.find_mutable(anchor.id);
            act.condition = slot->condition;
            *slot = std::move(act);
            break;
        }
        }
        break;
    }
    case PatternKind::ParallelInsert: {
        if (p.label.empty()) precondition("activity label must not be empty");
        const Node& target = resolve_or_throw(model, p.target);
        require_fragment(model, target, false);
        if (target.kind == NodeKind::Parallel) precondition("target a branch of the parallel block");
        const Node* parent = model.parent_of(target.id);
        Node act = make_activity(out, p.label);
        if (parent && parent->kind == NodeKind::Parallel) {
            out.find_mutable(parent->id)->children.push_back(std::move(act));
        } else if (target.id == root_id) {
            Node block = make_block(out, NodeKind::Parallel);
            Node body = take_root_body(out, out.allocate_id());
            block.children.push_back(std::move(body));
            block.children.push_back(std::move(act));
            out.mutable_root().children.push_back(std::move(block));
        } else {
            Node block = make_block(out, NodeKind::Parallel);
            wrap(*out.find_mutable(target.id), std::move(block), true, std::move(act));
        }
        break;
    }
    case PatternKind::DeleteFragment: {
        const Node& target = resolve_or_throw(model, p.target);
        require_fragment(model, target, true);
        if (target.id == root_id) {
            out.mutable_root().children.clear();
            break;
        }
        Node* parent = out.find_mutable(model.parent_of(target.id)->id);
        auto it = std::find_if(parent->children.begin(), parent->children.end(),
                               [&](const Node& c) { return c.id == target.id; });
        if (parent->kind == NodeKind::Conditional && target.kind != NodeKind::Skip) {
            Node skip = make_block(out, NodeKind::Skip);
            skip.condition = it->condition;
            *it = std::move(skip);
        } else {
            parent->children.erase(it);
        }
        break;
    }
    case PatternKind::EmbedInLoop: {
        const Node& target = resolve_or_throw(model, p.target);
        require_fragment(model, target, false);
        const Node* parent = model.parent_of(target.id);
        if (parent && parent->kind == NodeKind::Loop && target.condition == p.condition) {
            precondition("fragment is already the body of an identical loop");
        }
        Node loop = make_block(out, NodeKind::Loop);
        if (target.id == root_id) {
            Node body = take_root_body(out, out.allocate_id());
            body.condition = p.condition;
            loop.children.push_back(std::move(body));
            out.mutable_root().children.push_back(std::move(loop));
        } else {
            Node& slot = *out.find_mutable(target.id);
            wrap(slot, std::move(loop), true);
            slot.children.front().condition = p.condition;
        }
        break;
    }
    case PatternKind::EmbedInConditional: {
        const Node& target = resolve_or_throw(model, p.target);
        require_fragment(model, target, false);
        Node block = make_block(out, NodeKind::Conditional);
        if (target.id == root_id) {
            Node body = take_root_body(out, out.allocate_id());
            block.children.push_back(std::move(body));
            block.children.push_back(make_block(out, NodeKind::Skip));
            out.mutable_root().children.push_back(std::move(block));
        } else {
            Node skip = make_block(out, NodeKind::Skip);
            wrap(*out.find_mutable(target.id), std::move(block), true, std::move(skip));
        }
        break;
    }
    case PatternKind::UpdateCondition: {
        const Node& target = resolve_or_throw(model, p.target);
        const Node* parent = model.parent_of(target.id);
        if (!parent || (parent->kind != NodeKind::Conditional && parent->kind != NodeKind::Loop)) {
            precondition("condition reference must address a conditional branch or a loop body");
        }
        if (target.condition == p.condition) precondition("condition already has this value");
        out.find_mutable(target.id)->condition = p.condition;
        break;
    }
    }

    out.normalize();
    try {
        out.validate();
    } catch (const InvariantViolation& e) {
        throw PatternError(PatternErrorCode::WouldBreakStructure, e.what());
    }
    return out;
}

}  // namespace

std::string describe(const PatternInstance& p) {
    std::string out = to_string(p.kind);
    out += "(";
    switch (p.kind) {
    case PatternKind::SerialInsert: {
        out += "\"" + p.label + "\", ";
        const auto& pos = p.position;
        switch (pos.kind) {
        case Position::Kind::Gap: out += "gap " + path_text(pos.node) + "#" + std::to_string(pos.index); break;
        case Position::Kind::Before: out += "before " + path_text(pos.node); break;
        case Position::Kind::After: out += "after " + path_text(pos.node); break;
        case Position::Kind::Skip: out += "into " + path_text(pos.node); break;
        }
        break;
    }
    case PatternKind::ParallelInsert: out += "\"" + p.label + "\", " + path_text(p.target); break;
    case PatternKind::DeleteFragment:
    case PatternKind::EmbedInConditional: out += path_text(p.target); break;
    case PatternKind::EmbedInLoop:
    case PatternKind::UpdateCondition: out += path_text(p.target) + ", " + condition_text(p.condition); break;
    }
    return out + ")";
}

ProcessModel apply_pattern(const ProcessModel& model, const PatternInstance& p) { return apply_impl(model, p); }

std::optional<PatternError> check_pattern(const ProcessModel& model, const PatternInstance& p) {
    try {
        apply_impl(model, p);
    } catch (const PatternError& e) {
        return e;
    }
    return std::nullopt;
}

std::vector<PatternInstance> applicable_patterns(const ProcessModel& model, const Vocabulary& vocab) {
    std::set<std::string> labels;
    if (vocab.labels) {
        labels = *vocab.labels;
    } else {
        for (auto& l : activities(model)) labels.insert(l);
    }
    std::vector<Condition> values{std::nullopt};
    if (vocab.conditions) {
        for (const auto& c : *vocab.conditions) values.emplace_back(c);
    } else {
        for (const auto& c : conditions(model)) values.emplace_back(c);
    }

    std::vector<PatternInstance> out;
    const NodeId root_id = model.root().id;
    NodePath path;
    std::function<void(const Node&, const Node*)> visit = [&](const Node& n, const Node* parent) {
        path.push_back(n.id);
        const bool is_root = n.id == root_id;
        const bool fragment = n.kind != NodeKind::Skip && root_fragment_ok(n, model);

        if (n.kind == NodeKind::Sequence) {
            for (std::size_t i = 0; i <= n.children.size(); ++i) {
                for (const auto& l : labels) {
                    out.push_back(PatternInstance::serial_insert(l, Position{Position::Kind::Gap, path, i}));
                }
            }
        } else if (n.kind == NodeKind::Skip) {
            for (const auto& l : labels) {
                out.push_back(PatternInstance::serial_insert(l, Position{Position::Kind::Skip, path, 0}));
            }
        } else if (!is_root && parent->kind != NodeKind::Sequence) {
            for (const auto& l : labels) {
                out.push_back(PatternInstance::serial_insert(l, Position{Position::Kind::Before, path, 0}));
                out.push_back(PatternInstance::serial_insert(l, Position{Position::Kind::After, path, 0}));
            }
        }
        if (fragment && n.kind != NodeKind::Parallel) {
            for (const auto& l : labels) out.push_back(PatternInstance::parallel_insert(l, path));
        }
        if (vocab.include_deletes && (n.kind == NodeKind::Skip || fragment)) {
            out.push_back(PatternInstance::delete_fragment(path));
        }
        if (fragment) {
            const bool loop_body = parent && parent->kind == NodeKind::Loop;
            for (const auto& c : values) {
                if (loop_body && n.condition == c) continue;
                out.push_back(PatternInstance::embed_in_loop(path, c));
            }
            out.push_back(PatternInstance::embed_in_conditional(path));
        }
        if (parent && (parent->kind == NodeKind::Conditional || parent->kind == NodeKind::Loop)) {
            for (const auto& c : values) {
                if (c != n.condition) out.push_back(PatternInstance::update_condition(path, c));
            }
        }
        for (const auto& c : n.children) visit(c, &n);
        path.pop_back();
    };
    visit(model.root(), nullptr);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<ProcessModel> apply_sequence(const ProcessModel& start, const std::vector<PatternInstance>& path) {
    std::vector<ProcessModel> states{start};
    for (const auto& p : path) states.push_back(apply_pattern(states.back(), p));
    return states;
}

// ---------------------------------------------------------------------------
// Primitive expansion

namespace {

struct Segment {
    GraphNodeId pred;
    GraphNodeId entry;
    GraphNodeId exit;
    GraphNodeId succ;
    Condition entry_condition;
};

/// The edges by which a subtree is wired into the graph.
Segment segment_of(const ProcessModel& model, const FlatGraph& g, const Node& node) {
    Segment s;
    if (node.id == model.root().id && node.children.empty()) {
        s.pred = kStartId;
        s.succ = kEndId;
        s.entry = kEndId;
        s.exit = kStartId;
        return s;
    }
    s.entry = graph_entry(node);
    s.exit = graph_exit(node);
    auto inner_list = graph_nodes_of(node);
    std::set<GraphNodeId> inner(inner_list.begin(), inner_list.end());
    for (const auto& [key, cond] : g.edges) {
        if (key.second == s.entry && !inner.count(key.first)) {
            s.pred = key.first;
            s.entry_condition = cond;
        }
        if (key.first == s.exit && !inner.count(key.second)) s.succ = key.second;
    }
    return s;
}

void wrap_segment(std::vector<Primitive>& out, const Segment& s, const GraphNode& open, const GraphNode& close) {
    out.push_back(Primitive::delete_edge(s.pred, s.entry));
    out.push_back(Primitive::delete_edge(s.exit, s.succ));
    out.push_back(Primitive::add_node(open));
    out.push_back(Primitive::add_node(close));
    out.push_back(Primitive::add_edge(s.pred, open.id, s.entry_condition));
    out.push_back(Primitive::add_edge(open.id, s.entry));
    out.push_back(Primitive::add_edge(s.exit, close.id));
    out.push_back(Primitive::add_edge(close.id, s.succ));
}

/// Deletes every node of `doomed` together with all incident edges.
void remove_nodes(std::vector<Primitive>& out, const FlatGraph& g, const std::set<GraphNodeId>& doomed) {
    for (const auto& [key, cond] : g.edges) {
        if (doomed.count(key.first) || doomed.count(key.second)) {
            out.push_back(Primitive::delete_edge(key.first, key.second));
        }
    }
    for (const auto& id : doomed) out.push_back(Primitive::delete_node(id));
}

std::vector<Primitive> expand_delete(const ProcessModel& model, const FlatGraph& g, const Node& target) {
    std::vector<Primitive> out;
    const Node& root = model.root();

    if (target.kind == NodeKind::Skip) {
        const Node& parent = *model.parent_of(target.id);
        if (parent.children.size() >= 3) {
            out.push_back(Primitive::delete_edge(split_node_id(parent.id), join_node_id(parent.id)));
            return out;
        }
        const Node& other = parent.children[parent.children[0].id == target.id ? 1 : 0];
        const Segment block = segment_of(model, g, parent);
        const Segment inner = segment_of(model, g, other);
        out.push_back(Primitive::delete_edge(block.pred, block.entry));
        out.push_back(Primitive::delete_edge(block.entry, block.exit));
        out.push_back(Primitive::delete_edge(block.entry, inner.entry));
        out.push_back(Primitive::delete_edge(inner.exit, block.exit));
        out.push_back(Primitive::delete_edge(block.exit, block.succ));
        out.push_back(Primitive::delete_node(block.entry));
        out.push_back(Primitive::delete_node(block.exit));
        out.push_back(Primitive::add_edge(block.pred, inner.entry, block.entry_condition));
        out.push_back(Primitive::add_edge(inner.exit, block.succ));
        return out;
    }

    // Climb to the node that actually disappears.
    const Node* gone = &target;
    while (gone->id != root.id) {
        const Node* parent = model.parent_of(gone->id);
        if (parent->kind == NodeKind::Loop) {
            gone = parent;
            continue;
        }
        if (parent->kind == NodeKind::Conditional &&
            std::all_of(parent->children.begin(), parent->children.end(),
                        [&](const Node& c) { return c.id == gone->id || c.kind == NodeKind::Skip; })) {
            gone = parent;
            continue;
        }
        break;
    }

    const Segment seg = segment_of(model, g, *gone);
    auto doomed_list = graph_nodes_of(*gone);
    std::set<GraphNodeId> doomed(doomed_list.begin(), doomed_list.end());

    if (gone->id == root.id) {
        remove_nodes(out, g, doomed);
        out.push_back(Primitive::add_edge(kStartId, kEndId));
        return out;
    }

    const Node& parent = *model.parent_of(gone->id);
    switch (parent.kind) {
    case NodeKind::Sequence:
        remove_nodes(out, g, doomed);
        out.push_back(Primitive::add_edge(seg.pred, seg.succ, seg.entry_condition));
        break;
    case NodeKind::Conditional: {
        remove_nodes(out, g, doomed);
        const bool has_skip = std::any_of(parent.children.begin(), parent.children.end(),
                                          [](const Node& c) { return c.kind == NodeKind::Skip; });
        if (!has_skip) out.push_back(Primitive::add_edge(seg.pred, seg.succ, gone->condition));
        break;
    }
    case NodeKind::Parallel: {
        if (parent.children.size() >= 3) {
            remove_nodes(out, g, doomed);
            break;
        }
        const Node& other = parent.children[parent.children[0].id == gone->id ? 1 : 0];
        const Segment block = segment_of(model, g, parent);
        const Segment inner = segment_of(model, g, other);
        doomed.insert(block.entry);
        doomed.insert(block.exit);
        remove_nodes(out, g, doomed);
        out.push_back(Primitive::add_edge(block.pred, inner.entry, block.entry_condition));
        out.push_back(Primitive::add_edge(inner.exit, block.succ));
        break;
    }
    default: break;
    }
    return out;
}

}  // namespace

std::vector<Primitive> expand_to_primitives(const ProcessModel& model, const PatternInstance& p) {
    apply_impl(model, p);  // same preconditions and errors
    const FlatGraph g = to_graph(model);
    std::vector<Primitive> out;
    const NodeId first_new = model.next_id();

    switch (p.kind) {
    case PatternKind::SerialInsert: {
        const Node& anchor = *model.resolve(p.position.node);
        GraphNodeId from, to;
        switch (p.position.kind) {
        case Position::Kind::Gap: {
            const Segment seq = segment_of(model, g, anchor);
            const auto i = p.position.index;
            const auto n = anchor.children.size();
            from = i == 0 ? seq.pred : graph_exit(anchor.children[i - 1]);
            to = i == n ? seq.succ : graph_entry(anchor.children[i]);
            break;
        }
        case Position::Kind::Before: {
            const Segment s = segment_of(model, g, anchor);
            from = s.pred;
            to = s.entry;
            break;
        }
        case Position::Kind::After: {
            const Segment s = segment_of(model, g, anchor);
            from = s.exit;
            to = s.succ;
            break;
        }
        case Position::Kind::Skip: {
            const Node& parent = *model.parent_of(anchor.id);
            from = split_node_id(parent.id);
            to = join_node_id(parent.id);
            break;
        }
        }
        const Condition c = g.edges.at({from, to});
        const auto act = activity_node_id(first_new);
        out.push_back(Primitive::delete_edge(from, to));
        out.push_back(Primitive::add_node({act, GraphNodeKind::Activity, p.label}));
        out.push_back(Primitive::add_edge(from, act, c));
        out.push_back(Primitive::add_edge(act, to));
        break;
    }
    case PatternKind::ParallelInsert: {
        const Node& target = *model.resolve(p.target);
        const Node* parent = model.parent_of(target.id);
        const auto act = activity_node_id(first_new);
        if (parent && parent->kind == NodeKind::Parallel) {
            out.push_back(Primitive::add_node({act, GraphNodeKind::Activity, p.label}));
            out.push_back(Primitive::add_edge(split_node_id(parent->id), act));
            out.push_back(Primitive::add_edge(act, join_node_id(parent->id)));
            break;
        }
        const NodeId block = first_new + 1;
        const Segment s = segment_of(model, g, target);
        wrap_segment(out, s, {split_node_id(block), GraphNodeKind::AndSplit, {}},
                     {join_node_id(block), GraphNodeKind::AndJoin, {}});
        out.push_back(Primitive::add_node({act, GraphNodeKind::Activity, p.label}));
        out.push_back(Primitive::add_edge(split_node_id(block), act));
        out.push_back(Primitive::add_edge(act, join_node_id(block)));
        break;
    }
    case PatternKind::DeleteFragment:
        out = expand_delete(model, g, *model.resolve(p.target));
        break;
    case PatternKind::EmbedInLoop: {
        const Segment s = segment_of(model, g, *model.resolve(p.target));
        const NodeId loop = first_new;
        wrap_segment(out, s, {join_node_id(loop), GraphNodeKind::XorJoin, {}},
                     {split_node_id(loop), GraphNodeKind::XorSplit, {}});
        out.push_back(Primitive::add_edge(split_node_id(loop), join_node_id(loop), p.condition));
        break;
    }
    case PatternKind::EmbedInConditional: {
        const Segment s = segment_of(model, g, *model.resolve(p.target));
        const NodeId block = first_new;
        wrap_segment(out, s, {split_node_id(block), GraphNodeKind::XorSplit, {}},
                     {join_node_id(block), GraphNodeKind::XorJoin, {}});
        out.push_back(Primitive::add_edge(split_node_id(block), join_node_id(block)));
        break;
    }
    case PatternKind::UpdateCondition: {
        const Node& target = *model.resolve(p.target);
        const Node& parent = *model.parent_of(target.id);
        if (parent.kind == NodeKind::Loop) {
            out.push_back(Primitive::update_edge_condition(split_node_id(parent.id), join_node_id(parent.id),
                                                           p.condition));
        } else {
            const GraphNodeId to = target.kind == NodeKind::Skip ? join_node_id(parent.id) : graph_entry(target);
            out.push_back(Primitive::update_edge_condition(split_node_id(parent.id), to, p.condition));
        }
        break;
    }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Construction and inversion

Position position_beside(const ProcessModel& model, NodeId anchor, bool after) {
    const Node* node = model.find(anchor);
    if (!node) throw PatternError(PatternErrorCode::UnknownRef, "no node " + std::to_string(anchor));
    if (node->kind == NodeKind::Sequence) {
        return Position{Position::Kind::Gap, path_of(model, anchor), after ? node->children.size() : 0};
    }
    const Node* parent = model.parent_of(anchor);
    if (parent && parent->kind == NodeKind::Sequence) {
        std::size_t idx = 0;
        while (parent->children[idx].id != anchor) ++idx;
        return Position{Position::Kind::Gap, path_of(model, parent->id), idx + (after ? 1 : 0)};
    }
    return Position{after ? Position::Kind::After : Position::Kind::Before, path_of(model, anchor), 0};
}

namespace {

const std::string& leftmost_label(const Node& n) {
    if (n.kind == NodeKind::Activity) return n.label;
    for (const auto& c : n.children) {
        if (c.kind != NodeKind::Skip) return leftmost_label(c);
    }
    throw PatternError(PatternErrorCode::WouldBreakStructure, "fragment contains no activity");
}

std::size_t index_in_parent(const Node& parent, NodeId id) {
    std::size_t idx = 0;
    while (parent.children[idx].id != id) ++idx;
    return idx;
}

class Builder {
public:
    explicit Builder(ProcessModel start) : cur_(std::move(start)) {}

    void step(const PatternInstance& p) {
        cur_ = apply_pattern(cur_, p);
        path_.push_back(p);
    }

    /// Inserts the seed activity of `fragment` at `at` and grows it.
    void build(const Node& fragment, const Position& at) {
        const NodeId seed = cur_.next_id();
        step(PatternInstance::serial_insert(leftmost_label(fragment), at));
        grow(seed, fragment);
    }

    /// Turns the activity `seed` (labelled like the fragment's leftmost
    /// activity) into a copy of `fragment`, in place.
    void grow(NodeId seed, const Node& fragment) {
        switch (fragment.kind) {
        case NodeKind::Activity:
            return;
        case NodeKind::Skip:
            throw PatternError(PatternErrorCode::WouldBreakStructure, "cannot build an empty branch");
        case NodeKind::Sequence: {
            std::vector<NodeId> seeds{seed};
            for (std::size_t i = 1; i < fragment.children.size(); ++i) {
                const NodeId next = cur_.next_id();
                step(PatternInstance::serial_insert(leftmost_label(fragment.children[i]),
                                                    position_beside(cur_, seeds.back(), true)));
                seeds.push_back(next);
            }
            for (std::size_t i = 0; i < fragment.children.size(); ++i) grow(seeds[i], fragment.children[i]);
            return;
        }
        case NodeKind::Parallel: {
            std::vector<NodeId> seeds{seed};
            for (std::size_t i = 1; i < fragment.children.size(); ++i) {
                const NodeId next = cur_.next_id();
                step(PatternInstance::parallel_insert(leftmost_label(fragment.children[i]), path_of(cur_, seed)));
                seeds.push_back(next);
            }
            for (std::size_t i = 0; i < fragment.children.size(); ++i) grow(seeds[i], fragment.children[i]);
            return;
        }
        case NodeKind::Conditional: {
            if (fragment.children.size() != 2) {
                throw PatternError(PatternErrorCode::WouldBreakStructure,
                                   "only two-branch conditionals can be built from patterns");
            }
            const bool swap = fragment.children[0].kind == NodeKind::Skip;
            const Node& first = fragment.children[swap ? 1 : 0];
            const Node& second = fragment.children[swap ? 0 : 1];
            const NodeId block = embed_grown(seed, first, [&](NodeId root) {
                step(PatternInstance::embed_in_conditional(path_of(cur_, root)));
            });
            if (second.kind != NodeKind::Skip) {
                const NodeId skip = cur_.find(block)->children[1].id;
                const NodeId next = cur_.next_id();
                step(PatternInstance::serial_insert(leftmost_label(second),
                                                    Position{Position::Kind::Skip, path_of(cur_, skip), 0}));
                grow(next, second);
            }
            const Node& built = *cur_.find(block);
            const NodeId first_id = built.children[0].id;
            const NodeId second_id = built.children[1].id;
            if (first.condition) step(PatternInstance::update_condition(path_of(cur_, first_id), first.condition));
            if (second.condition) step(PatternInstance::update_condition(path_of(cur_, second_id), second.condition));
            return;
        }
        case NodeKind::Loop: {
            const Node& body = fragment.children.front();
            embed_grown(seed, body, [&](NodeId root) {
                auto embed = PatternInstance::embed_in_loop(path_of(cur_, root), body.condition);
                if (!check_pattern(cur_, embed)) {
                    step(embed);
                    return;
                }
                step(PatternInstance::embed_in_loop(path_of(cur_, root), std::nullopt));
                step(PatternInstance::update_condition(path_of(cur_, root), body.condition));
            });
            return;
        }
        }
    }

    ProcessModel& current() { return cur_; }
    std::vector<PatternInstance>& path() { return path_; }

private:
    /// Wraps `inner` (grown from `seed`) in a block created by `embed`.
    /// A sequence, or a parallel block under a parallel parent, would not
    /// stay in the seed's slot while growing, so those are wrapped first.
    /// Everything else is grown first, which keeps the embed outside any
    /// loop that could trip the identical-loop guard. Returns the block id.
    template <class Embed>
    NodeId embed_grown(NodeId seed, const Node& inner, Embed embed) {
        const Node* parent = cur_.parent_of(seed);
        if (inner.kind == NodeKind::Sequence ||
            (inner.kind == NodeKind::Parallel && parent->kind == NodeKind::Parallel)) {
            const NodeId block = cur_.next_id();
            embed(seed);
            grow(seed, inner);
            return block;
        }
        const NodeId parent_id = parent->id;
        const std::size_t idx = index_in_parent(*parent, seed);
        grow(seed, inner);
        const NodeId root = cur_.find(parent_id)->children[idx].id;
        const NodeId block = cur_.next_id();
        embed(root);
        return block;
    }

    ProcessModel cur_;
    std::vector<PatternInstance> path_;
};

/// `block` lost a branch and collapsed into `survivor`, a sequence that was
/// then flattened into the enclosing sequence. Takes the survivor's nodes
/// out again and rebuilds the whole block in their place.
void rebuild_block(Builder& b, const ProcessModel& with, const Node& block, const Node& survivor) {
    for (const auto& c : survivor.children) {
        b.step(PatternInstance::delete_fragment(path_of(b.current(), c.id)));
    }
    const Node& outer = *with.parent_of(block.id);
    const std::size_t at = index_in_parent(outer, block.id);
    Position pos;
    if (at > 0) {
        pos = position_beside(b.current(), outer.children[at - 1].id, true);
    } else if (at + 1 < outer.children.size()) {
        pos = position_beside(b.current(), outer.children[at + 1].id, false);
    } else {
        pos = Position{Position::Kind::Gap, path_of(b.current(), outer.id), 0};
    }
    b.build(block, pos);
}

/// Patterns that turn `without` (== `with` minus the subtree `removed`, up to
/// canonical form) back into `with`.
std::vector<PatternInstance> restore_in_place(const ProcessModel& with, NodeId removed, const ProcessModel& without) {
    const Node& root = with.root();
    const Node* gone = with.find(removed);

    if (gone->kind == NodeKind::Skip) {
        const Node& parent = *with.parent_of(removed);
        if (parent.children.size() != 2) {
            throw PatternError(PatternErrorCode::WouldBreakStructure, "cannot re-create an extra empty branch");
        }
        const Node& other = parent.children[index_in_parent(parent, removed) == 0 ? 1 : 0];
        Builder b(without);
        if (!b.current().find(other.id)) {
            rebuild_block(b, with, parent, other);
            return b.path();
        }
        const NodeId block = b.current().next_id();
        b.step(PatternInstance::embed_in_conditional(path_of(b.current(), other.id)));
        const Node& built = *b.current().find(block);
        if (other.condition) {
            b.step(PatternInstance::update_condition(path_of(b.current(), built.children[0].id), other.condition));
        }
        if (gone->condition) {
            const NodeId skip = b.current().find(block)->children[1].id;
            b.step(PatternInstance::update_condition(path_of(b.current(), skip), gone->condition));
        }
        return b.path();
    }

    while (gone->id != root.id) {
        const Node* parent = with.parent_of(gone->id);
        if (parent->kind == NodeKind::Loop ||
            (parent->kind == NodeKind::Conditional &&
             std::all_of(parent->children.begin(), parent->children.end(),
                         [&](const Node& c) { return c.id == gone->id || c.kind == NodeKind::Skip; }))) {
            gone = parent;
            continue;
        }
        break;
    }

    Builder b(without);
    if (gone->id == root.id) {
        b.build(*gone, Position{Position::Kind::Gap, {root.id}, 0});
        return b.path();
    }
    const Node& parent = *with.parent_of(gone->id);
    const std::size_t idx = index_in_parent(parent, gone->id);
    switch (parent.kind) {
    case NodeKind::Sequence:
        if (parent.id != root.id && parent.children.size() == 2) {
            const NodeId other = parent.children[idx == 0 ? 1 : 0].id;
            b.build(*gone, position_beside(b.current(), other, idx != 0));
        } else {
            b.build(*gone, Position{Position::Kind::Gap, path_of(b.current(), parent.id), idx});
        }
        break;
    case NodeKind::Conditional: {
        const Node& now = *b.current().find(parent.id);
        if (now.children.size() != parent.children.size() || now.children[idx].kind != NodeKind::Skip) {
            throw PatternError(PatternErrorCode::WouldBreakStructure, "branch cannot be restored in place");
        }
        b.build(*gone, Position{Position::Kind::Skip, path_of(b.current(), now.children[idx].id), 0});
        break;
    }
    case NodeKind::Parallel: {
        const NodeId other = parent.children[idx == 0 ? 1 : 0].id;
        if (parent.children.size() >= 3 || b.current().find(other)) {
            const NodeId seed = b.current().next_id();
            b.step(PatternInstance::parallel_insert(leftmost_label(*gone), path_of(b.current(), other)));
            b.grow(seed, *gone);
            break;
        }
        rebuild_block(b, with, parent, parent.children[idx == 0 ? 1 : 0]);
        break;
    }
    default:
        throw PatternError(PatternErrorCode::WouldBreakStructure, "unexpected parent while restoring");
    }
    return b.path();
}

/// restore_in_place(), falling back to clearing the model and rebuilding it
/// when the local reconstruction does not apply.
std::vector<PatternInstance> restore(const ProcessModel& with, NodeId removed, const ProcessModel& without) {
    try {
        auto path = restore_in_place(with, removed, without);
        if (canonical_key(apply_sequence(without, path).back()) == canonical_key(with)) return path;
    } catch (const PatternError&) {
    }
    std::vector<PatternInstance> path;
    const Node& root = without.root();
    if (root.children.size() >= 2) {
        path.push_back(PatternInstance::delete_fragment({root.id}));
    } else if (root.children.size() == 1) {
        path.push_back(PatternInstance::delete_fragment({root.id, root.children[0].id}));
    }
    ProcessModel target = with;
    target.normalize();
    if (!target.root().children.empty()) {
        const ProcessModel cleared = apply_sequence(without, path).back();
        auto build = build_fragment(cleared, target.root(), Position{Position::Kind::Gap, {cleared.root().id}, 0});
        path.insert(path.end(), build.begin(), build.end());
    }
    return path;
}

}  // namespace

std::vector<PatternInstance> build_fragment(const ProcessModel& model, const Node& fragment, const Position& at) {
    Builder b(model);
    b.build(fragment, at);
    return b.path();
}

std::vector<PatternInstance> build_from_empty(const ProcessModel& target) {
    ProcessModel normalized = target;
    normalized.normalize();
    if (normalized.root().children.empty()) return {};
    const ProcessModel empty = new_empty();
    return build_fragment(empty, normalized.root(), Position{Position::Kind::Gap, {empty.root().id}, 0});
}

std::vector<PatternInstance> invert(const ProcessModel& before, const PatternInstance& p) {
    const ProcessModel after = apply_impl(before, p);
    const NodeId first_new = before.next_id();
    switch (p.kind) {
    case PatternKind::SerialInsert:
    case PatternKind::ParallelInsert:
        return {PatternInstance::delete_fragment(path_of(after, first_new))};
    case PatternKind::UpdateCondition:
        return {PatternInstance::update_condition(p.target, before.resolve(p.target)->condition)};
    case PatternKind::EmbedInConditional: {
        const Node& block = *after.find(first_new);
        return {PatternInstance::delete_fragment(path_of(after, block.children[1].id))};
    }
    case PatternKind::EmbedInLoop: {
        auto drop = PatternInstance::delete_fragment(path_of(after, first_new));
        const ProcessModel without = apply_impl(after, drop);
        auto rebuild = restore(before, before.resolve(p.target)->id, without);
        rebuild.insert(rebuild.begin(), drop);
        return rebuild;
    }
    case PatternKind::DeleteFragment:
        return restore(before, before.resolve(p.target)->id, after);
    }
    return {};
}

}  // namespace patternbench
