#include "patternbench/model.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <set>
#include <tuple>
#include <unordered_set>

namespace patternbench {

const char* to_string(NodeKind kind) {
    switch (kind) {
    case NodeKind::Activity: return "activity";
    case NodeKind::Skip: return "skip";
    case NodeKind::Sequence: return "sequence";
    case NodeKind::Parallel: return "parallel";
    case NodeKind::Conditional: return "conditional";
    case NodeKind::Loop: return "loop";
    }
    return "?";
}

std::optional<NodeKind> node_kind_from_string(const std::string& text) {
    static const std::map<std::string, NodeKind> kinds = {
        {"activity", NodeKind::Activity}, {"skip", NodeKind::Skip},
        {"sequence", NodeKind::Sequence}, {"parallel", NodeKind::Parallel},
        {"conditional", NodeKind::Conditional}, {"loop", NodeKind::Loop},
    };
    auto it = kinds.find(text);
    if (it == kinds.end()) return std::nullopt;
    return it->second;
}

ProcessModel::ProcessModel() {
    root_.id = 0;
    root_.kind = NodeKind::Sequence;
}

ProcessModel::ProcessModel(Node root, NodeId next_id) : root_(std::move(root)), next_id_(next_id) {
    std::function<void(const Node&)> bump = [&](const Node& n) {
        next_id_ = std::max<NodeId>(next_id_, n.id + 1);
        for (const auto& c : n.children) bump(c);
    };
    bump(root_);
}

ProcessModel new_empty() { return ProcessModel(); }

namespace {

const Node* find_in(const Node& node, NodeId id) {
    if (node.id == id) return &node;
    for (const auto& c : node.children) {
        if (const Node* hit = find_in(c, id)) return hit;
    }
    return nullptr;
}

bool path_in(const Node& node, NodeId id, NodePath& path) {
    path.push_back(node.id);
    if (node.id == id) return true;
    for (const auto& c : node.children) {
        if (path_in(c, id, path)) return true;
    }
    path.pop_back();
    return false;
}

}  // namespace

const Node* ProcessModel::find(NodeId id) const { return find_in(root_, id); }

Node* ProcessModel::find_mutable(NodeId id) { return const_cast<Node*>(find_in(root_, id)); }

const Node* ProcessModel::parent_of(NodeId id) const {
    auto path = path_to(id);
    if (!path || path->size() < 2) return nullptr;
    return find((*path)[path->size() - 2]);
}

std::optional<NodePath> ProcessModel::path_to(NodeId id) const {
    NodePath path;
    if (path_in(root_, id, path)) return path;
    return std::nullopt;
}

const Node* ProcessModel::resolve(const NodePath& path) const {
    if (path.empty() || path.front() != root_.id) return nullptr;
    const Node* cur = &root_;
    for (std::size_t i = 1; i < path.size(); ++i) {
        const Node* next = nullptr;
        for (const auto& c : cur->children) {
            if (c.id == path[i]) {
                next = &c;
                break;
            }
        }
        if (!next) return nullptr;
        cur = next;
    }
    return cur;
}

namespace {

enum class Fate { Keep, Vanish };

bool is_skip(const Node& n) { return n.kind == NodeKind::Skip; }

Fate normalize_node(Node& node, ProcessModel& model, bool is_root) {
    if (node.kind == NodeKind::Activity) return Fate::Keep;
    if (node.kind == NodeKind::Skip) return Fate::Keep;

    std::vector<Node> kept;
    kept.reserve(node.children.size());
    for (auto& child : node.children) {
        if (normalize_node(child, model, false) == Fate::Keep) {
            kept.push_back(std::move(child));
        } else if (node.kind == NodeKind::Conditional) {
            Node skip;
            skip.id = model.allocate_id();
            skip.kind = NodeKind::Skip;
            skip.condition = child.condition;
            kept.push_back(std::move(skip));
        }
    }
    node.children = std::move(kept);

    auto collapse_into_only_child = [&node]() {
        Node only = std::move(node.children.front());
        only.condition = node.condition;
        node = std::move(only);
    };

    switch (node.kind) {
    case NodeKind::Sequence:
    case NodeKind::Parallel: {
        std::vector<Node> flat;
        for (auto& child : node.children) {
            if (is_skip(child)) continue;
            if (child.kind == node.kind) {
                for (auto& grand : child.children) {
                    grand.condition.reset();
                    flat.push_back(std::move(grand));
                }
            } else {
                child.condition.reset();
                flat.push_back(std::move(child));
            }
        }
        node.children = std::move(flat);
        if (is_root) return Fate::Keep;
        if (node.children.empty()) return Fate::Vanish;
        if (node.children.size() == 1) collapse_into_only_child();
        return Fate::Keep;
    }
    case NodeKind::Conditional: {
        if (std::all_of(node.children.begin(), node.children.end(), is_skip)) return Fate::Vanish;
        std::vector<Node> deduped;
        bool have_skip = false;
        for (auto& child : node.children) {
            if (is_skip(child)) {
                if (have_skip) continue;
                have_skip = true;
            }
            deduped.push_back(std::move(child));
        }
        node.children = std::move(deduped);
        if (node.children.size() == 1) collapse_into_only_child();
        return Fate::Keep;
    }
    case NodeKind::Loop:
        if (node.children.empty() || is_skip(node.children.front())) return Fate::Vanish;
        return Fate::Keep;
    default:
        return Fate::Keep;
    }
}

}  // namespace

void ProcessModel::normalize() {
    if (root_.kind != NodeKind::Sequence) {
        Node wrapper;
        wrapper.id = allocate_id();
        wrapper.kind = NodeKind::Sequence;
        root_.condition.reset();
        wrapper.children.push_back(std::move(root_));
        root_ = std::move(wrapper);
    }
    normalize_node(root_, *this, true);
}

void ProcessModel::validate(bool allow_nested_sequences) const {
    std::unordered_set<NodeId> seen;
    std::function<void(const Node&, const Node*)> check = [&](const Node& n, const Node* parent) {
        if (!seen.insert(n.id).second) {
            throw InvariantViolation("duplicate node id " + std::to_string(n.id));
        }
        const std::string where = std::string(to_string(n.kind)) + " node " + std::to_string(n.id);
        const bool conditioned_slot =
            parent && (parent->kind == NodeKind::Conditional || parent->kind == NodeKind::Loop);
        if (n.condition && !conditioned_slot) {
            throw InvariantViolation(where + " carries a condition outside a conditional branch or loop");
        }
        switch (n.kind) {
        case NodeKind::Activity:
            if (n.label.empty()) throw InvariantViolation(where + " has an empty label");
            [[fallthrough]];
        case NodeKind::Skip:
            if (!n.children.empty()) throw InvariantViolation(where + " must not have children");
            if (n.kind == NodeKind::Skip && (!parent || parent->kind != NodeKind::Conditional)) {
                throw InvariantViolation(where + " may only appear as a conditional branch");
            }
            break;
        case NodeKind::Sequence:
            if (parent && n.children.empty()) throw InvariantViolation(where + " is empty");
            if (parent && parent->kind == NodeKind::Sequence && !allow_nested_sequences) {
                throw InvariantViolation(where + " is nested directly in a sequence");
            }
            break;
        case NodeKind::Parallel:
        case NodeKind::Conditional:
            if (n.children.size() < 2) throw InvariantViolation(where + " needs at least two branches");
            break;
        case NodeKind::Loop:
            if (n.children.size() != 1) throw InvariantViolation(where + " needs exactly one body");
            break;
        }
        if (n.kind != NodeKind::Activity && !n.label.empty()) {
            throw InvariantViolation(where + " must not carry a label");
        }
        for (const auto& c : n.children) check(c, &n);
    };
    if (root_.condition) throw InvariantViolation("root carries a condition");
    check(root_, nullptr);
    for (NodeId id : seen) {
        if (id >= next_id_) throw InvariantViolation("node id " + std::to_string(id) + " not below next_id");
    }
}

std::size_t ProcessModel::activity_count() const { return count_structure(root_).activities; }

namespace {

void append_quoted(std::string& out, const std::string& text) {
    out.push_back('"');
    for (char c : text) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    out.push_back('"');
}

std::string condition_prefix(const Condition& c) {
    std::string out = "[";
    if (c) {
        out.push_back('c');
        append_quoted(out, *c);
    } else {
        out.push_back('~');
    }
    out.push_back(']');
    return out;
}

// Sort order for conditional branches: set conditions first, by text, then UNSET.
auto branch_order_key(const Node& n, const std::string& key) {
    return std::make_tuple(n.condition.has_value() ? 0 : 1, n.condition.value_or(std::string()), key);
}

char kind_letter(NodeKind kind) {
    switch (kind) {
    case NodeKind::Activity: return 'A';
    case NodeKind::Skip: return 'K';
    case NodeKind::Sequence: return 'S';
    case NodeKind::Parallel: return 'P';
    case NodeKind::Conditional: return 'X';
    case NodeKind::Loop: return 'L';
    }
    return '?';
}

// Sorts commutative children in place and returns the structural key.
std::string sort_and_key(Node& node) {
    std::string out(1, kind_letter(node.kind));
    if (node.kind == NodeKind::Activity) {
        append_quoted(out, node.label);
        return out;
    }
    if (node.kind == NodeKind::Skip) return out;

    std::vector<std::string> keys;
    keys.reserve(node.children.size());
    for (auto& c : node.children) keys.push_back(sort_and_key(c));

    std::vector<std::size_t> order(node.children.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (node.kind == NodeKind::Parallel) {
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return keys[a] < keys[b]; });
    } else if (node.kind == NodeKind::Conditional) {
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
            return branch_order_key(node.children[a], keys[a]) < branch_order_key(node.children[b], keys[b]);
        });
    }
    std::vector<Node> sorted;
    sorted.reserve(order.size());
    out.push_back('(');
    bool first = true;
    for (auto i : order) {
        if (!first) out.push_back(',');
        first = false;
        if (node.kind == NodeKind::Conditional || node.kind == NodeKind::Loop) {
            out += condition_prefix(node.children[i].condition);
        }
        out += keys[i];
        sorted.push_back(std::move(node.children[i]));
    }
    out.push_back(')');
    node.children = std::move(sorted);
    return out;
}

void renumber(Node& node, NodeId& next, std::unordered_map<NodeId, NodeId>& map) {
    map[node.id] = next;
    node.id = next++;
    for (auto& c : node.children) renumber(c, next, map);
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

CanonicalForm canonicalize(const ProcessModel& model) {
    model.validate(true);
    ProcessModel work = model;
    work.normalize();
    Node root = work.root();
    CanonicalForm form;
    form.key = sort_and_key(root);
    form.digest = fnv1a_hex(form.key);

    std::unordered_map<NodeId, NodeId> renamed;
    NodeId next = 0;
    renumber(root, next, renamed);
    form.normalized = ProcessModel(std::move(root), next);
    // Nodes created by normalization have no counterpart in the input.
    for (const auto& [from, to] : renamed) {
        if (model.find(from)) form.id_map.emplace(from, to);
    }
    return form;
}

std::string canonical_key(const ProcessModel& model) {
    ProcessModel work = model;
    work.normalize();
    Node root = work.root();
    return sort_and_key(root);
}

namespace {

class KeyParser {
public:
    explicit KeyParser(const std::string& text) : text_(text) {}

    Node node() {
        Node n;
        n.id = next_++;
        const char k = take();
        switch (k) {
        case 'A': n.kind = NodeKind::Activity; n.label = quoted(); return n;
        case 'K': n.kind = NodeKind::Skip; return n;
        case 'S': n.kind = NodeKind::Sequence; break;
        case 'P': n.kind = NodeKind::Parallel; break;
        case 'X': n.kind = NodeKind::Conditional; break;
        case 'L': n.kind = NodeKind::Loop; break;
        default: fail();
        }
        expect('(');
        if (peek() == ')') {
            ++pos_;
            return n;
        }
        while (true) {
            Condition c;
            const bool slot = n.kind == NodeKind::Conditional || n.kind == NodeKind::Loop;
            if (slot) {
                expect('[');
                if (peek() == '~') {
                    ++pos_;
                } else {
                    expect('c');
                    c = quoted();
                }
                expect(']');
            }
            Node child = node();
            child.condition = std::move(c);
            n.children.push_back(std::move(child));
            const char sep = take();
            if (sep == ')') break;
            if (sep != ',') fail();
        }
        return n;
    }

    bool done() const { return pos_ == text_.size(); }
    NodeId next() const { return next_; }

private:
    [[noreturn]] void fail() const {
        throw InvariantViolation("malformed canonical key at offset " + std::to_string(pos_));
    }
    char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
    char take() {
        if (pos_ >= text_.size()) fail();
        return text_[pos_++];
    }
    void expect(char c) {
        if (take() != c) fail();
    }
    std::string quoted() {
        expect('"');
        std::string out;
        while (true) {
            char c = take();
            if (c == '"') return out;
            if (c == '\\') c = take();
            out.push_back(c);
        }
    }

    const std::string& text_;
    std::size_t pos_ = 0;
    NodeId next_ = 0;
};

}  // namespace

ProcessModel model_from_canonical_key(const std::string& key) {
    KeyParser parser(key);
    Node root = parser.node();
    if (!parser.done() || root.kind != NodeKind::Sequence) {
        throw InvariantViolation("malformed canonical key");
    }
    return ProcessModel(std::move(root), parser.next());
}

bool canonically_equal(const ProcessModel& a, const ProcessModel& b) {
    return canonical_key(a) == canonical_key(b);
}

std::string structural_key(const Node& node) {
    Node copy = node;
    return sort_and_key(copy);
}

std::vector<std::string> activities(const Node& node) {
    std::vector<std::string> out;
    std::function<void(const Node&)> walk = [&](const Node& n) {
        if (n.kind == NodeKind::Activity) out.push_back(n.label);
        for (const auto& c : n.children) walk(c);
    };
    walk(node);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> activities(const ProcessModel& model) { return activities(model.root()); }

std::vector<std::string> conditions(const ProcessModel& model) {
    std::set<std::string> out;
    std::function<void(const Node&)> walk = [&](const Node& n) {
        if (n.condition) out.insert(*n.condition);
        for (const auto& c : n.children) walk(c);
    };
    walk(model.root());
    return {out.begin(), out.end()};
}

StructureCounts count_structure(const Node& node) {
    StructureCounts counts;
    std::function<void(const Node&)> walk = [&](const Node& n) {
        switch (n.kind) {
        case NodeKind::Activity: ++counts.activities; break;
        case NodeKind::Parallel: ++counts.parallels; break;
        case NodeKind::Conditional:
            ++counts.conditionals;
            for (const auto& c : n.children) {
                if (c.condition) ++counts.branch_conditions;
            }
            break;
        case NodeKind::Loop: ++counts.loops; break;
        default: break;
        }
        for (const auto& c : n.children) walk(c);
    };
    walk(node);
    return counts;
}

bool is_pattern_constructible(const ProcessModel& model) {
    ProcessModel work = model;
    work.normalize();
    std::function<bool(const Node&)> ok = [&](const Node& n) {
        if (n.kind == NodeKind::Conditional) {
            if (n.children.size() != 2) return false;
        }
        return std::all_of(n.children.begin(), n.children.end(), ok);
    };
    return ok(work.root());
}

std::size_t nesting_depth(const ProcessModel& model) {
    std::function<std::size_t(const Node&)> depth = [&](const Node& n) -> std::size_t {
        std::size_t below = 0;
        for (const auto& c : n.children) below = std::max(below, depth(c));
        const bool counts = n.kind == NodeKind::Parallel || n.kind == NodeKind::Conditional ||
                            n.kind == NodeKind::Loop;
        return below + (counts ? 1 : 0);
    };
    return depth(model.root());
}

}  // namespace patternbench
