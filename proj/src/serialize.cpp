#include "patternbench/serialize.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace patternbench {

namespace {

constexpr const char* kModelFormat = "patternbench-model";
constexpr const char* kRegionsFormat = "patternbench-regions";

[[noreturn]] void schema(const std::string& where, const std::string& detail) {
    throw ParseError(where.empty() ? "/" : where, detail);
}

void only_fields(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) schema(where, "expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return it.key() == a; })) {
            schema(where, "unknown field '" + it.key() + "'");
        }
    }
}

const json& field(const json& obj, const std::string& where, const char* name) {
    auto it = obj.find(name);
    if (it == obj.end()) schema(where, std::string("missing field '") + name + "'");
    return *it;
}

std::string string_field(const json& obj, const std::string& where, const char* name) {
    const json& v = field(obj, where, name);
    if (!v.is_string()) schema(where + "/" + name, "expected a string");
    return v.get<std::string>();
}

Condition condition_field(const json& obj, const std::string& where, const char* name) {
    auto it = obj.find(name);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) schema(where + "/" + name, "expected a string or null");
    return it->get<std::string>();
}

void check_header(const json& doc, const char* format) {
    if (!doc.is_object()) schema("", "expected an object");
    if (string_field(doc, "", "format") != format) schema("/format", std::string("expected \"") + format + "\"");
    const json& version = field(doc, "", "version");
    if (!version.is_number_integer() || version.get<long long>() != 1) schema("/version", "unsupported version");
}

json node_to_json(const Node& n) {
    json out;
    out["id"] = n.id;
    out["kind"] = to_string(n.kind);
    if (n.kind == NodeKind::Activity) out["label"] = n.label;
    if (n.condition) out["condition"] = *n.condition;
    json children = json::array();
    for (const auto& c : n.children) children.push_back(node_to_json(c));
    out["children"] = std::move(children);
    return out;
}

Node node_from_json(const json& doc, const std::string& where) {
    only_fields(doc, where, {"id", "kind", "label", "condition", "children"});
    Node n;
    const json& id = field(doc, where, "id");
    if (!id.is_number_unsigned() || id.get<unsigned long long>() > 0xffffffffull) {
        schema(where + "/id", "expected a non-negative integer");
    }
    n.id = id.get<NodeId>();
    auto kind = node_kind_from_string(string_field(doc, where, "kind"));
    if (!kind) schema(where + "/kind", "unknown node kind");
    n.kind = *kind;
    if (doc.contains("label")) n.label = string_field(doc, where, "label");
    n.condition = condition_field(doc, where, "condition");
    if (doc.contains("children")) {
        const json& children = doc["children"];
        if (!children.is_array()) schema(where + "/children", "expected an array");
        for (std::size_t i = 0; i < children.size(); ++i) {
            n.children.push_back(node_from_json(children[i], where + "/children/" + std::to_string(i)));
        }
    }
    return n;
}

NodeId max_id(const Node& n) {
    NodeId m = n.id;
    for (const auto& c : n.children) m = std::max(m, max_id(c));
    return m;
}

}  // namespace

json parse_json(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, column = 1;
        const std::size_t upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        for (std::size_t i = 0; i < upto; ++i) {
            if (text[i] == '\n') {
                ++line;
                column = 1;
            } else {
                ++column;
            }
        }
        throw ParseError(std::to_string(line) + ":" + std::to_string(column), "malformed JSON");
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, "cannot read file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

json model_to_json(const ProcessModel& model) {
    json out;
    out["format"] = kModelFormat;
    out["version"] = 1;
    out["root"] = node_to_json(model.root());
    return out;
}

ProcessModel model_from_json(const json& doc) {
    only_fields(doc, "", {"format", "version", "root"});
    check_header(doc, kModelFormat);
    Node root = node_from_json(field(doc, "", "root"), "/root");
    NodeId next = max_id(root) + 1;
    if (root.kind != NodeKind::Sequence) {
        if (root.condition) throw InvariantViolation("root carries a condition");
        Node seq;
        seq.id = next++;
        seq.kind = NodeKind::Sequence;
        seq.children.push_back(std::move(root));
        root = std::move(seq);
    }
    ProcessModel model(std::move(root), next);
    model.validate(true);
    model.normalize();
    return model;
}

std::string serialize(const ProcessModel& model) { return model_to_json(model).dump(2) + "\n"; }

ProcessModel deserialize(const std::string& text) { return model_from_json(parse_json(text)); }

json path_to_json(const NodePath& path) {
    json out = json::array();
    for (auto id : path) out.push_back(id);
    return out;
}

NodePath path_from_json(const json& doc, const std::string& where) {
    if (!doc.is_array()) schema(where, "expected an array of node ids");
    NodePath path;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        if (!doc[i].is_number_unsigned()) schema(where + "/" + std::to_string(i), "expected a node id");
        path.push_back(doc[i].get<NodeId>());
    }
    return path;
}

json pattern_to_json(const PatternInstance& p) {
    json params;
    switch (p.kind) {
    case PatternKind::SerialInsert: {
        params["label"] = p.label;
        json pos;
        switch (p.position.kind) {
        case Position::Kind::Gap:
            pos["gap"] = {{"sequence", path_to_json(p.position.node)}, {"index", p.position.index}};
            break;
        case Position::Kind::Before: pos["before"] = path_to_json(p.position.node); break;
        case Position::Kind::After: pos["after"] = path_to_json(p.position.node); break;
        case Position::Kind::Skip: pos["skip"] = path_to_json(p.position.node); break;
        }
        params["position"] = std::move(pos);
        break;
    }
    case PatternKind::ParallelInsert:
        params["label"] = p.label;
        params["target"] = path_to_json(p.target);
        break;
    case PatternKind::DeleteFragment:
    case PatternKind::EmbedInConditional:
        params["target"] = path_to_json(p.target);
        break;
    case PatternKind::EmbedInLoop:
        params["target"] = path_to_json(p.target);
        params["condition"] = p.condition ? json(*p.condition) : json(nullptr);
        break;
    case PatternKind::UpdateCondition:
        params["branch"] = path_to_json(p.target);
        params["condition"] = p.condition ? json(*p.condition) : json(nullptr);
        break;
    }
    json out;
    out["kind"] = to_string(p.kind);
    out["params"] = std::move(params);
    return out;
}

PatternInstance pattern_from_json(const json& doc) {
    only_fields(doc, "", {"kind", "params"});
    auto kind = pattern_kind_from_string(string_field(doc, "", "kind"));
    if (!kind) schema("/kind", "unknown pattern kind");
    const json& params = field(doc, "", "params");
    const std::string where = "/params";
    PatternInstance p;
    p.kind = *kind;
    switch (*kind) {
    case PatternKind::SerialInsert: {
        only_fields(params, where, {"label", "position"});
        p.label = string_field(params, where, "label");
        const json& pos = field(params, where, "position");
        only_fields(pos, where + "/position", {"gap", "before", "after", "skip"});
        if (pos.size() != 1) schema(where + "/position", "expected exactly one of gap, before, after, skip");
        const std::string key = pos.begin().key();
        const std::string pw = where + "/position/" + key;
        if (key == "gap") {
            const json& gap = pos["gap"];
            only_fields(gap, pw, {"sequence", "index"});
            p.position.kind = Position::Kind::Gap;
            p.position.node = path_from_json(field(gap, pw, "sequence"), pw + "/sequence");
            const json& index = field(gap, pw, "index");
            if (!index.is_number_unsigned()) schema(pw + "/index", "expected a non-negative integer");
            p.position.index = index.get<std::size_t>();
        } else {
            p.position.kind = key == "before" ? Position::Kind::Before
                              : key == "after" ? Position::Kind::After
                                               : Position::Kind::Skip;
            p.position.node = path_from_json(pos[key], pw);
        }
        break;
    }
    case PatternKind::ParallelInsert:
        only_fields(params, where, {"label", "target"});
        p.label = string_field(params, where, "label");
        p.target = path_from_json(field(params, where, "target"), where + "/target");
        break;
    case PatternKind::DeleteFragment:
    case PatternKind::EmbedInConditional:
        only_fields(params, where, {"target"});
        p.target = path_from_json(field(params, where, "target"), where + "/target");
        break;
    case PatternKind::EmbedInLoop:
        only_fields(params, where, {"target", "condition"});
        p.target = path_from_json(field(params, where, "target"), where + "/target");
        p.condition = condition_field(params, where, "condition");
        break;
    case PatternKind::UpdateCondition:
        only_fields(params, where, {"branch", "condition"});
        p.target = path_from_json(field(params, where, "branch"), where + "/branch");
        p.condition = condition_field(params, where, "condition");
        break;
    }
    return p;
}

json graph_to_json(const FlatGraph& graph) {
    json nodes = json::array();
    for (const auto& [id, n] : graph.nodes) {
        json node;
        node["id"] = id;
        node["kind"] = to_string(n.kind);
        if (n.kind == GraphNodeKind::Activity) node["label"] = n.label;
        nodes.push_back(std::move(node));
    }
    json edges = json::array();
    for (const auto& [key, cond] : graph.edges) {
        json edge;
        edge["from"] = key.first;
        edge["to"] = key.second;
        edge["condition"] = cond ? json(*cond) : json(nullptr);
        edges.push_back(std::move(edge));
    }
    json out;
    out["nodes"] = std::move(nodes);
    out["edges"] = std::move(edges);
    return out;
}

json primitive_to_json(const Primitive& p) {
    json out;
    out["op"] = to_string(p.op);
    switch (p.op) {
    case PrimitiveOp::AddNode:
        out["node"] = {{"id", p.node.id}, {"kind", to_string(p.node.kind)}, {"label", p.node.label}};
        break;
    case PrimitiveOp::DeleteNode: out["node"] = {{"id", p.node.id}}; break;
    case PrimitiveOp::AddEdge:
    case PrimitiveOp::UpdateEdgeCondition:
        out["edge"] = {{"from", p.edge.first}, {"to", p.edge.second}};
        out["condition"] = p.condition ? json(*p.condition) : json(nullptr);
        break;
    case PrimitiveOp::DeleteEdge: out["edge"] = {{"from", p.edge.first}, {"to", p.edge.second}}; break;
    }
    return out;
}

json report_to_json(const SoundnessReport& report) {
    auto findings = [](const std::vector<Finding>& list) {
        json out = json::array();
        for (const auto& f : list) out.push_back({{"code", f.code}, {"refs", f.refs}, {"message", f.message}});
        return out;
    };
    json out;
    out["sound"] = report.sound;
    out["violations"] = findings(report.violations);
    out["warnings"] = findings(report.warnings);
    return out;
}

json regions_to_json(const RegionMap& regions) {
    json map = json::object();
    for (const auto& [id, path] : regions) map[id] = path_to_json(path);
    json out;
    out["format"] = kRegionsFormat;
    out["version"] = 1;
    out["regions"] = std::move(map);
    return out;
}

RegionMap regions_from_json(const json& doc) {
    only_fields(doc, "", {"format", "version", "regions"});
    check_header(doc, kRegionsFormat);
    const json& map = field(doc, "", "regions");
    if (!map.is_object()) schema("/regions", "expected an object");
    RegionMap out;
    for (auto it = map.begin(); it != map.end(); ++it) {
        if (it.key().empty()) schema("/regions", "empty region id");
        out[it.key()] = path_from_json(it.value(), "/regions/" + it.key());
    }
    return out;
}

}  // namespace patternbench
