#pragma once

/**
 * \file graph.hpp
 *
 * Flat control-flow graph view of a process model and the change primitives
 * that edit it. Primitives carry no soundness guarantee; check_soundness()
 * decides block structuredness by repeated reduction of recognised blocks.
 */

#include "patternbench/model.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace patternbench {

enum class GraphNodeKind { Activity, Start, End, AndSplit, AndJoin, XorSplit, XorJoin };

const char* to_string(GraphNodeKind kind);
std::optional<GraphNodeKind> graph_node_kind_from_string(const std::string& text);

using GraphNodeId = std::string;

struct GraphNode {
    GraphNodeId id;
    GraphNodeKind kind = GraphNodeKind::Activity;
    std::string label;
    bool operator==(const GraphNode&) const = default;
};

using EdgeKey = std::pair<GraphNodeId, GraphNodeId>;

/// Directed graph with at most one edge per ordered node pair.
struct FlatGraph {
    std::map<GraphNodeId, GraphNode> nodes;
    std::map<EdgeKey, Condition> edges;

    bool operator==(const FlatGraph&) const = default;
};

/// Graph ids derived from tree ids. A LOOP's entry is its xor-join and its
/// exit is its xor-split.
GraphNodeId activity_node_id(NodeId id);
GraphNodeId split_node_id(NodeId id);
GraphNodeId join_node_id(NodeId id);
inline const GraphNodeId kStartId = "start";
inline const GraphNodeId kEndId = "end";

FlatGraph to_graph(const ProcessModel& model);

/// First and last graph node a (non-SKIP) subtree lowers to.
GraphNodeId graph_entry(const Node& node);
GraphNodeId graph_exit(const Node& node);
/// Every graph node the subtree lowers to.
std::vector<GraphNodeId> graph_nodes_of(const Node& node);

enum class PrimitiveOp { AddNode, DeleteNode, AddEdge, DeleteEdge, UpdateEdgeCondition };

const char* to_string(PrimitiveOp op);

struct Primitive {
    PrimitiveOp op = PrimitiveOp::AddNode;
    GraphNode node;       // AddNode; DeleteNode uses node.id
    EdgeKey edge;         // edge ops
    Condition condition;  // AddEdge, UpdateEdgeCondition

    static Primitive add_node(GraphNode n);
    static Primitive delete_node(GraphNodeId id);
    static Primitive add_edge(GraphNodeId from, GraphNodeId to, Condition c = std::nullopt);
    static Primitive delete_edge(GraphNodeId from, GraphNodeId to);
    static Primitive update_edge_condition(GraphNodeId from, GraphNodeId to, Condition c);

    bool operator==(const Primitive&) const = default;
};

std::string describe(const Primitive& p);

class UnknownNode : public Error {
public:
    using Error::Error;
};
class UnknownEdge : public Error {
public:
    using Error::Error;
};
class DuplicateId : public Error {
public:
    using Error::Error;
};
class NotBlockStructured : public Error {
public:
    using Error::Error;
};

/// Applies one primitive. DeleteNode also removes the node's incident edges.
FlatGraph apply_primitive(FlatGraph graph, const Primitive& p);

struct Finding {
    std::string code;
    std::vector<std::string> refs;
    std::string message;
};

struct SoundnessReport {
    bool sound = true;
    std::vector<Finding> violations;
    /// Non-fatal findings, e.g. UNSET_CONDITION on an xor-split edge.
    std::vector<Finding> warnings;
};

SoundnessReport check_soundness(const FlatGraph& graph);

/// Inverse lowering. Throws NotBlockStructured unless the graph is sound.
ProcessModel from_graph(const FlatGraph& graph);

}  // namespace patternbench
