#pragma once

/**
 * \file model.hpp
 *
 * Block-structured process models. The tree is the source of truth; the
 * flat graph view (graph.hpp) is derived from it.
 */

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace patternbench {

using NodeId = std::uint32_t;

/// Branch or loop condition. std::nullopt is the UNSET sentinel.
using Condition = std::optional<std::string>;

enum class NodeKind { Activity, Skip, Sequence, Parallel, Conditional, Loop };

const char* to_string(NodeKind kind);
std::optional<NodeKind> node_kind_from_string(const std::string& text);

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvariantViolation : public Error {
public:
    using Error::Error;
};

/// A node of the block tree.
///
/// `condition` annotates the edge that enters this node from its parent's
/// split: it is the branch condition when the parent is a CONDITIONAL and
/// the loop (repeat) condition when the parent is a LOOP. It must be UNSET
/// everywhere else.
struct Node {
    NodeId id = 0;
    NodeKind kind = NodeKind::Sequence;
    std::string label;
    Condition condition;
    std::vector<Node> children;

    bool is_block() const { return kind != NodeKind::Activity && kind != NodeKind::Skip; }
    bool operator==(const Node&) const = default;
};

/// Path of node ids from the root down to (and including) a node.
using NodePath = std::vector<NodeId>;

class ProcessModel {
public:
    ProcessModel();
    ProcessModel(Node root, NodeId next_id);

    const Node& root() const { return root_; }
    NodeId next_id() const { return next_id_; }

    const Node* find(NodeId id) const;
    Node* find_mutable(NodeId id);
    /// Parent of `id`, or nullptr for the root / unknown ids.
    const Node* parent_of(NodeId id) const;
    std::optional<NodePath> path_to(NodeId id) const;
    /// Resolves a path; returns nullptr unless every id matches the ancestor chain.
    const Node* resolve(const NodePath& path) const;

    NodeId allocate_id() { return next_id_++; }
    Node& mutable_root() { return root_; }

    /// Re-establishes the structural invariants after an edit
    /// (flattening, collapsing, SKIP placement).
    void normalize();
    /// Throws InvariantViolation when the tree breaks a structural rule.
    /// `allow_nested_sequences` accepts sequences directly inside
    /// sequences, which normalize() flattens.
    void validate(bool allow_nested_sequences = false) const;

    std::size_t activity_count() const;

private:
    Node root_;
    NodeId next_id_ = 1;
};

ProcessModel new_empty();

/// Normal form of a model plus its stable digest. `key` is the exact
/// structural encoding; `digest` is a 64-bit hash of it rendered in hex.
struct CanonicalForm {
    std::string key;
    std::string digest;
    ProcessModel normalized;
    /// original node id -> id in `normalized`
    std::unordered_map<NodeId, NodeId> id_map;
};

CanonicalForm canonicalize(const ProcessModel& model);
std::string canonical_key(const ProcessModel& model);
bool canonically_equal(const ProcessModel& a, const ProcessModel& b);
/// Rebuilds the canonical representative (ids in preorder from 0) from a
/// canonical key. Throws InvariantViolation on malformed keys.
ProcessModel model_from_canonical_key(const std::string& key);

/// Structural key of a subtree (children of PARALLEL/CONDITIONAL sorted).
std::string structural_key(const Node& node);

/// Sorted multiset of activity labels.
std::vector<std::string> activities(const ProcessModel& model);
std::vector<std::string> activities(const Node& node);

/// Conditions that are set anywhere in the model (sorted, unique).
std::vector<std::string> conditions(const ProcessModel& model);

struct StructureCounts {
    std::size_t activities = 0;
    std::size_t parallels = 0;
    std::size_t conditionals = 0;
    std::size_t loops = 0;
    /// Set conditions on CONDITIONAL branches.
    std::size_t branch_conditions = 0;
};

StructureCounts count_structure(const Node& node);

/// True when the model lies in the space the pattern set can construct
/// from the empty model (every CONDITIONAL has exactly two branches).
bool is_pattern_constructible(const ProcessModel& model);

/// Depth of block nesting (activities directly under the root have depth 0).
std::size_t nesting_depth(const ProcessModel& model);

}  // namespace patternbench
