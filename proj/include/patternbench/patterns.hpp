#pragma once

/**
 * \file patterns.hpp
 *
 * The change-pattern set: Serial/Parallel Insert, Delete Fragment, Embed in
 * Loop, Embed in Conditional and Update Condition. Each pattern is guarded by
 * preconditions and maps a valid block model to a valid block model.
 */

#include "patternbench/graph.hpp"
#include "patternbench/model.hpp"

#include <compare>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace patternbench {

enum class PatternKind { SerialInsert, ParallelInsert, DeleteFragment, EmbedInLoop, EmbedInConditional, UpdateCondition };

const char* to_string(PatternKind kind);
std::optional<PatternKind> pattern_kind_from_string(const std::string& text);

/// Where a Serial Insert places its activity.
///   Gap    - between children of a SEQUENCE (`node` is the sequence, `index` in [0, size]).
///   Before - in front of a node whose parent is not a SEQUENCE (wraps it in one).
///   After  - behind such a node.
///   Skip   - replaces the empty branch `node` of a CONDITIONAL.
struct Position {
    enum class Kind { Gap, Before, After, Skip };
    Kind kind = Kind::Gap;
    NodePath node;
    std::size_t index = 0;

    auto operator<=>(const Position&) const = default;
};

struct PatternInstance {
    PatternKind kind = PatternKind::SerialInsert;
    /// Fragment (Parallel Insert, Delete, Embed*) or branch (Update Condition).
    NodePath target;
    Position position;  // Serial Insert
    std::string label;  // inserts
    Condition condition;  // Embed in Loop, Update Condition

    auto operator<=>(const PatternInstance&) const = default;

    static PatternInstance serial_insert(std::string label, Position at);
    static PatternInstance parallel_insert(std::string label, NodePath target);
    static PatternInstance delete_fragment(NodePath target);
    static PatternInstance embed_in_loop(NodePath target, Condition c);
    static PatternInstance embed_in_conditional(NodePath target);
    static PatternInstance update_condition(NodePath branch, Condition c);
};

std::string describe(const PatternInstance& p);

enum class PatternErrorCode { PreconditionViolated, UnknownRef, WouldBreakStructure };

const char* to_string(PatternErrorCode code);
std::optional<PatternErrorCode> pattern_error_from_string(const std::string& text);

class PatternError : public Error {
public:
    PatternError(PatternErrorCode code, const std::string& detail);
    PatternErrorCode code() const { return code_; }

private:
    PatternErrorCode code_;
};

/// Applies `p`; the input is never modified. New node ids are taken from
/// model.next_id(); an inserted activity always receives the first one.
ProcessModel apply_pattern(const ProcessModel& model, const PatternInstance& p);

/// Returns the error apply_pattern() would raise, without building the result.
std::optional<PatternError> check_pattern(const ProcessModel& model, const PatternInstance& p);

struct Vocabulary {
    /// Labels available to inserts. Empty optional: the model's own labels.
    std::optional<std::set<std::string>> labels;
    /// Condition values offered to Embed in Loop / Update Condition in
    /// addition to UNSET. Empty optional: the model's own conditions.
    std::optional<std::set<std::string>> conditions;
    /// Omit Delete Fragment instances (non-delete reachability).
    bool include_deletes = true;
};

/// Every instance that apply_pattern() accepts under `vocab`, sorted by kind then reference.
std::vector<PatternInstance> applicable_patterns(const ProcessModel& model, const Vocabulary& vocab = {});

/// Primitive edit list that turns to_graph(model) into to_graph(apply_pattern(model, p)).
std::vector<Primitive> expand_to_primitives(const ProcessModel& model, const PatternInstance& p);

/// Instances that, applied to apply_pattern(before, p), restore `before` up to canonical form.
std::vector<PatternInstance> invert(const ProcessModel& before, const PatternInstance& p);

/// Applies a sequence, returning every intermediate model (front() == start).
std::vector<ProcessModel> apply_sequence(const ProcessModel& start, const std::vector<PatternInstance>& path);

/// Pattern sequence that inserts a copy of `fragment` at `at` in `model`.
/// Throws PatternError(WouldBreakStructure) for fragments outside the
/// constructible space (conditionals with other than two branches).
std::vector<PatternInstance> build_fragment(const ProcessModel& model, const Node& fragment, const Position& at);

/// Pattern sequence constructing `target` from the empty model.
std::vector<PatternInstance> build_from_empty(const ProcessModel& target);

/// Position in `model` directly after (or before) the existing node `anchor`.
Position position_beside(const ProcessModel& model, NodeId anchor, bool after);

}  // namespace patternbench
