#pragma once

/**
 * \file session.hpp
 *
 * Modeling sessions: timestamped pattern events, replay, undo and phase
 * segmentation. Logs are stored as JSON lines.
 */

#include "patternbench/model.hpp"
#include "patternbench/patterns.hpp"
#include "patternbench/serialize.hpp"

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace patternbench {

enum class ActionType { Apply, Undo, Rename, Layout };

const char* to_string(ActionType type);

struct Action {
    ActionType type = ActionType::Apply;
    PatternInstance pattern;  // Apply
    NodeId node = 0;          // Rename
    std::string label;        // Rename
    json payload;             // Layout, opaque

    static Action apply(PatternInstance p);
    static Action undo();
    static Action rename(NodeId node, std::string label);
    static Action layout(json payload);
};

inline constexpr const char* kNothingToUndo = "NOTHING_TO_UNDO";

struct SessionEvent {
    std::uint64_t seq = 0;
    std::int64_t t_ms = 0;
    Action action;
    /// Error code; empty optional means the event succeeded.
    std::optional<std::string> error;

    bool ok() const { return !error; }
};

struct SessionLog {
    std::string session_id;
    std::string task_id;
    std::set<std::string> alphabet;
    std::vector<SessionEvent> events;
};

/// An event marked OK fails on replay, or an event marked failed succeeds.
class CorruptLog : public Error {
public:
    using Error::Error;
};

/// A live session: the log plus the model it replays to.
class Session {
public:
    Session() = default;
    explicit Session(SessionLog header);

    /// Executes `action` against the current model and appends the event.
    /// Failures are captured in the event's outcome.
    const SessionEvent& record(const Action& action, std::int64_t t_ms);

    const SessionLog& log() const { return log_; }
    const ProcessModel& model() const { return model_; }

    /// Index of the APPLY event the next UNDO would revert.
    std::optional<std::size_t> undo_target() const;

private:
    friend std::vector<ProcessModel> replay_states(const SessionLog& log);

    /// Runs an action; returns the error code on failure.
    std::optional<std::string> execute(const Action& action, std::size_t index);

    struct Snapshot {
        std::size_t event;
        ProcessModel before;
    };

    SessionLog log_;
    ProcessModel model_;
    std::vector<Snapshot> undo_stack_;
};

/// Model after the first `step` events. Throws CorruptLog when recorded
/// outcomes do not reproduce, std::out_of_range when step > |events|.
ProcessModel replay(const SessionLog& log, std::size_t step);

/// Models after 0..|events| events (front() is the empty model).
std::vector<ProcessModel> replay_states(const SessionLog& log);

/// For each event: index of the APPLY it reverted (UNDO events only).
std::vector<std::optional<std::size_t>> undo_pairs(const SessionLog& log);

enum class PhaseKind { Comprehension, Modeling, Reconciliation };

const char* to_string(PhaseKind kind);

struct PhaseSegment {
    PhaseKind kind = PhaseKind::Modeling;
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;
    /// Half-open event index range; empty for comprehension gaps.
    std::size_t first_event = 0;
    std::size_t end_event = 0;
};

struct PhaseConfig {
    std::int64_t comprehension_gap_ms = 10000;
    std::set<ActionType> reconciliation_actions{ActionType::Rename, ActionType::Layout};
};

std::vector<PhaseSegment> segment_phases(const SessionLog& log, const PhaseConfig& cfg = {});

json action_to_json(const Action& action);
Action action_from_json(const json& doc);
json event_to_json(const SessionEvent& event);
SessionEvent event_from_json(const json& doc);
json header_to_json(const SessionLog& log);

std::string log_to_jsonl(const SessionLog& log);
/// Throws ParseError with location "line N[: pointer]".
SessionLog log_from_jsonl(const std::string& text);

}  // namespace patternbench
