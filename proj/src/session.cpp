#include "patternbench/session.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace patternbench {

const char* to_string(ActionType type) {
    switch (type) {
    case ActionType::Apply: return "apply";
    case ActionType::Undo: return "undo";
    case ActionType::Rename: return "rename";
    case ActionType::Layout: return "layout";
    }
    return "?";
}

const char* to_string(PhaseKind kind) {
    switch (kind) {
    case PhaseKind::Comprehension: return "COMPREHENSION";
    case PhaseKind::Modeling: return "MODELING";
    case PhaseKind::Reconciliation: return "RECONCILIATION";
    }
    return "?";
}

Action Action::apply(PatternInstance p) {
    Action a;
    a.type = ActionType::Apply;
    a.pattern = std::move(p);
    return a;
}

Action Action::undo() {
    Action a;
    a.type = ActionType::Undo;
    return a;
}

Action Action::rename(NodeId node, std::string label) {
    Action a;
    a.type = ActionType::Rename;
    a.node = node;
    a.label = std::move(label);
    return a;
}

Action Action::layout(json payload) {
    Action a;
    a.type = ActionType::Layout;
    a.payload = std::move(payload);
    return a;
}

Session::Session(SessionLog header) : log_(std::move(header)) { log_.events.clear(); }

std::optional<std::size_t> Session::undo_target() const {
    if (undo_stack_.empty()) return std::nullopt;
    return undo_stack_.back().event;
}

namespace {

std::optional<std::string> rename_in(ProcessModel& model, NodeId id, const std::string& label) {
    Node* node = model.find_mutable(id);
    if (!node) return std::string(to_string(PatternErrorCode::UnknownRef));
    if (node->kind != NodeKind::Activity || label.empty()) {
        return std::string(to_string(PatternErrorCode::PreconditionViolated));
    }
    node->label = label;
    return std::nullopt;
}

}  // namespace

std::optional<std::string> Session::execute(const Action& action, std::size_t index) {
    switch (action.type) {
    case ActionType::Apply:
        try {
            ProcessModel next = apply_pattern(model_, action.pattern);
            undo_stack_.push_back({index, std::move(model_)});
            model_ = std::move(next);
        } catch (const PatternError& e) {
            return std::string(to_string(e.code()));
        }
        return std::nullopt;
    case ActionType::Undo: {
        if (undo_stack_.empty()) return std::string(kNothingToUndo);
        Snapshot snap = std::move(undo_stack_.back());
        undo_stack_.pop_back();
        model_ = std::move(snap.before);
        // Renames are reconciliation, not modeling: keep the ones made
        // after the reverted step where their node still exists.
        for (std::size_t i = snap.event + 1; i < log_.events.size(); ++i) {
            const auto& e = log_.events[i];
            if (e.ok() && e.action.type == ActionType::Rename) rename_in(model_, e.action.node, e.action.label);
        }
        return std::nullopt;
    }
    case ActionType::Rename: return rename_in(model_, action.node, action.label);
    case ActionType::Layout: return std::nullopt;
    }
    return std::nullopt;
}

const SessionEvent& Session::record(const Action& action, std::int64_t t_ms) {
    if (!log_.events.empty() && t_ms < log_.events.back().t_ms) {
        throw Error("event timestamps must be non-decreasing");
    }
    if (t_ms < 0) throw Error("event timestamps must be non-negative");
    SessionEvent event;
    event.seq = log_.events.size();
    event.t_ms = t_ms;
    event.action = action;
    event.error = execute(action, log_.events.size());
    log_.events.push_back(std::move(event));
    return log_.events.back();
}

std::vector<ProcessModel> replay_states(const SessionLog& log) {
    SessionLog header = log;
    header.events.clear();
    Session session(header);
    std::vector<ProcessModel> states{session.model()};
    for (std::size_t i = 0; i < log.events.size(); ++i) {
        const auto& recorded = log.events[i];
        const auto& event = session.record(recorded.action, recorded.t_ms);
        if (event.ok() != recorded.ok()) {
            throw CorruptLog("event " + std::to_string(i) + " was recorded as " +
                             (recorded.ok() ? std::string("ok") : *recorded.error) + " but replays as " +
                             (event.ok() ? std::string("ok") : *event.error));
        }
        states.push_back(session.model());
    }
    return states;
}

ProcessModel replay(const SessionLog& log, std::size_t step) {
    if (step > log.events.size()) throw std::out_of_range("replay step beyond the end of the log");
    SessionLog prefix = log;
    prefix.events.resize(step);
    return replay_states(prefix).back();
}

std::vector<std::optional<std::size_t>> undo_pairs(const SessionLog& log) {
    std::vector<std::optional<std::size_t>> out(log.events.size());
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < log.events.size(); ++i) {
        const auto& e = log.events[i];
        if (!e.ok()) continue;
        if (e.action.type == ActionType::Apply) stack.push_back(i);
        if (e.action.type == ActionType::Undo && !stack.empty()) {
            out[i] = stack.back();
            stack.pop_back();
        }
    }
    return out;
}

std::vector<PhaseSegment> segment_phases(const SessionLog& log, const PhaseConfig& cfg) {
    std::vector<PhaseSegment> out;
    auto push = [&](PhaseKind kind, std::int64_t start, std::int64_t end, std::size_t first, std::size_t last) {
        if (!out.empty() && out.back().kind == kind) {
            out.back().end_ms = end;
            out.back().end_event = last;
            return;
        }
        out.push_back({kind, start, end, first, last});
    };
    std::int64_t prev = 0;
    for (std::size_t i = 0; i < log.events.size(); ++i) {
        const auto& e = log.events[i];
        if (e.t_ms - prev >= cfg.comprehension_gap_ms) push(PhaseKind::Comprehension, prev, e.t_ms, i, i);
        const PhaseKind kind = cfg.reconciliation_actions.count(e.action.type) ? PhaseKind::Reconciliation
                                                                               : PhaseKind::Modeling;
        const std::int64_t start = out.empty() ? 0 : out.back().end_ms;
        push(kind, start, e.t_ms, i, i + 1);
        prev = e.t_ms;
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON lines

namespace {

constexpr const char* kSessionFormat = "patternbench-session";

[[noreturn]] void bad(const std::string& where, const std::string& detail) { throw ParseError(where, detail); }

void only(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) bad(where, "expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return it.key() == a; })) {
            bad(where, "unknown field '" + it.key() + "'");
        }
    }
}

const json& need(const json& obj, const std::string& where, const char* name) {
    auto it = obj.find(name);
    if (it == obj.end()) bad(where, std::string("missing field '") + name + "'");
    return *it;
}

}  // namespace

json action_to_json(const Action& action) {
    json out;
    out["type"] = to_string(action.type);
    switch (action.type) {
    case ActionType::Apply: out["pattern"] = pattern_to_json(action.pattern); break;
    case ActionType::Undo: break;
    case ActionType::Rename:
        out["node"] = action.node;
        out["label"] = action.label;
        break;
    case ActionType::Layout: out["payload"] = action.payload; break;
    }
    return out;
}

Action action_from_json(const json& doc) {
    if (!doc.is_object()) bad("/action", "expected an object");
    const json& type = need(doc, "/action", "type");
    if (!type.is_string()) bad("/action/type", "expected a string");
    const std::string t = type.get<std::string>();
    if (t == "apply") {
        only(doc, "/action", {"type", "pattern"});
        try {
            return Action::apply(pattern_from_json(need(doc, "/action", "pattern")));
        } catch (const ParseError& e) {
            bad("/action/pattern" + (e.location() == "/" ? std::string() : e.location()), e.what());
        }
    }
    if (t == "undo") {
        only(doc, "/action", {"type"});
        return Action::undo();
    }
    if (t == "rename") {
        only(doc, "/action", {"type", "node", "label"});
        const json& node = need(doc, "/action", "node");
        const json& label = need(doc, "/action", "label");
        if (!node.is_number_unsigned()) bad("/action/node", "expected a node id");
        if (!label.is_string()) bad("/action/label", "expected a string");
        return Action::rename(node.get<NodeId>(), label.get<std::string>());
    }
    if (t == "layout") {
        only(doc, "/action", {"type", "payload"});
        return Action::layout(doc.contains("payload") ? doc["payload"] : json(nullptr));
    }
    bad("/action/type", "unknown action type '" + t + "'");
}

json event_to_json(const SessionEvent& event) {
    json out;
    out["seq"] = event.seq;
    out["t_ms"] = event.t_ms;
    out["action"] = action_to_json(event.action);
    if (event.ok()) {
        out["outcome"] = "ok";
    } else {
        out["outcome"] = {{"error", *event.error}};
    }
    return out;
}

SessionEvent event_from_json(const json& doc) {
    only(doc, "", {"seq", "t_ms", "action", "outcome"});
    SessionEvent e;
    const json& seq = need(doc, "", "seq");
    const json& t = need(doc, "", "t_ms");
    if (!seq.is_number_unsigned()) bad("/seq", "expected a non-negative integer");
    if (!t.is_number_integer() || t.get<std::int64_t>() < 0) bad("/t_ms", "expected a non-negative integer");
    e.seq = seq.get<std::uint64_t>();
    e.t_ms = t.get<std::int64_t>();
    e.action = action_from_json(need(doc, "", "action"));
    const json& outcome = need(doc, "", "outcome");
    if (outcome.is_string() && outcome.get<std::string>() == "ok") {
        e.error.reset();
    } else if (outcome.is_object() && outcome.size() == 1 && outcome.contains("error") && outcome["error"].is_string()) {
        e.error = outcome["error"].get<std::string>();
    } else {
        bad("/outcome", "expected \"ok\" or {\"error\": code}");
    }
    return e;
}

json header_to_json(const SessionLog& log) {
    json out;
    out["format"] = kSessionFormat;
    out["version"] = 1;
    out["session_id"] = log.session_id;
    out["task_id"] = log.task_id;
    out["alphabet"] = json(std::vector<std::string>(log.alphabet.begin(), log.alphabet.end()));
    return out;
}

std::string log_to_jsonl(const SessionLog& log) {
    std::string out = header_to_json(log).dump() + "\n";
    for (const auto& e : log.events) out += event_to_json(e).dump() + "\n";
    return out;
}

SessionLog log_from_jsonl(const std::string& text) {
    SessionLog log;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const std::string where = "line " + std::to_string(line_no);
        json doc;
        try {
            doc = parse_json(line);
        } catch (const ParseError& e) {
            bad(where + ":" + e.location().substr(e.location().find(':') + 1), "malformed JSON");
        }
        try {
            if (!have_header) {
                only(doc, "", {"format", "version", "session_id", "task_id", "alphabet"});
                const json& format = need(doc, "", "format");
                if (!format.is_string() || format.get<std::string>() != kSessionFormat) {
                    bad("/format", std::string("expected \"") + kSessionFormat + "\"");
                }
                const json& version = need(doc, "", "version");
                if (!version.is_number_integer() || version.get<int>() != 1) bad("/version", "unsupported version");
                const json& sid = need(doc, "", "session_id");
                const json& tid = need(doc, "", "task_id");
                if (!sid.is_string()) bad("/session_id", "expected a string");
                if (!tid.is_string()) bad("/task_id", "expected a string");
                log.session_id = sid.get<std::string>();
                log.task_id = tid.get<std::string>();
                const json& alphabet = need(doc, "", "alphabet");
                if (!alphabet.is_array()) bad("/alphabet", "expected an array of labels");
                for (const auto& l : alphabet) {
                    if (!l.is_string() || l.get<std::string>().empty()) bad("/alphabet", "labels must be non-empty strings");
                    log.alphabet.insert(l.get<std::string>());
                }
                have_header = true;
                continue;
            }
            SessionEvent e = event_from_json(doc);
            if (e.seq != log.events.size()) bad("/seq", "expected " + std::to_string(log.events.size()));
            if (!log.events.empty() && e.t_ms < log.events.back().t_ms) bad("/t_ms", "timestamps must not decrease");
            log.events.push_back(std::move(e));
        } catch (const ParseError& e) {
            const std::string loc = e.location() == "/" ? "" : ": " + e.location();
            const std::string what = e.what();
            const std::string detail = what.substr(what.find(": ") == std::string::npos ? 0 : what.find(": ") + 2);
            throw ParseError(where + loc, detail);
        }
    }
    if (!have_header) bad("line 1", "missing session header");
    return log;
}

}  // namespace patternbench
