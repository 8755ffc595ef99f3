#pragma once

// Hand-built sessions and models shared by the unit and acceptance suites.

#include "patternbench/session.hpp"
#include "support/support.hpp"

namespace pbtest {

inline ProcessModel r4_model() { return make_model(X({when(A("X"), "c"), A("Y")})); }

inline NodePath path_of_kind(const ProcessModel& m, NodeKind kind) {
    std::optional<NodeId> hit;
    std::function<void(const Node&)> walk = [&](const Node& n) {
        if (!hit && n.kind == kind) hit = n.id;
        for (const auto& c : n.children) walk(c);
    };
    walk(m.root());
    return *m.path_to(*hit);
}

inline PatternInstance insert_gap(const ProcessModel& m, const std::string& label, std::size_t index) {
    return PatternInstance::serial_insert(label, {Position::Kind::Gap, {m.root().id}, index});
}

/// The cited optimal route to R4: insert X, embed it in a conditional,
/// insert Y into the empty branch, set X's condition.
inline Session r4_optimal_session(std::int64_t t0 = 0) {
    Session s(SessionLog{"r4-optimal", "R4", {"X", "Y"}, {}});
    s.record(Action::apply(insert_gap(s.model(), "X", 0)), t0 + 1000);
    s.record(Action::apply(PatternInstance::embed_in_conditional(path_of_label(s.model(), "X"))), t0 + 2000);
    s.record(Action::apply(PatternInstance::serial_insert("Y", {Position::Kind::Skip, path_of_kind(s.model(), NodeKind::Skip), 0})),
             t0 + 3000);
    s.record(Action::apply(PatternInstance::update_condition(path_of_label(s.model(), "X"), "c")), t0 + 4000);
    return s;
}

/// Six operations reaching R4 with two superfluous ones: Y is inserted a
/// second time after the conditional and deleted again.
inline Session detour_session() {
    Session s(SessionLog{"detour", "R4", {"X", "Y"}, {}});
    s.record(Action::apply(insert_gap(s.model(), "X", 0)), 1000);
    s.record(Action::apply(PatternInstance::embed_in_conditional(path_of_label(s.model(), "X"))), 2000);
    s.record(Action::apply(PatternInstance::serial_insert("Y", {Position::Kind::Skip, path_of_kind(s.model(), NodeKind::Skip), 0})),
             3000);
    s.record(Action::apply(insert_gap(s.model(), "Y", 1)), 4000);
    const Node& extra = s.model().root().children.at(1);
    s.record(Action::apply(PatternInstance::delete_fragment({s.model().root().id, extra.id})), 5000);
    s.record(Action::apply(PatternInstance::update_condition(path_of_label(s.model(), "X"), "c")), 6000);
    return s;
}

/// Ten activities, nesting depth two: sequences, one parallel block and a
/// nested conditional, in the shape of an order-handling process.
inline ProcessModel task_a_model() {
    return make_model(S({
        A("receive order"),
        A("check stock"),
        P({
            S({A("pick items"), A("pack items")}),
            S({A("issue invoice"), X({when(A("send reminder"), "unpaid"), K()})}),
        }),
        X({when(A("express shipping"), "priority"), A("standard shipping")}),
        A("archive order"),
        A("confirm delivery"),
    }));
}

}  // namespace pbtest
