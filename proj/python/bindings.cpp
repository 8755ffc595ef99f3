// Thin JSON-in/JSON-out bindings; the Python package converts to dicts.

#include "patternbench/analysis.hpp"
#include "patternbench/service.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace patternbench;

namespace {

ProcessModel model_arg(const std::string& text) { return model_from_json(parse_json(text)); }

std::set<std::string> to_set(const std::optional<std::vector<std::string>>& v) {
    return v ? std::set<std::string>(v->begin(), v->end()) : std::set<std::string>{};
}

SearchOptions search_options(std::size_t enumerate_limit, std::optional<std::size_t> state_budget) {
    SearchOptions opts;
    opts.enumerate_limit = enumerate_limit;
    opts.state_budget = state_budget ? *state_budget : state_budget_from_env();
    return opts;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "patternbench engine";
    m.attr("__version__") = kVersion;

    static py::exception<Error> error(m, "PatternbenchError");
    static py::exception<ParseError> parse_error(m, "ParseError", error.ptr());
    static py::exception<InvariantViolation> invariant(m, "InvariantViolation", error.ptr());
    static py::exception<PatternError> pattern_error(m, "PatternError", error.ptr());
    static py::exception<BudgetExceeded> budget(m, "BudgetExceeded", error.ptr());
    static py::exception<Unreachable> unreachable(m, "Unreachable", error.ptr());
    static py::exception<CorruptLog> corrupt(m, "CorruptLog", error.ptr());

    py::register_exception_translator([](std::exception_ptr p) {
        auto raise = [](const py::object& type, const char* what, std::initializer_list<std::pair<const char*, py::object>> attrs) {
            py::object exc = type(what);
            for (const auto& [name, value] : attrs) exc.attr(name) = value;
            PyErr_SetObject(type.ptr(), exc.ptr());
        };
        try {
            if (p) std::rethrow_exception(p);
        } catch (const BudgetExceeded& e) {
            raise(budget, e.what(),
                  {{"lower", py::int_(e.lower())}, {"upper", py::int_(e.upper())}, {"explored", py::int_(e.explored())}});
        } catch (const PatternError& e) {
            raise(pattern_error, e.what(), {{"code", py::str(to_string(e.code()))}});
        } catch (const ParseError& e) {
            raise(parse_error, e.what(), {{"location", py::str(e.location())}});
        } catch (const InvariantViolation& e) {
            raise(invariant, e.what(), {});
        } catch (const Unreachable& e) {
            raise(unreachable, e.what(), {});
        } catch (const CorruptLog& e) {
            raise(corrupt, e.what(), {});
        } catch (const Error& e) {
            raise(error, e.what(), {});
        }
    });

    m.def("validate", [](const std::string& model) { return serialize(model_arg(model)); },
          "Parses and validates a model document, returning it re-serialized.");
    m.def("digest", [](const std::string& model) { return canonicalize(model_arg(model)).digest; });
    m.def("canonical_key", [](const std::string& model) { return canonical_key(model_arg(model)); });
    m.def("empty_model", [] { return serialize(new_empty()); });
    m.def("to_graph", [](const std::string& model) { return graph_to_json(to_graph(model_arg(model))).dump(); });
    m.def("soundness", [](const std::string& model) {
        return report_to_json(check_soundness(to_graph(model_arg(model)))).dump();
    });

    m.def("apply_pattern", [](const std::string& model, const std::string& pattern) {
        return serialize(apply_pattern(model_arg(model), pattern_from_json(parse_json(pattern))));
    });
    m.def(
        "applicable_patterns",
        [](const std::string& model, std::optional<std::vector<std::string>> labels,
           std::optional<std::vector<std::string>> conditions, bool include_deletes) {
            Vocabulary vocab;
            if (labels) vocab.labels = to_set(labels);
            if (conditions) vocab.conditions = to_set(conditions);
            vocab.include_deletes = include_deletes;
            json out = json::array();
            for (const auto& p : applicable_patterns(model_arg(model), vocab)) out.push_back(pattern_to_json(p));
            return out.dump();
        },
        py::arg("model"), py::arg("labels") = py::none(), py::arg("conditions") = py::none(),
        py::arg("include_deletes") = true);

    m.def(
        "replay",
        [](const std::string& log, std::optional<std::size_t> step) {
            const SessionLog parsed = log_from_jsonl(log);
            return serialize(replay(parsed, step ? *step : parsed.events.size()));
        },
        py::arg("log"), py::arg("step") = py::none());

    m.def(
        "distance",
        [](const std::string& source, const std::string& target, std::optional<std::vector<std::string>> alphabet,
           std::size_t enumerate_limit, std::optional<std::size_t> state_budget) {
            const auto opts = search_options(enumerate_limit, state_budget);
            const ProcessModel src = model_arg(source), tgt = model_arg(target);
            py::gil_scoped_release release;
            return distance_to_json(distance(src, tgt, to_set(alphabet), opts)).dump();
        },
        py::arg("source"), py::arg("target"), py::arg("alphabet") = py::none(),
        py::arg("enumerate_limit") = kDefaultEnumerateLimit, py::arg("state_budget") = py::none());

    m.def(
        "dead_end",
        [](const std::string& state, const std::string& target, std::optional<std::vector<std::string>> alphabet,
           std::optional<std::size_t> state_budget) {
            const auto opts = search_options(kDefaultEnumerateLimit, state_budget);
            const ProcessModel s = model_arg(state), t = model_arg(target);
            py::gil_scoped_release release;
            return dead_end_to_json(dead_end(s, t, to_set(alphabet), opts)).dump();
        },
        py::arg("state"), py::arg("target"), py::arg("alphabet") = py::none(), py::arg("state_budget") = py::none());

    m.def(
        "analyze",
        [](const std::string& log, const std::string& solution, std::optional<std::string> regions,
           const std::string& mode, bool check_dead_ends, std::optional<std::size_t> state_budget) {
            AnalysisOptions opts;
            auto parsed_mode = counting_mode_from_string(mode);
            if (!parsed_mode) throw ParseError("mode", "expected STATE_CHANGING_ONLY or INCLUDE_FAILED");
            opts.mode = *parsed_mode;
            opts.check_dead_ends = check_dead_ends;
            opts.search = search_options(kDefaultEnumerateLimit, state_budget);
            const SessionLog parsed = log_from_jsonl(log);
            const ProcessModel sol = model_arg(solution);
            const RegionMap map = regions ? regions_from_json(parse_json(*regions)) : RegionMap{};
            py::gil_scoped_release release;
            return deviation_report_to_json(analyze_session(parsed, sol, map, opts)).dump();
        },
        py::arg("log"), py::arg("solution"), py::arg("regions") = py::none(),
        py::arg("mode") = "STATE_CHANGING_ONLY", py::arg("check_dead_ends") = true,
        py::arg("state_budget") = py::none());
}
