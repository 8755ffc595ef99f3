// patternbench command line: model validation, pattern application, session
// replay, distance and deviation analysis, and the HTTP service.

#include "patternbench/analysis.hpp"
#include "patternbench/service.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <functional>
#include <iostream>

using namespace patternbench;

namespace {

enum Exit { kOk = 0, kInvalid = 1, kParse = 2, kBudget = 3, kRejected = 4 };

ProcessModel load_model(const std::string& path) { return model_from_json(parse_json(read_file(path))); }

std::set<std::string> split_list(const std::string& text) {
    std::set<std::string> out;
    std::size_t start = 0;
    while (start <= text.size() && !text.empty()) {
        const auto comma = text.find(',', start);
        const auto item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!item.empty()) out.insert(item);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !(out << text)) throw Error("cannot write " + path);
}

Service* running = nullptr;

void on_signal(int) {
    if (running) running->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Block-structured process modeling through change patterns"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    std::function<int()> command;

    std::string model_file, pattern_file, log_file, solution_file, regions_file, target_file, source_file, out_file;
    std::string alphabet, conds, mode = "STATE_CHANGING_ONLY", host = "127.0.0.1", static_dir, session_dir;
    std::size_t enumerate = 10, state_budget = 0, step = 0;
    bool empty_source = false, no_dead_ends = false, digests = false, has_step = false;
    int port = 8080;

    auto* validate = app.add_subcommand("validate", "Check a model document against the structural invariants");
    validate->add_option("model", model_file, "Model JSON file")->required();
    validate->callback([&] {
        command = [&] {
            json out = json::object();
            ProcessModel m;
            try {
                m = load_model(model_file);
            } catch (const InvariantViolation& e) {
                out["valid"] = false;
                out["violations"] = json::array({e.what()});
                std::cout << out.dump(2) << "\n";
                return int(kInvalid);
            }
            out["valid"] = true;
            out["digest"] = canonicalize(m).digest;
            out["activities"] = activities(m).size();
            out["soundness"] = report_to_json(check_soundness(to_graph(m)));
            std::cout << out.dump(2) << "\n";
            return int(kOk);
        };
    });

    auto* apply = app.add_subcommand("apply", "Apply one pattern instance to a model");
    apply->add_option("model", model_file, "Model JSON file")->required();
    apply->add_option("pattern", pattern_file, "Pattern instance JSON file")->required();
    apply->add_option("-o,--output", out_file, "Write the resulting model here instead of stdout");
    apply->callback([&] {
        command = [&] {
            auto next = apply_pattern(load_model(model_file), pattern_from_json(parse_json(read_file(pattern_file))));
            write_output(out_file, model_to_json(next).dump(2) + "\n");
            return int(kOk);
        };
    });

    auto* applicable = app.add_subcommand("applicable", "List the pattern instances a model accepts");
    applicable->add_option("model", model_file, "Model JSON file")->required();
    applicable->add_option("--alphabet", alphabet, "Comma-separated insert labels (default: the model's labels)");
    applicable->add_option("--conditions", conds, "Comma-separated condition values (default: the model's)");
    applicable->callback([&] {
        command = [&] {
            Vocabulary vocab;
            if (!alphabet.empty()) vocab.labels = split_list(alphabet);
            if (!conds.empty()) vocab.conditions = split_list(conds);
            json out = json::array();
            for (const auto& p : applicable_patterns(load_model(model_file), vocab)) out.push_back(pattern_to_json(p));
            std::cout << out.dump(2) << "\n";
            return int(kOk);
        };
    });

    auto* replay_cmd = app.add_subcommand("replay", "Replay a session log to a model");
    replay_cmd->add_option("log", log_file, "Session log (JSON lines)")->required();
    auto* step_opt = replay_cmd->add_option("--step", step, "Number of events to replay (default: all)");
    replay_cmd->add_flag("--digests", digests, "Print the canonical digest after every event instead");
    replay_cmd->callback([&] {
        has_step = step_opt->count() > 0;
        command = [&] {
            const SessionLog log = log_from_jsonl(read_file(log_file));
            if (digests) {
                const auto states = replay_states(log);
                for (std::size_t i = 0; i < states.size(); ++i) {
                    std::cout << i << " " << canonicalize(states[i]).digest << "\n";
                }
                return int(kOk);
            }
            if (has_step && step > log.events.size()) {
                throw ParseError("--step", "log has only " + std::to_string(log.events.size()) + " events");
            }
            std::cout << model_to_json(replay(log, has_step ? step : log.events.size())).dump(2) << "\n";
            return int(kOk);
        };
    });

    auto* dist = app.add_subcommand("distance", "Minimal pattern distance and optimal paths");
    std::vector<std::string> model_files;
    dist->add_option("models", model_files, "[source] target model files")->expected(1, 2)->required();
    dist->add_flag("--empty", empty_source, "Start from the empty model");
    dist->add_option("--alphabet", alphabet, "Comma-separated alphabet the target must stay within");
    dist->add_option("--enumerate", enumerate, "Optimal paths to print (0: distance only)");
    dist->add_option("--state-budget", state_budget, "Maximum states explored (default: PATTERNBENCH_STATE_BUDGET)");
    dist->callback([&] {
        command = [&] {
            if (empty_source != (model_files.size() == 1)) {
                throw ParseError("distance", "give either --empty and a target, or a source and a target");
            }
            target_file = model_files.back();
            if (!empty_source) source_file = model_files.front();
            SearchOptions opts;
            opts.enumerate_limit = enumerate;
            opts.state_budget = state_budget ? state_budget : state_budget_from_env();
            const ProcessModel source = empty_source ? new_empty() : load_model(source_file);
            const auto r = distance(source, load_model(target_file), split_list(alphabet), opts);
            std::cout << "d=" << r.d << "\n";
            std::cout << "explored_states=" << r.explored_states << "\n";
            if (enumerate > 0) {
                std::cout << "optimal_paths=" << r.path_count << (r.truncated ? " (truncated)" : "") << "\n";
                for (const auto& path : r.optimal_paths) {
                    json line = json::array();
                    for (const auto& p : path) line.push_back(pattern_to_json(p));
                    std::cout << line.dump() << "\n";
                }
            }
            return int(kOk);
        };
    });

    auto* analyze = app.add_subcommand("analyze", "Deviation report of a session against a solution");
    analyze->add_option("log", log_file, "Session log (JSON lines)")->required();
    analyze->add_option("solution", solution_file, "Solution model file")->required();
    analyze->add_option("regions", regions_file, "Region file");
    analyze->add_option("--mode", mode, "STATE_CHANGING_ONLY or INCLUDE_FAILED");
    analyze->add_option("--report", out_file, "Write the report JSON here");
    analyze->add_flag("--no-dead-ends", no_dead_ends, "Skip the dead-end check at every prefix");
    analyze->add_option("--state-budget", state_budget, "Maximum states per search (default: PATTERNBENCH_STATE_BUDGET)");
    analyze->callback([&] {
        command = [&] {
            AnalysisOptions opts;
            auto m = counting_mode_from_string(mode);
            if (!m) throw ParseError("--mode", "expected STATE_CHANGING_ONLY or INCLUDE_FAILED");
            opts.mode = *m;
            opts.check_dead_ends = !no_dead_ends;
            opts.search.state_budget = state_budget ? state_budget : state_budget_from_env();
            const SessionLog log = log_from_jsonl(read_file(log_file));
            const RegionMap regions = regions_file.empty() ? RegionMap{} : regions_from_json(parse_json(read_file(regions_file)));
            const auto report = analyze_session(log, load_model(solution_file), regions, opts);
            if (!out_file.empty()) write_output(out_file, deviation_report_to_json(report).dump(2) + "\n");
            std::cout << "process=" << report.process.count << " product=" << report.product.count
                      << " dead_ends=" << report.dead_end_steps.size() << "\n";
            return int(kOk);
        };
    });

    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    serve->add_option("--port", port, "TCP port (0 picks a free one)");
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--static-dir", static_dir, "Directory served at /");
    serve->add_option("--session-dir", session_dir, "Persist sessions here and restore them on start");
    serve->add_option("--state-budget", state_budget, "Maximum states per search (default: PATTERNBENCH_STATE_BUDGET)");
    serve->callback([&] {
        command = [&] {
            ServiceConfig cfg;
            if (!static_dir.empty()) cfg.static_dir = static_dir;
            if (!session_dir.empty()) cfg.session_dir = session_dir;
            cfg.search.state_budget = state_budget ? state_budget : state_budget_from_env();
            Service service(cfg);
            const int bound = service.bind(host, port);
            if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
            running = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cout << "listening on http://" << host << ":" << bound << std::endl;
            service.run();
            running = nullptr;
            return int(kOk);
        };
    });

    auto* export_graph = app.add_subcommand("export-graph", "Lower a model to its flat graph");
    export_graph->add_option("model", model_file, "Model JSON file")->required();
    export_graph->add_option("-o,--output", out_file, "Write the graph here instead of stdout");
    export_graph->callback([&] {
        command = [&] {
            write_output(out_file, graph_to_json(to_graph(load_model(model_file))).dump(2) + "\n");
            return int(kOk);
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kParse;
    }

    try {
        return command();
    } catch (const BudgetExceeded& e) {
        std::cerr << "budget exceeded: lower=" << e.lower() << " upper=" << e.upper()
                  << " explored_states=" << e.explored() << "\n";
        return kBudget;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kParse;
    } catch (const InvariantViolation& e) {
        std::cerr << "invariant violation: " << e.what() << "\n";
        return kInvalid;
    } catch (const CorruptLog& e) {
        std::cerr << "corrupt log: " << e.what() << "\n";
        return kInvalid;
    } catch (const PatternError& e) {
        std::cerr << "pattern rejected: " << e.what() << "\n";
        return kRejected;
    } catch (const Unreachable& e) {
        std::cerr << "unreachable: " << e.what() << "\n";
        return kRejected;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInvalid;
    }
}
