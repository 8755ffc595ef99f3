#include "patternbench/service.hpp"

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <regex>
#include <shared_mutex>

namespace patternbench {

namespace fs = std::filesystem;

std::size_t state_budget_from_env() {
    const char* raw = std::getenv("PATTERNBENCH_STATE_BUDGET");
    if (!raw || !*raw) return kDefaultStateBudget;
    std::size_t used = 0;
    unsigned long long value = 0;
    try {
        value = std::stoull(raw, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != std::string(raw).size() || value == 0 || std::string(raw).front() == '-') {
        throw Error(std::string("PATTERNBENCH_STATE_BUDGET must be a positive integer, got '") + raw + "'");
    }
    return static_cast<std::size_t>(value);
}

namespace {

std::int64_t now_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

bool valid_session_id(const std::string& id) {
    static const std::regex pattern("[A-Za-z0-9_-]{1,64}");
    return std::regex_match(id, pattern);
}

/// Immutable view published after every mutation; readers never take the guard.
struct Snapshot {
    SessionLog log;
    ProcessModel model;
    std::string digest;
};

struct ApiSession {
    std::mutex guard;
    Session session;
    std::optional<ProcessModel> solution;
    RegionMap regions;
    Vocabulary vocab;
    json task;
    std::shared_ptr<const Snapshot> snapshot;

    std::shared_ptr<const Snapshot> view() const { return std::atomic_load(&snapshot); }

    void publish() {
        auto next = std::make_shared<Snapshot>();
        next->log = session.log();
        next->model = session.model();
        next->digest = canonicalize(next->model).digest;
        std::atomic_store(&snapshot, std::shared_ptr<const Snapshot>(std::move(next)));
    }
};

std::set<std::string> string_set(const json& doc, const std::string& where) {
    if (!doc.is_array()) throw ParseError(where, "expected an array of strings");
    std::set<std::string> out;
    for (const auto& v : doc) {
        if (!v.is_string()) throw ParseError(where, "expected an array of strings");
        out.insert(v.get<std::string>());
    }
    return out;
}

json string_array(const std::set<std::string>& values) {
    json out = json::array();
    for (const auto& v : values) out.push_back(v);
    return out;
}

/// Builds a session from a creation document (also the persisted task file).
std::shared_ptr<ApiSession> session_from_task(const std::string& id, const json& task) {
    if (!task.is_object()) throw ParseError("", "expected an object");
    for (auto it = task.begin(); it != task.end(); ++it) {
        static const std::set<std::string> known{"session_id", "task_id", "alphabet", "conditions", "solution",
                                                 "regions"};
        if (!known.count(it.key())) throw ParseError("/" + it.key(), "unknown field");
    }
    auto s = std::make_shared<ApiSession>();
    SessionLog header;
    header.session_id = id;
    if (task.contains("task_id")) {
        if (!task["task_id"].is_string()) throw ParseError("/task_id", "expected a string");
        header.task_id = task["task_id"].get<std::string>();
    }
    if (task.contains("alphabet")) header.alphabet = string_set(task["alphabet"], "/alphabet");
    std::set<std::string> conds;
    if (task.contains("conditions")) conds = string_set(task["conditions"], "/conditions");
    if (task.contains("solution")) s->solution = model_from_json(task["solution"]);
    if (task.contains("regions")) {
        if (!s->solution) throw ParseError("/regions", "regions require a solution");
        s->regions = regions_from_json(task["regions"]);
    }
    if (!header.alphabet.empty()) {
        s->vocab.labels = header.alphabet;
    } else if (s->solution) {
        auto labels = activities(*s->solution);
        s->vocab.labels = std::set<std::string>(labels.begin(), labels.end());
    }
    if (s->solution) {
        for (const auto& c : conditions(*s->solution)) conds.insert(c);
    }
    if (!conds.empty()) s->vocab.conditions = conds;
    s->task = json::object();
    s->task["session_id"] = id;
    s->task["task_id"] = header.task_id;
    s->task["alphabet"] = string_array(header.alphabet);
    if (task.contains("conditions")) s->task["conditions"] = task["conditions"];
    if (s->solution) s->task["solution"] = model_to_json(*s->solution);
    if (task.contains("regions")) s->task["regions"] = task["regions"];
    s->session = Session(header);
    return s;
}

void write_atomically(const fs::path& path, const std::string& text) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << text;
        if (!out.flush()) throw Error("cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

json error_body(const std::string& code, const std::string& detail) {
    json out = json::object();
    out["error"] = code;
    out["detail"] = detail;
    return out;
}

void send(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json; charset=utf-8");
}

}  // namespace

struct Service::Impl {
    ServiceConfig config;
    httplib::Server server;
    mutable std::shared_mutex sessions_guard;
    std::map<std::string, std::shared_ptr<ApiSession>> sessions;
    std::mutex rng_guard;
    std::mt19937_64 rng{std::random_device{}()};

    explicit Impl(ServiceConfig cfg) : config(std::move(cfg)) {
        if (config.session_dir) {
            fs::create_directories(*config.session_dir);
            restore();
        }
        routes();
        if (config.static_dir && !server.set_mount_point("/", *config.static_dir)) {
            throw Error("static directory not found: " + *config.static_dir);
        }
    }

    std::shared_ptr<ApiSession> find(const std::string& id) const {
        std::shared_lock lock(sessions_guard);
        auto it = sessions.find(id);
        return it == sessions.end() ? nullptr : it->second;
    }

    std::string fresh_id() {
        std::lock_guard lock(rng_guard);
        static const char* hex = "0123456789abcdef";
        std::string id;
        for (int i = 0; i < 16; ++i) id += hex[rng() % 16];
        return id;
    }

    void persist_task(const std::string& id, const ApiSession& s) const {
        if (!config.session_dir) return;
        write_atomically(fs::path(*config.session_dir) / (id + ".task.json"), s.task.dump(2) + "\n");
    }

    void persist_log(const std::string& id, const ApiSession& s) const {
        if (!config.session_dir) return;
        write_atomically(fs::path(*config.session_dir) / (id + ".jsonl"), log_to_jsonl(s.session.log()));
    }

    /// Reloads persisted sessions, replaying each log; unreadable ones are skipped.
    void restore() {
        for (const auto& entry : fs::directory_iterator(*config.session_dir)) {
            const std::string name = entry.path().filename().string();
            const std::string suffix = ".task.json";
            if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix)) {
                continue;
            }
            const std::string id = name.substr(0, name.size() - suffix.size());
            try {
                auto s = session_from_task(id, parse_json(read_file(entry.path().string())));
                const fs::path log_path = fs::path(*config.session_dir) / (id + ".jsonl");
                if (fs::exists(log_path)) {
                    SessionLog log = log_from_jsonl(read_file(log_path.string()));
                    for (const auto& e : log.events) {
                        if (s->session.record(e.action, e.t_ms).ok() != e.ok()) {
                            throw CorruptLog("event " + std::to_string(e.seq) + " does not reproduce");
                        }
                    }
                }
                s->publish();
                sessions[id] = s;
            } catch (const std::exception& e) {
                std::cerr << "skipping session " << id << ": " << e.what() << "\n";
            }
        }
    }

    void routes();
};

namespace {

std::optional<std::size_t> expected_events(const httplib::Request& req, const json& body) {
    if (body.is_object() && body.contains("expected_events")) {
        const json& v = body["expected_events"];
        if (!v.is_number_unsigned()) throw ParseError("/expected_events", "expected a non-negative integer");
        return v.get<std::size_t>();
    }
    if (req.has_param("expected_events")) {
        const std::string raw = req.get_param_value("expected_events");
        if (raw.empty() || raw.find_first_not_of("0123456789") != std::string::npos) {
            throw ParseError("expected_events", "expected a non-negative integer");
        }
        return std::stoull(raw);
    }
    return std::nullopt;
}

json body_of(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    return parse_json(req.body);
}

/// Apply accepts the bare instance or {"pattern": ..., "expected_events": n}.
PatternInstance pattern_of(const json& body) {
    if (body.is_object() && body.contains("pattern")) {
        for (auto it = body.begin(); it != body.end(); ++it) {
            if (it.key() != "pattern" && it.key() != "expected_events") {
                throw ParseError("/" + it.key(), "unknown field");
            }
        }
        return pattern_from_json(body["pattern"]);
    }
    json bare = body;
    if (bare.is_object()) bare.erase("expected_events");
    return pattern_from_json(bare);
}

json model_view(const Snapshot& snap) {
    json out = json::object();
    out["session_id"] = snap.log.session_id;
    out["events"] = snap.log.events.size();
    out["digest"] = snap.digest;
    out["model"] = model_to_json(snap.model);
    out["graph"] = graph_to_json(to_graph(snap.model));
    return out;
}

}  // namespace

void Service::Impl::routes() {
    // Every handler maps library errors to JSON bodies; nothing escapes to httplib.
    auto guarded = [](auto handler) {
        return [handler](const httplib::Request& req, httplib::Response& res) {
            try {
                handler(req, res);
            } catch (const ParseError& e) {
                send(res, 400, error_body("PARSE_ERROR", e.what()));
            } catch (const InvariantViolation& e) {
                send(res, 400, error_body("INVARIANT_VIOLATION", e.what()));
            } catch (const std::exception& e) {
                send(res, 500, error_body("INTERNAL", e.what()));
            }
        };
    };

    server.Get("/healthz", guarded([](const httplib::Request&, httplib::Response& res) {
        json out = json::object();
        out["status"] = "ok";
        out["version"] = kVersion;
        send(res, 200, out);
    }));

    server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
        json body = body_of(req);
        std::string id;
        if (body.is_object() && body.contains("session_id")) {
            if (!body["session_id"].is_string() || !valid_session_id(body["session_id"].get<std::string>())) {
                throw ParseError("/session_id", "expected 1-64 characters from [A-Za-z0-9_-]");
            }
            id = body["session_id"].get<std::string>();
        } else {
            id = fresh_id();
        }
        auto s = session_from_task(id, body);
        s->publish();
        {
            std::unique_lock lock(sessions_guard);
            if (sessions.count(id)) return send(res, 409, error_body("SESSION_EXISTS", "session " + id + " exists"));
            sessions[id] = s;
        }
        persist_task(id, *s);
        persist_log(id, *s);
        json out = json::object();
        out["session_id"] = id;
        out["events"] = 0;
        out["digest"] = s->view()->digest;
        send(res, 201, out);
    }));

    auto with_session = [this, guarded](auto handler) {
        return guarded([this, handler](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            auto s = find(id);
            if (!s) return send(res, 404, error_body("UNKNOWN_SESSION", "no session " + id));
            handler(req, res, *s);
        });
    };

    server.Get(R"(/sessions/([^/]+)/model)", with_session([](const httplib::Request&, httplib::Response& res,
                                                               ApiSession& s) { send(res, 200, model_view(*s.view())); }));

    server.Get(R"(/sessions/([^/]+)/applicable)",
               with_session([](const httplib::Request&, httplib::Response& res, ApiSession& s) {
                   auto snap = s.view();
                   json list = json::array();
                   for (const auto& p : applicable_patterns(snap->model, s.vocab)) list.push_back(pattern_to_json(p));
                   json out = json::object();
                   out["events"] = snap->log.events.size();
                   out["digest"] = snap->digest;
                   out["patterns"] = std::move(list);
                   send(res, 200, out);
               }));

    server.Get(R"(/sessions/([^/]+)/log)", with_session([](const httplib::Request&, httplib::Response& res,
                                                             ApiSession& s) {
                   res.status = 200;
                   res.set_content(log_to_jsonl(s.view()->log), "application/x-ndjson; charset=utf-8");
               }));

    // Mutations are linearized per session; a busy guard or a stale event
    // count is a conflict rather than a wait.
    auto mutate = [this, with_session](auto make_action) {
        return with_session([this, make_action](const httplib::Request& req, httplib::Response& res, ApiSession& s) {
            const json body = body_of(req);
            const Action action = make_action(body);
            const auto expected = expected_events(req, body);
            std::unique_lock lock(s.guard, std::try_to_lock);
            if (!lock.owns_lock()) {
                return send(res, 409, error_body("SESSION_BUSY", "another mutation is in progress"));
            }
            const auto& log = s.session.log();
            if (expected && *expected != log.events.size()) {
                json err = error_body("EVENT_COUNT_MISMATCH", "expected " + std::to_string(*expected) +
                                                                  " events, session has " +
                                                                  std::to_string(log.events.size()));
                err["events"] = log.events.size();
                return send(res, 409, err);
            }
            const std::int64_t t = std::max(now_ms(), log.events.empty() ? std::int64_t{0} : log.events.back().t_ms);
            const SessionEvent event = s.session.record(action, t);
            s.publish();
            persist_log(log.session_id, s);
            auto snap = s.view();
            json out = event.ok() ? model_view(*snap) : error_body(*event.error, "event recorded as failed");
            out["event"] = event_to_json(event);
            if (!event.ok()) out["events"] = snap->log.events.size();
            send(res, event.ok() ? 200 : 422, out);
        });
    };

    server.Post(R"(/sessions/([^/]+)/apply)", mutate([](const json& body) { return Action::apply(pattern_of(body)); }));

    server.Post(R"(/sessions/([^/]+)/undo)", mutate([](const json& body) {
                    if (!body.is_object()) throw ParseError("", "expected an object");
                    for (auto it = body.begin(); it != body.end(); ++it) {
                        if (it.key() != "expected_events") throw ParseError("/" + it.key(), "unknown field");
                    }
                    return Action::undo();
                }));

    server.Get(R"(/sessions/([^/]+)/analysis)", with_session([this](const httplib::Request& req,
                                                                     httplib::Response& res, ApiSession& s) {
                   if (!s.solution) return send(res, 422, error_body("NO_SOLUTION", "session has no solution model"));
                   AnalysisOptions opts;
                   opts.search = config.search;
                   if (req.has_param("mode")) {
                       auto mode = counting_mode_from_string(req.get_param_value("mode"));
                       if (!mode) throw ParseError("mode", "expected STATE_CHANGING_ONLY or INCLUDE_FAILED");
                       opts.mode = *mode;
                   }
                   if (req.has_param("dead_ends")) opts.check_dead_ends = req.get_param_value("dead_ends") != "false";
                   auto snap = s.view();
                   try {
                       send(res, 200, deviation_report_to_json(analyze_session(snap->log, *s.solution, s.regions, opts)));
                   } catch (const BudgetExceeded& e) {
                       json err = error_body("BUDGET_EXCEEDED", e.what());
                       err["lower"] = e.lower();
                       err["upper"] = e.upper();
                       err["explored_states"] = e.explored();
                       send(res, 422, err);
                   } catch (const Unreachable& e) {
                       send(res, 422, error_body("UNREACHABLE", e.what()));
                   }
               }));
}

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) {
    if (port == 0) return impl_->server.bind_to_any_port(host);
    return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool Service::run() { return impl_->server.listen_after_bind(); }

void Service::stop() {
    if (impl_) impl_->server.stop();
}

std::size_t Service::session_count() const {
    std::shared_lock lock(impl_->sessions_guard);
    return impl_->sessions.size();
}

}  // namespace patternbench
