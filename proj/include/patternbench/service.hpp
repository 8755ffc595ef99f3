#pragma once

/**
 * \file service.hpp
 *
 * Local HTTP service: live modeling sessions, applicable patterns, undo,
 * JSONL logs and deviation analysis, all as JSON over HTTP.
 */

#include "patternbench/analysis.hpp"
#include "patternbench/session.hpp"

#include <memory>
#include <optional>
#include <string>

namespace patternbench {

inline constexpr const char* kVersion = "0.1.0";

struct ServiceConfig {
    /// Write-through persistence: `<id>.jsonl` plus `<id>.task.json`.
    /// Sessions found there are restored on start.
    std::optional<std::string> session_dir;
    std::optional<std::string> static_dir;
    SearchOptions search;
};

/// Reads PATTERNBENCH_STATE_BUDGET, falling back to kDefaultStateBudget.
/// Throws Error when the variable is set but not a positive integer.
std::size_t state_budget_from_env();

class Service {
public:
    explicit Service(ServiceConfig config = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds to `host`; port 0 picks a free one. Returns the bound port, -1 on failure.
    int bind(const std::string& host, int port);
    /// Serves until stop(); blocks.
    bool run();
    void stop();

    std::size_t session_count() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace patternbench
