#pragma once

/**
 * \file analysis.hpp
 *
 * Pattern distance between models, optimal problem-solving paths, dead-end
 * detection and deviation reports for recorded sessions.
 */

#include "patternbench/model.hpp"
#include "patternbench/patterns.hpp"
#include "patternbench/serialize.hpp"
#include "patternbench/session.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace patternbench {

inline constexpr std::size_t kDefaultStateBudget = 5'000'000;
inline constexpr std::size_t kDefaultEnumerateLimit = 10'000;

struct SearchOptions {
    /// Maximum number of optimal paths materialized. 0 stops the search as
    /// soon as the distance is known: one witness path, no complete DAG.
    std::size_t enumerate_limit = kDefaultEnumerateLimit;
    /// Maximum number of distinct canonical states generated.
    std::size_t state_budget = kDefaultStateBudget;
};

/// Search gave up before proving optimality. `lower` <= d <= `upper`.
class BudgetExceeded : public Error {
public:
    BudgetExceeded(std::size_t lower, std::size_t upper, std::size_t explored);
    std::size_t lower() const { return lower_; }
    std::size_t upper() const { return upper_; }
    std::size_t explored() const { return explored_; }

private:
    std::size_t lower_, upper_, explored_;
};

/// The target lies outside the space the pattern set can reach (for
/// example a conditional with three branches, or a label outside the alphabet).
class Unreachable : public Error {
public:
    using Error::Error;
};

/// Predecessor DAG of optimal paths over canonical states.
struct PathDag {
    struct Edge {
        std::size_t from;
        std::size_t to;
        /// Instance expressed against the canonical representative of `from`.
        PatternInstance move;
    };
    /// Canonical keys; index 0 is the source, `target` the goal state.
    std::vector<std::string> states;
    std::vector<std::size_t> depth;
    std::vector<Edge> edges;
    std::size_t target = 0;
};

struct DistanceResult {
    std::size_t d = 0;
    /// Optimal paths against the (normalized) source ids, at most enumerate_limit.
    std::vector<std::vector<PatternInstance>> optimal_paths;
    bool truncated = false;
    std::size_t explored_states = 0;
    /// Number of optimal paths in the DAG (saturates at UINT64_MAX); 1 when
    /// only a witness was requested.
    std::uint64_t path_count = 0;
    PathDag dag;
};

DistanceResult distance(const ProcessModel& source, const ProcessModel& target,
                        const std::set<std::string>& alphabet = {}, const SearchOptions& opts = {});

/// Streams the optimal paths of `result.dag` against `source` in
/// deterministic order; `visit` returns false to stop. Returns the number visited.
std::size_t optimal_paths(const DistanceResult& result, const ProcessModel& source,
                          const std::function<bool(const std::vector<PatternInstance>&)>& visit,
                          std::size_t limit = kDefaultEnumerateLimit);

/// Admissible estimate of d(state, target) used by the search.
std::size_t lower_bound(const ProcessModel& state, const ProcessModel& target);

struct DeadEndResult {
    bool is_dead_end = false;
    /// Shortest non-delete completion when the target is still reachable.
    std::optional<std::vector<PatternInstance>> witness;
    std::size_t explored_states = 0;
};

DeadEndResult dead_end(const ProcessModel& state, const ProcessModel& target,
                       const std::set<std::string>& alphabet = {}, const SearchOptions& opts = {});

enum class CountingMode { StateChangingOnly, IncludeFailed };
enum class StepMarker { OnOptimalPath, Detour, FailedTrial, Reverted };

const char* to_string(CountingMode mode);
const char* to_string(StepMarker marker);
std::optional<CountingMode> counting_mode_from_string(const std::string& text);

struct StepReport {
    std::size_t event = 0;
    StepMarker marker = StepMarker::OnOptimalPath;
    /// Activity labels the instance touched in the state it was applied to.
    std::vector<std::string> touched;
    std::string region;
};

struct ProcessDeviations {
    std::size_t count = 0;
    /// APPLY operations that survive undo netting.
    std::size_t counted_operations = 0;
    /// d(S_0, S_F)
    std::size_t optimal_operations = 0;
    std::size_t failed_trials = 0;
    std::size_t reverted_applies = 0;
    std::vector<StepReport> steps;
};

ProcessDeviations process_deviations(const SessionLog& log, const ProcessModel& solution,
                                     CountingMode mode = CountingMode::StateChangingOnly,
                                     const SearchOptions& opts = {});

struct ProductDeviations {
    std::size_t count = 0;
    std::vector<PatternInstance> witness;
    /// Touched labels of each witness step.
    std::vector<std::vector<std::string>> touched;
};

ProductDeviations product_deviations(const ProcessModel& final_model, const ProcessModel& solution,
                                     const std::set<std::string>& alphabet = {}, const SearchOptions& opts = {});

/// Activity labels an instance touches in `model` (empty when refs do not resolve).
std::vector<std::string> touched_labels(const ProcessModel& model, const PatternInstance& p);

inline constexpr const char* kNoRegion = "∅";

struct RegionCounts {
    std::size_t process = 0;
    std::size_t product = 0;
};

struct DeviationReport {
    std::string session_id;
    std::string task_id;
    CountingMode mode = CountingMode::StateChangingOnly;
    ProcessDeviations process;
    ProductDeviations product;
    std::vector<std::size_t> dead_end_steps;
    std::map<std::string, RegionCounts> per_region;
    std::map<std::string, std::string> reason_tags;
};

/// Smallest region of `solution` whose activities meet `labels`
/// (ties: innermost, then region id); kNoRegion when none does.
std::string attribute_region(const std::vector<std::string>& labels, const ProcessModel& solution,
                             const RegionMap& regions);

/// Fills region attributions and per_region counts. Throws Error when a
/// region path does not resolve in `solution`.
DeviationReport map_to_regions(DeviationReport report, const ProcessModel& solution, const RegionMap& regions);

struct AnalysisOptions {
    CountingMode mode = CountingMode::StateChangingOnly;
    SearchOptions search;
    bool check_dead_ends = true;
};

DeviationReport analyze_session(const SessionLog& log, const ProcessModel& solution, const RegionMap& regions = {},
                                const AnalysisOptions& opts = {});

json distance_to_json(const DistanceResult& result);
json dead_end_to_json(const DeadEndResult& result);
json deviation_report_to_json(const DeviationReport& report);

}  // namespace patternbench
