#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "costtune/qt.hpp"

namespace costtune {

/// Per-query statistics the schedulers read.
struct QueryStats {
    std::string query_id;
    std::size_t f_q = 0; // post-calibration trials so far
    double default_time = 0.0;
    double best_time = 0.0;
    std::vector<double> reward_history;
    CostUnitVector best_units;
    /// No further trial can run for this query; schedulers skip it.
    bool exhausted = false;
};

struct WorkloadState {
    std::vector<QueryStats> stats;
    BudgetLedger ledger;
    std::size_t round_robin_cursor = 0;

    /// N = sum of f_q.
    std::size_t total_trials() const noexcept;
};

enum class SchedulerKind { round_robin, cost_based, ucb, improvement_rate };

/// Accepts the CLI short names (rr, cost, ucb, rate) and the long names.
std::optional<SchedulerKind> parse_scheduler_kind(std::string_view s) noexcept;
std::string_view to_string(SchedulerKind kind) noexcept;

inline constexpr double default_ucb_lambda = std::numbers::sqrt2;

/// max(1 - t/t0, 0). Throws InvalidArgument unless t0 > 0.
double reward(double t, double t0);

/// max(default - best, 0) / f_q. Throws InvalidArgument when f_q = 0.
double improvement_rate(const QueryStats& stats);

/// UCB1 score: mean reward + lambda * sqrt(ln N / f_q). Requires f_q >= 1.
double ucb_score(const QueryStats& stats, std::size_t total_trials, double lambda = default_ucb_lambda);

// Schedulers return an index into state.stats, or nothing when every query is exhausted.
std::optional<std::size_t> schedule_round_robin(WorkloadState& state);
std::optional<std::size_t> schedule_cost_based(const WorkloadState& state);
std::optional<std::size_t> schedule_ucb(const WorkloadState& state, double lambda = default_ucb_lambda);
std::optional<std::size_t> schedule_improvement_rate(const WorkloadState& state);

std::optional<std::size_t> schedule(SchedulerKind kind, WorkloadState& state, double ucb_lambda = default_ucb_lambda);

using SearcherFactory = std::function<std::unique_ptr<Searcher>(std::size_t query_index, const QuerySpec& query)>;

/// Per-query searcher seeded from mix_seed(seed, query_index).
SearcherFactory seeded_searchers(SearcherKind kind, const SearchSpace& space, std::uint64_t seed, std::size_t grid_k = 3);

struct WtOptions {
    QtOptions query_options;
    double ucb_lambda = default_ucb_lambda;
    std::optional<std::size_t> max_total_trials;
};

struct WtTrial {
    std::string query_id;
    std::string scheduler; // "calibration" for the default-units runs
    TrialRecord record;
    double reward = 0.0;

    friend bool operator==(const WtTrial&, const WtTrial&) = default;
};

struct CurvePoint {
    double spent = 0.0;
    double improvement = 0.0;

    friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

struct QueryOutcome {
    std::string query_id;
    CostUnitVector best_units;
    double default_time = 0.0;
    double best_time = 0.0;
    double improvement = 0.0;
    std::size_t trials = 0;
    std::string default_fingerprint;
    std::string best_fingerprint;
    bool calibrated = false;
};

struct WtResult {
    std::string scheduler;
    std::vector<QueryOutcome> per_query;
    double workload_default_time = 0.0;
    double workload_best_time = 0.0;
    std::vector<CurvePoint> curve;
    std::vector<WtTrial> trial_log;
    BudgetLedger ledger;
    bool calibration_incomplete = false;

    double improvement() const;
};

/// Budget-aware tuning of a whole workload under one shared budget.
WtResult tune_workload(std::span<const QuerySpec> workload, const SearchSpace& space, double budget,
                       SchedulerKind scheduler, const SearcherFactory& searchers, Backend& backend,
                       const WtOptions& options = {});

nlohmann::json to_json(const WtResult& r);
WtResult wt_result_from_json(const nlohmann::json& j, const CostUnitVector& layout);

/// spent_seconds,improvement_fraction
std::string curve_to_csv(std::span<const CurvePoint> curve);
std::vector<CurvePoint> curve_from_csv(const std::string& text);
/// query_id,scheduler,reward, then the single-query trial columns.
std::string trial_log_to_csv(std::span<const WtTrial> log, const CostUnitVector& layout);

} // namespace costtune
