#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "costtune/cost_units.hpp"
#include "costtune/exec_backend.hpp"
#include "costtune/planner.hpp"
#include "json.hpp"

namespace costtune {

/// One trial: a proposed unit vector and what running (or cache-resolving)
/// its plan cost.
struct TrialRecord {
    std::size_t trial_index = 0; // 1-based; trial 1 is the default-units baseline
    CostUnitVector units;
    std::string plan_fingerprint;
    double observed_time = 0.0;
    double charged_time = 0.0;
    bool cache_hit = false;
    bool stopped_early = false;
    bool baseline = false;
    std::optional<double> threshold;

    friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

/// Running total of charged seconds against a fixed budget. Charges are
/// summed in trial order, so replaying a trial log reproduces spent() exactly.
class BudgetLedger {
public:
    BudgetLedger() = default;
    explicit BudgetLedger(double budget);
    /// Rebuilds a ledger from serialized state.
    static BudgetLedger restore(double budget, double spent, bool exhausted);

    double budget() const noexcept { return budget_; }
    double spent() const noexcept { return spent_; }
    /// Largest charge c with spent() + c <= budget() in floating point.
    double remaining() const noexcept;
    bool exhausted() const noexcept { return exhausted_ || remaining() <= 0.0; }

    /// Throws InvalidArgument if c is negative or exceeds remaining().
    void charge(double seconds);
    void mark_exhausted() noexcept { exhausted_ = true; }

    friend bool operator==(const BudgetLedger&, const BudgetLedger&) = default;

private:
    double budget_ = 0.0;
    double spent_ = 0.0;
    bool exhausted_ = false;
};

struct CacheEntry {
    double seconds = 0.0;
    bool complete = true; // false: the plan was stopped early and takes at least `seconds`

    friend bool operator==(const CacheEntry&, const CacheEntry&) = default;
};

/// Fingerprint -> best fully observed time of that plan, or a lower bound from an early stop.
class PlanCache {
public:
    std::optional<CacheEntry> lookup(const std::string& fingerprint) const;
    void record(const std::string& fingerprint, double seconds);
    void record_lower_bound(const std::string& fingerprint, double seconds);
    std::size_t size() const noexcept { return entries_.size(); }
    const std::map<std::string, CacheEntry>& entries() const noexcept { return entries_; }

private:
    std::map<std::string, CacheEntry> entries_;
};

/// Proposes the next unit vector, or nothing once its space is used up.
class Searcher {
public:
    virtual ~Searcher() = default;
    virtual std::optional<CostUnitVector> next(std::span<const TrialRecord> history) = 0;
};

class RandomSearcher final : public Searcher {
public:
    RandomSearcher(SearchSpace space, std::uint64_t seed);
    std::optional<CostUnitVector> next(std::span<const TrialRecord> history) override;

private:
    SearchSpace space_;
    Rng rng_;
};

/// Walks grid_points(space, k) in order, then reports exhaustion.
class GridSearcher final : public Searcher {
public:
    GridSearcher(const SearchSpace& space, std::size_t k, std::size_t cap = default_grid_cap);
    std::optional<CostUnitVector> next(std::span<const TrialRecord> history) override;

private:
    std::vector<CostUnitVector> points_;
    std::size_t cursor_ = 0;
};

enum class SearcherKind { random, grid };

std::optional<SearcherKind> parse_searcher_kind(std::string_view s) noexcept;
std::string_view to_string(SearcherKind kind) noexcept;

std::unique_ptr<Searcher> make_searcher(SearcherKind kind, const SearchSpace& space, std::uint64_t seed,
                                        std::size_t grid_k = 3);

struct QtOptions {
    CostUnitVector defaults = default_vector();
    /// Count the default-units execution against the budget.
    bool charge_baseline = true;
    bool plan_cache = true;
    bool early_stopping = true;
    /// Cap on post-baseline proposals.
    std::optional<std::size_t> max_trials;
    /// Give up after this many consecutive cache hits; they cost nothing, so
    /// without a cap a random searcher on a small plan space never stops.
    std::size_t max_stale_trials = 1000;
};

enum class StopReason { budget_exhausted, searcher_exhausted, max_trials, stale };

std::string_view to_string(StopReason r) noexcept;

/// The trial loop for one query. tune_query drives it to completion;
/// workload tuning interleaves several of these under one ledger.
class QueryTuner {
public:
    QueryTuner(const QuerySpec& query, std::unique_ptr<Searcher> searcher, QtOptions options);

    /// Executes the default units (threshold = remaining budget when charged).
    const TrialRecord& run_baseline(Backend& backend, BudgetLedger& ledger);

    /// One proposal. Returns nullptr, and marks the tuner finished, when no
    /// further trial can run.
    const TrialRecord* run_trial(Backend& backend, BudgetLedger& ledger);

    bool finished() const noexcept { return stop_.has_value(); }
    std::optional<StopReason> stop_reason() const noexcept { return stop_; }
    bool baseline_done() const noexcept { return baseline_done_; }
    bool baseline_incomplete() const noexcept { return baseline_incomplete_; }

    const QuerySpec& query() const noexcept { return *query_; }
    double default_time() const noexcept { return default_time_; }
    double best_time() const noexcept { return best_time_; }
    const CostUnitVector& best_units() const noexcept { return best_units_; }
    const std::string& best_fingerprint() const noexcept { return best_fingerprint_; }
    const std::string& default_fingerprint() const noexcept { return default_fingerprint_; }
    const std::vector<TrialRecord>& trials() const noexcept { return trials_; }
    const PlanCache& cache() const noexcept { return cache_; }

private:
    void finish(StopReason r) { stop_ = r; }

    const QuerySpec* query_;
    std::unique_ptr<Searcher> searcher_;
    QtOptions options_;
    PlanCache cache_;
    std::vector<TrialRecord> trials_;
    std::size_t proposals_ = 0;
    std::size_t stale_ = 0;
    bool baseline_done_ = false;
    bool baseline_incomplete_ = false;
    double default_time_ = 0.0;
    double best_time_ = 0.0;
    CostUnitVector best_units_;
    std::string best_fingerprint_;
    std::string default_fingerprint_;
    std::optional<StopReason> stop_;
};

struct QtResult {
    std::string query_id;
    CostUnitVector best_units;
    double best_time = 0.0;
    double default_time = 0.0;
    std::string best_fingerprint;
    std::string default_fingerprint;
    std::vector<TrialRecord> trials;
    BudgetLedger ledger;
    /// The budget ran out before the default plan finished; default_time is a lower bound.
    bool baseline_incomplete = false;
    StopReason stop_reason = StopReason::budget_exhausted;

    double improvement() const;
};

/// Throws InvalidArgument unless the space's interval names match the defaults' unit names in order.
void check_layout(const SearchSpace& space, const CostUnitVector& defaults);

/// Budget-aware tuning of a single query.
QtResult tune_query(const QuerySpec& query, const SearchSpace& space, double budget, std::unique_ptr<Searcher> searcher,
                    Backend& backend, const QtOptions& options = {});

/// max(1 - best/default, 0). Throws InvalidArgument unless default_time > 0.
double percentage_improvement(double default_time, double best_time);

nlohmann::json to_json(const TrialRecord& t);
TrialRecord trial_from_json(const nlohmann::json& j, const CostUnitVector& layout);
nlohmann::json to_json(const QtResult& r);
QtResult qt_result_from_json(const nlohmann::json& j, const CostUnitVector& layout);

/// Header: trial,<unit names...>,fingerprint,observed_s,charged_s,cache_hit,stopped_early
std::string trials_to_csv(std::span<const TrialRecord> trials, const CostUnitVector& layout);
std::vector<TrialRecord> trials_from_csv(const std::string& csv, const CostUnitVector& layout);

} // namespace costtune
