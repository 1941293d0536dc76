#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "costtune/exec_backend.hpp"
#include "costtune/wt.hpp"

namespace costtune {

struct SpaceMultipliers {
    double low = 0.1;
    double high = 10.0;

    friend bool operator==(const SpaceMultipliers&, const SpaceMultipliers&) = default;
};

/// What the generator measured for one query when it built the file.
struct QueryAudit {
    std::string query_id;
    bool planted = false;
    double default_time = 0.0;
    double oracle_time = 0.0;
    /// Best time among plans the generator's probe vectors reached.
    double reachable_time = 0.0;

    friend bool operator==(const QueryAudit&, const QueryAudit&) = default;
};

struct WorkloadFile {
    std::string name;
    CostUnitVector defaults = default_vector();
    SpaceMultipliers space;
    TrueCostProfile true_profile = TrueCostProfile::identity(default_vector());
    std::vector<QuerySpec> queries;
    std::vector<QueryAudit> audit;

    SearchSpace search_space() const { return make_search_space(defaults, space.low, space.high); }
    const QuerySpec* find(const std::string& query_id) const;
};

/// Unique query ids, profile/audit referencing only known queries, valid
/// queries and space. Throws LoadError naming the field.
void validate(const WorkloadFile& w);

nlohmann::json to_json(const WorkloadFile& w);
WorkloadFile workload_from_json(const nlohmann::json& j);
WorkloadFile load_workload(const std::filesystem::path& path);
void save_workload(const WorkloadFile& w, const std::filesystem::path& path);
/// The exact bytes save_workload writes.
std::string dump_workload(const WorkloadFile& w);

struct GeneratorOptions {
    std::uint64_t seed = 0;
    std::size_t n_queries = 20;
    std::size_t min_tables = 3;
    std::size_t max_tables = 8;
    double planted_fraction = 0.5;
    /// true_units = defaults and no multipliers; nothing is improvable.
    bool identity_profile = false;
    std::string name = "synthetic";
    /// Seconds per abstract cost unit.
    double time_scale = 1e-4;
    /// A planted query's reachable plan must beat its default plan by this fraction.
    double min_planted_gain = 0.15;
    /// Random unit vectors used to check that the planted plan is reachable by tuning.
    std::size_t reach_probes = 256;
    std::size_t max_attempts = 5000;
};

/// Deterministic in options. Exactly round(planted_fraction * n_queries)
/// queries get a reachable plan faster than their default plan; the rest keep
/// an oracle-optimal default plan.
WorkloadFile generate_workload(const GeneratorOptions& options);

struct OracleEntry {
    std::string query_id;
    std::string default_fingerprint;
    double default_time = 0.0;
    std::string oracle_fingerprint;
    double oracle_time = 0.0;
    bool exhaustive = false; // false: subset DP under the true profile

    double improvement() const;
};

/// Best plan under the true profile. Exhaustive enumeration when the query
/// has at most enumeration_cap tables, otherwise the optimizer's DP run on
/// the true cost model (exact for this cost family).
OracleEntry oracle_query(const QuerySpec& query, const TrueCostProfile& profile, const CostUnitVector& defaults,
                         std::size_t enumeration_cap = default_enumeration_cap);

struct OracleReport {
    std::vector<OracleEntry> entries;
    double workload_default_time = 0.0;
    double workload_oracle_time = 0.0;

    double improvement() const;
    std::size_t improvable(double min_gain = 1e-9) const;
};

OracleReport oracle_workload(const WorkloadFile& w, std::size_t enumeration_cap = default_enumeration_cap);
nlohmann::json to_json(const OracleReport& r);

struct SweepSpec {
    std::vector<double> budgets;
    std::vector<SchedulerKind> schedulers;
    std::uint64_t seed = 0;
    SearcherKind searcher = SearcherKind::random;
    std::size_t grid_k = 3;
    WtOptions options;
};

/// Throws InvalidArgument unless budgets are non-empty, positive and strictly ascending.
void validate(const SweepSpec& s);

struct SweepCell {
    SchedulerKind scheduler = SchedulerKind::round_robin;
    double budget = 0.0;
    std::optional<WtResult> result;
    std::string error;
};

/// One independent session per (scheduler, budget), all seeded with
/// sweep.seed exactly as tune_workload would be. Cells run on up to
/// `threads` workers; a failing cell records its error and the rest carry on.
std::vector<SweepCell> run_sweep(const WorkloadFile& w, const SweepSpec& sweep, std::size_t threads = 0);

/// The single-session call each sweep cell makes.
WtResult run_session(const WorkloadFile& w, double budget, SchedulerKind scheduler, SearcherKind searcher,
                     std::uint64_t seed, const WtOptions& options = {}, std::size_t grid_k = 3);

/// scheduler,budget_s,spent_s,workload_default_s,workload_best_s,improvement_fraction,error
std::string sweep_summary_csv(const std::vector<SweepCell>& cells);
/// scheduler,budget_s,spent_seconds,improvement_fraction
std::string sweep_curves_csv(const std::vector<SweepCell>& cells);

} // namespace costtune
