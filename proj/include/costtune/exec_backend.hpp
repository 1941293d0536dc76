#pragma once

#include <map>
#include <optional>
#include <string>
#include <sys/types.h>
#include <vector>

#include "costtune/cost_units.hpp"
#include "costtune/planner.hpp"
#include "json.hpp"

namespace costtune {

/// Hidden ground truth of the simulator: the "real" unit costs, per-query
/// operator slowdowns, and the seconds each abstract cost unit takes.
struct TrueCostProfile {
    CostUnitVector true_units;
    /// Keyed by query id; queries without an entry use all-1 weights.
    std::map<std::string, OperatorWeights> multipliers;
    double time_scale = 1.0;

    /// true_units = defaults, no multipliers, time_scale = 1.
    static TrueCostProfile identity(const CostUnitVector& defaults);

    OperatorWeights weights_for(const std::string& query_id) const;
    /// Throws InvalidArgument on non-positive multipliers or time_scale.
    void validate() const;
};

nlohmann::json to_json(const TrueCostProfile& profile);
TrueCostProfile profile_from_json(const nlohmann::json& j, const CostUnitVector& layout);

/// Simulated wall-clock seconds of `plan`: the planner's formulas under the
/// true units, each operator's own terms scaled by its multiplier, times
/// time_scale.
double true_time(const Plan& plan, const QuerySpec& query, const TrueCostProfile& profile);

struct ExecutionRequest {
    const QuerySpec& query;
    CostUnitVector units;
    std::optional<double> early_stop_threshold;
};

struct ExecutionResult {
    std::string plan_fingerprint;
    /// Untruncated time. Only the simulator knows it; other backends report observed_time.
    double true_time = 0.0;
    double observed_time = 0.0;
    double charged_time = 0.0;
    bool stopped_early = false;
};

/// Something that can plan and run a query under given cost units.
class Backend {
public:
    virtual ~Backend() = default;

    /// Fingerprint of the plan the engine would pick. The default asks the
    /// built-in planner.
    virtual std::string explain(const QuerySpec& query, const CostUnitVector& units);

    /// Runs the plan, killing it once it reaches the threshold.
    virtual ExecutionResult execute(const ExecutionRequest& request) = 0;
};

/// Deterministic simulator; pure and reentrant.
class SimulatedBackend final : public Backend {
public:
    explicit SimulatedBackend(TrueCostProfile profile);

    ExecutionResult execute(const ExecutionRequest& request) override;
    const TrueCostProfile& profile() const noexcept { return profile_; }

private:
    TrueCostProfile profile_;
};

/// Validates the threshold, then forwards to the backend.
ExecutionResult execute(const ExecutionRequest& request, Backend& backend);

/// Talks newline-delimited JSON to a child process over its stdin/stdout:
///   -> {"query_id": str, "cost_units": {name: float}, "timeout_ms": int|null}
///   <- {"plan_fingerprint": str, "exec_ms": float, "timed_out": bool}
/// One request in flight at a time. Malformed replies or child exit raise
/// BackendError.
class SubprocessBackend final : public Backend {
public:
    explicit SubprocessBackend(std::vector<std::string> argv);
    ~SubprocessBackend() override;

    SubprocessBackend(const SubprocessBackend&) = delete;
    SubprocessBackend& operator=(const SubprocessBackend&) = delete;

    ExecutionResult execute(const ExecutionRequest& request) override;

    /// The request line sent for `request`, without the trailing newline.
    static std::string encode_request(const ExecutionRequest& request);

private:
    void write_line(const std::string& line);
    std::string read_line();
    std::string child_status();

    std::vector<std::string> argv_;
    pid_t pid_ = -1;
    int to_child_ = -1;
    FILE* from_child_ = nullptr;
};

/// Reply half of the protocol, shared by the simulator server.
struct WireResponse {
    std::string plan_fingerprint;
    double exec_ms = 0.0;
    bool timed_out = false;
};

nlohmann::json to_json(const WireResponse& r);
/// Throws BackendError on malformed input.
WireResponse parse_wire_response(const std::string& line);

} // namespace costtune
