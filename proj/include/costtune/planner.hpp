#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "costtune/cost_units.hpp"
#include "json.hpp"

namespace costtune {

enum class ScanMethod { sequential, index };
enum class JoinMethod { nested_loop, hash };

/// Physical operator kinds; the simulator keys its per-query multipliers on these.
enum class OperatorKind { seq_scan, index_scan, nested_loop, hash_join };

inline constexpr std::size_t operator_kind_count = 4;

std::string_view to_string(OperatorKind kind) noexcept;
std::optional<OperatorKind> parse_operator_kind(std::string_view s) noexcept;

struct TableSpec {
    std::string name;
    std::int64_t rows = 1;
    std::int64_t pages = 1;
    bool has_index = false;

    friend bool operator==(const TableSpec&, const TableSpec&) = default;
};

struct QueryTable {
    TableSpec table;
    double filter_sel = 1.0;

    friend bool operator==(const QueryTable&, const QueryTable&) = default;
};

struct JoinEdge {
    std::string a;
    std::string b;
    double sel = 1.0;

    friend bool operator==(const JoinEdge&, const JoinEdge&) = default;
};

/// A select-project-join query: tables with local filter selectivities and a
/// connected graph of equi-join edges.
struct QuerySpec {
    std::string id;
    std::vector<QueryTable> tables;
    std::vector<JoinEdge> joins;

    std::optional<std::size_t> table_index(std::string_view name) const noexcept;

    friend bool operator==(const QuerySpec&, const QuerySpec&) = default;
};

/// Largest query the subset DP accepts.
inline constexpr std::size_t max_query_tables = 16;

/// Throws InvalidQuery naming the offending table, edge or selectivity.
void validate(const QuerySpec& query);

/// Bit i set means query.tables[i] is in the subset.
using TableMask = std::uint32_t;

struct PlanNode {
    bool is_scan = true;
    ScanMethod scan = ScanMethod::sequential;
    JoinMethod join = JoinMethod::hash;
    std::string table;
    std::shared_ptr<const PlanNode> left;
    std::shared_ptr<const PlanNode> right;
};

/// Immutable operator tree. Subtrees are shared between plans, so copying a
/// Plan is cheap.
class Plan {
public:
    static Plan scan(std::string table, ScanMethod method);
    static Plan join(JoinMethod method, const Plan& outer, const Plan& inner);

    const PlanNode& root() const noexcept { return *root_; }
    const std::shared_ptr<const PlanNode>& root_ptr() const noexcept { return root_; }
    const std::string& fingerprint() const noexcept { return fingerprint_; }

    friend bool operator==(const Plan& a, const Plan& b) noexcept { return a.fingerprint_ == b.fingerprint_; }

private:
    Plan(std::shared_ptr<const PlanNode> root, std::string fp) : root_(std::move(root)), fingerprint_(std::move(fp)) {}

    std::shared_ptr<const PlanNode> root_;
    std::string fingerprint_;
};

/// Canonical pre-order serialization, e.g. "Join(hash,Scan(seq,A),Scan(idx,B))".
const std::string& fingerprint(const Plan& plan) noexcept;

/// Rebuilds a plan from its fingerprint. Throws InvalidPlan on malformed input.
Plan parse_fingerprint(std::string_view fp);

struct PlanCost {
    double total = 0.0;
    double output_rows = 0.0;
};

/// The cost-unit values the formulas consume, pulled out of a CostUnitVector
/// once so hot loops avoid name lookups.
struct CostRates {
    double seq_page = 0.0;
    double random_page = 0.0;
    double cpu_tuple = 0.0;
    double cpu_index_tuple = 0.0;
    double cpu_operator = 0.0;

    static CostRates from(const CostUnitVector& units);
};

/// Per-operator-kind multipliers on each operator's own cost terms. All 1 for
/// the optimizer's estimates.
struct OperatorWeights {
    double seq_scan = 1.0;
    double index_scan = 1.0;
    double nested_loop = 1.0;
    double hash_join = 1.0;

    double of(OperatorKind kind) const noexcept;
};

double estimate_cardinality(const QuerySpec& query, TableMask subset);
double estimate_cardinality(const QuerySpec& query, std::span<const std::string> subset);

PlanCost cost_scan(const TableSpec& table, double filter_sel, ScanMethod method, const CostUnitVector& units);
PlanCost cost_scan(const TableSpec& table, double filter_sel, ScanMethod method, const CostRates& rates,
                   double weight = 1.0);

/// `outer` is the left input. For nested loop the inner is re-costed once per outer row.
PlanCost cost_join(const PlanCost& outer, const PlanCost& inner, double output_rows, JoinMethod method,
                   const CostUnitVector& units);
PlanCost cost_join(const PlanCost& outer, const PlanCost& inner, double output_rows, JoinMethod method,
                   const CostRates& rates, double weight = 1.0);

/// Cost of an arbitrary plan for `query`. Throws InvalidPlan if the plan does
/// not cover the query's tables exactly once or uses a missing index.
PlanCost plan_cost(const Plan& plan, const QuerySpec& query, const CostUnitVector& units);
PlanCost plan_cost(const Plan& plan, const QuerySpec& query, const CostRates& rates, const OperatorWeights& weights);

struct OptimizedPlan {
    Plan plan;
    PlanCost cost;
};

/// Cheapest left-deep plan without cross products, found by dynamic
/// programming over connected table subsets. Ties go to the smallest
/// fingerprint.
OptimizedPlan optimize(const QuerySpec& query, const CostUnitVector& units);
OptimizedPlan optimize(const QuerySpec& query, const CostRates& rates, const OperatorWeights& weights);

inline constexpr std::size_t default_enumeration_cap = 4;

/// Every left-deep plan: table orders whose every prefix is connected, times
/// per-leaf scan methods, times per-join join methods. Test oracle for optimize.
std::vector<Plan> enumerate_all_plans(const QuerySpec& query, std::size_t table_cap = default_enumeration_cap);

nlohmann::json to_json(const QuerySpec& query);
/// Parses and validates; errors are LoadError naming the field.
QuerySpec query_from_json(const nlohmann::json& j);

} // namespace costtune
