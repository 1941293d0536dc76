#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace costtune {

namespace unit_names {
inline constexpr std::string_view seq_page_cost = "seq_page_cost";
inline constexpr std::string_view random_page_cost = "random_page_cost";
inline constexpr std::string_view cpu_tuple_cost = "cpu_tuple_cost";
inline constexpr std::string_view cpu_index_tuple_cost = "cpu_index_tuple_cost";
inline constexpr std::string_view cpu_operator_cost = "cpu_operator_cost";
inline constexpr std::string_view parallel_tuple_cost = "parallel_tuple_cost";
} // namespace unit_names

struct CostUnit {
    std::string name;
    double default_value = 0.0;
};

/// Ordered (name, value) list of optimizer cost units. Values are strictly
/// positive and names unique; every vector of one tuning session shares the
/// same layout (arity and name order).
class CostUnitVector {
public:
    CostUnitVector() = default;
    explicit CostUnitVector(const std::vector<CostUnit>& units);
    CostUnitVector(std::vector<std::string> names, std::vector<double> values);

    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    const std::string& name(std::size_t i) const { return names_.at(i); }
    double value(std::size_t i) const { return values_.at(i); }
    std::span<const double> values() const noexcept { return values_; }
    const std::vector<std::string>& names() const noexcept { return names_; }

    std::optional<std::size_t> index_of(std::string_view name) const noexcept;
    /// Throws InvalidArgument for unknown names.
    double at(std::string_view name) const;
    void set(std::string_view name, double value);
    void set(std::size_t i, double value);

    /// Every component multiplied by alpha > 0.
    CostUnitVector scaled(double alpha) const;
    bool same_layout(const CostUnitVector& other) const noexcept { return names_ == other.names_; }

    friend bool operator==(const CostUnitVector&, const CostUnitVector&) = default;

private:
    std::vector<std::string> names_;
    std::vector<double> values_;
};

/// PostgreSQL's six planner cost units with their built-in defaults, in
/// canonical order.
CostUnitVector default_vector();

struct Interval {
    std::string name;
    double low = 0.0;
    double high = 0.0;

    bool contains(double v) const noexcept { return low <= v && v <= high; }
};

/// Product of per-unit closed intervals, ordered like the session's vectors.
class SearchSpace {
public:
    SearchSpace() = default;
    explicit SearchSpace(std::vector<Interval> intervals);

    std::size_t size() const noexcept { return intervals_.size(); }
    const Interval& operator[](std::size_t i) const { return intervals_.at(i); }
    const std::vector<Interval>& intervals() const noexcept { return intervals_; }

    bool contains(const CostUnitVector& v) const noexcept;

    friend bool operator==(const SearchSpace&, const SearchSpace&) = default;

private:
    std::vector<Interval> intervals_;
};

/// [low_mult * c_d, high_mult * c_d] around every default c_d.
SearchSpace make_search_space(const CostUnitVector& defaults, double low_mult = 0.1, double high_mult = 10.0);

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) built from the top 53 bits, identical on every
/// standard library (std::uniform_real_distribution is not).
double uniform01(Rng& rng);

/// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// One log-uniform draw per dimension. Zero-width intervals return their bound exactly.
CostUnitVector sample_log_uniform(const SearchSpace& space, Rng& rng);

inline constexpr std::size_t default_grid_cap = 1'000'000;

/// k geometrically spaced points per dimension (endpoints inclusive, k = 1
/// gives the geometric midpoint), Cartesian product in lexicographic order
/// with the first dimension varying slowest.
std::vector<CostUnitVector> grid_points(const SearchSpace& space, std::size_t k, std::size_t cap = default_grid_cap);

/// The value of grid coordinate `i` of `k` on one interval.
double grid_coordinate(const Interval& interval, std::size_t i, std::size_t k);

nlohmann::json to_json(const CostUnitVector& v);
/// Reads {name: value} restoring the order of `layout`. Unknown or missing
/// names and non-positive values raise LoadError.
CostUnitVector cost_units_from_json(const nlohmann::json& j, const CostUnitVector& layout);

} // namespace costtune
