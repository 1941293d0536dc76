#include "costtune/cost_units.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "costtune/errors.hpp"

namespace costtune {

namespace {

void check_positive(std::string_view name, double v) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw InvalidArgument("cost unit '" + std::string(name) + "' must be a finite positive value");
    }
}

std::vector<std::string> unit_names_of(const std::vector<CostUnit>& units) {
    std::vector<std::string> out;
    for (const auto& u : units) out.push_back(u.name);
    return out;
}

std::vector<double> unit_values_of(const std::vector<CostUnit>& units) {
    std::vector<double> out;
    for (const auto& u : units) out.push_back(u.default_value);
    return out;
}

} // namespace

CostUnitVector::CostUnitVector(const std::vector<CostUnit>& units)
    : CostUnitVector(unit_names_of(units), unit_values_of(units)) {}

CostUnitVector::CostUnitVector(std::vector<std::string> names, std::vector<double> values)
    : names_(std::move(names)), values_(std::move(values)) {
    if (names_.size() != values_.size()) {
        throw InvalidArgument("cost unit names and values differ in length");
    }
    std::unordered_set<std::string_view> seen;
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i].empty()) throw InvalidArgument("cost unit name must be non-empty");
        if (!seen.insert(names_[i]).second) {
            throw InvalidArgument("duplicate cost unit '" + names_[i] + "'");
        }
        check_positive(names_[i], values_[i]);
    }
}

std::optional<std::size_t> CostUnitVector::index_of(std::string_view name) const noexcept {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == name) return i;
    }
    return std::nullopt;
}

double CostUnitVector::at(std::string_view name) const {
    auto i = index_of(name);
    if (!i) throw InvalidArgument("unknown cost unit '" + std::string(name) + "'");
    return values_[*i];
}

void CostUnitVector::set(std::string_view name, double value) {
    auto i = index_of(name);
    if (!i) throw InvalidArgument("unknown cost unit '" + std::string(name) + "'");
    set(*i, value);
}

void CostUnitVector::set(std::size_t i, double value) {
    check_positive(names_.at(i), value);
    values_[i] = value;
}

CostUnitVector CostUnitVector::scaled(double alpha) const {
    if (!(alpha > 0.0)) throw InvalidArgument("scale factor must be positive");
    auto out = *this;
    for (std::size_t i = 0; i < out.values_.size(); ++i) out.set(i, values_[i] * alpha);
    return out;
}

CostUnitVector default_vector() {
    return CostUnitVector(std::vector<CostUnit>{
        {std::string(unit_names::seq_page_cost), 1.0},
        {std::string(unit_names::random_page_cost), 4.0},
        {std::string(unit_names::cpu_tuple_cost), 0.01},
        {std::string(unit_names::cpu_index_tuple_cost), 0.005},
        {std::string(unit_names::cpu_operator_cost), 0.0025},
        {std::string(unit_names::parallel_tuple_cost), 0.1},
    });
}

SearchSpace::SearchSpace(std::vector<Interval> intervals) : intervals_(std::move(intervals)) {
    std::unordered_set<std::string_view> seen;
    for (const auto& iv : intervals_) {
        if (!seen.insert(iv.name).second) throw InvalidArgument("duplicate interval '" + iv.name + "'");
        if (!(iv.low > 0.0) || !(iv.low <= iv.high) || !std::isfinite(iv.high)) {
            throw InvalidArgument("interval '" + iv.name + "' must satisfy 0 < low <= high");
        }
    }
}

bool SearchSpace::contains(const CostUnitVector& v) const noexcept {
    if (v.size() != intervals_.size()) return false;
    for (std::size_t i = 0; i < intervals_.size(); ++i) {
        if (v.name(i) != intervals_[i].name || !intervals_[i].contains(v.value(i))) return false;
    }
    return true;
}

SearchSpace make_search_space(const CostUnitVector& defaults, double low_mult, double high_mult) {
    if (!(low_mult > 0.0) || !(high_mult > 0.0)) throw InvalidArgument("search-space multipliers must be positive");
    if (low_mult > high_mult) throw InvalidArgument("low multiplier exceeds high multiplier");
    std::vector<Interval> intervals;
    intervals.reserve(defaults.size());
    for (std::size_t i = 0; i < defaults.size(); ++i) {
        intervals.push_back({defaults.name(i), low_mult * defaults.value(i), high_mult * defaults.value(i)});
    }
    return SearchSpace(std::move(intervals));
}

double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

CostUnitVector sample_log_uniform(const SearchSpace& space, Rng& rng) {
    std::vector<std::string> names;
    std::vector<double> values;
    names.reserve(space.size());
    values.reserve(space.size());
    for (const auto& iv : space.intervals()) {
        const double u = uniform01(rng);
        double v = iv.low;
        if (iv.high > iv.low) {
            const double lo = std::log(iv.low);
            v = std::exp(lo + u * (std::log(iv.high) - lo));
            v = std::clamp(v, iv.low, iv.high);
        }
        names.push_back(iv.name);
        values.push_back(v);
    }
    return CostUnitVector(std::move(names), std::move(values));
}

double grid_coordinate(const Interval& iv, std::size_t i, std::size_t k) {
    if (k == 0 || i >= k) throw InvalidArgument("grid coordinate out of range");
    if (k == 1) return std::clamp(std::sqrt(iv.low * iv.high), iv.low, iv.high);
    if (i == 0) return iv.low;
    if (i + 1 == k) return iv.high;
    const double t = static_cast<double>(i) / static_cast<double>(k - 1);
    return std::clamp(iv.low * std::pow(iv.high / iv.low, t), iv.low, iv.high);
}

std::vector<CostUnitVector> grid_points(const SearchSpace& space, std::size_t k, std::size_t cap) {
    if (k == 0) throw InvalidArgument("grid resolution k must be >= 1");
    std::size_t total = 1;
    for (std::size_t d = 0; d < space.size(); ++d) {
        if (total > cap / k) throw TooLarge("grid of " + std::to_string(k) + "^" + std::to_string(space.size()) +
                                            " points exceeds cap " + std::to_string(cap));
        total *= k;
    }
    std::vector<std::string> names;
    for (const auto& iv : space.intervals()) names.push_back(iv.name);

    std::vector<std::vector<double>> axes;
    for (const auto& iv : space.intervals()) {
        std::vector<double> axis(k);
        for (std::size_t i = 0; i < k; ++i) axis[i] = grid_coordinate(iv, i, k);
        axes.push_back(std::move(axis));
    }

    std::vector<CostUnitVector> out;
    out.reserve(total);
    std::vector<std::size_t> idx(space.size(), 0);
    for (std::size_t n = 0; n < total; ++n) {
        std::vector<double> values(space.size());
        for (std::size_t d = 0; d < space.size(); ++d) values[d] = axes[d][idx[d]];
        out.emplace_back(names, std::move(values));
        // odometer, last dimension fastest
        for (std::size_t d = space.size(); d-- > 0;) {
            if (++idx[d] < k) break;
            idx[d] = 0;
        }
    }
    return out;
}

nlohmann::json to_json(const CostUnitVector& v) {
    auto j = nlohmann::json::object();
    for (std::size_t i = 0; i < v.size(); ++i) j[v.name(i)] = v.value(i);
    return j;
}

CostUnitVector cost_units_from_json(const nlohmann::json& j, const CostUnitVector& layout) {
    if (!j.is_object()) throw LoadError("cost units: expected a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (!layout.index_of(key)) throw LoadError("cost units: unknown cost unit '" + key + "'");
    }
    std::vector<double> values(layout.size());
    for (std::size_t i = 0; i < layout.size(); ++i) {
        auto it = j.find(layout.name(i));
        if (it == j.end()) throw LoadError("cost units: missing cost unit '" + layout.name(i) + "'");
        if (!it->is_number()) throw LoadError("cost units: '" + layout.name(i) + "' is not a number");
        values[i] = it->get<double>();
        if (!(values[i] > 0.0)) throw LoadError("cost units: '" + layout.name(i) + "' must be positive");
    }
    return CostUnitVector(layout.names(), std::move(values));
}

} // namespace costtune
