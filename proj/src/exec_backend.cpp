#include "costtune/exec_backend.hpp"

#include <cmath>

#include "costtune/errors.hpp"

namespace costtune {

namespace {

constexpr OperatorKind all_kinds[] = {OperatorKind::seq_scan, OperatorKind::index_scan, OperatorKind::nested_loop,
                                      OperatorKind::hash_join};

double& weight_ref(OperatorWeights& w, OperatorKind kind) {
    switch (kind) {
    case OperatorKind::seq_scan: return w.seq_scan;
    case OperatorKind::index_scan: return w.index_scan;
    case OperatorKind::nested_loop: return w.nested_loop;
    case OperatorKind::hash_join: return w.hash_join;
    }
    return w.seq_scan;
}

} // namespace

TrueCostProfile TrueCostProfile::identity(const CostUnitVector& defaults) {
    return TrueCostProfile{defaults, {}, 1.0};
}

OperatorWeights TrueCostProfile::weights_for(const std::string& query_id) const {
    auto it = multipliers.find(query_id);
    return it == multipliers.end() ? OperatorWeights{} : it->second;
}

void TrueCostProfile::validate() const {
    if (!(time_scale > 0.0) || !std::isfinite(time_scale)) throw InvalidArgument("time_scale must be positive");
    for (const auto& [id, w] : multipliers) {
        for (auto kind : all_kinds) {
            const double m = w.of(kind);
            if (!(m > 0.0) || !std::isfinite(m)) {
                throw InvalidArgument("multiplier for query '" + id + "' operator " + std::string(to_string(kind)) +
                                      " must be positive");
            }
        }
    }
}

nlohmann::json to_json(const TrueCostProfile& p) {
    auto mult = nlohmann::json::object();
    for (const auto& [id, w] : p.multipliers) {
        auto entry = nlohmann::json::object();
        for (auto kind : all_kinds) entry[std::string(to_string(kind))] = w.of(kind);
        mult[id] = std::move(entry);
    }
    return {{"true_units", to_json(p.true_units)}, {"time_scale", p.time_scale}, {"multipliers", std::move(mult)}};
}

TrueCostProfile profile_from_json(const nlohmann::json& j, const CostUnitVector& layout) {
    if (!j.is_object()) throw LoadError("true_profile: expected an object");
    TrueCostProfile p;
    p.true_units = j.contains("true_units") ? cost_units_from_json(j.at("true_units"), layout) : layout;
    if (j.contains("time_scale")) {
        if (!j.at("time_scale").is_number()) throw LoadError("true_profile: 'time_scale' is not a number");
        p.time_scale = j.at("time_scale").get<double>();
    }
    if (j.contains("multipliers")) {
        const auto& m = j.at("multipliers");
        if (!m.is_object()) throw LoadError("true_profile: 'multipliers' must be an object keyed by query id");
        for (const auto& [id, entry] : m.items()) {
            if (!entry.is_object()) throw LoadError("true_profile: multipliers['" + id + "'] must be an object");
            OperatorWeights w;
            for (const auto& [kind_name, value] : entry.items()) {
                auto kind = parse_operator_kind(kind_name);
                if (!kind) throw LoadError("true_profile: multipliers['" + id + "'] has unknown operator '" + kind_name + "'");
                if (!value.is_number()) throw LoadError("true_profile: multipliers['" + id + "']." + kind_name + " is not a number");
                weight_ref(w, *kind) = value.get<double>();
            }
            p.multipliers.emplace(id, w);
        }
    }
    try {
        p.validate();
    } catch (const InvalidArgument& e) {
        throw LoadError(std::string("true_profile: ") + e.what());
    }
    return p;
}

double true_time(const Plan& plan, const QuerySpec& query, const TrueCostProfile& profile) {
    const auto cost = plan_cost(plan, query, CostRates::from(profile.true_units), profile.weights_for(query.id));
    return cost.total * profile.time_scale;
}

std::string Backend::explain(const QuerySpec& query, const CostUnitVector& units) {
    return optimize(query, units).plan.fingerprint();
}

SimulatedBackend::SimulatedBackend(TrueCostProfile profile) : profile_(std::move(profile)) {
    profile_.validate();
}

ExecutionResult SimulatedBackend::execute(const ExecutionRequest& req) {
    const auto chosen = optimize(req.query, req.units);
    ExecutionResult out;
    out.plan_fingerprint = chosen.plan.fingerprint();
    out.true_time = true_time(chosen.plan, req.query, profile_);
    if (req.early_stop_threshold && out.true_time >= *req.early_stop_threshold) {
        out.stopped_early = true;
        out.observed_time = out.charged_time = *req.early_stop_threshold;
    } else {
        out.observed_time = out.charged_time = out.true_time;
    }
    return out;
}

ExecutionResult execute(const ExecutionRequest& request, Backend& backend) {
    if (request.early_stop_threshold && !(*request.early_stop_threshold >= 0.0)) {
        throw InvalidArgument("early-stop threshold must be >= 0");
    }
    return backend.execute(request);
}

nlohmann::json to_json(const WireResponse& r) {
    return {{"plan_fingerprint", r.plan_fingerprint}, {"exec_ms", r.exec_ms}, {"timed_out", r.timed_out}};
}

WireResponse parse_wire_response(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw BackendError("malformed backend response '" + line + "': " + e.what());
    }
    if (!j.is_object() || !j.contains("plan_fingerprint") || !j.contains("exec_ms") || !j.contains("timed_out") ||
        !j["plan_fingerprint"].is_string() || !j["exec_ms"].is_number() || !j["timed_out"].is_boolean()) {
        throw BackendError("backend response lacks plan_fingerprint/exec_ms/timed_out: " + line);
    }
    WireResponse r{j["plan_fingerprint"].get<std::string>(), j["exec_ms"].get<double>(), j["timed_out"].get<bool>()};
    if (!(r.exec_ms >= 0.0)) throw BackendError("backend reported negative exec_ms: " + line);
    return r;
}

} // namespace costtune
