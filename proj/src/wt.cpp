#include "costtune/wt.hpp"

#include <numeric>
#include <sstream>
#include <unordered_set>

#include "costtune/csv.hpp"
#include "costtune/errors.hpp"

namespace costtune {

std::size_t WorkloadState::total_trials() const noexcept {
    std::size_t n = 0;
    for (const auto& s : stats) n += s.f_q;
    return n;
}

std::optional<SchedulerKind> parse_scheduler_kind(std::string_view s) noexcept {
    if (s == "rr" || s == "round_robin") return SchedulerKind::round_robin;
    if (s == "cost" || s == "cost_based") return SchedulerKind::cost_based;
    if (s == "ucb") return SchedulerKind::ucb;
    if (s == "rate" || s == "improvement_rate") return SchedulerKind::improvement_rate;
    return std::nullopt;
}

std::string_view to_string(SchedulerKind kind) noexcept {
    switch (kind) {
    case SchedulerKind::round_robin: return "round_robin";
    case SchedulerKind::cost_based: return "cost_based";
    case SchedulerKind::ucb: return "ucb";
    case SchedulerKind::improvement_rate: return "improvement_rate";
    }
    return "?";
}

double reward(double t, double t0) {
    if (!(t0 > 0.0)) throw InvalidArgument("reward needs a positive default time");
    return std::max(1.0 - t / t0, 0.0);
}

double improvement_rate(const QueryStats& s) {
    if (s.f_q == 0) throw InvalidArgument("improvement rate of query '" + s.query_id + "' is undefined before its first trial");
    return std::max(s.default_time - s.best_time, 0.0) / static_cast<double>(s.f_q);
}

double ucb_score(const QueryStats& s, std::size_t total_trials, double lambda) {
    if (s.f_q == 0) throw InvalidArgument("UCB score of query '" + s.query_id + "' is undefined before its first trial");
    const double f = static_cast<double>(s.f_q);
    const double mean = std::accumulate(s.reward_history.begin(), s.reward_history.end(), 0.0) / f;
    return mean + lambda * std::sqrt(std::log(static_cast<double>(total_trials)) / f);
}

namespace {

std::optional<std::size_t> first_unvisited(const WorkloadState& state) {
    for (std::size_t i = 0; i < state.stats.size(); ++i) {
        if (!state.stats[i].exhausted && state.stats[i].f_q == 0) return i;
    }
    return std::nullopt;
}

/// First index attaining the maximum of score over active queries.
template <typename Score>
std::optional<std::size_t> argmax_active(const WorkloadState& state, Score score) {
    std::optional<std::size_t> best;
    double best_score = 0.0;
    for (std::size_t i = 0; i < state.stats.size(); ++i) {
        if (state.stats[i].exhausted) continue;
        const double s = score(state.stats[i]);
        if (!best || s > best_score) {
            best = i;
            best_score = s;
        }
    }
    return best;
}

} // namespace

std::optional<std::size_t> schedule_round_robin(WorkloadState& state) {
    const std::size_t n = state.stats.size();
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = (state.round_robin_cursor + k) % n;
        if (state.stats[i].exhausted) continue;
        state.round_robin_cursor = (i + 1) % n;
        return i;
    }
    return std::nullopt;
}

std::optional<std::size_t> schedule_cost_based(const WorkloadState& state) {
    return argmax_active(state, [](const QueryStats& s) { return s.best_time; });
}

std::optional<std::size_t> schedule_ucb(const WorkloadState& state, double lambda) {
    if (auto i = first_unvisited(state)) return i;
    const std::size_t n = state.total_trials();
    return argmax_active(state, [&](const QueryStats& s) { return ucb_score(s, n, lambda); });
}

std::optional<std::size_t> schedule_improvement_rate(const WorkloadState& state) {
    if (auto i = first_unvisited(state)) return i;
    return argmax_active(state, [](const QueryStats& s) { return improvement_rate(s); });
}

std::optional<std::size_t> schedule(SchedulerKind kind, WorkloadState& state, double ucb_lambda) {
    switch (kind) {
    case SchedulerKind::round_robin: return schedule_round_robin(state);
    case SchedulerKind::cost_based: return schedule_cost_based(state);
    case SchedulerKind::ucb: return schedule_ucb(state, ucb_lambda);
    case SchedulerKind::improvement_rate: return schedule_improvement_rate(state);
    }
    return std::nullopt;
}

SearcherFactory seeded_searchers(SearcherKind kind, const SearchSpace& space, std::uint64_t seed, std::size_t grid_k) {
    return [kind, space, seed, grid_k](std::size_t index, const QuerySpec&) {
        return make_searcher(kind, space, mix_seed(seed, index), grid_k);
    };
}

double WtResult::improvement() const {
    if (!(workload_default_time > 0.0)) return 0.0;
    return percentage_improvement(workload_default_time, workload_best_time);
}

namespace {

double workload_improvement(const std::vector<QueryTuner>& tuners) {
    double def = 0.0;
    double best = 0.0;
    for (const auto& t : tuners) {
        if (!t.baseline_done()) continue;
        def += t.default_time();
        best += t.best_time();
    }
    return def > 0.0 ? percentage_improvement(def, best) : 0.0;
}

} // namespace

WtResult tune_workload(std::span<const QuerySpec> workload, const SearchSpace& space, double budget,
                       SchedulerKind scheduler, const SearcherFactory& searchers, Backend& backend,
                       const WtOptions& options) {
    if (!(budget > 0.0) || !std::isfinite(budget)) throw InvalidArgument("budget must be positive");
    if (workload.empty()) throw InvalidArgument("workload is empty");
    check_layout(space, options.query_options.defaults);
    std::unordered_set<std::string> ids;
    for (const auto& q : workload) {
        validate(q);
        if (!ids.insert(q.id).second) throw InvalidArgument("duplicate query id '" + q.id + "'");
    }

    WorkloadState state;
    state.ledger = BudgetLedger(budget);
    std::vector<QueryTuner> tuners;
    tuners.reserve(workload.size());
    for (std::size_t i = 0; i < workload.size(); ++i) {
        tuners.emplace_back(workload[i], searchers(i, workload[i]), options.query_options);
        QueryStats s;
        s.query_id = workload[i].id;
        state.stats.push_back(std::move(s));
    }

    WtResult result;
    result.scheduler = std::string(to_string(scheduler));

    for (std::size_t i = 0; i < tuners.size(); ++i) {
        if (state.ledger.exhausted()) {
            result.calibration_incomplete = true;
            break;
        }
        const auto& rec = tuners[i].run_baseline(backend, state.ledger);
        result.trial_log.push_back({workload[i].id, "calibration", rec, 0.0});
        auto& s = state.stats[i];
        s.default_time = s.best_time = tuners[i].default_time();
        s.best_units = tuners[i].best_units();
        s.exhausted = tuners[i].finished();
        if (tuners[i].baseline_incomplete()) {
            result.calibration_incomplete = true;
            break;
        }
    }

    if (!result.calibration_incomplete) {
        result.curve.push_back({state.ledger.spent(), workload_improvement(tuners)});
        std::size_t trials = 0;
        while (!state.ledger.exhausted()) {
            if (options.max_total_trials && trials >= *options.max_total_trials) break;
            const auto pick = schedule(scheduler, state, options.ucb_lambda);
            if (!pick) break;
            auto& tuner = tuners[*pick];
            auto& s = state.stats[*pick];
            const TrialRecord* rec = tuner.run_trial(backend, state.ledger);
            if (!rec) {
                s.exhausted = true;
                continue;
            }
            ++trials;
            // A stopped trial was no faster than the best so far; it earns nothing.
            const double r = rec->stopped_early ? 0.0 : reward(rec->observed_time, s.default_time);
            ++s.f_q;
            s.reward_history.push_back(r);
            s.best_time = tuner.best_time();
            s.best_units = tuner.best_units();
            s.exhausted = tuner.finished();
            result.trial_log.push_back({s.query_id, result.scheduler, *rec, r});
            result.curve.push_back({state.ledger.spent(), workload_improvement(tuners)});
        }
    }

    for (std::size_t i = 0; i < tuners.size(); ++i) {
        const auto& t = tuners[i];
        QueryOutcome o;
        o.query_id = workload[i].id;
        o.calibrated = t.baseline_done() && !t.baseline_incomplete();
        o.trials = state.stats[i].f_q;
        if (t.baseline_done()) {
            o.best_units = t.best_units();
            o.default_time = t.default_time();
            o.best_time = t.best_time();
            o.improvement = o.default_time > 0.0 ? percentage_improvement(o.default_time, o.best_time) : 0.0;
            o.default_fingerprint = t.default_fingerprint();
            o.best_fingerprint = t.best_fingerprint();
            result.workload_default_time += o.default_time;
            result.workload_best_time += o.best_time;
        }
        result.per_query.push_back(std::move(o));
    }
    result.ledger = state.ledger;
    return result;
}

nlohmann::json to_json(const WtResult& r) {
    nlohmann::json per_query = nlohmann::json::array();
    for (const auto& o : r.per_query) {
        per_query.push_back({{"query_id", o.query_id},
                             {"calibrated", o.calibrated},
                             {"best_units", o.best_units.empty() ? nlohmann::json(nullptr) : to_json(o.best_units)},
                             {"default_time_s", o.default_time},
                             {"best_time_s", o.best_time},
                             {"improvement", o.improvement},
                             {"trials", o.trials},
                             {"default_fingerprint", o.default_fingerprint},
                             {"best_fingerprint", o.best_fingerprint}});
    }
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& p : r.curve) curve.push_back({{"spent_s", p.spent}, {"improvement", p.improvement}});
    nlohmann::json trials = nlohmann::json::array();
    for (const auto& t : r.trial_log) {
        trials.push_back({{"query_id", t.query_id}, {"scheduler", t.scheduler}, {"reward", t.reward}, {"record", to_json(t.record)}});
    }
    return {{"scheduler", r.scheduler},
            {"workload_default_time_s", r.workload_default_time},
            {"workload_best_time_s", r.workload_best_time},
            {"improvement", r.improvement()},
            {"calibration_incomplete", r.calibration_incomplete},
            {"budget_s", r.ledger.budget()},
            {"spent_s", r.ledger.spent()},
            {"ledger_exhausted", r.ledger.exhausted()},
            {"per_query", std::move(per_query)},
            {"curve", std::move(curve)},
            {"trials", std::move(trials)}};
}

WtResult wt_result_from_json(const nlohmann::json& j, const CostUnitVector& layout) {
    try {
        WtResult r;
        r.scheduler = j.at("scheduler").get<std::string>();
        r.workload_default_time = j.at("workload_default_time_s").get<double>();
        r.workload_best_time = j.at("workload_best_time_s").get<double>();
        r.calibration_incomplete = j.at("calibration_incomplete").get<bool>();
        r.ledger = BudgetLedger::restore(j.at("budget_s").get<double>(), j.at("spent_s").get<double>(),
                                         j.at("ledger_exhausted").get<bool>());
        for (const auto& o : j.at("per_query")) {
            QueryOutcome q;
            q.query_id = o.at("query_id").get<std::string>();
            q.calibrated = o.at("calibrated").get<bool>();
            if (!o.at("best_units").is_null()) q.best_units = cost_units_from_json(o.at("best_units"), layout);
            q.default_time = o.at("default_time_s").get<double>();
            q.best_time = o.at("best_time_s").get<double>();
            q.improvement = o.at("improvement").get<double>();
            q.trials = o.at("trials").get<std::size_t>();
            q.default_fingerprint = o.at("default_fingerprint").get<std::string>();
            q.best_fingerprint = o.at("best_fingerprint").get<std::string>();
            r.per_query.push_back(std::move(q));
        }
        for (const auto& p : j.at("curve")) r.curve.push_back({p.at("spent_s").get<double>(), p.at("improvement").get<double>()});
        for (const auto& t : j.at("trials")) {
            r.trial_log.push_back({t.at("query_id").get<std::string>(), t.at("scheduler").get<std::string>(),
                                   trial_from_json(t.at("record"), layout), t.at("reward").get<double>()});
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("wt result: ") + e.what());
    }
}

std::string curve_to_csv(std::span<const CurvePoint> curve) {
    std::ostringstream out;
    out << "spent_seconds,improvement_fraction\n";
    for (const auto& p : curve) out << csv::format_double(p.spent) << ',' << csv::format_double(p.improvement) << '\n';
    return out.str();
}

std::vector<CurvePoint> curve_from_csv(const std::string& text) {
    const auto rows = csv::lines(text);
    if (rows.empty() || rows[0] != "spent_seconds,improvement_fraction") throw LoadError("curve csv: unexpected header");
    std::vector<CurvePoint> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto f = csv::split_line(rows[i]);
        if (f.size() != 2) throw LoadError("curve csv: row " + std::to_string(i) + " must have 2 fields");
        out.push_back({csv::parse_double(f[0]), csv::parse_double(f[1])});
    }
    return out;
}

std::string trial_log_to_csv(std::span<const WtTrial> log, const CostUnitVector& layout) {
    std::ostringstream out;
    out << "query_id,scheduler,reward,trial";
    for (const auto& n : layout.names()) out << ',' << csv::escape(n);
    out << ",fingerprint,observed_s,charged_s,cache_hit,stopped_early\n";
    for (const auto& t : log) {
        const auto& r = t.record;
        out << csv::escape(t.query_id) << ',' << t.scheduler << ',' << csv::format_double(t.reward) << ',' << r.trial_index;
        for (double v : r.units.values()) out << ',' << csv::format_double(v);
        out << ',' << csv::escape(r.plan_fingerprint) << ',' << csv::format_double(r.observed_time) << ','
            << csv::format_double(r.charged_time) << ',' << (r.cache_hit ? 1 : 0) << ',' << (r.stopped_early ? 1 : 0)
            << '\n';
    }
    return out.str();
}

} // namespace costtune
