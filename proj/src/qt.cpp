#include "costtune/qt.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "costtune/csv.hpp"
#include "costtune/errors.hpp"

namespace costtune {

BudgetLedger::BudgetLedger(double budget) : budget_(budget) {
    if (!(budget >= 0.0) || !std::isfinite(budget)) throw InvalidArgument("budget must be a finite value >= 0");
}

BudgetLedger BudgetLedger::restore(double budget, double spent, bool exhausted) {
    BudgetLedger l(budget);
    if (!(spent >= 0.0) || spent > budget) throw InvalidArgument("ledger spent must lie in [0, budget]");
    l.spent_ = spent;
    l.exhausted_ = exhausted;
    return l;
}

double BudgetLedger::remaining() const noexcept {
    double r = budget_ - spent_;
    if (!(r > 0.0)) return 0.0;
    while (spent_ + r > budget_) r = std::nextafter(r, 0.0);
    return r;
}

void BudgetLedger::charge(double seconds) {
    if (!(seconds >= 0.0)) throw InvalidArgument("charge must be >= 0");
    if (seconds > remaining()) throw InvalidArgument("charge exceeds the remaining budget");
    spent_ += seconds;
}

std::optional<CacheEntry> PlanCache::lookup(const std::string& fingerprint) const {
    auto it = entries_.find(fingerprint);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void PlanCache::record(const std::string& fingerprint, double seconds) {
    auto [it, inserted] = entries_.emplace(fingerprint, CacheEntry{seconds, true});
    if (inserted) return;
    if (!it->second.complete) {
        it->second = {seconds, true};
    } else {
        it->second.seconds = std::min(it->second.seconds, seconds);
    }
}

void PlanCache::record_lower_bound(const std::string& fingerprint, double seconds) {
    auto [it, inserted] = entries_.emplace(fingerprint, CacheEntry{seconds, false});
    if (!inserted && !it->second.complete) it->second.seconds = std::max(it->second.seconds, seconds);
}

RandomSearcher::RandomSearcher(SearchSpace space, std::uint64_t seed) : space_(std::move(space)), rng_(seed) {}

std::optional<CostUnitVector> RandomSearcher::next(std::span<const TrialRecord>) {
    return sample_log_uniform(space_, rng_);
}

GridSearcher::GridSearcher(const SearchSpace& space, std::size_t k, std::size_t cap)
    : points_(grid_points(space, k, cap)) {}

std::optional<CostUnitVector> GridSearcher::next(std::span<const TrialRecord>) {
    if (cursor_ >= points_.size()) return std::nullopt;
    return points_[cursor_++];
}

std::optional<SearcherKind> parse_searcher_kind(std::string_view s) noexcept {
    if (s == "random") return SearcherKind::random;
    if (s == "grid") return SearcherKind::grid;
    return std::nullopt;
}

std::string_view to_string(SearcherKind kind) noexcept {
    return kind == SearcherKind::grid ? "grid" : "random";
}

std::unique_ptr<Searcher> make_searcher(SearcherKind kind, const SearchSpace& space, std::uint64_t seed,
                                        std::size_t grid_k) {
    if (kind == SearcherKind::grid) return std::make_unique<GridSearcher>(space, grid_k);
    return std::make_unique<RandomSearcher>(space, seed);
}

std::string_view to_string(StopReason r) noexcept {
    switch (r) {
    case StopReason::budget_exhausted: return "budget_exhausted";
    case StopReason::searcher_exhausted: return "searcher_exhausted";
    case StopReason::max_trials: return "max_trials";
    case StopReason::stale: return "stale";
    }
    return "?";
}

namespace {

std::optional<StopReason> parse_stop_reason(std::string_view s) {
    for (auto r : {StopReason::budget_exhausted, StopReason::searcher_exhausted, StopReason::max_trials, StopReason::stale}) {
        if (to_string(r) == s) return r;
    }
    return std::nullopt;
}

} // namespace

void check_layout(const SearchSpace& space, const CostUnitVector& defaults) {
    bool same = space.size() == defaults.size();
    for (std::size_t i = 0; same && i < space.size(); ++i) same = space[i].name == defaults.name(i);
    if (!same) throw InvalidArgument("search space and default units have different layouts");
}

QueryTuner::QueryTuner(const QuerySpec& query, std::unique_ptr<Searcher> searcher, QtOptions options)
    : query_(&query), searcher_(std::move(searcher)), options_(std::move(options)) {
    if (!searcher_) throw InvalidArgument("query tuner needs a searcher");
}

const TrialRecord& QueryTuner::run_baseline(Backend& backend, BudgetLedger& ledger) {
    if (baseline_done_) throw InvalidArgument("baseline already executed for query '" + query_->id + "'");
    std::optional<double> threshold;
    if (options_.charge_baseline) threshold = ledger.remaining();
    const auto res = execute(ExecutionRequest{*query_, options_.defaults, threshold}, backend);

    TrialRecord rec;
    rec.trial_index = 1;
    rec.units = options_.defaults;
    rec.plan_fingerprint = res.plan_fingerprint;
    rec.observed_time = res.observed_time;
    rec.charged_time = options_.charge_baseline ? res.charged_time : 0.0;
    rec.stopped_early = res.stopped_early;
    rec.baseline = true;
    rec.threshold = threshold;
    ledger.charge(rec.charged_time);

    baseline_done_ = true;
    default_time_ = best_time_ = res.observed_time;
    best_units_ = options_.defaults;
    best_fingerprint_ = default_fingerprint_ = res.plan_fingerprint;
    if (res.stopped_early) {
        baseline_incomplete_ = true;
        ledger.mark_exhausted();
        finish(StopReason::budget_exhausted);
    } else {
        cache_.record(res.plan_fingerprint, res.observed_time);
    }
    trials_.push_back(std::move(rec));
    return trials_.back();
}

const TrialRecord* QueryTuner::run_trial(Backend& backend, BudgetLedger& ledger) {
    if (!baseline_done_) throw InvalidArgument("run the baseline before tuning query '" + query_->id + "'");
    if (finished()) return nullptr;
    if (ledger.exhausted()) {
        finish(StopReason::budget_exhausted);
        return nullptr;
    }
    if (options_.max_trials && proposals_ >= *options_.max_trials) {
        finish(StopReason::max_trials);
        return nullptr;
    }
    auto units = searcher_->next(trials_);
    if (!units) {
        finish(StopReason::searcher_exhausted);
        return nullptr;
    }
    ++proposals_;

    TrialRecord rec;
    rec.trial_index = trials_.size() + 1;
    rec.units = std::move(*units);

    const double remaining = ledger.remaining();
    const double threshold = options_.early_stopping ? std::min(best_time_, remaining) : remaining;
    std::optional<CacheEntry> cached;
    if (options_.plan_cache) {
        rec.plan_fingerprint = backend.explain(*query_, rec.units);
        cached = cache_.lookup(rec.plan_fingerprint);
        // A plan known to outlast the current threshold would only be stopped again.
        if (cached && !cached->complete && cached->seconds < threshold) cached.reset();
    }
    if (cached) {
        // Duplicate plan: free for the budget, but its known time still counts as an observation.
        rec.cache_hit = true;
        rec.observed_time = cached->seconds;
        rec.stopped_early = !cached->complete;
        ++stale_;
    } else {
        stale_ = 0;
        const auto res = execute(ExecutionRequest{*query_, rec.units, threshold}, backend);
        rec.plan_fingerprint = res.plan_fingerprint;
        rec.observed_time = res.observed_time;
        rec.charged_time = res.charged_time;
        rec.stopped_early = res.stopped_early;
        rec.threshold = threshold;
        ledger.charge(rec.charged_time);
        if (!res.stopped_early) {
            if (options_.plan_cache) cache_.record(rec.plan_fingerprint, rec.observed_time);
        } else {
            if (options_.plan_cache) cache_.record_lower_bound(rec.plan_fingerprint, rec.observed_time);
            if (threshold >= remaining) ledger.mark_exhausted();
        }
    }
    if (!rec.stopped_early && rec.observed_time < best_time_) {
        best_time_ = rec.observed_time;
        best_units_ = rec.units;
        best_fingerprint_ = rec.plan_fingerprint;
    }
    trials_.push_back(std::move(rec));
    if (stale_ >= options_.max_stale_trials) finish(StopReason::stale);
    return &trials_.back();
}

double QtResult::improvement() const {
    return percentage_improvement(default_time, best_time);
}

QtResult tune_query(const QuerySpec& query, const SearchSpace& space, double budget, std::unique_ptr<Searcher> searcher,
                    Backend& backend, const QtOptions& options) {
    if (!(budget > 0.0) || !std::isfinite(budget)) throw InvalidArgument("budget must be positive");
    check_layout(space, options.defaults);
    validate(query);
    BudgetLedger ledger(budget);
    QueryTuner tuner(query, std::move(searcher), options);
    tuner.run_baseline(backend, ledger);
    while (tuner.run_trial(backend, ledger) != nullptr) {
    }

    QtResult r;
    r.query_id = query.id;
    r.best_units = tuner.best_units();
    r.best_time = tuner.best_time();
    r.default_time = tuner.default_time();
    r.best_fingerprint = tuner.best_fingerprint();
    r.default_fingerprint = tuner.default_fingerprint();
    r.trials = tuner.trials();
    r.ledger = ledger;
    r.baseline_incomplete = tuner.baseline_incomplete();
    r.stop_reason = tuner.stop_reason().value_or(StopReason::budget_exhausted);
    return r;
}

double percentage_improvement(double default_time, double best_time) {
    if (!(default_time > 0.0)) throw InvalidArgument("default time must be positive");
    return std::max(1.0 - best_time / default_time, 0.0);
}

nlohmann::json to_json(const TrialRecord& t) {
    nlohmann::json j = {{"trial", t.trial_index},
                        {"units", to_json(t.units)},
                        {"fingerprint", t.plan_fingerprint},
                        {"observed_s", t.observed_time},
                        {"charged_s", t.charged_time},
                        {"cache_hit", t.cache_hit},
                        {"stopped_early", t.stopped_early},
                        {"baseline", t.baseline}};
    j["threshold_s"] = t.threshold ? nlohmann::json(*t.threshold) : nlohmann::json(nullptr);
    return j;
}

TrialRecord trial_from_json(const nlohmann::json& j, const CostUnitVector& layout) {
    try {
        TrialRecord t;
        t.trial_index = j.at("trial").get<std::size_t>();
        t.units = cost_units_from_json(j.at("units"), layout);
        t.plan_fingerprint = j.at("fingerprint").get<std::string>();
        t.observed_time = j.at("observed_s").get<double>();
        t.charged_time = j.at("charged_s").get<double>();
        t.cache_hit = j.at("cache_hit").get<bool>();
        t.stopped_early = j.at("stopped_early").get<bool>();
        t.baseline = j.value("baseline", false);
        if (j.contains("threshold_s") && !j.at("threshold_s").is_null()) t.threshold = j.at("threshold_s").get<double>();
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("trial record: ") + e.what());
    }
}

nlohmann::json to_json(const QtResult& r) {
    nlohmann::json trials = nlohmann::json::array();
    for (const auto& t : r.trials) trials.push_back(to_json(t));
    return {{"query_id", r.query_id},
            {"best_units", to_json(r.best_units)},
            {"best_time_s", r.best_time},
            {"default_time_s", r.default_time},
            {"improvement", r.default_time > 0.0 ? r.improvement() : 0.0},
            {"best_fingerprint", r.best_fingerprint},
            {"default_fingerprint", r.default_fingerprint},
            {"budget_s", r.ledger.budget()},
            {"spent_s", r.ledger.spent()},
            {"ledger_exhausted", r.ledger.exhausted()},
            {"baseline_incomplete", r.baseline_incomplete},
            {"stop_reason", to_string(r.stop_reason)},
            {"trials", std::move(trials)}};
}

QtResult qt_result_from_json(const nlohmann::json& j, const CostUnitVector& layout) {
    try {
        QtResult r;
        r.query_id = j.at("query_id").get<std::string>();
        r.best_units = cost_units_from_json(j.at("best_units"), layout);
        r.best_time = j.at("best_time_s").get<double>();
        r.default_time = j.at("default_time_s").get<double>();
        r.best_fingerprint = j.at("best_fingerprint").get<std::string>();
        r.default_fingerprint = j.at("default_fingerprint").get<std::string>();
        r.ledger = BudgetLedger::restore(j.at("budget_s").get<double>(), j.at("spent_s").get<double>(),
                                         j.at("ledger_exhausted").get<bool>());
        r.baseline_incomplete = j.at("baseline_incomplete").get<bool>();
        auto reason = parse_stop_reason(j.at("stop_reason").get<std::string>());
        if (!reason) throw LoadError("qt result: unknown stop_reason");
        r.stop_reason = *reason;
        for (const auto& t : j.at("trials")) r.trials.push_back(trial_from_json(t, layout));
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("qt result: ") + e.what());
    }
}

std::string trials_to_csv(std::span<const TrialRecord> trials, const CostUnitVector& layout) {
    std::ostringstream out;
    out << "trial";
    for (const auto& n : layout.names()) out << ',' << csv::escape(n);
    out << ",fingerprint,observed_s,charged_s,cache_hit,stopped_early\n";
    for (const auto& t : trials) {
        out << t.trial_index;
        for (double v : t.units.values()) out << ',' << csv::format_double(v);
        out << ',' << csv::escape(t.plan_fingerprint) << ',' << csv::format_double(t.observed_time) << ','
            << csv::format_double(t.charged_time) << ',' << (t.cache_hit ? 1 : 0) << ',' << (t.stopped_early ? 1 : 0)
            << '\n';
    }
    return out.str();
}

std::vector<TrialRecord> trials_from_csv(const std::string& text, const CostUnitVector& layout) {
    const auto rows = csv::lines(text);
    if (rows.empty()) throw LoadError("trial csv: missing header");
    const auto header = csv::split_line(rows[0]);
    const std::size_t width = layout.size() + 6;
    if (header.size() != width || header[0] != "trial") throw LoadError("trial csv: unexpected header");
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (header[i + 1] != layout.name(i)) throw LoadError("trial csv: column '" + header[i + 1] + "' is not unit '" + layout.name(i) + "'");
    }
    auto flag = [](const std::string& s) {
        if (s == "1") return true;
        if (s == "0") return false;
        throw LoadError("trial csv: flag '" + s + "' is not 0/1");
    };
    std::vector<TrialRecord> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto f = csv::split_line(rows[r]);
        if (f.size() != width) throw LoadError("trial csv: row " + std::to_string(r) + " has " + std::to_string(f.size()) + " fields");
        TrialRecord t;
        t.trial_index = static_cast<std::size_t>(csv::parse_double(f[0]));
        std::vector<double> values;
        for (std::size_t i = 0; i < layout.size(); ++i) values.push_back(csv::parse_double(f[i + 1]));
        t.units = CostUnitVector(layout.names(), std::move(values));
        const std::size_t k = layout.size() + 1;
        t.plan_fingerprint = f[k];
        t.observed_time = csv::parse_double(f[k + 1]);
        t.charged_time = csv::parse_double(f[k + 2]);
        t.cache_hit = flag(f[k + 3]);
        t.stopped_early = flag(f[k + 4]);
        t.baseline = t.trial_index == 1;
        if (t.stopped_early && !t.cache_hit) t.threshold = t.observed_time;
        out.push_back(std::move(t));
    }
    return out;
}

} // namespace costtune
