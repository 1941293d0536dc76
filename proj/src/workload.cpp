#include "costtune/workload.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "costtune/csv.hpp"
#include "costtune/errors.hpp"

namespace costtune {

const QuerySpec* WorkloadFile::find(const std::string& query_id) const {
    for (const auto& q : queries) {
        if (q.id == query_id) return &q;
    }
    return nullptr;
}

void validate(const WorkloadFile& w) {
    if (w.queries.empty()) throw LoadError("workload '" + w.name + "': 'queries' must not be empty");
    if (!(w.space.low > 0.0) || !(w.space.high > 0.0) || w.space.low > w.space.high) {
        throw LoadError("workload '" + w.name + "': space multipliers must satisfy 0 < low_mult <= high_mult");
    }
    if (!w.true_profile.true_units.same_layout(w.defaults)) {
        throw LoadError("workload '" + w.name + "': true_profile.true_units must name the same units as defaults");
    }
    std::unordered_set<std::string> ids;
    for (const auto& q : w.queries) {
        try {
            validate(q);
        } catch (const InvalidQuery& e) {
            throw LoadError(e.what());
        }
        if (!ids.insert(q.id).second) throw LoadError("workload '" + w.name + "': duplicate query id '" + q.id + "'");
    }
    for (const auto& [id, _] : w.true_profile.multipliers) {
        if (!ids.count(id)) throw LoadError("workload '" + w.name + "': true_profile.multipliers references unknown query '" + id + "'");
    }
    for (const auto& a : w.audit) {
        if (!ids.count(a.query_id)) throw LoadError("workload '" + w.name + "': audit references unknown query '" + a.query_id + "'");
    }
    try {
        w.true_profile.validate();
    } catch (const InvalidArgument& e) {
        throw LoadError(std::string("true_profile: ") + e.what());
    }
}

nlohmann::json to_json(const WorkloadFile& w) {
    nlohmann::json queries = nlohmann::json::array();
    for (const auto& q : w.queries) queries.push_back(to_json(q));
    nlohmann::json j = {{"name", w.name},
                        {"defaults", to_json(w.defaults)},
                        {"space", {{"low_mult", w.space.low}, {"high_mult", w.space.high}}},
                        {"true_profile", to_json(w.true_profile)},
                        {"queries", std::move(queries)}};
    if (!w.audit.empty()) {
        nlohmann::json audit = nlohmann::json::array();
        for (const auto& a : w.audit) {
            audit.push_back({{"query_id", a.query_id},
                             {"planted", a.planted},
                             {"default_s", a.default_time},
                             {"oracle_s", a.oracle_time},
                             {"reachable_s", a.reachable_time}});
        }
        j["audit"] = std::move(audit);
    }
    return j;
}

WorkloadFile workload_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw LoadError("workload: expected a JSON object");
    WorkloadFile w;
    try {
        w.name = j.value("name", std::string("workload"));
        const auto engine = default_vector();
        w.defaults = j.contains("defaults") ? cost_units_from_json(j.at("defaults"), engine) : engine;
        if (j.contains("space")) {
            const auto& s = j.at("space");
            if (!s.is_object()) throw LoadError("workload: 'space' must be an object");
            w.space.low = s.value("low_mult", 0.1);
            w.space.high = s.value("high_mult", 10.0);
        }
        w.true_profile = j.contains("true_profile") ? profile_from_json(j.at("true_profile"), w.defaults)
                                                    : TrueCostProfile::identity(w.defaults);
        if (!j.contains("queries") || !j.at("queries").is_array()) throw LoadError("workload: 'queries' must be an array");
        for (const auto& q : j.at("queries")) w.queries.push_back(query_from_json(q));
        if (j.contains("audit")) {
            for (const auto& a : j.at("audit")) {
                w.audit.push_back({a.at("query_id").get<std::string>(), a.at("planted").get<bool>(),
                                   a.at("default_s").get<double>(), a.at("oracle_s").get<double>(),
                                   a.at("reachable_s").get<double>()});
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("workload: ") + e.what());
    }
    validate(w);
    return w;
}

WorkloadFile load_workload(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open workload file '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw LoadError("workload file '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return workload_from_json(j);
}

std::string dump_workload(const WorkloadFile& w) {
    return to_json(w).dump(2) + "\n";
}

void save_workload(const WorkloadFile& w, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write workload file '" + path.string() + "'");
    out << dump_workload(w);
}

namespace {

double uniform(Rng& rng, double lo, double hi) { return lo + uniform01(rng) * (hi - lo); }

double log_uniform(Rng& rng, double lo, double hi) {
    return std::exp(uniform(rng, std::log(lo), std::log(hi)));
}

std::size_t uniform_index(Rng& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

QuerySpec random_query(Rng& rng, std::string id, std::size_t n) {
    QuerySpec q;
    q.id = std::move(id);
    for (std::size_t i = 0; i < n; ++i) {
        QueryTable t;
        t.table.name = "t" + std::to_string(i);
        t.table.rows = std::llround(log_uniform(rng, 1e3, 2e6));
        const auto per_page = static_cast<std::int64_t>(20 + uniform_index(rng, 101));
        t.table.pages = std::max<std::int64_t>(1, t.table.rows / per_page);
        t.table.has_index = uniform01(rng) < 0.6;
        t.filter_sel = uniform01(rng) < 0.35 ? 1.0 : log_uniform(rng, 5e-4, 0.5);
        q.tables.push_back(std::move(t));
    }
    auto add_edge = [&](std::size_t a, std::size_t b) {
        const double larger = static_cast<double>(std::max(q.tables[a].table.rows, q.tables[b].table.rows));
        const double sel = std::min(1.0, log_uniform(rng, 0.5, 2.0) / larger);
        q.joins.push_back({q.tables[a].table.name, q.tables[b].table.name, sel});
    };
    std::set<std::pair<std::size_t, std::size_t>> linked;
    for (std::size_t i = 1; i < n; ++i) {
        const std::size_t j = uniform_index(rng, i);
        add_edge(j, i);
        linked.insert({j, i});
    }
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            if (!linked.count({a, b}) && uniform01(rng) < 0.15) add_edge(a, b);
        }
    }
    return q;
}

std::vector<OperatorKind> kinds_in(const PlanNode& node) {
    std::vector<OperatorKind> out;
    if (node.is_scan) {
        out.push_back(node.scan == ScanMethod::index ? OperatorKind::index_scan : OperatorKind::seq_scan);
        return out;
    }
    out.push_back(node.join == JoinMethod::hash ? OperatorKind::hash_join : OperatorKind::nested_loop);
    for (const auto* child : {node.left.get(), node.right.get()}) {
        for (auto k : kinds_in(*child)) out.push_back(k);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

void set_weight(OperatorWeights& w, OperatorKind kind, double v) {
    switch (kind) {
    case OperatorKind::seq_scan: w.seq_scan = v; break;
    case OperatorKind::index_scan: w.index_scan = v; break;
    case OperatorKind::nested_loop: w.nested_loop = v; break;
    case OperatorKind::hash_join: w.hash_join = v; break;
    }
}

double dp_true_time(const QuerySpec& q, const TrueCostProfile& profile) {
    const auto best = optimize(q, CostRates::from(profile.true_units), profile.weights_for(q.id));
    return true_time(best.plan, q, profile);
}

bool improvable(double default_time, double best_time) { return best_time < default_time * (1.0 - 1e-9); }

} // namespace

WorkloadFile generate_workload(const GeneratorOptions& opt) {
    if (opt.n_queries < 1) throw InvalidArgument("generator needs at least one query");
    if (opt.min_tables < 1 || opt.min_tables > opt.max_tables || opt.max_tables > max_query_tables) {
        throw InvalidArgument("generator table range must satisfy 1 <= min <= max <= " + std::to_string(max_query_tables));
    }
    if (!(opt.planted_fraction >= 0.0 && opt.planted_fraction <= 1.0)) throw InvalidArgument("planted fraction must lie in [0, 1]");
    if (opt.identity_profile && opt.planted_fraction > 0.0) {
        throw InvalidArgument("an identity profile cannot have planted queries");
    }
    if (opt.max_tables < 2 && opt.planted_fraction > 0.0) {
        // A lone unindexed table has one plan; planting needs room to move.
        throw InvalidArgument("planting requires queries with at least two tables");
    }

    Rng rng(opt.seed);
    WorkloadFile w;
    w.name = opt.name;
    w.defaults = default_vector();
    const auto space = w.search_space();

    auto true_units = w.defaults;
    if (!opt.identity_profile) {
        for (auto name : {unit_names::seq_page_cost, unit_names::random_page_cost, unit_names::cpu_tuple_cost,
                          unit_names::cpu_index_tuple_cost, unit_names::cpu_operator_cost}) {
            true_units.set(name, true_units.at(name) * log_uniform(rng, 0.8, 1.25));
        }
    }
    w.true_profile = TrueCostProfile{true_units, {}, opt.identity_profile ? 1.0 : opt.time_scale};

    const auto n_planted = static_cast<std::size_t>(std::llround(opt.planted_fraction * static_cast<double>(opt.n_queries)));
    std::vector<std::size_t> slots(opt.n_queries);
    for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = i;
    for (std::size_t i = slots.size(); i > 1; --i) std::swap(slots[i - 1], slots[uniform_index(rng, i)]);
    std::vector<bool> planted(opt.n_queries, false);
    for (std::size_t i = 0; i < n_planted; ++i) planted[slots[i]] = true;

    const std::size_t width = std::to_string(opt.n_queries).size() < 2 ? 2 : std::to_string(opt.n_queries).size();
    for (std::size_t i = 0; i < opt.n_queries; ++i) {
        std::string id = std::to_string(i + 1);
        id = "q" + std::string(width - id.size(), '0') + id;
        const std::size_t min_tables = planted[i] ? std::max<std::size_t>(2, opt.min_tables) : opt.min_tables;

        bool accepted = false;
        for (std::size_t attempt = 0; attempt < opt.max_attempts && !accepted; ++attempt) {
            const std::size_t n = min_tables + uniform_index(rng, opt.max_tables - min_tables + 1);
            auto q = random_query(rng, id, n);
            const auto default_plan = optimize(q, w.defaults).plan;

            if (!planted[i]) {
                TrueCostProfile probe = w.true_profile;
                const double t0 = true_time(default_plan, q, probe);
                const double oracle = dp_true_time(q, probe);
                if (improvable(t0, oracle)) continue;
                w.audit.push_back({id, false, t0, oracle, t0});
                w.queries.push_back(std::move(q));
                accepted = true;
                break;
            }

            // Plans tuning can actually reach: argmin plans of random unit vectors.
            Rng probe_rng(mix_seed(opt.seed, 1'000'000 + i * 7919 + attempt));
            std::vector<Plan> reached;
            std::set<std::string> seen{default_plan.fingerprint()};
            for (std::size_t p = 0; p < opt.reach_probes; ++p) {
                auto plan = optimize(q, sample_log_uniform(space, probe_rng)).plan;
                if (seen.insert(plan.fingerprint()).second) reached.push_back(std::move(plan));
            }
            if (reached.empty()) continue;

            const auto kinds = kinds_in(default_plan.root());
            for (int draw = 0; draw < 8 && !accepted; ++draw) {
                OperatorWeights weights;
                set_weight(weights, kinds[uniform_index(rng, kinds.size())], log_uniform(rng, 3.0, 12.0));
                TrueCostProfile probe = w.true_profile;
                probe.multipliers[id] = weights;
                const double t0 = true_time(default_plan, q, probe);
                double reach = t0;
                for (const auto& plan : reached) reach = std::min(reach, true_time(plan, q, probe));
                const double oracle = dp_true_time(q, probe);
                if (reach > t0 * (1.0 - opt.min_planted_gain)) continue;
                if (t0 - reach < 0.9 * (t0 - oracle)) continue;
                w.true_profile.multipliers[id] = weights;
                w.audit.push_back({id, true, t0, oracle, reach});
                w.queries.push_back(std::move(q));
                accepted = true;
            }
        }
        if (!accepted) {
            throw Error("generator could not build query " + id + " within " + std::to_string(opt.max_attempts) +
                        " attempts");
        }
    }
    validate(w);
    return w;
}

double OracleEntry::improvement() const {
    return default_time > 0.0 ? percentage_improvement(default_time, oracle_time) : 0.0;
}

OracleEntry oracle_query(const QuerySpec& query, const TrueCostProfile& profile, const CostUnitVector& defaults,
                         std::size_t enumeration_cap) {
    OracleEntry e;
    e.query_id = query.id;
    const auto default_plan = optimize(query, defaults).plan;
    e.default_fingerprint = default_plan.fingerprint();
    e.default_time = true_time(default_plan, query, profile);
    if (query.tables.size() <= enumeration_cap) {
        e.exhaustive = true;
        bool first = true;
        for (const auto& plan : enumerate_all_plans(query, enumeration_cap)) {
            const double t = true_time(plan, query, profile);
            if (first || t < e.oracle_time || (t == e.oracle_time && plan.fingerprint() < e.oracle_fingerprint)) {
                e.oracle_time = t;
                e.oracle_fingerprint = plan.fingerprint();
                first = false;
            }
        }
    } else {
        const auto best = optimize(query, CostRates::from(profile.true_units), profile.weights_for(query.id));
        e.oracle_fingerprint = best.plan.fingerprint();
        e.oracle_time = true_time(best.plan, query, profile);
    }
    return e;
}

double OracleReport::improvement() const {
    return workload_default_time > 0.0 ? percentage_improvement(workload_default_time, workload_oracle_time) : 0.0;
}

std::size_t OracleReport::improvable(double min_gain) const {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [&](const OracleEntry& e) {
        return e.oracle_time < e.default_time * (1.0 - min_gain);
    }));
}

OracleReport oracle_workload(const WorkloadFile& w, std::size_t enumeration_cap) {
    OracleReport r;
    for (const auto& q : w.queries) {
        r.entries.push_back(oracle_query(q, w.true_profile, w.defaults, enumeration_cap));
        r.workload_default_time += r.entries.back().default_time;
        r.workload_oracle_time += r.entries.back().oracle_time;
    }
    return r;
}

nlohmann::json to_json(const OracleReport& r) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : r.entries) {
        entries.push_back({{"query_id", e.query_id},
                           {"default_fingerprint", e.default_fingerprint},
                           {"default_time_s", e.default_time},
                           {"oracle_fingerprint", e.oracle_fingerprint},
                           {"oracle_time_s", e.oracle_time},
                           {"improvement", e.improvement()},
                           {"method", e.exhaustive ? "exhaustive" : "dp"}});
    }
    return {{"workload_default_time_s", r.workload_default_time},
            {"workload_oracle_time_s", r.workload_oracle_time},
            {"improvement", r.improvement()},
            {"improvable_queries", r.improvable()},
            {"queries", std::move(entries)}};
}

void validate(const SweepSpec& s) {
    if (s.budgets.empty()) throw InvalidArgument("sweep needs at least one budget");
    if (s.schedulers.empty()) throw InvalidArgument("sweep needs at least one scheduler");
    for (std::size_t i = 0; i < s.budgets.size(); ++i) {
        if (!(s.budgets[i] > 0.0)) throw InvalidArgument("sweep budgets must be positive");
        if (i > 0 && !(s.budgets[i] > s.budgets[i - 1])) throw InvalidArgument("sweep budgets must be strictly ascending");
    }
}

WtResult run_session(const WorkloadFile& w, double budget, SchedulerKind scheduler, SearcherKind searcher,
                     std::uint64_t seed, const WtOptions& options, std::size_t grid_k) {
    SimulatedBackend backend(w.true_profile);
    WtOptions opts = options;
    opts.query_options.defaults = w.defaults;
    const auto space = w.search_space();
    return tune_workload(w.queries, space, budget, scheduler, seeded_searchers(searcher, space, seed, grid_k), backend, opts);
}

std::vector<SweepCell> run_sweep(const WorkloadFile& w, const SweepSpec& sweep, std::size_t threads) {
    validate(sweep);
    std::vector<SweepCell> cells;
    for (auto s : sweep.schedulers) {
        for (double b : sweep.budgets) cells.push_back({s, b, std::nullopt, {}});
    }
    if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
    threads = std::min(threads, cells.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            auto& cell = cells[i];
            try {
                cell.result = run_session(w, cell.budget, cell.scheduler, sweep.searcher, sweep.seed, sweep.options, sweep.grid_k);
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
        }
    };
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    return cells;
}

std::string sweep_summary_csv(const std::vector<SweepCell>& cells) {
    std::ostringstream out;
    out << "scheduler,budget_s,spent_s,workload_default_s,workload_best_s,improvement_fraction,error\n";
    for (const auto& c : cells) {
        out << to_string(c.scheduler) << ',' << csv::format_double(c.budget) << ',';
        if (c.result) {
            out << csv::format_double(c.result->ledger.spent()) << ',' << csv::format_double(c.result->workload_default_time)
                << ',' << csv::format_double(c.result->workload_best_time) << ','
                << csv::format_double(c.result->improvement()) << ",\n";
        } else {
            out << ",,,," << csv::escape(c.error) << '\n';
        }
    }
    return out.str();
}

std::string sweep_curves_csv(const std::vector<SweepCell>& cells) {
    std::ostringstream out;
    out << "scheduler,budget_s,spent_seconds,improvement_fraction\n";
    for (const auto& c : cells) {
        if (!c.result) continue;
        for (const auto& p : c.result->curve) {
            out << to_string(c.scheduler) << ',' << csv::format_double(c.budget) << ',' << csv::format_double(p.spent) << ','
                << csv::format_double(p.improvement) << '\n';
        }
    }
    return out.str();
}

} // namespace costtune
