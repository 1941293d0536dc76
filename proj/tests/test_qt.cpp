#include "doctest.h"

#include <cmath>
#include <random>

#include "costtune/errors.hpp"
#include "costtune/qt.hpp"
#include "costtune/workload.hpp"
#include "oracles.hpp"

using namespace costtune;

namespace {

WorkloadFile small_workload(std::uint64_t seed = 7) {
    GeneratorOptions g;
    g.seed = seed;
    g.n_queries = 6;
    g.min_tables = 2;
    g.max_tables = 4;
    g.planted_fraction = 0.5;
    return generate_workload(g);
}

// Walks a trial log and checks every threshold and charge against a fresh ledger.
void replay(const QtResult& r, bool early_stopping) {
    REQUIRE_FALSE(r.trials.empty());
    const auto& base = r.trials.front();
    CHECK(base.baseline);
    double spent = base.charged_time;
    double best = base.observed_time;
    for (std::size_t i = 1; i < r.trials.size(); ++i) {
        const auto& t = r.trials[i];
        if (t.cache_hit) {
            CHECK(t.charged_time == 0.0);
            CHECK_FALSE(t.threshold.has_value());
        } else {
            REQUIRE(t.threshold.has_value());
            const double remaining = r.ledger.budget() - spent;
            const double expected = early_stopping ? std::min(best, remaining) : remaining;
            CHECK(*t.threshold == doctest::Approx(expected).epsilon(1e-12));
            if (t.stopped_early) {
                CHECK(t.charged_time == *t.threshold);
                CHECK(t.observed_time == *t.threshold);
            } else {
                CHECK(t.charged_time == t.observed_time);
                CHECK(t.observed_time <= *t.threshold);
            }
        }
        spent += t.charged_time;
        if (!t.stopped_early) best = std::min(best, t.observed_time);
    }
    CHECK(spent == doctest::Approx(r.ledger.spent()).epsilon(1e-12));
    CHECK(best == r.best_time);
}

} // namespace

TEST_CASE("percentage improvement") {
    CHECK(percentage_improvement(3.72, 1.33) == doctest::Approx(0.642).epsilon(0.001));
    CHECK(percentage_improvement(4.74, 3.24) == doctest::Approx(0.316).epsilon(0.001));
    CHECK(percentage_improvement(5.0, 6.0) == 0.0);
    CHECK(percentage_improvement(5.0, 5.0) == 0.0);
    CHECK_THROWS_AS(percentage_improvement(0.0, 1.0), InvalidArgument);
}

TEST_CASE("budget ledger never overspends") {
    BudgetLedger l(1.0);
    l.charge(0.3);
    l.charge(0.7);
    CHECK(l.spent() <= l.budget());
    CHECK(l.exhausted());
    CHECK_THROWS(l.charge(0.1));

    BudgetLedger odd(0.1 + 0.2);
    odd.charge(0.1);
    odd.charge(odd.remaining());
    CHECK(odd.spent() <= odd.budget());
    CHECK_THROWS_AS(BudgetLedger(-1.0), InvalidArgument);
}

TEST_CASE("plan cache keeps the smallest time") {
    PlanCache c;
    CHECK_FALSE(c.lookup("p"));
    c.record("p", 3.0);
    c.record("p", 5.0);
    c.record("p", 2.0);
    CHECK(c.lookup("p")->seconds == 2.0);
    CHECK(c.size() == 1);
    c.record_lower_bound("p", 1.0);
    CHECK(*c.lookup("p") == CacheEntry{2.0, true});
    c.record_lower_bound("s", 4.0);
    c.record_lower_bound("s", 3.0);
    CHECK(*c.lookup("s") == CacheEntry{4.0, false});
    c.record("s", 6.0);
    CHECK(*c.lookup("s") == CacheEntry{6.0, true});
}

TEST_CASE("single-plan query only ever pays for the baseline") {
    QuerySpec q;
    q.id = "solo";
    q.tables = {{{"A", 5000, 400, false}, 1.0}};
    SimulatedBackend sim(TrueCostProfile::identity(default_vector()));
    QtOptions o;
    o.max_trials = 30;
    const auto space = make_search_space(default_vector());
    const auto r = tune_query(q, space, 1e9, std::make_unique<RandomSearcher>(space, 1), sim, o);
    REQUIRE(r.trials.size() == 31);
    for (std::size_t i = 1; i < r.trials.size(); ++i) CHECK(r.trials[i].cache_hit);
    CHECK(r.ledger.spent() == r.default_time);
    CHECK(r.improvement() == 0.0);
    CHECK(r.stop_reason == StopReason::max_trials);
}

TEST_CASE("cost-free repeats terminate as stale") {
    QuerySpec q;
    q.id = "solo";
    q.tables = {{{"A", 5000, 400, false}, 1.0}};
    SimulatedBackend sim(TrueCostProfile::identity(default_vector()));
    QtOptions o;
    o.max_stale_trials = 25;
    const auto space = make_search_space(default_vector());
    const auto r = tune_query(q, space, 1e9, std::make_unique<RandomSearcher>(space, 1), sim, o);
    CHECK(r.stop_reason == StopReason::stale);
    CHECK(r.trials.size() == 26);
}

TEST_CASE("a truthful optimizer cannot be improved") {
    std::mt19937_64 rng(17);
    SimulatedBackend sim(TrueCostProfile::identity(default_vector()));
    const auto space = make_search_space(default_vector());
    for (int i = 0; i < 10; ++i) {
        const auto q = oracle::random_query(rng, 5);
        const double t0 = optimize(q, default_vector()).cost.total;
        const auto r = tune_query(q, space, 40.0 * t0, std::make_unique<RandomSearcher>(space, i), sim);
        CHECK(r.improvement() == 0.0);
        CHECK(r.best_units == default_vector());
    }
}

TEST_CASE("grid search reaches the best plan of a planted query") {
    const auto w = small_workload();
    SimulatedBackend sim(w.true_profile);
    bool any_planted = false;
    for (const auto& a : w.audit) {
        if (!a.planted) continue;
        any_planted = true;
        const auto* q = w.find(a.query_id);
        REQUIRE(q);
        QtOptions o;
        o.defaults = w.defaults;
        const auto space = make_search_space(w.defaults, w.space.low, w.space.high);
        const auto r = tune_query(*q, space, 1e12, std::make_unique<GridSearcher>(space, 3), sim, o);
        CHECK(r.stop_reason == StopReason::searcher_exhausted);
        CHECK(r.trials.size() == 1 + 729);
        CHECK(r.best_time < r.default_time);
        CHECK(r.best_time >= a.oracle_time * (1.0 - 1e-12));
    }
    CHECK(any_planted);
}

TEST_CASE("random tuning respects the budget on many configurations") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> mult(0.3, 30.0);
    for (int seed = 0; seed < 25; ++seed) {
        const auto w = small_workload(100 + seed);
        SimulatedBackend sim(w.true_profile);
        const auto space = w.search_space();
        for (const auto& q : w.queries) {
            const double t0 = optimize(q, w.true_profile.true_units).cost.total * w.true_profile.time_scale;
            const double budget = t0 * mult(rng);
            QtOptions o;
            o.defaults = w.defaults;
            const auto r = tune_query(q, space, budget, std::make_unique<RandomSearcher>(space, seed), sim, o);
            CHECK(r.ledger.spent() <= budget);
            CHECK(r.best_time <= r.default_time);
            replay(r, true);
        }
    }
}

TEST_CASE("baseline that overruns the budget is reported incomplete") {
    const auto w = small_workload();
    SimulatedBackend sim(w.true_profile);
    const auto& q = w.queries.front();
    QtOptions o;
    o.defaults = w.defaults;
    const double t0 = execute({q, w.defaults, std::nullopt}, sim).true_time;
    const auto r = tune_query(q, w.search_space(), t0 / 3.0, std::make_unique<RandomSearcher>(w.search_space(), 1),
                              sim, o);
    CHECK(r.baseline_incomplete);
    CHECK(r.trials.size() == 1);
    CHECK(r.ledger.spent() <= t0 / 3.0);
    CHECK(r.improvement() == 0.0);
}

TEST_CASE("best time is monotone and matches the fastest completed trial") {
    const auto w = small_workload(9);
    SimulatedBackend sim(w.true_profile);
    QtOptions o;
    o.defaults = w.defaults;
    for (const auto& q : w.queries) {
        QueryTuner tuner(q, std::make_unique<RandomSearcher>(w.search_space(), 4), o);
        BudgetLedger ledger(1e9);
        tuner.run_baseline(sim, ledger);
        double prev = tuner.best_time();
        for (int i = 0; i < 60 && tuner.run_trial(sim, ledger); ++i) {
            CHECK(tuner.best_time() <= prev);
            prev = tuner.best_time();
        }
        double fastest = tuner.default_time();
        for (const auto& t : tuner.trials()) {
            if (!t.stopped_early) fastest = std::min(fastest, t.observed_time);
        }
        CHECK(tuner.best_time() == fastest);
    }
}

TEST_CASE("plan cache never costs more and never changes the answer") {
    const auto w = small_workload(11);
    SimulatedBackend sim(w.true_profile);
    for (const auto& q : w.queries) {
        QtOptions with;
        with.defaults = w.defaults;
        with.max_trials = 80;
        QtOptions without = with;
        without.plan_cache = false;
        const auto a = tune_query(q, w.search_space(), 1e12, std::make_unique<RandomSearcher>(w.search_space(), 5), sim, with);
        const auto b = tune_query(q, w.search_space(), 1e12, std::make_unique<RandomSearcher>(w.search_space(), 5), sim, without);
        CHECK(a.ledger.spent() <= b.ledger.spent());
        CHECK(a.best_time == b.best_time);
        for (const auto& t : a.trials) {
            if (!t.cache_hit) continue;
            const auto fresh = execute({q, t.units, std::nullopt}, sim);
            CHECK(fresh.plan_fingerprint == t.plan_fingerprint);
            CHECK(t.charged_time == 0.0);
            if (t.stopped_early) {
                CHECK(fresh.true_time >= t.observed_time);
            } else {
                CHECK(fresh.true_time == t.observed_time);
            }
        }
    }
}

TEST_CASE("disabling early stopping only widens thresholds") {
    const auto w = small_workload(13);
    SimulatedBackend sim(w.true_profile);
    QtOptions o;
    o.defaults = w.defaults;
    o.early_stopping = false;
    o.max_trials = 40;
    const auto& q = w.queries.back();
    const auto r = tune_query(q, w.search_space(), 1e9, std::make_unique<RandomSearcher>(w.search_space(), 2), sim, o);
    for (const auto& t : r.trials) CHECK_FALSE(t.stopped_early);
    replay(r, false);
}

TEST_CASE("searchers are deterministic and bounded") {
    const auto space = make_search_space(default_vector());
    RandomSearcher a(space, 99), b(space, 99);
    for (int i = 0; i < 20; ++i) CHECK(*a.next({}) == *b.next({}));
    GridSearcher g(space, 2);
    int n = 0;
    while (g.next({})) ++n;
    CHECK(n == 64);
    CHECK(parse_searcher_kind("grid") == SearcherKind::grid);
    CHECK_FALSE(parse_searcher_kind("annealing"));
}

TEST_CASE("layout mismatch is rejected") {
    QuerySpec q;
    q.id = "solo";
    q.tables = {{{"A", 50, 4, false}, 1.0}};
    SimulatedBackend sim(TrueCostProfile::identity(default_vector()));
    const SearchSpace other({{"x", 1.0, 2.0}});
    CHECK_THROWS_AS(tune_query(q, other, 10.0, std::make_unique<RandomSearcher>(other, 1), sim), InvalidArgument);
    const auto space = make_search_space(default_vector());
    CHECK_THROWS_AS(tune_query(q, space, 0.0, std::make_unique<RandomSearcher>(space, 1), sim), InvalidArgument);
}

TEST_CASE("trial log survives csv and json round trips") {
    const auto w = small_workload(15);
    SimulatedBackend sim(w.true_profile);
    QtOptions o;
    o.defaults = w.defaults;
    const auto& q = w.queries.front();
    const double t0 = execute({q, w.defaults, std::nullopt}, sim).true_time;
    const auto r = tune_query(q, w.search_space(), 10.0 * t0, std::make_unique<RandomSearcher>(w.search_space(), 3), sim, o);

    const auto csv = trials_to_csv(r.trials, w.defaults);
    CHECK(csv.rfind("trial,seq_page_cost,random_page_cost,cpu_tuple_cost,cpu_index_tuple_cost,cpu_operator_cost,"
                    "parallel_tuple_cost,fingerprint,observed_s,charged_s,cache_hit,stopped_early\n",
                    0) == 0);
    const auto back = trials_from_csv(csv, w.defaults);
    REQUIRE(back.size() == r.trials.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].units == r.trials[i].units);
        CHECK(back[i].plan_fingerprint == r.trials[i].plan_fingerprint);
        CHECK(back[i].observed_time == r.trials[i].observed_time);
        CHECK(back[i].charged_time == r.trials[i].charged_time);
        CHECK(back[i].cache_hit == r.trials[i].cache_hit);
        CHECK(back[i].stopped_early == r.trials[i].stopped_early);
    }

    const auto j = qt_result_from_json(to_json(r), w.defaults);
    CHECK(j.trials == r.trials);
    CHECK(j.best_time == r.best_time);
    CHECK(j.ledger == r.ledger);
    CHECK(j.stop_reason == r.stop_reason);
}
