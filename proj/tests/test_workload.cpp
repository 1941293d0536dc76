#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "costtune/errors.hpp"
#include "costtune/workload.hpp"

using namespace costtune;
namespace fs = std::filesystem;

namespace {

GeneratorOptions fixture_options() {
    GeneratorOptions g;
    g.seed = 7;
    g.n_queries = 20;
    g.planted_fraction = 0.5;
    g.min_tables = 2;
    g.max_tables = 5;
    g.name = "planted-seed7";
    return g;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& leaf) {
    auto dir = fs::temp_directory_path() / ("costtune_wl_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    return dir / leaf;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(COSTTUNE_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_CASE("generation is a pure function of its options") {
    const auto a = dump_workload(generate_workload(fixture_options()));
    const auto b = dump_workload(generate_workload(fixture_options()));
    CHECK(a == b);
    auto other = fixture_options();
    other.seed = 8;
    CHECK(dump_workload(generate_workload(other)) != a);
}

TEST_CASE("committed fixture regenerates byte for byte") {
    const fs::path fixture = fs::path(COSTTUNE_FIXTURES) / "planted_seed7.json";
    REQUIRE(fs::exists(fixture));
    CHECK(slurp(fixture) == dump_workload(generate_workload(fixture_options())));
}

TEST_CASE("planted fraction is honored and verified by the oracle") {
    GeneratorOptions g;
    g.seed = 7;
    const auto w = generate_workload(g);
    REQUIRE(w.queries.size() == 20);
    std::size_t planted = 0;
    for (const auto& a : w.audit) planted += a.planted ? 1 : 0;
    CHECK(planted == 10);
    const auto rep = oracle_workload(w);
    CHECK(rep.improvable(0.01) >= 8);
    CHECK(rep.improvable(0.01) <= 12);
    for (const auto& e : rep.entries) CHECK(e.oracle_time <= e.default_time);
}

TEST_CASE("identity workload has nothing to gain") {
    auto g = fixture_options();
    g.identity_profile = true;
    g.planted_fraction = 0.0;
    const auto w = generate_workload(g);
    const auto rep = oracle_workload(w);
    CHECK(rep.improvement() == 0.0);
    CHECK(rep.improvable() == 0);
    const auto r = run_session(w, 10.0 * rep.workload_default_time, SchedulerKind::ucb, SearcherKind::random, 1);
    CHECK(r.improvement() == 0.0);
}

TEST_CASE("oracle is exhaustive up to the cap and falls back to dp beyond it") {
    const auto w = generate_workload(fixture_options());
    for (const auto& q : w.queries) {
        const auto e = oracle_query(q, w.true_profile, w.defaults);
        CHECK(e.exhaustive == (q.tables.size() <= default_enumeration_cap));
        const auto dp = optimize(q, CostRates::from(w.true_profile.true_units), w.true_profile.weights_for(q.id));
        CHECK(e.oracle_time == doctest::Approx(dp.cost.total * w.true_profile.time_scale).epsilon(1e-9));
    }
}

TEST_CASE("save and load round trip") {
    const auto w = generate_workload(fixture_options());
    const auto p = scratch("roundtrip.json");
    save_workload(w, p);
    const auto back = load_workload(p);
    CHECK(dump_workload(back) == dump_workload(w));
    CHECK(back.queries == w.queries);
    CHECK(back.audit == w.audit);
}

TEST_CASE("invalid workloads are rejected with a useful message") {
    const auto w = generate_workload(fixture_options());
    auto j = to_json(w);
    j["queries"][0]["joins"][0]["b"] = "nowhere";
    try {
        workload_from_json(j);
        FAIL("expected a load error");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("nowhere") != std::string::npos);
    }

    j = to_json(w);
    j["queries"][1]["id"] = j["queries"][0]["id"];
    CHECK_THROWS_AS(workload_from_json(j), LoadError);

    j = to_json(w);
    j["space"]["low_mult"] = 0.0;
    CHECK_THROWS_AS(workload_from_json(j), LoadError);

    j = to_json(w);
    j["queries"] = nlohmann::json::array();
    CHECK_THROWS_AS(workload_from_json(j), LoadError);

    CHECK_THROWS_AS(load_workload("/nonexistent/workload.json"), LoadError);
    const auto junk = scratch("junk.json");
    std::ofstream(junk) << "{ not json";
    CHECK_THROWS_AS(load_workload(junk), LoadError);
}

TEST_CASE("a single-budget sweep equals a direct session") {
    const auto w = generate_workload(fixture_options());
    const auto rep = oracle_workload(w);
    SweepSpec s;
    s.budgets = {3.0 * rep.workload_default_time};
    s.schedulers = {SchedulerKind::round_robin, SchedulerKind::ucb};
    s.seed = 4;
    const auto cells = run_sweep(w, s, 2);
    REQUIRE(cells.size() == 2);
    for (const auto& c : cells) {
        REQUIRE(c.result);
        const auto direct = run_session(w, c.budget, c.scheduler, SearcherKind::random, 4);
        CHECK(c.result->trial_log == direct.trial_log);
        CHECK(c.result->workload_best_time == direct.workload_best_time);
    }
}

TEST_CASE("sweep results do not depend on thread count") {
    const auto w = generate_workload(fixture_options());
    const auto rep = oracle_workload(w);
    SweepSpec s;
    s.budgets = {1.5 * rep.workload_default_time, 5.0 * rep.workload_default_time};
    s.schedulers = {SchedulerKind::round_robin, SchedulerKind::cost_based, SchedulerKind::ucb,
                    SchedulerKind::improvement_rate};
    s.seed = 2;
    const auto serial = run_sweep(w, s, 1);
    const auto parallel = run_sweep(w, s, 4);
    CHECK(sweep_summary_csv(serial) == sweep_summary_csv(parallel));
    CHECK(sweep_curves_csv(serial) == sweep_curves_csv(parallel));

    SweepSpec bad = s;
    bad.budgets = {5.0, 1.0};
    CHECK_THROWS_AS(validate(bad), InvalidArgument);
    bad.budgets = {};
    CHECK_THROWS_AS(validate(bad), InvalidArgument);
}

TEST_CASE("command line tool exit codes") {
    const auto wl = scratch("cli.json");
    const auto out = scratch("cli_out.json");
    CHECK(run_cli("gen --seed 7 --queries 4 --min-tables 2 --max-tables 4 --out " + wl.string()) == 0);
    CHECK(run_cli("oracle --workload " + wl.string()) == 0);
    CHECK(run_cli("tune-workload --workload " + wl.string() + " --budget-s 1000 --scheduler ucb --out " + out.string()) == 0);
    CHECK(fs::exists(out));
    CHECK(run_cli("tune-query --workload " + wl.string() + " --query-id q01 --budget-s 100 --out " + out.string()) == 0);
    CHECK(run_cli("tune-workload --workload /nonexistent.json --budget-s 10 --out " + out.string()) == 2);
    CHECK(run_cli("tune-workload --workload " + wl.string() + " --budget-s 10 --scheduler fifo --out " + out.string()) == 2);
    CHECK(run_cli("tune-query --workload " + wl.string() + " --query-id nope --budget-s 10 --out " + out.string()) == 2);
    CHECK(run_cli("bogus-subcommand") == 2);
}
