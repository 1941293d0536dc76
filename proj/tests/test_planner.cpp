#include "doctest.h"

#include <random>
#include <set>

#include "costtune/errors.hpp"
#include "costtune/planner.hpp"
#include "oracles.hpp"

using namespace costtune;

namespace {

QueryTable table(const std::string& name, std::int64_t rows, std::int64_t pages, bool idx, double sel = 1.0) {
    return {{name, rows, pages, idx}, sel};
}

QuerySpec triangle() {
    QuerySpec q;
    q.id = "tri";
    q.tables = {table("A", 1000, 100, true), table("B", 500, 50, false), table("C", 200, 20, false)};
    q.joins = {{"A", "B", 0.01}, {"B", "C", 0.05}, {"A", "C", 0.1}};
    return q;
}

} // namespace

TEST_CASE("cardinality multiplies filters and edge selectivities") {
    QuerySpec q;
    q.id = "q";
    q.tables = {table("A", 1000, 100, false), table("B", 500, 50, false)};
    q.joins = {{"A", "B", 0.01}};
    CHECK(estimate_cardinality(q, TableMask{0b11}) == doctest::Approx(5000.0));
    const std::vector<std::string> both{"A", "B"};
    CHECK(estimate_cardinality(q, both) == doctest::Approx(5000.0));
    q.tables[0].filter_sel = 0.02;
    CHECK(estimate_cardinality(q, TableMask{0b11}) == doctest::Approx(100.0));
    CHECK(estimate_cardinality(q, TableMask{0b01}) == doctest::Approx(20.0));
}

TEST_CASE("scan costs follow the unit formulas") {
    const auto d = default_vector();
    const TableSpec t{"A", 1000, 100, true};
    const auto seq = cost_scan(t, 1.0, ScanMethod::sequential, d);
    CHECK(seq.total == doctest::Approx(112.5));
    CHECK(seq.output_rows == doctest::Approx(1000.0));
    const auto idx = cost_scan(t, 0.01, ScanMethod::index, d);
    CHECK(idx.total == doctest::Approx(4.15));
    CHECK(idx.output_rows == doctest::Approx(10.0));
}

TEST_CASE("join costs follow the unit formulas") {
    const auto d = default_vector();
    const PlanCost outer{112.5, 1000.0};
    const PlanCost inner{61.25, 500.0};
    CHECK(cost_join(outer, inner, 1000.0, JoinMethod::hash, d).total == doctest::Approx(191.25));
    const auto nl = cost_join(outer, inner, 1000.0, JoinMethod::nested_loop, d);
    CHECK(nl.total == doctest::Approx(112.5 + 1000.0 * 61.25 + 10.0));
    CHECK(nl.total > cost_join(outer, inner, 1000.0, JoinMethod::hash, d).total);
    // An empty outer never rescans the inner.
    CHECK(cost_join({5.0, 0.0}, inner, 0.0, JoinMethod::nested_loop, d).total == doctest::Approx(5.0));
}

TEST_CASE("index scan on an unindexed table is an invalid plan") {
    const auto q = triangle();
    const auto bad = Plan::join(JoinMethod::hash, Plan::scan("A", ScanMethod::sequential),
                                Plan::scan("B", ScanMethod::index));
    QuerySpec two = q;
    two.tables.pop_back();
    two.joins = {{"A", "B", 0.01}};
    CHECK_THROWS_AS(plan_cost(bad, two, default_vector()), InvalidPlan);
    const auto missing = Plan::scan("A", ScanMethod::sequential);
    CHECK_THROWS_AS(plan_cost(missing, two, default_vector()), InvalidPlan);
}

TEST_CASE("enumeration counts match hand counts") {
    QuerySpec one;
    one.id = "one";
    one.tables = {table("A", 10, 1, false)};
    CHECK(enumerate_all_plans(one).size() == 1);

    QuerySpec two;
    two.id = "two";
    two.tables = {table("A", 10, 1, false), table("B", 10, 1, false)};
    two.joins = {{"A", "B", 0.5}};
    CHECK(enumerate_all_plans(two).size() == 4);

    const auto tri = triangle();
    CHECK(oracle::all_left_deep(tri).size() == 48);
    const auto plans = enumerate_all_plans(tri);
    CHECK(plans.size() == 48);
    std::set<std::string> fps;
    for (const auto& p : plans) fps.insert(p.fingerprint());
    CHECK(fps.size() == 48);

    QuerySpec chain = tri;
    chain.joins.pop_back();
    CHECK(enumerate_all_plans(chain).size() == oracle::all_left_deep(chain).size());
}

TEST_CASE("enumeration above the cap is refused") {
    std::mt19937_64 rng(5);
    QuerySpec q;
    do {
        q = oracle::random_query(rng, 6);
    } while (q.tables.size() < 5);
    CHECK_THROWS_AS(enumerate_all_plans(q, 4), TooLarge);
}

TEST_CASE("optimizer matches an exhaustive reference on random queries") {
    std::mt19937_64 rng(11);
    const auto space = make_search_space(default_vector());
    Rng unit_rng(12);
    for (int i = 0; i < 60; ++i) {
        const auto q = oracle::random_query(rng, 4);
        const auto units = i % 3 == 0 ? default_vector() : sample_log_uniform(space, unit_rng);
        const auto best = optimize(q, units);
        const double ref = oracle::min_cost(q, units);
        CHECK(best.cost.total == doctest::Approx(ref).epsilon(1e-9));
        CHECK(plan_cost(best.plan, q, units).total == doctest::Approx(best.cost.total).epsilon(1e-12));
    }
}

TEST_CASE("library plan costs agree with the reference evaluator") {
    const auto q = triangle();
    const auto u = oracle::units_of(default_vector());
    std::map<std::string, double> ref;
    for (const auto& p : oracle::all_left_deep(q)) ref[oracle::fingerprint(q, p)] = oracle::cost(q, p, u);
    for (const auto& p : enumerate_all_plans(q)) {
        REQUIRE(ref.count(p.fingerprint()) == 1);
        CHECK(plan_cost(p, q, default_vector()).total == doctest::Approx(ref[p.fingerprint()]).epsilon(1e-12));
    }
}

TEST_CASE("scaling every unit leaves the chosen plan unchanged") {
    std::mt19937_64 rng(21);
    const auto d = default_vector();
    for (int i = 0; i < 30; ++i) {
        const auto q = oracle::random_query(rng, 5);
        const auto base = optimize(q, d);
        for (double alpha : {0.01, 0.5, 3.0, 100.0}) {
            const auto s = optimize(q, d.scaled(alpha));
            CHECK(s.plan.fingerprint() == base.plan.fingerprint());
            CHECK(s.cost.total == doctest::Approx(alpha * base.cost.total).epsilon(1e-9));
        }
    }
}

TEST_CASE("fingerprints round trip through the parser") {
    const auto q = triangle();
    for (const auto& p : enumerate_all_plans(q)) CHECK(parse_fingerprint(p.fingerprint()) == p);
    const auto p = Plan::join(JoinMethod::hash,
                              Plan::join(JoinMethod::nested_loop, Plan::scan("A", ScanMethod::sequential),
                                         Plan::scan("B", ScanMethod::index)),
                              Plan::scan("C", ScanMethod::sequential));
    CHECK(p.fingerprint() == "Join(hash,Join(nl,Scan(seq,A),Scan(idx,B)),Scan(seq,C))");
    CHECK_THROWS(parse_fingerprint("Join(hash,Scan(seq,A)"));
    CHECK_THROWS(parse_fingerprint("Scan(bad,A)"));
}

TEST_CASE("query validation") {
    auto q = triangle();
    CHECK_NOTHROW(validate(q));

    auto disconnected = q;
    disconnected.joins = {{"A", "B", 0.1}};
    CHECK_THROWS_AS(validate(disconnected), InvalidQuery);
    CHECK_THROWS_AS(optimize(disconnected, default_vector()), InvalidQuery);

    auto self = q;
    self.joins.push_back({"A", "A", 0.5});
    CHECK_THROWS_AS(validate(self), InvalidQuery);

    auto unknown = q;
    unknown.joins.push_back({"A", "Z", 0.5});
    CHECK_THROWS_AS(validate(unknown), InvalidQuery);

    auto bad_sel = q;
    bad_sel.joins[0].sel = 0.0;
    CHECK_THROWS_AS(validate(bad_sel), InvalidQuery);

    auto dup = q;
    dup.tables.push_back(dup.tables[0]);
    CHECK_THROWS_AS(validate(dup), InvalidQuery);

    auto empty = q;
    empty.tables.clear();
    empty.joins.clear();
    CHECK_THROWS_AS(validate(empty), InvalidQuery);
}

TEST_CASE("ties break toward the smallest fingerprint") {
    QuerySpec q;
    q.id = "sym";
    q.tables = {table("A", 100, 10, false), table("B", 100, 10, false)};
    q.joins = {{"A", "B", 0.1}};
    const auto best = optimize(q, default_vector());
    std::string smallest;
    double best_cost = 1e300;
    for (const auto& p : enumerate_all_plans(q)) {
        const double c = plan_cost(p, q, default_vector()).total;
        if (c < best_cost || (c == best_cost && p.fingerprint() < smallest)) {
            best_cost = c;
            smallest = p.fingerprint();
        }
    }
    CHECK(best.plan.fingerprint() == smallest);
}

TEST_CASE("query json round trip") {
    const auto q = triangle();
    CHECK(query_from_json(to_json(q)) == q);
    auto j = to_json(q);
    j["tables"][0].erase("rows");
    CHECK_THROWS_AS(query_from_json(j), LoadError);
}
