#include "costtune/planner.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "costtune/errors.hpp"

namespace costtune {

namespace {

bool is_identifier(std::string_view s) {
    if (s.empty()) return false;
    auto ok_first = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
    auto ok_rest = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
    return ok_first(s.front()) && std::all_of(s.begin() + 1, s.end(), ok_rest);
}

bool valid_selectivity(double s) { return s > 0.0 && s <= 1.0; }

std::string_view scan_token(ScanMethod m) { return m == ScanMethod::index ? "idx" : "seq"; }
std::string_view join_token(JoinMethod m) { return m == JoinMethod::hash ? "hash" : "nl"; }

/// Name-resolved view of a query used by the hot paths.
struct QueryIndex {
    const QuerySpec* query = nullptr;
    std::vector<int> edge_a;
    std::vector<int> edge_b;
    std::vector<TableMask> adjacency;

    explicit QueryIndex(const QuerySpec& q) : query(&q), adjacency(q.tables.size(), 0) {
        for (const auto& e : q.joins) {
            auto a = q.table_index(e.a);
            auto b = q.table_index(e.b);
            if (!a || !b) throw InvalidQuery("query '" + q.id + "': join edge " + e.a + "-" + e.b + " names an absent table");
            edge_a.push_back(static_cast<int>(*a));
            edge_b.push_back(static_cast<int>(*b));
            adjacency[*a] |= TableMask{1} << *b;
            adjacency[*b] |= TableMask{1} << *a;
        }
    }

    TableMask full() const { return (TableMask{1} << query->tables.size()) - 1; }

    TableMask neighbours(TableMask subset) const {
        TableMask out = 0;
        for (std::size_t i = 0; i < adjacency.size(); ++i) {
            if (subset & (TableMask{1} << i)) out |= adjacency[i];
        }
        return out & ~subset;
    }

    double cardinality(TableMask subset) const {
        double card = 1.0;
        for (std::size_t i = 0; i < query->tables.size(); ++i) {
            if (subset & (TableMask{1} << i)) {
                const auto& t = query->tables[i];
                card *= static_cast<double>(t.table.rows) * t.filter_sel;
            }
        }
        for (std::size_t e = 0; e < edge_a.size(); ++e) {
            if ((subset >> edge_a[e] & 1U) && (subset >> edge_b[e] & 1U)) card *= query->joins[e].sel;
        }
        return card;
    }
};

struct Evaluated {
    PlanCost cost;
    TableMask tables = 0;
};

Evaluated evaluate(const PlanNode& node, const QueryIndex& qi, const CostRates& rates, const OperatorWeights& w) {
    if (node.is_scan) {
        auto i = qi.query->table_index(node.table);
        if (!i) throw InvalidPlan("plan scans table '" + node.table + "' which is not in query '" + qi.query->id + "'");
        const auto& qt = qi.query->tables[*i];
        const auto kind = node.scan == ScanMethod::index ? OperatorKind::index_scan : OperatorKind::seq_scan;
        return {cost_scan(qt.table, qt.filter_sel, node.scan, rates, w.of(kind)), TableMask{1} << *i};
    }
    const auto outer = evaluate(*node.left, qi, rates, w);
    const auto inner = evaluate(*node.right, qi, rates, w);
    if (outer.tables & inner.tables) throw InvalidPlan("plan scans a table more than once");
    const TableMask both = outer.tables | inner.tables;
    const auto kind = node.join == JoinMethod::hash ? OperatorKind::hash_join : OperatorKind::nested_loop;
    return {cost_join(outer.cost, inner.cost, qi.cardinality(both), node.join, rates, w.of(kind)), both};
}

bool better(const PlanCost& cost, const std::string& fp, const OptimizedPlan& incumbent) {
    if (cost.total != incumbent.cost.total) return cost.total < incumbent.cost.total;
    return fp < incumbent.plan.fingerprint();
}

std::vector<ScanMethod> scan_methods(const TableSpec& t) {
    if (t.has_index) return {ScanMethod::sequential, ScanMethod::index};
    return {ScanMethod::sequential};
}

constexpr JoinMethod join_methods[] = {JoinMethod::nested_loop, JoinMethod::hash};

// Recursive-descent reader for fingerprints.
struct FingerprintParser {
    std::string_view s;
    std::size_t pos = 0;

    [[noreturn]] void fail() const {
        throw InvalidPlan("malformed plan fingerprint at offset " + std::to_string(pos) + ": " + std::string(s));
    }
    void expect(std::string_view tok) {
        if (s.substr(pos, tok.size()) != tok) fail();
        pos += tok.size();
    }
    bool consume(std::string_view tok) {
        if (s.substr(pos, tok.size()) != tok) return false;
        pos += tok.size();
        return true;
    }
    Plan node() {
        if (consume("Scan(")) {
            ScanMethod m;
            if (consume("seq,")) m = ScanMethod::sequential;
            else if (consume("idx,")) m = ScanMethod::index;
            else fail();
            const auto end = s.find(')', pos);
            if (end == std::string_view::npos) fail();
            std::string name(s.substr(pos, end - pos));
            if (!is_identifier(name)) fail();
            pos = end + 1;
            return Plan::scan(std::move(name), m);
        }
        expect("Join(");
        JoinMethod m;
        if (consume("hash,")) m = JoinMethod::hash;
        else if (consume("nl,")) m = JoinMethod::nested_loop;
        else fail();
        Plan outer = node();
        expect(",");
        Plan inner = node();
        expect(")");
        return Plan::join(m, outer, inner);
    }
};

} // namespace

std::string_view to_string(OperatorKind kind) noexcept {
    switch (kind) {
    case OperatorKind::seq_scan: return "seq_scan";
    case OperatorKind::index_scan: return "index_scan";
    case OperatorKind::nested_loop: return "nested_loop";
    case OperatorKind::hash_join: return "hash_join";
    }
    return "?";
}

std::optional<OperatorKind> parse_operator_kind(std::string_view s) noexcept {
    for (auto k : {OperatorKind::seq_scan, OperatorKind::index_scan, OperatorKind::nested_loop, OperatorKind::hash_join}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

std::optional<std::size_t> QuerySpec::table_index(std::string_view name) const noexcept {
    for (std::size_t i = 0; i < tables.size(); ++i) {
        if (tables[i].table.name == name) return i;
    }
    return std::nullopt;
}

void validate(const QuerySpec& q) {
    const std::string where = "query '" + q.id + "'";
    if (q.id.empty()) throw InvalidQuery("query id must be non-empty");
    if (q.tables.empty()) throw InvalidQuery(where + ": at least one table required");
    if (q.tables.size() > max_query_tables) {
        throw InvalidQuery(where + ": " + std::to_string(q.tables.size()) + " tables exceeds the limit of " +
                           std::to_string(max_query_tables));
    }
    for (std::size_t i = 0; i < q.tables.size(); ++i) {
        const auto& t = q.tables[i];
        if (!is_identifier(t.table.name)) throw InvalidQuery(where + ": table name '" + t.table.name + "' is not an identifier");
        if (q.table_index(t.table.name) != i) throw InvalidQuery(where + ": duplicate table '" + t.table.name + "'");
        if (t.table.rows < 1) throw InvalidQuery(where + ": table '" + t.table.name + "' rows must be >= 1");
        if (t.table.pages < 1) throw InvalidQuery(where + ": table '" + t.table.name + "' pages must be >= 1");
        if (!valid_selectivity(t.filter_sel)) throw InvalidQuery(where + ": table '" + t.table.name + "' filter_sel must lie in (0, 1]");
    }
    for (const auto& e : q.joins) {
        const std::string edge = "join edge " + e.a + "-" + e.b;
        if (!q.table_index(e.a) || !q.table_index(e.b)) throw InvalidQuery(where + ": " + edge + " names an absent table");
        if (e.a == e.b) throw InvalidQuery(where + ": " + edge + " joins a table with itself");
        if (!valid_selectivity(e.sel)) throw InvalidQuery(where + ": " + edge + " sel must lie in (0, 1]");
    }
    const QueryIndex qi(q);
    TableMask reached = 1;
    for (TableMask frontier = qi.neighbours(reached); frontier; frontier = qi.neighbours(reached)) reached |= frontier;
    if (reached != qi.full()) throw InvalidQuery(where + ": join graph is disconnected");
}

Plan Plan::scan(std::string table, ScanMethod method) {
    std::string fp = "Scan(";
    fp += scan_token(method);
    fp += ',';
    fp += table;
    fp += ')';
    auto node = std::make_shared<PlanNode>();
    node->is_scan = true;
    node->scan = method;
    node->table = std::move(table);
    return Plan(std::move(node), std::move(fp));
}

Plan Plan::join(JoinMethod method, const Plan& outer, const Plan& inner) {
    std::string fp;
    fp.reserve(outer.fingerprint_.size() + inner.fingerprint_.size() + 12);
    fp += "Join(";
    fp += join_token(method);
    fp += ',';
    fp += outer.fingerprint_;
    fp += ',';
    fp += inner.fingerprint_;
    fp += ')';
    auto node = std::make_shared<PlanNode>();
    node->is_scan = false;
    node->join = method;
    node->left = outer.root_;
    node->right = inner.root_;
    return Plan(std::move(node), std::move(fp));
}

const std::string& fingerprint(const Plan& plan) noexcept { return plan.fingerprint(); }

Plan parse_fingerprint(std::string_view fp) {
    FingerprintParser p{fp};
    Plan plan = p.node();
    if (p.pos != fp.size()) p.fail();
    return plan;
}

CostRates CostRates::from(const CostUnitVector& units) {
    return {units.at(unit_names::seq_page_cost), units.at(unit_names::random_page_cost),
            units.at(unit_names::cpu_tuple_cost), units.at(unit_names::cpu_index_tuple_cost),
            units.at(unit_names::cpu_operator_cost)};
}

double OperatorWeights::of(OperatorKind kind) const noexcept {
    switch (kind) {
    case OperatorKind::seq_scan: return seq_scan;
    case OperatorKind::index_scan: return index_scan;
    case OperatorKind::nested_loop: return nested_loop;
    case OperatorKind::hash_join: return hash_join;
    }
    return 1.0;
}

double estimate_cardinality(const QuerySpec& query, TableMask subset) {
    if (subset == 0) throw InvalidArgument("cardinality of an empty table subset");
    const QueryIndex qi(query);
    if (subset & ~qi.full()) throw InvalidArgument("table subset is not contained in query '" + query.id + "'");
    return qi.cardinality(subset);
}

double estimate_cardinality(const QuerySpec& query, std::span<const std::string> subset) {
    TableMask mask = 0;
    for (const auto& name : subset) {
        auto i = query.table_index(name);
        if (!i) throw InvalidArgument("table '" + name + "' is not in query '" + query.id + "'");
        mask |= TableMask{1} << *i;
    }
    return estimate_cardinality(query, mask);
}

PlanCost cost_scan(const TableSpec& table, double filter_sel, ScanMethod method, const CostUnitVector& units) {
    return cost_scan(table, filter_sel, method, CostRates::from(units));
}

PlanCost cost_scan(const TableSpec& table, double filter_sel, ScanMethod method, const CostRates& r, double weight) {
    const double rows = static_cast<double>(table.rows);
    const double pages = static_cast<double>(table.pages);
    PlanCost out;
    out.output_rows = rows * filter_sel;
    if (method == ScanMethod::sequential) {
        out.total = weight * (pages * r.seq_page) + weight * (rows * r.cpu_tuple) + weight * (rows * r.cpu_operator);
        return out;
    }
    if (!table.has_index) throw InvalidPlan("index scan on table '" + table.name + "' which has no index");
    const double matched = std::ceil(rows * filter_sel);
    const double touched_pages = std::ceil(pages * filter_sel);
    out.total = weight * (touched_pages * r.random_page) + weight * (matched * (r.cpu_index_tuple + r.cpu_tuple));
    return out;
}

PlanCost cost_join(const PlanCost& outer, const PlanCost& inner, double output_rows, JoinMethod method,
                   const CostUnitVector& units) {
    return cost_join(outer, inner, output_rows, method, CostRates::from(units));
}

PlanCost cost_join(const PlanCost& outer, const PlanCost& inner, double output_rows, JoinMethod method,
                   const CostRates& r, double weight) {
    PlanCost out;
    out.output_rows = output_rows;
    if (method == JoinMethod::nested_loop) {
        out.total = outer.total + weight * (outer.output_rows * inner.total) + weight * (output_rows * r.cpu_tuple);
    } else {
        out.total = outer.total + inner.total + weight * (2.0 * (outer.output_rows + inner.output_rows) * r.cpu_operator) +
                    weight * (output_rows * r.cpu_tuple);
    }
    return out;
}

PlanCost plan_cost(const Plan& plan, const QuerySpec& query, const CostUnitVector& units) {
    return plan_cost(plan, query, CostRates::from(units), OperatorWeights{});
}

PlanCost plan_cost(const Plan& plan, const QuerySpec& query, const CostRates& rates, const OperatorWeights& weights) {
    const QueryIndex qi(query);
    const auto ev = evaluate(plan.root(), qi, rates, weights);
    if (ev.tables != qi.full()) throw InvalidPlan("plan does not cover every table of query '" + query.id + "'");
    return ev.cost;
}

OptimizedPlan optimize(const QuerySpec& query, const CostUnitVector& units) {
    return optimize(query, CostRates::from(units), OperatorWeights{});
}

OptimizedPlan optimize(const QuerySpec& query, const CostRates& rates, const OperatorWeights& w) {
    validate(query);
    const QueryIndex qi(query);
    const std::size_t n = query.tables.size();

    std::vector<std::vector<OptimizedPlan>> leaves(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& qt = query.tables[i];
        for (auto m : scan_methods(qt.table)) {
            const auto kind = m == ScanMethod::index ? OperatorKind::index_scan : OperatorKind::seq_scan;
            leaves[i].push_back({Plan::scan(qt.table.name, m), cost_scan(qt.table, qt.filter_sel, m, rates, w.of(kind))});
        }
    }

    // best[mask] is the cheapest left-deep plan over exactly that connected subset.
    std::vector<std::optional<OptimizedPlan>> best(std::size_t{1} << n);
    auto offer = [&](TableMask mask, Plan plan, PlanCost cost) {
        auto& slot = best[mask];
        if (!slot || better(cost, plan.fingerprint(), *slot)) slot = OptimizedPlan{std::move(plan), cost};
    };
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& leaf : leaves[i]) offer(TableMask{1} << i, leaf.plan, leaf.cost);
    }

    const TableMask full = qi.full();
    for (TableMask mask = 1; mask < full; ++mask) {
        if (!best[mask]) continue;
        const auto outer = *best[mask];
        const TableMask next = qi.neighbours(mask);
        for (std::size_t t = 0; t < n; ++t) {
            if (!(next & (TableMask{1} << t))) continue;
            const TableMask joined = mask | (TableMask{1} << t);
            const double rows = qi.cardinality(joined);
            for (const auto& leaf : leaves[t]) {
                for (auto jm : join_methods) {
                    const auto kind = jm == JoinMethod::hash ? OperatorKind::hash_join : OperatorKind::nested_loop;
                    auto cost = cost_join(outer.cost, leaf.cost, rows, jm, rates, w.of(kind));
                    offer(joined, Plan::join(jm, outer.plan, leaf.plan), cost);
                }
            }
        }
    }
    return *best[full];
}

std::vector<Plan> enumerate_all_plans(const QuerySpec& query, std::size_t table_cap) {
    validate(query);
    const std::size_t n = query.tables.size();
    if (n > table_cap) {
        throw TooLarge("query '" + query.id + "' has " + std::to_string(n) + " tables; enumeration cap is " +
                       std::to_string(table_cap));
    }
    const QueryIndex qi(query);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<Plan> out;
    do {
        bool connected = true;
        TableMask prefix = TableMask{1} << order[0];
        for (std::size_t k = 1; k < n && connected; ++k) {
            connected = (qi.neighbours(prefix) >> order[k]) & 1U;
            prefix |= TableMask{1} << order[k];
        }
        if (!connected) continue;

        std::vector<Plan> partial;
        for (auto m : scan_methods(query.tables[order[0]].table)) partial.push_back(Plan::scan(query.tables[order[0]].table.name, m));
        for (std::size_t k = 1; k < n; ++k) {
            const auto& qt = query.tables[order[k]];
            std::vector<Plan> grown;
            for (const auto& p : partial) {
                for (auto m : scan_methods(qt.table)) {
                    const auto leaf = Plan::scan(qt.table.name, m);
                    for (auto jm : join_methods) grown.push_back(Plan::join(jm, p, leaf));
                }
            }
            partial = std::move(grown);
        }
        std::move(partial.begin(), partial.end(), std::back_inserter(out));
    } while (std::next_permutation(order.begin(), order.end()));
    return out;
}

nlohmann::json to_json(const QuerySpec& q) {
    nlohmann::json tables = nlohmann::json::array();
    for (const auto& t : q.tables) {
        tables.push_back({{"name", t.table.name},
                          {"rows", t.table.rows},
                          {"pages", t.table.pages},
                          {"has_index", t.table.has_index},
                          {"filter_sel", t.filter_sel}});
    }
    nlohmann::json joins = nlohmann::json::array();
    for (const auto& e : q.joins) joins.push_back({{"a", e.a}, {"b", e.b}, {"sel", e.sel}});
    return {{"id", q.id}, {"tables", std::move(tables)}, {"joins", std::move(joins)}};
}

namespace {

template <typename T>
T field(const nlohmann::json& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) throw LoadError(where + ": missing field '" + key + "'");
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw LoadError(where + ": field '" + key + "' has the wrong type");
    }
}

} // namespace

QuerySpec query_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw LoadError("query: expected an object");
    QuerySpec q;
    q.id = field<std::string>(j, "id", "query");
    const std::string where = "query '" + q.id + "'";
    const auto tables = field<nlohmann::json>(j, "tables", where);
    if (!tables.is_array()) throw LoadError(where + ": 'tables' must be an array");
    for (std::size_t i = 0; i < tables.size(); ++i) {
        const std::string tw = where + " tables[" + std::to_string(i) + "]";
        const auto& t = tables[i];
        if (!t.is_object()) throw LoadError(tw + ": expected an object");
        QueryTable qt;
        qt.table.name = field<std::string>(t, "name", tw);
        qt.table.rows = field<std::int64_t>(t, "rows", tw);
        qt.table.pages = field<std::int64_t>(t, "pages", tw);
        qt.table.has_index = t.contains("has_index") ? field<bool>(t, "has_index", tw) : false;
        qt.filter_sel = t.contains("filter_sel") ? field<double>(t, "filter_sel", tw) : 1.0;
        q.tables.push_back(std::move(qt));
    }
    if (j.contains("joins")) {
        const auto joins = field<nlohmann::json>(j, "joins", where);
        if (!joins.is_array()) throw LoadError(where + ": 'joins' must be an array");
        for (std::size_t i = 0; i < joins.size(); ++i) {
            const std::string jw = where + " joins[" + std::to_string(i) + "]";
            if (!joins[i].is_object()) throw LoadError(jw + ": expected an object");
            q.joins.push_back({field<std::string>(joins[i], "a", jw), field<std::string>(joins[i], "b", jw),
                               field<double>(joins[i], "sel", jw)});
        }
    }
    try {
        validate(q);
    } catch (const InvalidQuery& e) {
        throw LoadError(e.what());
    }
    return q;
}

} // namespace costtune
