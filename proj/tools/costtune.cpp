// costtune: workload generation, query/workload tuning, budget sweeps and
// oracle reports over the simulated execution backend.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "costtune/csv.hpp"
#include "costtune/errors.hpp"
#include "costtune/workload.hpp"

namespace fs = std::filesystem;
using namespace costtune;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_runtime = 1;
constexpr int exit_validation = 2;

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
}

fs::path sibling(const fs::path& out, const std::string& suffix) {
    auto p = out;
    p.replace_extension();
    return p.string() + suffix;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    for (std::string item; std::getline(in, item, ',');) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

SchedulerKind scheduler_arg(const std::string& s) {
    auto k = parse_scheduler_kind(s);
    if (!k) throw InvalidArgument("unknown scheduler '" + s + "' (expected rr, cost, ucb or rate)");
    return *k;
}

SearcherKind searcher_arg(const std::string& s) {
    auto k = parse_searcher_kind(s);
    if (!k) throw InvalidArgument("unknown searcher '" + s + "' (expected random or grid)");
    return *k;
}

void print_percent(std::ostream& os, double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", fraction * 100.0);
    os << buf;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Budget-aware query and workload tuning over optimizer cost units"};
    app.require_subcommand(1);

    // gen
    GeneratorOptions gen;
    std::string gen_out;
    auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic workload with planted suboptimality");
    gen_cmd->add_option("--seed", gen.seed, "random seed")->default_val(0);
    gen_cmd->add_option("--queries", gen.n_queries, "number of queries")->default_val(20);
    gen_cmd->add_option("--planted", gen.planted_fraction, "fraction of queries with a faster reachable plan")->default_val(0.5);
    gen_cmd->add_option("--min-tables", gen.min_tables, "fewest tables per query")->default_val(3);
    gen_cmd->add_option("--max-tables", gen.max_tables, "most tables per query")->default_val(8);
    gen_cmd->add_flag("--identity", gen.identity_profile, "true profile equals the defaults (nothing to tune)");
    gen_cmd->add_option("--name", gen.name, "workload name")->default_val("synthetic");
    gen_cmd->add_option("--out", gen_out, "output workload JSON")->required();

    // tune-query
    std::string workload_path;
    std::string query_id;
    double budget = 0.0;
    std::string searcher_name = "random";
    std::uint64_t seed = 0;
    std::string out_path;
    std::size_t grid_k = 3;
    std::size_t max_trials = 0;
    auto* tq = app.add_subcommand("tune-query", "tune the cost units of one query under a time budget");
    tq->add_option("--workload", workload_path, "workload JSON")->required();
    tq->add_option("--query-id", query_id, "query to tune")->required();
    tq->add_option("--budget-s", budget, "tuning budget in seconds")->required();
    tq->add_option("--searcher", searcher_name, "random or grid")->default_val("random");
    tq->add_option("--seed", seed, "random seed")->default_val(0);
    tq->add_option("--grid-k", grid_k, "grid points per dimension")->default_val(3);
    tq->add_option("--max-trials", max_trials, "cap on proposals after the baseline (0 = none)")->default_val(0);
    tq->add_option("--out", out_path, "result JSON (trial CSV is written next to it)")->required();

    // tune-workload
    std::string scheduler_name = "rr";
    auto* tw = app.add_subcommand("tune-workload", "tune every query of a workload under one shared budget");
    tw->add_option("--workload", workload_path, "workload JSON")->required();
    tw->add_option("--budget-s", budget, "tuning budget in seconds")->required();
    tw->add_option("--scheduler", scheduler_name, "rr, cost, ucb or rate")->default_val("rr");
    tw->add_option("--searcher", searcher_name, "random or grid")->default_val("random");
    tw->add_option("--seed", seed, "random seed")->default_val(0);
    tw->add_option("--grid-k", grid_k, "grid points per dimension")->default_val(3);
    tw->add_option("--out", out_path, "result JSON (curve and trial CSVs are written next to it)")->required();

    // sweep
    std::string budgets_arg;
    std::string schedulers_arg = "rr,cost,ucb,rate";
    std::string out_dir;
    std::size_t threads = 0;
    auto* sw = app.add_subcommand("sweep", "run workload tuning over a grid of budgets and schedulers");
    sw->add_option("--workload", workload_path, "workload JSON")->required();
    sw->add_option("--budgets", budgets_arg, "comma-separated ascending budgets in seconds")->required();
    sw->add_option("--schedulers", schedulers_arg, "comma-separated schedulers")->default_val("rr,cost,ucb,rate");
    sw->add_option("--searcher", searcher_name, "random or grid")->default_val("random");
    sw->add_option("--seed", seed, "random seed")->default_val(0);
    sw->add_option("--threads", threads, "worker threads (0 = all cores)")->default_val(0);
    sw->add_option("--out-dir", out_dir, "output directory")->required();

    // oracle
    std::size_t enum_cap = default_enumeration_cap;
    auto* orc = app.add_subcommand("oracle", "report each query's best plan under the true profile");
    orc->add_option("--workload", workload_path, "workload JSON")->required();
    orc->add_option("--enum-cap", enum_cap, "largest query enumerated exhaustively")->default_val(default_enumeration_cap);
    orc->add_option("--out", out_path, "optional report JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_validation;
    }

    try {
        if (*gen_cmd) {
            const auto w = generate_workload(gen);
            save_workload(w, gen_out);
            const auto report = oracle_workload(w, 0);
            std::cout << "wrote " << gen_out << ": " << w.queries.size() << " queries, " << report.improvable()
                      << " improvable, oracle workload improvement ";
            print_percent(std::cout, report.improvement());
            std::cout << '\n';
            return exit_ok;
        }

        const auto w = load_workload(workload_path);
        const auto space = w.search_space();

        if (*tq) {
            std::size_t index = w.queries.size();
            for (std::size_t i = 0; i < w.queries.size(); ++i) {
                if (w.queries[i].id == query_id) index = i;
            }
            if (index == w.queries.size()) throw InvalidArgument("no query '" + query_id + "' in the workload");
            QtOptions opts;
            opts.defaults = w.defaults;
            if (max_trials > 0) opts.max_trials = max_trials;
            SimulatedBackend backend(w.true_profile);
            const auto r = tune_query(w.queries[index], space, budget,
                                      make_searcher(searcher_arg(searcher_name), space, mix_seed(seed, index), grid_k),
                                      backend, opts);
            write_file(out_path, to_json(r).dump(2) + "\n");
            write_file(sibling(out_path, ".trials.csv"), trials_to_csv(r.trials, w.defaults));
            std::cout << r.query_id << ": default " << r.default_time << " s, best " << r.best_time << " s (";
            print_percent(std::cout, r.improvement());
            std::cout << ") after " << r.trials.size() << " trials, spent " << r.ledger.spent() << " of "
                      << r.ledger.budget() << " s\n";
            return exit_ok;
        }

        if (*tw) {
            const auto r = run_session(w, budget, scheduler_arg(scheduler_name), searcher_arg(searcher_name), seed, {}, grid_k);
            write_file(out_path, to_json(r).dump(2) + "\n");
            write_file(sibling(out_path, ".curve.csv"), curve_to_csv(r.curve));
            write_file(sibling(out_path, ".trials.csv"), trial_log_to_csv(r.trial_log, w.defaults));
            std::cout << r.scheduler << ": workload default " << r.workload_default_time << " s, best "
                      << r.workload_best_time << " s (";
            print_percent(std::cout, r.improvement());
            std::cout << "), spent " << r.ledger.spent() << " of " << r.ledger.budget() << " s"
                      << (r.calibration_incomplete ? " [calibration incomplete]" : "") << '\n';
            return exit_ok;
        }

        if (*sw) {
            SweepSpec grid;
            grid.seed = seed;
            grid.searcher = searcher_arg(searcher_name);
            for (const auto& b : split_list(budgets_arg)) {
                try {
                    grid.budgets.push_back(csv::parse_double(b));
                } catch (const LoadError&) {
                    throw InvalidArgument("budget '" + b + "' is not a number");
                }
            }
            for (const auto& s : split_list(schedulers_arg)) grid.schedulers.push_back(scheduler_arg(s));
            validate(grid);
            const auto cells = run_sweep(w, grid, threads);
            const fs::path dir(out_dir);
            fs::create_directories(dir);
            write_file(dir / "summary.csv", sweep_summary_csv(cells));
            write_file(dir / "curves.csv", sweep_curves_csv(cells));
            int failures = 0;
            for (const auto& c : cells) {
                std::cout << to_string(c.scheduler) << " @ " << c.budget << " s: ";
                if (c.result) {
                    write_file(dir / ("cell_" + std::string(to_string(c.scheduler)) + "_" + csv::format_double(c.budget) + ".json"),
                               to_json(*c.result).dump(2) + "\n");
                    print_percent(std::cout, c.result->improvement());
                    std::cout << '\n';
                } else {
                    ++failures;
                    std::cout << "error: " << c.error << '\n';
                }
            }
            return failures ? exit_runtime : exit_ok;
        }

        if (*orc) {
            const auto report = oracle_workload(w, enum_cap);
            for (const auto& e : report.entries) {
                std::cout << e.query_id << "  default " << e.default_time << " s  oracle " << e.oracle_time << " s  ";
                print_percent(std::cout, e.improvement());
                std::cout << "  " << (e.exhaustive ? "exhaustive" : "dp") << "  " << e.oracle_fingerprint << '\n';
            }
            std::cout << "workload: default " << report.workload_default_time << " s, oracle "
                      << report.workload_oracle_time << " s (";
            print_percent(std::cout, report.improvement());
            std::cout << "), " << report.improvable() << " improvable queries\n";
            if (!out_path.empty()) write_file(out_path, to_json(report).dump(2) + "\n");
            return exit_ok;
        }
    } catch (const LoadError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_validation;
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_validation;
    } catch (const InvalidQuery& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_validation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_runtime;
    }
    return exit_ok;
}
