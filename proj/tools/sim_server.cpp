// Serves the subprocess backend protocol from a workload file's simulator,
// one JSON request per stdin line, one JSON response per stdout line.

#include <cmath>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "costtune/errors.hpp"
#include "costtune/exec_backend.hpp"
#include "costtune/workload.hpp"

int main(int argc, char** argv) {
    CLI::App app{"costtune simulator backend (newline-delimited JSON over stdin/stdout)"};
    std::string workload_path;
    app.add_option("--workload", workload_path, "workload JSON file")->required();
    CLI11_PARSE(app, argc, argv);

    using namespace costtune;
    WorkloadFile w;
    try {
        w = load_workload(workload_path);
    } catch (const Error& e) {
        std::cerr << "sim-server: " << e.what() << '\n';
        return 2;
    }

    std::string line;
    while (std::getline(std::cin, line)) {
        if (line.empty()) continue;
        try {
            const auto req = nlohmann::json::parse(line);
            const auto id = req.at("query_id").get<std::string>();
            const QuerySpec* q = w.find(id);
            if (!q) throw Error("unknown query_id '" + id + "'");
            const auto units = cost_units_from_json(req.at("cost_units"), w.defaults);
            const auto chosen = optimize(*q, units);
            const double exec_ms = true_time(chosen.plan, *q, w.true_profile) * 1000.0;

            WireResponse resp{chosen.plan.fingerprint(), exec_ms, false};
            const auto& timeout = req.at("timeout_ms");
            if (!timeout.is_null()) {
                const double limit = static_cast<double>(timeout.get<std::int64_t>());
                if (exec_ms >= limit) {
                    resp.exec_ms = limit;
                    resp.timed_out = true;
                }
            }
            std::cout << to_json(resp).dump() << '\n' << std::flush;
        } catch (const std::exception& e) {
            std::cerr << "sim-server: bad request: " << e.what() << '\n';
            return 2;
        }
    }
    return 0;
}
