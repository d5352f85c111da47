// Scenario runner: run a configured experiment end to end, list the shipped
// scenario files, or evaluate a scenario's embedded assertions.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "ringdown/scenario.hpp"

namespace fs = std::filesystem;
using ringdown::json;

namespace {

int fail_with(const std::string& context, const std::string& message) {
    json err;
    err["error"] = {{"context", context}, {"message", message}};
    std::cerr << err.dump() << std::endl;
    return 1;
}

std::string base_name(const std::string& path) {
    return fs::path(path).stem().string();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributed oscillation-mode estimation with attack detection"};
    app.require_subcommand(1);

    std::string scenario_path, out_dir = "out", format, scenario_dir = "scenarios";
    int iters_override = -1;
    std::uint64_t seed_override = 0;
    bool has_seed = false;

    auto* run = app.add_subcommand("run", "Run a scenario and export its trace");
    run->add_option("--scenario", scenario_path, "Scenario config file")->required();
    run->add_option("--iters", iters_override, "Override the iteration budget");
    auto* seed_opt = run->add_option("--seed", seed_override,
                                     "Override the signal residue/noise seeds");
    run->add_option("--out", out_dir, "Output directory");
    run->add_option("--format", format, "Trace format: csv or json (default: from config)");

    auto* list = app.add_subcommand("list-scenarios", "List shipped scenario configs");
    list->add_option("--dir", scenario_dir, "Directory to scan (default: scenarios)");

    std::string verify_path;
    auto* verify = app.add_subcommand("verify", "Run a scenario's embedded assertions");
    verify->add_option("--scenario", verify_path, "Scenario config file")->required();
    verify->add_option("--iters", iters_override, "Override the iteration budget");

    CLI11_PARSE(app, argc, argv);
    has_seed = seed_opt->count() > 0;

    try {
        if (run->parsed()) {
            auto cfg = ringdown::load_scenario(scenario_path);
            if (iters_override > 0) cfg.admm.iterations = iters_override;
            if (has_seed) {
                cfg.signal.residue_seed = seed_override;
                cfg.signal.noise_seed = seed_override;
            }
            if (!format.empty()) cfg.output_format = format;
            if (out_dir != "out" || cfg.output_dir.empty()) cfg.output_dir = out_dir;

            const auto trace = ringdown::run_scenario(cfg);
            fs::create_directories(cfg.output_dir);
            const std::string stem = (fs::path(cfg.output_dir) / base_name(scenario_path)).string();
            std::string trace_path;
            if (cfg.output_format == "json") {
                trace_path = stem + "_trace.json";
                ringdown::export_trace_json(trace, trace_path);
            } else {
                trace_path = stem + "_trace.csv";
                ringdown::export_trace_csv(trace, trace_path);
            }
            const std::string report_path = stem + "_report.json";
            {
                std::ofstream out(report_path);
                out << ringdown::report_to_json(trace.report).dump(2) << '\n';
            }
            json summary;
            summary["scenario"] = cfg.name;
            summary["iterations"] = trace.records.size();
            summary["presence"] = trace.report.presence;
            summary["identified_malicious"] =
                ringdown::detail::set_to_json_1based(trace.report.identified);
            summary["confirmed"] = trace.report.confirmed;
            summary["mitigation_at"] = trace.mitigation_at;
            summary["final_modes"] = ringdown::modes_to_json(trace.final_modes);
            summary["trace"] = trace_path;
            summary["report"] = report_path;
            std::cout << summary.dump(2) << std::endl;
            return 0;
        }
        if (list->parsed()) {
            if (!fs::is_directory(scenario_dir))
                return fail_with("list-scenarios", "no such directory: " + scenario_dir);
            std::vector<std::string> names;
            for (const auto& entry : fs::directory_iterator(scenario_dir))
                if (entry.path().extension() == ".json") names.push_back(entry.path().string());
            std::sort(names.begin(), names.end());
            for (const auto& name : names) {
                try {
                    auto cfg = ringdown::load_scenario(name);
                    std::cout << name << "  —  " << cfg.description << "\n";
                } catch (const std::exception& err) {
                    std::cout << name << "  —  (unreadable: " << err.what() << ")\n";
                }
            }
            return 0;
        }
        if (verify->parsed()) {
            auto cfg = ringdown::load_scenario(verify_path);
            if (iters_override > 0) cfg.admm.iterations = iters_override;
            const auto trace = ringdown::run_scenario(cfg);
            const auto outcomes = ringdown::verify_scenario(cfg, trace);
            bool all_passed = true;
            for (const auto& outcome : outcomes) {
                std::cout << (outcome.passed ? "PASS" : "FAIL") << "  " << cfg.name << "."
                          << outcome.name << "  (" << outcome.detail << ")\n";
                all_passed = all_passed && outcome.passed;
            }
            if (outcomes.empty()) std::cout << "no assertions embedded in " << cfg.name << "\n";
            return all_passed ? 0 : 1;
        }
    } catch (const std::exception& err) {
        return fail_with(app.get_subcommands().front()->get_name(), err.what());
    }
    return 0;
}
