/// Command-line front end: validate configs, execute runs, and inspect
/// persisted results. Exit codes: 0 success, 2 configuration error,
/// 3 runtime failure.
#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "queens/queens.hpp"

namespace fs = std::filesystem;

namespace {

int cmd_validate(const std::string& config_path) {
    const queens::RunConfig config = queens::load_config(config_path);
    const queens::AnalysisPlan plan = queens::build_plan(config);
    std::printf("%s: valid\n", config_path.c_str());
    std::printf("  run_name: %s\n", plan.run_name.c_str());
    std::printf("  method:   %s (model '%s')\n", plan.method_name.c_str(),
                plan.method.at("model").get<std::string>().c_str());
    std::printf("  models:  ");
    for (const auto& step : plan.models)
        std::printf(" %s(%s)", step.name.c_str(), step.type.c_str());
    std::printf("\n  seed:     %llu\n", static_cast<unsigned long long>(plan.seed));
    return 0;
}

int cmd_run(const std::string& config_path, const std::string& output_dir,
            const std::string& seed, const std::string& max_concurrent,
            const std::string& log_level) {
    queens::RunConfig config = queens::load_config(config_path);
    if (!output_dir.empty())
        config.doc["global_settings"]["output_directory"] =
            fs::absolute(output_dir).string();
    if (!seed.empty()) config.doc["global_settings"]["seed"] = std::stoll(seed);
    if (!log_level.empty()) config.doc["global_settings"]["log_level"] = log_level;
    if (!max_concurrent.empty()) {
        if (!config.doc.contains("scheduler"))
            config.doc["scheduler"] = queens::ordered_json::object();
        config.doc["scheduler"]["max_concurrent"] = std::stoll(max_concurrent);
    }
    // Re-validate after the overrides, then execute.
    config = queens::parse_config(config.doc.dump(), config.base_dir);
    const queens::RunOutcome outcome = queens::run(queens::build_plan(config), true);
    std::printf("results: %s\n", outcome.results_path.string().c_str());
    return 0;
}

int cmd_show(const std::string& results_path) {
    const queens::ordered_json doc = queens::read_results(results_path);
    const auto& meta = doc.at("meta");
    std::printf("run:      %s\n", meta.at("run_name").get<std::string>().c_str());
    std::printf("method:   %s (model '%s')\n", meta.at("method").get<std::string>().c_str(),
                meta.at("model").get<std::string>().c_str());
    std::printf("seed:     %lld\n", meta.at("seed").get<long long>());
    std::printf("started:  %s\n", meta.at("started").get<std::string>().c_str());
    std::printf("finished: %s (%.3f s)\n", meta.at("finished").get<std::string>().c_str(),
                meta.at("duration_seconds").get<double>());

    const auto& samples = doc.at("samples");
    std::string columns;
    for (const auto& c : samples.at("columns")) {
        if (!columns.empty()) columns += ", ";
        columns += c.get<std::string>();
    }
    std::printf("samples:  %zu rows of [%s]\n", samples.at("values").size(), columns.c_str());

    std::size_t completed = 0, failed = 0, timed_out = 0;
    for (const auto& s : doc.at("statuses")) {
        const std::string v = s.get<std::string>();
        if (v == "completed") ++completed;
        else if (v == "failed") ++failed;
        else ++timed_out;
    }
    std::printf("statuses: %zu completed, %zu failed, %zu timed out\n", completed, failed,
                timed_out);
    std::printf("method_results:\n%s\n", doc.at("method_results").dump(2).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-query analysis engine"};
    app.require_subcommand(1);

    std::string config_path, results_path, output_dir, seed, max_concurrent, log_level;

    auto* validate = app.add_subcommand("validate", "parse and check a run config");
    validate->add_option("config", config_path, "JSON run configuration")->required();

    auto* run = app.add_subcommand("run", "execute a run config");
    run->add_option("config", config_path, "JSON run configuration")->required();
    run->add_option("--output-dir", output_dir, "override the output directory");
    run->add_option("--seed", seed, "override the master seed");
    run->add_option("--max-concurrent", max_concurrent, "override the scheduler ceiling");
    run->add_option("--log-level", log_level, "override the log level");

    auto* show = app.add_subcommand("show", "summarize a results file");
    show->add_option("results", results_path, "results.json produced by a run")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) return cmd_validate(config_path);
        if (run->parsed())
            return cmd_run(config_path, output_dir, seed, max_concurrent, log_level);
        return cmd_show(results_path);
    } catch (const queens::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
