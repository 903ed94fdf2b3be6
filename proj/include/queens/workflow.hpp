#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "queens/config.hpp"
#include "queens/designs.hpp"
#include "queens/driver.hpp"
#include "queens/errors.hpp"
#include "queens/gp.hpp"
#include "queens/inference.hpp"
#include "queens/log.hpp"
#include "queens/model.hpp"
#include "queens/optimize.hpp"
#include "queens/parameter_space.hpp"
#include "queens/random.hpp"
#include "queens/results.hpp"
#include "queens/scheduler.hpp"
#include "queens/sensitivity.hpp"
#include "queens/uq.hpp"

namespace queens {

/// One model-instantiation step of a plan: the block, its type, and
/// its settings with every default filled in.
struct ModelStep {
    std::string name;
    std::string type;
    ordered_json settings;
};

/// Everything a run needs, resolved from a validated config: canonical
/// method and model settings (defaults filled), the instantiation
/// order, and the global run parameters. Building a plan performs no
/// model evaluation and touches none of the files the config mentions.
struct AnalysisPlan {
    ordered_json config_doc;  ///< the validated config, verbatim
    std::filesystem::path base_dir;
    std::string run_name;
    std::filesystem::path output_directory;
    std::uint64_t seed = 42;
    std::string log_level = "info";
    ordered_json parameters;
    ordered_json scheduler;
    std::vector<ModelStep> models;  ///< dependency order, dependencies first
    std::string method_name;
    ordered_json method;

    /// Canonical form for comparing plans; configs that differ only in
    /// block order or omitted defaults produce equal values here.
    ordered_json normalized() const {
        ordered_json doc;
        doc["run_name"] = run_name;
        doc["seed"] = seed;
        doc["log_level"] = log_level;
        doc["parameters"] = parameters;
        doc["scheduler"] = scheduler;
        ordered_json steps = ordered_json::array();
        for (const auto& step : models) {
            ordered_json s;
            s["name"] = step.name;
            s["settings"] = step.settings;
            steps.push_back(std::move(s));
        }
        doc["models"] = std::move(steps);
        doc["method"] = method;
        return doc;
    }
};

namespace detail {

/// Parameter block with the optional beta bounds made explicit.
inline ordered_json normalize_parameters(const ordered_json& parameters) {
    ordered_json out = ordered_json::object();
    for (const auto& [name, block] : parameters.items()) {
        ordered_json b = block;
        if (b.at("distribution").get<std::string>() == "beta") {
            if (!b.contains("lower")) b["lower"] = 0.0;
            if (!b.contains("upper")) b["upper"] = 1.0;
        }
        out[name] = std::move(b);
    }
    return out;
}

inline void set_default(ordered_json& block, const std::string& key, ordered_json value) {
    if (!block.contains(key)) block[key] = std::move(value);
}

inline ordered_json normalize_model_block(const ordered_json& block) {
    ordered_json b = block;
    const std::string type = b.at("type").get<std::string>();
    if (type == "driver") {
        set_default(b, "output_file", "output.csv");
        set_default(b, "extractor", "csv_scalar_column");
        set_default(b, "column", 0);
        set_default(b, "timeout_seconds", 60.0);
        set_default(b, "extra_args", ordered_json::array());
        set_default(b, "output_dimension", 1);
    } else if (type == "surrogate") {
        ordered_json& tr = b.at("training");
        set_default(tr, "samples", 100);
        set_default(tr, "design", "sobol");
        set_default(tr, "skip", 1);
        set_default(tr, "restarts", 5);
        set_default(tr, "steps", 500);
        set_default(tr, "validation_samples", 50);
    }
    return b;
}

inline ordered_json normalize_method(const ordered_json& method, Eigen::Index dimension) {
    ordered_json m = method;
    const std::string name = m.at("name").get<std::string>();
    if (name == "grid_study") {
        set_default(m, "points_per_axis", 10);
    } else if (name == "monte_carlo") {
        set_default(m, "samples", 1000);
        set_default(m, "design", "monte_carlo");
        set_default(m, "histogram_bins", 20);
        set_default(m, "skip", 1);
    } else if (name == "morris") {
        set_default(m, "trajectories", 20);
        set_default(m, "levels", 4);
    } else if (name == "sobol_indices") {
        set_default(m, "skip", 1);
    } else if (name == "bmfmc") {
        set_default(m, "lf_samples", 1000);
        set_default(m, "pairs", 50);
        set_default(m, "grid_size", 201);
        set_default(m, "design", "monte_carlo");
    } else if (name == "metropolis_hastings") {
        set_default(m, "steps", 10000);
        if (!m.contains("proposal_scales")) {
            m["proposal_scales"] = ordered_json::array();
            for (Eigen::Index j = 0; j < dimension; ++j) m["proposal_scales"].push_back(1.0);
        } else if (m.at("proposal_scales").is_number()) {
            const double s = m.at("proposal_scales").get<double>();
            m["proposal_scales"] = ordered_json::array();
            for (Eigen::Index j = 0; j < dimension; ++j) m["proposal_scales"].push_back(s);
        }
    } else if (name == "smc") {
        set_default(m, "particles", 1000);
        set_default(m, "ess_threshold", 0.5);
        set_default(m, "rejuvenation_steps", 5);
    } else if (name == "levenberg_marquardt") {
        set_default(m, "gradient_tol", 1e-8);
        set_default(m, "step_tol", 1e-10);
        set_default(m, "max_iter", 200);
    } else if (name == "stochastic_optimizer") {
        set_default(m, "step_size", 0.001);
        set_default(m, "beta1", 0.9);
        set_default(m, "beta2", 0.999);
        set_default(m, "rho", 0.9);
        set_default(m, "epsilon", 1e-8);
        set_default(m, "max_iter", 1000);
        set_default(m, "gradient_tol", 1e-8);
    }
    return m;
}

}  // namespace detail

/// Resolves a validated config into a plan. Dependency order comes
/// from the reference graph, so permuting the blocks in the file
/// yields an identical plan.
inline AnalysisPlan build_plan(const RunConfig& cfg) {
    AnalysisPlan plan;
    plan.config_doc = cfg.doc;
    plan.base_dir = cfg.base_dir;
    plan.run_name = cfg.run_name();
    plan.output_directory = cfg.output_directory();
    plan.seed = cfg.seed();
    plan.log_level = cfg.log_level();
    plan.parameters = detail::normalize_parameters(cfg.doc.at("parameters"));

    plan.scheduler = ordered_json::object();
    const ordered_json sched_block =
        cfg.doc.contains("scheduler") ? cfg.doc.at("scheduler") : ordered_json::object();
    plan.scheduler["max_concurrent"] =
        detail::integer_or(sched_block, "scheduler", "max_concurrent", 1);
    plan.scheduler["retries"] = detail::integer_or(sched_block, "scheduler", "retries", 0);
    plan.scheduler["workspace_root"] =
        detail::string_or(sched_block, "scheduler", "workspace_root", "");

    for (const auto& name : cfg.model_order) {
        const auto& block = cfg.model_block(name);
        plan.models.push_back(
            {name, block.at("type").get<std::string>(), detail::normalize_model_block(block)});
    }

    const auto dimension = static_cast<Eigen::Index>(cfg.doc.at("parameters").size());
    plan.method = detail::normalize_method(cfg.method(), dimension);
    plan.method_name = plan.method.at("name").get<std::string>();
    return plan;
}

/// A finished run: the sealed artifact and where it was written.
struct RunOutcome {
    std::filesystem::path results_path;
    ordered_json results;
};

namespace detail {

inline std::filesystem::path resolve_path(const std::filesystem::path& base,
                                          const std::string& path) {
    const std::filesystem::path p(path);
    return p.is_absolute() ? p : base / p;
}

/// Output column labels y0..y{m-1}.
inline std::vector<std::string> output_column_names(Eigen::Index m) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(m));
    for (Eigen::Index j = 0; j < m; ++j) names.push_back("y" + std::to_string(j));
    return names;
}

inline void require_scalar_output(const Model& model, const std::string& method) {
    if (model.output_dimension() != 1)
        throw ConfigError("method '" + method + "' needs a scalar model output; '" +
                          model.name() + "' produces " +
                          std::to_string(model.output_dimension()));
}

/// Design draw shared by the sampling methods. Random designs use the
/// dedicated design stream so the method stream stays untouched.
inline DesignMatrix draw_design(const std::string& kind, const ParameterSpace& space,
                                std::size_t n, std::uint64_t skip, std::uint64_t seed,
                                std::uint64_t stream) {
    if (kind == "sobol") return sobol_design(space, n, skip);
    RandomStream rng(seed, stream);
    if (kind == "lhs") return lhs_design(space, n, rng);
    return mc_design(space, n, rng);
}

/// Batch log-likelihood adapter: model outputs are read as
/// log-likelihood values; failed or non-finite rows become -inf.
inline Eigen::VectorXd loglikes_from_model(const Model& model, const Eigen::MatrixXd& X) {
    const BatchResult result = model.evaluate(X);
    Eigen::VectorXd ll(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double v = result.outputs(i, 0);
        ll[i] = (result.statuses[static_cast<std::size_t>(i)] == EvalStatus::completed &&
                 !std::isnan(v))
                    ? v
                    : -std::numeric_limits<double>::infinity();
    }
    return ll;
}

inline ordered_json quantiles_json(const OutputStatistics& stats) {
    ordered_json q = ordered_json::object();
    for (std::size_t i = 0; i < stats.quantile_levels.size(); ++i) {
        char key[16];
        std::snprintf(key, sizeof key, "%.2f", stats.quantile_levels[i]);
        q[key] = json_number(stats.quantiles[i]);
    }
    return q;
}

inline ordered_json optim_json(const OptimResult& result) {
    ordered_json out;
    out["x"] = json_vector(result.x);
    out["objective"] = json_number(result.objective);
    out["iterations"] = result.iterations;
    out["termination"] = to_string(result.reason);
    return out;
}

/// Iterate trace as (samples, objectives) matrices for persistence.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> trace_matrices(const OptimResult& result,
                                                                  Eigen::Index d) {
    const auto n = static_cast<Eigen::Index>(result.trace.size());
    Eigen::MatrixXd points(n, d);
    Eigen::MatrixXd objectives(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        points.row(i) = result.trace[static_cast<std::size_t>(i)].first.transpose();
        objectives(i, 0) = result.trace[static_cast<std::size_t>(i)].second;
    }
    return {points, objectives};
}

/// Writes the iterate/state trace plot file: step, parameters, value.
inline void write_trace_csv(const std::filesystem::path& dir,
                            const std::vector<std::string>& names,
                            const Eigen::MatrixXd& points, const Eigen::MatrixXd& values,
                            const std::string& value_name) {
    std::vector<std::string> header = {"step"};
    header.insert(header.end(), names.begin(), names.end());
    header.push_back(value_name);
    Eigen::MatrixXd table(points.rows(), points.cols() + 2);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        table(i, 0) = static_cast<double>(i);
        table.row(i).segment(1, points.cols()) = points.row(i);
        table(i, points.cols() + 1) = values(i, 0);
    }
    write_csv(dir / "trace.csv", header, table);
}

}  // namespace detail

/// Executes a plan: instantiates models (training surrogates offline),
/// runs the method, and persists the artifact plus plot-data files to
/// the plan's output directory. Progress goes to `run.log` inside the
/// output directory (echoed to stderr when `echo_log` is set).
inline RunOutcome run(const AnalysisPlan& plan, bool echo_log = false) {
    namespace fs = std::filesystem;
    const auto started = std::chrono::steady_clock::now();
    const std::string started_at = RunLogger::timestamp_utc();

    fs::create_directories(plan.output_directory);
    RunLogger logger(plan.output_directory / "run.log",
                     log_level_from_string(plan.log_level), echo_log);
    logger.info("run '" + plan.run_name + "' started: method " + plan.method_name + ", seed " +
                std::to_string(plan.seed));

    const ParameterSpace space = parameter_space_from_config(plan.parameters);

    // Workspace for external jobs: environment override first, then the
    // config, then a directory next to the results.
    SchedulerConfig sched;
    sched.max_concurrent =
        static_cast<std::size_t>(plan.scheduler.at("max_concurrent").get<std::int64_t>());
    sched.retries = static_cast<std::size_t>(plan.scheduler.at("retries").get<std::int64_t>());
    const std::string ws_config = plan.scheduler.at("workspace_root").get<std::string>();
    const char* ws_env = std::getenv("QUEENS_WORKSPACE");
    fs::path workspace;
    if (ws_env != nullptr && *ws_env != '\0')
        workspace = fs::path(ws_env) / plan.run_name;
    else if (!ws_config.empty())
        workspace = detail::resolve_path(plan.base_dir, ws_config);
    else
        workspace = plan.output_directory / "workspace";
    sched.workspace_root = workspace.string();

    // Model instantiation, dependencies first. Surrogates train here,
    // before the method sees them (their training is the offline phase).
    std::map<std::string, std::shared_ptr<const Model>> models;
    ordered_json surrogate_reports = ordered_json::object();
    std::size_t surrogate_index = 0;
    for (const ModelStep& step : plan.models) {
        if (step.type == "function") {
            models[step.name] = make_builtin_model(step.settings.at("function").get<std::string>(),
                                                   space.dimension());
        } else if (step.type == "driver") {
            DriverConfig driver;
            driver.executable = step.settings.at("executable").get<std::string>();
            driver.template_path =
                detail::resolve_path(plan.base_dir,
                                     step.settings.at("input_template").get<std::string>())
                    .string();
            driver.output_file = step.settings.at("output_file").get<std::string>();
            driver.extractor =
                extractor_from_string(step.settings.at("extractor").get<std::string>());
            driver.column = step.settings.at("column").get<int>();
            driver.timeout_seconds = step.settings.at("timeout_seconds").get<double>();
            for (const auto& a : step.settings.at("extra_args"))
                driver.extra_args.push_back(a.get<std::string>());
            driver.output_dimension = step.settings.at("output_dimension").get<Eigen::Index>();
            fs::create_directories(workspace);
            models[step.name] = std::make_shared<SchedulerModel>(driver, sched, space, &logger);
        } else if (step.type == "likelihood") {
            const ObservationSet observations = load_observations(
                detail::resolve_path(plan.base_dir,
                                     step.settings.at("observations").get<std::string>())
                    .string(),
                step.settings.at("noise_variance").get<double>());
            models[step.name] = std::make_shared<LikelihoodModel>(
                models.at(step.settings.at("forward_model").get<std::string>()), observations,
                &logger);
        } else {  // surrogate
            const auto& training = step.settings.at("training");
            const auto samples = training.at("samples").get<std::size_t>();
            const std::string design_kind = training.at("design").get<std::string>();
            const auto skip = training.at("skip").get<std::uint64_t>();
            const auto& target =
                *models.at(step.settings.at("target_model").get<std::string>());
            if (target.output_dimension() != 1)
                throw ConfigError("surrogate '" + step.name +
                                  "' needs a scalar target model output; '" + target.name() +
                                  "' produces " + std::to_string(target.output_dimension()));

            logger.info("surrogate '" + step.name + "': evaluating " + target.name() + " at " +
                        std::to_string(samples) + " " + design_kind + " points");
            const DesignMatrix design =
                detail::draw_design(design_kind, space, samples, skip, plan.seed,
                                    100 + 2 * static_cast<std::uint64_t>(surrogate_index));
            const BatchResult result = target.evaluate(design);
            std::vector<Eigen::Index> completed;
            for (Eigen::Index i = 0; i < result.outputs.rows(); ++i)
                if (result.statuses[static_cast<std::size_t>(i)] == EvalStatus::completed)
                    completed.push_back(i);
            if (completed.size() < 2)
                throw Error("surrogate training needs at least 2 completed evaluations, got " +
                            std::to_string(completed.size()));
            Eigen::MatrixXd X(static_cast<Eigen::Index>(completed.size()), space.dimension());
            Eigen::VectorXd y(static_cast<Eigen::Index>(completed.size()));
            for (std::size_t i = 0; i < completed.size(); ++i) {
                X.row(static_cast<Eigen::Index>(i)) = design.values.row(completed[i]);
                y[static_cast<Eigen::Index>(i)] = result.outputs(completed[i], 0);
            }

            GPTrainOptions gp_options;
            gp_options.restarts = training.at("restarts").get<std::size_t>();
            gp_options.steps = training.at("steps").get<std::size_t>();
            gp_options.seed = plan.seed + surrogate_index;
            auto gp = std::make_shared<GPModel>(train_gp(X, y, nullptr, gp_options));

            ordered_json report;
            report["target_model"] = step.settings.at("target_model");
            report["design"] = design_kind;
            report["training_samples"] = samples;
            report["completed"] = completed.size();
            const GPHyperparameters hyper = gp->hyperparameters();
            report["hyperparameters"] = {{"signal_variance", json_number(hyper.signal_variance)},
                                         {"lengthscales", json_vector(hyper.lengthscales)},
                                         {"noise_variance", json_number(hyper.noise_variance)}};
            report["log_marginal_likelihood"] =
                json_number(gp->trained_log_marginal_likelihood());

            const auto validation = training.at("validation_samples").get<std::size_t>();
            if (validation > 0) {
                const DesignMatrix check = detail::draw_design(
                    design_kind, space, validation, skip + samples, plan.seed,
                    101 + 2 * static_cast<std::uint64_t>(surrogate_index));
                const BatchResult truth = target.evaluate(check);
                double sum_sq = 0.0;
                std::size_t used = 0;
                const Eigen::VectorXd predicted = gp->predict_mean(check.values);
                for (Eigen::Index i = 0; i < check.values.rows(); ++i) {
                    if (truth.statuses[static_cast<std::size_t>(i)] != EvalStatus::completed)
                        continue;
                    const double diff = predicted[i] - truth.outputs(i, 0);
                    sum_sq += diff * diff;
                    ++used;
                }
                if (used > 0) {
                    const double rmse = std::sqrt(sum_sq / static_cast<double>(used));
                    report["validation_samples"] = used;
                    report["validation_rmse"] = json_number(rmse);
                    char line[160];
                    std::snprintf(line, sizeof line,
                                  "surrogate '%s': trained on %zu/%zu points, validation RMSE "
                                  "%.6g over %zu points",
                                  step.name.c_str(), completed.size(), samples, rmse, used);
                    logger.info(line);
                } else {
                    logger.warning("surrogate '" + step.name +
                                   "': every validation evaluation failed; no RMSE");
                }
            }
            surrogate_reports[step.name] = std::move(report);
            models[step.name] = gp;
            ++surrogate_index;
        }
    }

    // Method dispatch.
    const std::shared_ptr<const Model> root =
        models.at(plan.method.at("model").get<std::string>());
    const std::vector<std::string> names = space.names();
    Eigen::MatrixXd samples;
    Eigen::MatrixXd outputs;
    std::vector<std::string> statuses;
    ordered_json method_results;
    logger.info("method " + plan.method_name + ": model '" + root->name() + "'");

    if (plan.method_name == "grid_study") {
        const auto p = plan.method.at("points_per_axis").get<std::size_t>();
        const DesignMatrix design =
            grid_design(space, std::vector<std::size_t>(static_cast<std::size_t>(space.dimension()), p));
        const BatchResult result = root->evaluate(design);
        samples = design.values;
        outputs = result.outputs;
        statuses = status_strings(result);
        const std::size_t failed = result.count(EvalStatus::failed);
        const std::size_t timed_out = result.count(EvalStatus::timed_out);
        method_results["points_per_axis"] = p;
        method_results["evaluations"] = design.values.rows();
        method_results["failed"] = failed;
        method_results["timed_out"] = timed_out;
        if (space.dimension() == 2 && root->output_dimension() >= 1) {
            Eigen::MatrixXd heat(samples.rows(), 3);
            heat.leftCols(2) = samples;
            heat.col(2) = outputs.col(0);
            write_csv(plan.output_directory / "grid_heatmap.csv",
                      {names[0], names[1], "value"}, heat, "status", statuses);
        }
    } else if (plan.method_name == "monte_carlo") {
        detail::require_scalar_output(*root, plan.method_name);
        const auto n = plan.method.at("samples").get<std::size_t>();
        const auto bins = plan.method.at("histogram_bins").get<std::size_t>();
        const DesignMatrix design =
            detail::draw_design(plan.method.at("design").get<std::string>(), space, n,
                                plan.method.at("skip").get<std::uint64_t>(), plan.seed, 1);
        const BatchResult result = root->evaluate(design);
        const OutputStatistics stats = summarize_output(result, 0, bins);
        samples = design.values;
        outputs = result.outputs;
        statuses = status_strings(result);
        if (stats.failed_count > 0)
            logger.warning("monte_carlo: " + std::to_string(stats.failed_count) + " of " +
                           std::to_string(n) + " evaluations failed");
        method_results["samples"] = stats.sample_count;
        method_results["failed"] = stats.failed_count;
        method_results["design"] = plan.method.at("design");
        method_results["mean"] = json_number(stats.mean);
        method_results["variance"] = json_number(stats.variance);
        method_results["standard_deviation"] = json_number(stats.standard_deviation);
        method_results["quantiles"] = detail::quantiles_json(stats);

        const auto hist_bins = static_cast<Eigen::Index>(stats.histogram_counts.size());
        Eigen::MatrixXd hist(hist_bins, 3);
        for (Eigen::Index b = 0; b < hist_bins; ++b) {
            hist(b, 0) = stats.histogram_edges[static_cast<std::size_t>(b)];
            hist(b, 1) = stats.histogram_edges[static_cast<std::size_t>(b) + 1];
            hist(b, 2) = static_cast<double>(stats.histogram_counts[static_cast<std::size_t>(b)]);
        }
        write_csv(plan.output_directory / "histogram.csv", {"bin_left", "bin_right", "count"},
                  hist);
        const auto ecdf_n = static_cast<Eigen::Index>(stats.ecdf_values.size());
        Eigen::MatrixXd ecdf(ecdf_n, 2);
        for (Eigen::Index i = 0; i < ecdf_n; ++i) {
            ecdf(i, 0) = stats.ecdf_values[static_cast<std::size_t>(i)];
            ecdf(i, 1) = static_cast<double>(i + 1) / static_cast<double>(ecdf_n);
        }
        write_csv(plan.output_directory / "ecdf.csv", {"value", "probability"}, ecdf);
    } else if (plan.method_name == "morris") {
        detail::require_scalar_output(*root, plan.method_name);
        RandomStream rng(plan.seed, 1);
        const MorrisDesign design =
            morris_design(space, plan.method.at("trajectories").get<std::size_t>(),
                          plan.method.at("levels").get<std::size_t>(), rng);
        const BatchResult result = root->evaluate(design.design);
        const MorrisIndices indices = morris_indices(design, result);
        samples = design.design.values;
        outputs = result.outputs;
        statuses = status_strings(result);
        method_results["trajectories"] = design.trajectories;
        method_results["levels"] = design.levels;
        method_results["used_trajectories"] = indices.used_trajectories;
        method_results["discarded_trajectories"] = indices.discarded_trajectories;
        method_results["mu"] = json_vector(indices.mu);
        method_results["mu_star"] = json_vector(indices.mu_star);
        method_results["sigma"] = json_vector(indices.sigma);

        Eigen::MatrixXd table(space.dimension(), 3);
        table.col(0) = indices.mu;
        table.col(1) = indices.mu_star;
        table.col(2) = indices.sigma;
        write_csv(plan.output_directory / "morris_indices.csv", {"mu", "mu_star", "sigma"},
                  table, "parameter", names);
    } else if (plan.method_name == "sobol_indices") {
        detail::require_scalar_output(*root, plan.method_name);
        const SaltelliDesign design =
            saltelli_design(space, plan.method.at("base_samples").get<std::size_t>(),
                            plan.method.at("skip").get<std::uint64_t>());
        const BatchResult result = root->evaluate(design.design);
        const SobolIndices indices = sobol_indices(design, result);
        samples = design.design.values;
        outputs = result.outputs;
        statuses = status_strings(result);
        method_results["base_samples"] = design.base_count;
        method_results["evaluations"] = design.design.values.rows();
        method_results["output_variance"] = json_number(indices.output_variance);
        method_results["first_order"] = json_vector(indices.first_order);
        method_results["total_effect"] = json_vector(indices.total_effect);

        Eigen::MatrixXd table(space.dimension(), 2);
        table.col(0) = indices.first_order;
        table.col(1) = indices.total_effect;
        write_csv(plan.output_directory / "sobol_indices.csv", {"first_order", "total_effect"},
                  table, "parameter", names);
    } else if (plan.method_name == "bmfmc") {
        const std::shared_ptr<const Model> hf =
            models.at(plan.method.at("hf_model").get<std::string>());
        detail::require_scalar_output(*root, plan.method_name);
        detail::require_scalar_output(*hf, plan.method_name);
        const auto n = plan.method.at("lf_samples").get<std::size_t>();
        const auto pairs = plan.method.at("pairs").get<std::size_t>();
        const DesignMatrix design = detail::draw_design(
            plan.method.at("design").get<std::string>(), space, n, 1, plan.seed, 1);
        const BatchResult lf_result = root->evaluate(design);
        std::vector<Eigen::Index> completed;
        for (Eigen::Index i = 0; i < lf_result.outputs.rows(); ++i)
            if (lf_result.statuses[static_cast<std::size_t>(i)] == EvalStatus::completed)
                completed.push_back(i);
        Eigen::VectorXd lf_y(static_cast<Eigen::Index>(completed.size()));
        for (std::size_t i = 0; i < completed.size(); ++i)
            lf_y[static_cast<Eigen::Index>(i)] = lf_result.outputs(completed[i], 0);

        // Pair selection: spread over the low-fidelity output range so
        // the regression sees support everywhere, not just the bulk.
        std::vector<Eigen::Index> order(completed.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](Eigen::Index a, Eigen::Index b) { return lf_y[a] < lf_y[b]; });
        std::vector<Eigen::Index> chosen;
        if (!order.empty()) {
            const std::size_t want = std::min(pairs, order.size());
            for (std::size_t i = 0; i < want; ++i) {
                const std::size_t pos =
                    want == 1 ? 0 : (i * (order.size() - 1)) / (want - 1);
                chosen.push_back(order[pos]);
            }
            std::sort(chosen.begin(), chosen.end());
            chosen.erase(std::unique(chosen.begin(), chosen.end()), chosen.end());
        }
        Eigen::MatrixXd pair_X(static_cast<Eigen::Index>(chosen.size()), space.dimension());
        for (std::size_t i = 0; i < chosen.size(); ++i)
            pair_X.row(static_cast<Eigen::Index>(i)) =
                design.values.row(completed[static_cast<std::size_t>(chosen[i])]);
        logger.info("bmfmc: evaluating high-fidelity model '" + hf->name() + "' at " +
                    std::to_string(chosen.size()) + " paired points");
        const BatchResult hf_result = hf->evaluate(pair_X);
        std::vector<double> p_lf;
        std::vector<double> p_hf;
        for (Eigen::Index i = 0; i < pair_X.rows(); ++i) {
            if (hf_result.statuses[static_cast<std::size_t>(i)] != EvalStatus::completed)
                continue;
            p_lf.push_back(lf_y[chosen[static_cast<std::size_t>(i)]]);
            p_hf.push_back(hf_result.outputs(i, 0));
        }
        BMFMCOptions options;
        options.grid_size = plan.method.at("grid_size").get<std::size_t>();
        options.gp.seed = plan.seed;
        const DensityEstimate estimate = bmfmc_estimate(
            lf_y, Eigen::Map<const Eigen::VectorXd>(p_lf.data(), static_cast<Eigen::Index>(p_lf.size())),
            Eigen::Map<const Eigen::VectorXd>(p_hf.data(), static_cast<Eigen::Index>(p_hf.size())),
            options, &logger);
        samples = design.values;
        outputs = lf_result.outputs;
        statuses = status_strings(lf_result);
        method_results["lf_samples"] = n;
        method_results["lf_completed"] = completed.size();
        method_results["pairs_requested"] = pairs;
        method_results["pairs_used"] = p_lf.size();
        method_results["grid_size"] = options.grid_size;
        method_results["mean"] = json_number(estimate.mean());
        method_results["integral"] = json_number(estimate.integral());

        Eigen::MatrixXd density(static_cast<Eigen::Index>(estimate.grid.size()), 2);
        density.col(0) = Eigen::Map<const Eigen::VectorXd>(
            estimate.grid.data(), static_cast<Eigen::Index>(estimate.grid.size()));
        density.col(1) = Eigen::Map<const Eigen::VectorXd>(
            estimate.density.data(), static_cast<Eigen::Index>(estimate.density.size()));
        write_csv(plan.output_directory / "density.csv", {"value", "density"}, density);
    } else if (plan.method_name == "metropolis_hastings") {
        detail::require_scalar_output(*root, plan.method_name);
        const std::vector<double> initial =
            plan.method.at("initial").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(initial.size()) != space.dimension())
            throw ConfigError("'initial' has " + std::to_string(initial.size()) +
                              " components but the parameter space has " +
                              std::to_string(space.dimension()) + " dimensions");
        const std::vector<double> scales =
            plan.method.at("proposal_scales").get<std::vector<double>>();
        if (scales.size() != initial.size())
            throw ConfigError("'proposal_scales' has " + std::to_string(scales.size()) +
                              " components but the parameter space has " +
                              std::to_string(space.dimension()) + " dimensions");
        const Eigen::VectorXd x0 =
            Eigen::Map<const Eigen::VectorXd>(initial.data(), static_cast<Eigen::Index>(initial.size()));
        const Eigen::VectorXd sigma =
            Eigen::Map<const Eigen::VectorXd>(scales.data(), static_cast<Eigen::Index>(scales.size()));
        const Model& loglike_model = *root;
        const LogDensityFn target = [&space, &loglike_model](const Eigen::VectorXd& x) {
            const double lp = space.log_pdf(x);
            if (!std::isfinite(lp)) return -std::numeric_limits<double>::infinity();
            return lp + detail::loglikes_from_model(loglike_model, x.transpose())[0];
        };
        const auto steps = plan.method.at("steps").get<std::size_t>();
        RandomStream rng(plan.seed, 2);
        const Chain chain = metropolis_hastings(target, x0, steps, sigma, rng);
        samples = chain.states;
        outputs = chain.log_posteriors;
        statuses.assign(static_cast<std::size_t>(chain.states.rows()), "completed");
        method_results["steps"] = steps;
        method_results["acceptance_rate"] = json_number(chain.acceptance_rate());
        method_results["mean"] =
            json_vector(Eigen::VectorXd(chain.states.colwise().mean().transpose()));
        Eigen::VectorXd variance(space.dimension());
        for (Eigen::Index j = 0; j < space.dimension(); ++j) {
            const auto col = chain.states.col(j).array();
            variance[j] = (col - col.mean()).square().sum() /
                          static_cast<double>(chain.states.rows() - 1);
        }
        method_results["variance"] = json_vector(variance);
        detail::write_trace_csv(plan.output_directory, names, chain.states,
                                chain.log_posteriors, "log_posterior");
    } else if (plan.method_name == "smc") {
        detail::require_scalar_output(*root, plan.method_name);
        SMCOptions options;
        options.particle_count = plan.method.at("particles").get<std::size_t>();
        options.ess_threshold = plan.method.at("ess_threshold").get<double>();
        options.rejuvenation_sweeps = plan.method.at("rejuvenation_steps").get<std::size_t>();
        const Model& loglike_model = *root;
        const BatchLogLikeFn loglike = [&loglike_model](const Eigen::MatrixXd& X) {
            return detail::loglikes_from_model(loglike_model, X);
        };
        RandomStream rng(plan.seed, 2);
        const SMCResult result = smc_run(space, loglike, options, rng, &logger);
        samples = result.ensemble.particles;
        outputs = result.ensemble.loglikes;
        statuses.assign(static_cast<std::size_t>(samples.rows()), "completed");
        method_results["particles"] = options.particle_count;
        method_results["log_evidence"] = json_number(result.log_evidence);
        method_results["stage_count"] = result.stages.size();
        method_results["mean"] = json_vector(result.mean());
        method_results["variance"] = json_vector(result.variance());
        method_results["weights"] = json_vector(result.ensemble.weights);
        ordered_json stages = ordered_json::array();
        for (const auto& stage : result.stages) {
            ordered_json s;
            s["temperature"] = json_number(stage.temperature);
            s["ess"] = json_number(stage.ess);
            s["resampled"] = stage.resampled;
            s["accepted"] = stage.accepted;
            s["proposed"] = stage.proposed;
            stages.push_back(std::move(s));
        }
        method_results["stages"] = std::move(stages);

        std::vector<std::string> header = names;
        header.push_back("weight");
        header.push_back("log_likelihood");
        Eigen::MatrixXd posterior(samples.rows(), space.dimension() + 2);
        posterior.leftCols(space.dimension()) = samples;
        posterior.col(space.dimension()) = result.ensemble.weights;
        posterior.col(space.dimension() + 1) = result.ensemble.loglikes;
        write_csv(plan.output_directory / "posterior.csv", header, posterior);
    } else if (plan.method_name == "levenberg_marquardt") {
        const std::vector<double> initial =
            plan.method.at("initial").get<std::vector<double>>();
        const Eigen::VectorXd x0 =
            Eigen::Map<const Eigen::VectorXd>(initial.data(), static_cast<Eigen::Index>(initial.size()));
        LMOptions options;
        options.grad_tol = plan.method.at("gradient_tol").get<double>();
        options.step_tol = plan.method.at("step_tol").get<double>();
        options.max_iter = plan.method.at("max_iter").get<std::size_t>();
        options.logger = &logger;
        const OptimResult result = levenberg_marquardt(*root, x0, options);
        std::tie(samples, outputs) = detail::trace_matrices(result, x0.size());
        statuses.assign(static_cast<std::size_t>(samples.rows()), "completed");
        method_results = detail::optim_json(result);
        detail::write_trace_csv(plan.output_directory, names, samples, outputs, "objective");
    } else {  // stochastic_optimizer
        detail::require_scalar_output(*root, plan.method_name);
        const std::vector<double> initial =
            plan.method.at("initial").get<std::vector<double>>();
        const Eigen::VectorXd x0 =
            Eigen::Map<const Eigen::VectorXd>(initial.data(), static_cast<Eigen::Index>(initial.size()));
        StochasticOptimizerConfig config;
        config.kind = stochastic_kind_from_string(plan.method.at("kind").get<std::string>());
        config.step_size = plan.method.at("step_size").get<double>();
        config.beta1 = plan.method.at("beta1").get<double>();
        config.beta2 = plan.method.at("beta2").get<double>();
        config.rho = plan.method.at("rho").get<double>();
        config.epsilon = plan.method.at("epsilon").get<double>();
        config.max_iter = plan.method.at("max_iter").get<std::size_t>();
        config.grad_tol = plan.method.at("gradient_tol").get<double>();
        const OptimResult result = stochastic_minimize(*root, x0, config);
        std::tie(samples, outputs) = detail::trace_matrices(result, x0.size());
        statuses.assign(static_cast<std::size_t>(samples.rows()), "completed");
        method_results = detail::optim_json(result);
        method_results["kind"] = plan.method.at("kind");
        detail::write_trace_csv(plan.output_directory, names, samples, outputs, "objective");
    }

    if (!surrogate_reports.empty()) method_results["surrogates"] = surrogate_reports;

    // Artifact assembly and persistence.
    const auto finished = std::chrono::steady_clock::now();
    ordered_json doc;
    doc["schema_version"] = results_schema_version;
    ordered_json meta;
    meta["run_name"] = plan.run_name;
    meta["method"] = plan.method_name;
    meta["model"] = plan.method.at("model");
    meta["seed"] = plan.seed;
    meta["started"] = started_at;
    meta["finished"] = RunLogger::timestamp_utc();
    meta["duration_seconds"] =
        std::chrono::duration<double>(finished - started).count();
    meta["version"] = library_version;
    meta["config"] = plan.config_doc;
    doc["meta"] = std::move(meta);
    doc["parameters"] = plan.parameters;
    doc["samples"] = {{"columns", names}, {"values", json_matrix(samples)}};
    doc["outputs"] = {{"columns", detail::output_column_names(outputs.cols())},
                      {"values", json_matrix(outputs)}};
    doc["statuses"] = statuses;
    doc["method_results"] = std::move(method_results);

    RunOutcome outcome;
    outcome.results_path = write_results(doc, plan.output_directory);
    outcome.results = read_results(outcome.results_path);

    write_csv(plan.output_directory / "samples.csv", names, samples);
    write_csv(plan.output_directory / "outputs.csv",
              detail::output_column_names(outputs.cols()), outputs, "status", statuses);
    logger.info("run '" + plan.run_name + "' finished: results at " +
                outcome.results_path.string());
    return outcome;
}

/// Convenience wrapper: parse, plan, run.
inline RunOutcome run_config_file(const std::filesystem::path& path, bool echo_log = false) {
    return run(build_plan(load_config(path)), echo_log);
}

}  // namespace queens
