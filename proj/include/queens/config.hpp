#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "queens/distributions.hpp"
#include "queens/errors.hpp"
#include "queens/parameter_space.hpp"

namespace queens {

using ordered_json = nlohmann::ordered_json;

/// Analysis methods the workflow layer can dispatch, alphabetical.
inline const std::vector<std::string>& method_names() {
    static const std::vector<std::string> names = {
        "bmfmc",       "grid_study", "levenberg_marquardt",
        "metropolis_hastings",       "monte_carlo",
        "morris",      "smc",        "sobol_indices",
        "stochastic_optimizer",
    };
    return names;
}

/// Model block types the workflow layer can instantiate.
inline const std::vector<std::string>& model_block_types() {
    static const std::vector<std::string> types = {"driver", "function", "likelihood",
                                                   "surrogate"};
    return types;
}

namespace detail {

/// Parses JSON while rejecting duplicate keys (nlohmann otherwise keeps
/// the last occurrence silently, hiding config mistakes).
inline ordered_json parse_json_strict(const std::string& text) {
    std::vector<std::set<std::string>> key_stack;
    const auto callback = [&key_stack](int /*depth*/, nlohmann::json::parse_event_t event,
                                       ordered_json& parsed) {
        if (event == nlohmann::json::parse_event_t::object_start) {
            key_stack.emplace_back();
        } else if (event == nlohmann::json::parse_event_t::object_end) {
            key_stack.pop_back();
        } else if (event == nlohmann::json::parse_event_t::key) {
            const auto key = parsed.get<std::string>();
            if (!key_stack.back().insert(key).second)
                throw ConfigError("duplicate key '" + key + "' in config");
        }
        return true;
    };
    try {
        return ordered_json::parse(text, callback);
    } catch (const ConfigError&) {
        throw;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
}

inline std::string json_type_name(const ordered_json& j) {
    return j.type_name();
}

/// Rejects keys outside `allowed` so typos fail loudly instead of being
/// ignored.
inline void check_keys(const ordered_json& block, const std::string& where,
                       const std::set<std::string>& allowed) {
    for (const auto& [key, value] : block.items()) {
        (void)value;
        if (!allowed.count(key))
            throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

inline const ordered_json& require_key(const ordered_json& block, const std::string& where,
                                       const std::string& key) {
    if (!block.contains(key))
        throw ConfigError("missing key '" + key + "' in " + where);
    return block.at(key);
}

inline std::string require_string(const ordered_json& block, const std::string& where,
                                  const std::string& key) {
    const auto& v = require_key(block, where, key);
    if (!v.is_string())
        throw ConfigError("key '" + key + "' in " + where + " must be a string, got " +
                          json_type_name(v));
    return v.get<std::string>();
}

inline double require_number(const ordered_json& block, const std::string& where,
                             const std::string& key) {
    const auto& v = require_key(block, where, key);
    if (!v.is_number())
        throw ConfigError("key '" + key + "' in " + where + " must be a number, got " +
                          json_type_name(v));
    return v.get<double>();
}

inline double number_or(const ordered_json& block, const std::string& where,
                        const std::string& key, double fallback) {
    if (!block.contains(key)) return fallback;
    return require_number(block, where, key);
}

inline std::string string_or(const ordered_json& block, const std::string& where,
                             const std::string& key, const std::string& fallback) {
    if (!block.contains(key)) return fallback;
    return require_string(block, where, key);
}

inline std::int64_t require_integer(const ordered_json& block, const std::string& where,
                                    const std::string& key) {
    const auto& v = require_key(block, where, key);
    if (!v.is_number_integer())
        throw ConfigError("key '" + key + "' in " + where + " must be an integer, got " +
                          (v.is_number() ? std::string("a non-integer number")
                                         : json_type_name(v)));
    return v.get<std::int64_t>();
}

inline std::int64_t integer_or(const ordered_json& block, const std::string& where,
                               const std::string& key, std::int64_t fallback) {
    if (!block.contains(key)) return fallback;
    return require_integer(block, where, key);
}

inline bool bool_or(const ordered_json& block, const std::string& where, const std::string& key,
                    bool fallback) {
    if (!block.contains(key)) return fallback;
    const auto& v = block.at(key);
    if (!v.is_boolean())
        throw ConfigError("key '" + key + "' in " + where + " must be a boolean, got " +
                          json_type_name(v));
    return v.get<bool>();
}

inline std::vector<double> require_number_array(const ordered_json& block,
                                                const std::string& where,
                                                const std::string& key) {
    const auto& v = require_key(block, where, key);
    if (!v.is_array())
        throw ConfigError("key '" + key + "' in " + where + " must be an array of numbers");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& e : v) {
        if (!e.is_number())
            throw ConfigError("key '" + key + "' in " + where + " must contain only numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

}  // namespace detail

/// One marginal description as read from the parameter block.
inline Distribution distribution_from_config(const std::string& name,
                                             const ordered_json& block) {
    const std::string where = "parameter '" + name + "'";
    if (!block.is_object())
        throw ConfigError(where + " must be an object with a 'distribution' key");
    const std::string kind = detail::require_string(block, where, "distribution");
    if (kind == "uniform") {
        detail::check_keys(block, where, {"distribution", "lower", "upper"});
        return Distribution::uniform(detail::require_number(block, where, "lower"),
                                     detail::require_number(block, where, "upper"));
    }
    if (kind == "normal") {
        detail::check_keys(block, where, {"distribution", "mean", "std"});
        return Distribution::normal(detail::require_number(block, where, "mean"),
                                    detail::require_number(block, where, "std"));
    }
    if (kind == "lognormal") {
        detail::check_keys(block, where, {"distribution", "log_mean", "log_std"});
        return Distribution::lognormal(detail::require_number(block, where, "log_mean"),
                                       detail::require_number(block, where, "log_std"));
    }
    if (kind == "beta") {
        detail::check_keys(block, where, {"distribution", "a", "b", "lower", "upper"});
        return Distribution::beta(detail::require_number(block, where, "a"),
                                  detail::require_number(block, where, "b"),
                                  detail::number_or(block, where, "lower", 0.0),
                                  detail::number_or(block, where, "upper", 1.0));
    }
    throw ConfigError("unknown distribution '" + kind + "' for " + where +
                      " (available: beta, lognormal, normal, uniform)");
}

/// Builds the joint parameter space from the config's parameter block.
inline ParameterSpace parameter_space_from_config(const ordered_json& parameters) {
    if (!parameters.is_object() || parameters.empty())
        throw ConfigError("'parameters' must be a non-empty object of parameter blocks");
    std::vector<std::pair<std::string, Distribution>> entries;
    entries.reserve(parameters.size());
    for (const auto& [name, block] : parameters.items())
        entries.emplace_back(name, distribution_from_config(name, block));
    return ParameterSpace(std::move(entries));
}

/// A parsed and structurally validated run configuration.
///
/// The JSON document is kept verbatim so command-line overrides can be
/// applied by mutating `doc` before planning; `base_dir` anchors the
/// relative paths the config mentions (templates, observation files).
struct RunConfig {
    ordered_json doc;
    std::filesystem::path base_dir;

    /// Names of the model blocks the method needs, dependencies first.
    /// Canonical: depends only on the reference graph, not on the block
    /// order in the file.
    std::vector<std::string> model_order;

    const ordered_json& global_settings() const { return doc.at("global_settings"); }
    const ordered_json& method() const { return doc.at("method"); }
    const ordered_json& model_block(const std::string& name) const { return doc.at(name); }

    std::string run_name() const {
        return detail::string_or(global_settings(), "global_settings", "run_name", "run");
    }
    std::filesystem::path output_directory() const {
        return base_dir / detail::string_or(global_settings(), "global_settings",
                                            "output_directory", "queens_output");
    }
    std::uint64_t seed() const {
        return static_cast<std::uint64_t>(
            detail::integer_or(global_settings(), "global_settings", "seed", 42));
    }
    std::string log_level() const {
        return detail::string_or(global_settings(), "global_settings", "log_level", "info");
    }
    std::string method_name() const { return method().at("name").get<std::string>(); }

    ParameterSpace build_parameter_space() const {
        return parameter_space_from_config(doc.at("parameters"));
    }
};

namespace detail {

/// Model block names referenced by a block (empty for leaf blocks).
inline std::vector<std::pair<std::string, std::string>> block_references(
    const ordered_json& block) {
    std::vector<std::pair<std::string, std::string>> refs;
    const std::string type = block.value("type", "");
    if (type == "surrogate" && block.contains("target_model") &&
        block.at("target_model").is_string())
        refs.emplace_back("target_model", block.at("target_model").get<std::string>());
    if (type == "likelihood" && block.contains("forward_model") &&
        block.at("forward_model").is_string())
        refs.emplace_back("forward_model", block.at("forward_model").get<std::string>());
    return refs;
}

struct ReferenceGraph {
    /// name -> referenced model block names, in reference-key order.
    std::map<std::string, std::vector<std::string>> edges;
    /// roots referenced by the method block, in reference-key order.
    std::vector<std::string> roots;
};

inline void validate_reference(const std::string& target,
                               const std::set<std::string>& model_blocks) {
    if (!model_blocks.count(target))
        throw ConfigError("dangling reference: " + target);
}

/// Post-order DFS from the method's roots; appends each block after its
/// dependencies. Throws on reference cycles.
inline void topological_order(const ReferenceGraph& graph, const std::string& node,
                              std::map<std::string, int>& color,
                              std::vector<std::string>& order) {
    auto& c = color[node];
    if (c == 2) return;
    if (c == 1) throw ConfigError("cycle detected in model references involving '" + node + "'");
    c = 1;
    for (const auto& dep : graph.edges.at(node)) topological_order(graph, dep, color, order);
    c = 2;
    order.push_back(node);
}

inline void validate_method_block(const ordered_json& method,
                                  const std::set<std::string>& model_blocks) {
    if (!method.is_object()) throw ConfigError("'method' must be an object");
    const std::string name = require_string(method, "method block", "name");
    const auto& known = method_names();
    if (std::find(known.begin(), known.end(), name) == known.end()) {
        std::string available;
        for (const auto& m : known) {
            if (!available.empty()) available += ", ";
            available += m;
        }
        throw ConfigError("unknown method '" + name + "'; available: " + available);
    }
    const std::string where = "method '" + name + "'";
    const std::string model = require_string(method, where, "model");
    validate_reference(model, model_blocks);

    static const std::set<std::string> common = {"name", "model"};
    auto with = [](std::set<std::string> extra) {
        extra.insert(common.begin(), common.end());
        return extra;
    };
    if (name == "grid_study") {
        check_keys(method, where, with({"points_per_axis"}));
        if (integer_or(method, where, "points_per_axis", 10) < 2)
            throw ConfigError("'points_per_axis' in " + where + " must be at least 2");
    } else if (name == "monte_carlo") {
        check_keys(method, where, with({"samples", "design", "histogram_bins", "skip"}));
        if (integer_or(method, where, "samples", 1000) < 2)
            throw ConfigError("'samples' in " + where + " must be at least 2");
        const std::string design = string_or(method, where, "design", "monte_carlo");
        if (design != "monte_carlo" && design != "lhs" && design != "sobol")
            throw ConfigError("unknown design '" + design + "' in " + where +
                              " (available: lhs, monte_carlo, sobol)");
    } else if (name == "morris") {
        check_keys(method, where, with({"trajectories", "levels"}));
        if (integer_or(method, where, "trajectories", 20) < 1)
            throw ConfigError("'trajectories' in " + where + " must be at least 1");
        const auto levels = integer_or(method, where, "levels", 4);
        if (levels < 2 || levels % 2 != 0)
            throw ConfigError("'levels' in " + where + " must be even and at least 2");
    } else if (name == "sobol_indices") {
        check_keys(method, where, with({"base_samples", "skip"}));
        if (require_integer(method, where, "base_samples") < 2)
            throw ConfigError("'base_samples' in " + where + " must be at least 2");
    } else if (name == "bmfmc") {
        check_keys(method, where,
                   with({"hf_model", "lf_samples", "pairs", "grid_size", "design"}));
        const std::string hf = require_string(method, where, "hf_model");
        validate_reference(hf, model_blocks);
        if (integer_or(method, where, "lf_samples", 1000) < 100)
            throw ConfigError("'lf_samples' in " + where + " must be at least 100");
        if (integer_or(method, where, "pairs", 50) < 5)
            throw ConfigError("'pairs' in " + where + " must be at least 5");
        if (integer_or(method, where, "grid_size", 201) < 2)
            throw ConfigError("'grid_size' in " + where + " must be at least 2");
    } else if (name == "metropolis_hastings") {
        check_keys(method, where, with({"steps", "initial", "proposal_scales"}));
        if (integer_or(method, where, "steps", 10000) < 1)
            throw ConfigError("'steps' in " + where + " must be at least 1");
        require_number_array(method, where, "initial");
        if (method.contains("proposal_scales") && !method.at("proposal_scales").is_number() &&
            !method.at("proposal_scales").is_array())
            throw ConfigError("'proposal_scales' in " + where +
                              " must be a number or an array of numbers");
    } else if (name == "smc") {
        check_keys(method, where, with({"particles", "ess_threshold", "rejuvenation_steps"}));
        if (integer_or(method, where, "particles", 1000) < 10)
            throw ConfigError("'particles' in " + where + " must be at least 10");
        const double tau = number_or(method, where, "ess_threshold", 0.5);
        if (!(tau > 0.0 && tau < 1.0))
            throw ConfigError("'ess_threshold' in " + where + " must be in (0, 1)");
        if (integer_or(method, where, "rejuvenation_steps", 5) < 1)
            throw ConfigError("'rejuvenation_steps' in " + where + " must be at least 1");
    } else if (name == "levenberg_marquardt") {
        check_keys(method, where, with({"initial", "gradient_tol", "step_tol", "max_iter"}));
        require_number_array(method, where, "initial");
        if (integer_or(method, where, "max_iter", 200) < 1)
            throw ConfigError("'max_iter' in " + where + " must be at least 1");
    } else if (name == "stochastic_optimizer") {
        check_keys(method, where,
                   with({"kind", "initial", "step_size", "beta1", "beta2", "rho", "epsilon",
                         "max_iter", "gradient_tol"}));
        const std::string kind = require_string(method, where, "kind");
        if (kind != "adam" && kind != "adamax" && kind != "rmsprop")
            throw ConfigError("unknown optimizer kind '" + kind + "' in " + where +
                              " (available: adam, adamax, rmsprop)");
        require_number_array(method, where, "initial");
        if (integer_or(method, where, "max_iter", 10000) < 1)
            throw ConfigError("'max_iter' in " + where + " must be at least 1");
    }
}

inline void validate_model_block(const std::string& name, const ordered_json& block,
                                 const std::set<std::string>& model_blocks) {
    const std::string where = "model block '" + name + "'";
    if (!block.is_object())
        throw ConfigError(where + " must be an object with a 'type' key");
    const std::string type = require_string(block, where, "type");
    if (type == "function") {
        check_keys(block, where, {"type", "function"});
        require_string(block, where, "function");
    } else if (type == "driver") {
        check_keys(block, where,
                   {"type", "executable", "input_template", "output_file", "extractor", "column",
                    "timeout_seconds", "extra_args", "output_dimension"});
        require_string(block, where, "executable");
        require_string(block, where, "input_template");
        const std::string extractor = string_or(block, where, "extractor", "csv_scalar_column");
        if (extractor != "csv_scalar_column" && extractor != "csv_vector_row" &&
            extractor != "single_number_file")
            throw ConfigError("unknown extractor '" + extractor + "' in " + where +
                              " (available: csv_scalar_column, csv_vector_row, "
                              "single_number_file)");
        if (block.contains("extra_args")) {
            const auto& args = block.at("extra_args");
            if (!args.is_array())
                throw ConfigError("'extra_args' in " + where + " must be an array of strings");
            for (const auto& a : args)
                if (!a.is_string())
                    throw ConfigError("'extra_args' in " + where +
                                      " must contain only strings");
        }
        if (integer_or(block, where, "output_dimension", 1) < 1)
            throw ConfigError("'output_dimension' in " + where + " must be at least 1");
        if (number_or(block, where, "timeout_seconds", 60.0) <= 0.0)
            throw ConfigError("'timeout_seconds' in " + where + " must be positive");
    } else if (type == "surrogate") {
        check_keys(block, where, {"type", "target_model", "training"});
        const std::string target = require_string(block, where, "target_model");
        validate_reference(target, model_blocks);
        if (!block.contains("training"))
            throw ConfigError(where + " needs a 'training' block (samples, design)");
        const auto& training = block.at("training");
        const std::string twhere = "training block of '" + name + "'";
        if (!training.is_object()) throw ConfigError(twhere + " must be an object");
        check_keys(training, twhere,
                   {"samples", "design", "skip", "restarts", "steps", "validation_samples"});
        if (integer_or(training, twhere, "samples", 100) < 2)
            throw ConfigError("'samples' in " + twhere + " must be at least 2");
        const std::string design = string_or(training, twhere, "design", "sobol");
        if (design != "monte_carlo" && design != "lhs" && design != "sobol")
            throw ConfigError("unknown design '" + design + "' in " + twhere +
                              " (available: lhs, monte_carlo, sobol)");
        if (integer_or(training, twhere, "validation_samples", 50) < 0)
            throw ConfigError("'validation_samples' in " + twhere + " must be non-negative");
    } else if (type == "likelihood") {
        check_keys(block, where, {"type", "forward_model", "observations", "noise_variance"});
        const std::string forward = require_string(block, where, "forward_model");
        validate_reference(forward, model_blocks);
        require_string(block, where, "observations");
        if (require_number(block, where, "noise_variance") <= 0.0)
            throw ConfigError("noise variance must be positive");
    } else {
        throw ConfigError("unknown block type '" + type + "' in " + where +
                          " (available: driver, function, likelihood, surrogate)");
    }
}

}  // namespace detail

/// Parses and validates a run configuration. Checks structure only; no
/// file in the config is touched and no model is instantiated, so this
/// is safe for a dry-run `validate` command.
inline RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    RunConfig cfg;
    cfg.doc = detail::parse_json_strict(text);
    cfg.base_dir = base_dir;
    if (!cfg.doc.is_object()) throw ConfigError("config root must be a JSON object");

    static const std::set<std::string> reserved = {"global_settings", "parameters", "scheduler",
                                                   "method"};

    // Collect model block names first so forward references validate.
    std::set<std::string> model_blocks;
    for (const auto& [key, value] : cfg.doc.items()) {
        (void)value;
        if (!reserved.count(key)) model_blocks.insert(key);
    }

    // global_settings (optional, defaults apply).
    if (cfg.doc.contains("global_settings")) {
        const auto& gs = cfg.doc.at("global_settings");
        if (!gs.is_object()) throw ConfigError("'global_settings' must be an object");
        detail::check_keys(gs, "global_settings",
                           {"run_name", "output_directory", "seed", "log_level"});
        if (detail::integer_or(gs, "global_settings", "seed", 42) < 0)
            throw ConfigError("'seed' in global_settings must be non-negative");
        const std::string level = detail::string_or(gs, "global_settings", "log_level", "info");
        if (level != "debug" && level != "info" && level != "warning" && level != "error")
            throw ConfigError("unknown log level '" + level +
                              "' (available: debug, info, warning, error)");
    } else {
        cfg.doc["global_settings"] = ordered_json::object();
    }

    // parameters (required).
    if (!cfg.doc.contains("parameters"))
        throw ConfigError("config needs a 'parameters' block");
    (void)parameter_space_from_config(cfg.doc.at("parameters"));

    // scheduler (optional).
    if (cfg.doc.contains("scheduler")) {
        const auto& sched = cfg.doc.at("scheduler");
        if (!sched.is_object()) throw ConfigError("'scheduler' must be an object");
        detail::check_keys(sched, "scheduler", {"max_concurrent", "retries", "workspace_root"});
        if (detail::integer_or(sched, "scheduler", "max_concurrent", 1) < 1)
            throw ConfigError("'max_concurrent' in scheduler must be at least 1");
        if (detail::integer_or(sched, "scheduler", "retries", 0) < 0)
            throw ConfigError("'retries' in scheduler must be non-negative");
    }

    // model blocks.
    for (const auto& name : model_blocks)
        detail::validate_model_block(name, cfg.doc.at(name), model_blocks);

    // method (required; references exactly one root model).
    if (!cfg.doc.contains("method"))
        throw ConfigError("config needs a 'method' block");
    detail::validate_method_block(cfg.doc.at("method"), model_blocks);

    // Reference graph: canonical dependency-first instantiation order.
    detail::ReferenceGraph graph;
    for (const auto& name : model_blocks) {
        auto& deps = graph.edges[name];
        for (const auto& [key, target] : detail::block_references(cfg.doc.at(name))) {
            (void)key;
            deps.push_back(target);
        }
    }
    const auto& method = cfg.doc.at("method");
    graph.roots.push_back(method.at("model").get<std::string>());
    if (method.at("name").get<std::string>() == "bmfmc")
        graph.roots.push_back(method.at("hf_model").get<std::string>());

    std::map<std::string, int> color;
    for (const auto& root : graph.roots)
        detail::topological_order(graph, root, color, cfg.model_order);

    // Blocks the method never reaches still must not form reference
    // cycles; walk them too, discarding the order.
    std::vector<std::string> unused;
    for (const auto& name : model_blocks)
        if (!color.count(name) || color[name] != 2)
            detail::topological_order(graph, name, color, unused);
    return cfg;
}

/// Reads and parses a config file; relative paths inside resolve
/// against the file's directory.
inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config(text, std::filesystem::absolute(path).parent_path());
}

}  // namespace queens
