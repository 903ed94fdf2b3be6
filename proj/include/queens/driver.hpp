#pragma once

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <Eigen/Dense>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "queens/errors.hpp"
#include "queens/log.hpp"
#include "queens/model.hpp"

namespace queens {

/// Shortest decimal representation that parses back to the same double
/// (at most 17 significant digits).
inline std::string render_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// Substitutes `{{ name }}` placeholders (interior whitespace optional)
/// with decimal values. Both an unresolved placeholder and an unused
/// parameter are hard errors: silently dropped calibration parameters
/// must never reach a solver.
inline std::string render_template(const std::string& text,
                                   const std::vector<std::pair<std::string, double>>& params) {
    std::vector<bool> used(params.size(), false);
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t open = text.find("{{", pos);
        if (open == std::string::npos) {
            out.append(text, pos, std::string::npos);
            break;
        }
        out.append(text, pos, open - pos);
        const std::size_t close = text.find("}}", open + 2);
        if (close == std::string::npos)
            throw ConfigError("unterminated placeholder near offset " + std::to_string(open));
        std::string name = text.substr(open + 2, close - open - 2);
        const auto first = name.find_first_not_of(" \t");
        const auto last = name.find_last_not_of(" \t");
        name = first == std::string::npos ? std::string() : name.substr(first, last - first + 1);
        if (name.empty() || name.find_first_of(" \t{}") != std::string::npos)
            throw ConfigError("malformed placeholder '" + text.substr(open, close - open + 2) +
                              "'");
        bool found = false;
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (params[i].first == name) {
                out += render_double(params[i].second);
                used[i] = true;
                found = true;
                break;
            }
        }
        if (!found) throw ConfigError("unresolved placeholder " + name);
        pos = close + 2;
    }
    for (std::size_t i = 0; i < params.size(); ++i)
        if (!used[i]) throw ConfigError("unused parameter " + params[i].first);
    return out;
}

/// How the solver's declared output file is turned into numbers.
enum class Extractor { csv_scalar_column, csv_vector_row, single_number_file };

inline const char* to_string(Extractor e) {
    switch (e) {
        case Extractor::csv_scalar_column: return "csv_scalar_column";
        case Extractor::csv_vector_row: return "csv_vector_row";
        case Extractor::single_number_file: return "single_number_file";
    }
    return "unknown";
}

inline Extractor extractor_from_string(const std::string& s) {
    if (s == "csv_scalar_column") return Extractor::csv_scalar_column;
    if (s == "csv_vector_row") return Extractor::csv_vector_row;
    if (s == "single_number_file") return Extractor::single_number_file;
    throw ConfigError("unknown extractor '" + s +
                      "'; available: csv_scalar_column, csv_vector_row, single_number_file");
}

/// Everything needed to run one external solver per parameter vector.
struct DriverConfig {
    std::string executable;                ///< solver binary (PATH lookup if bare name)
    std::string template_path;             ///< input template with placeholders
    std::string output_file = "output.csv";  ///< relative to the job directory
    Extractor extractor = Extractor::csv_scalar_column;
    int column = 0;                        ///< column index for csv_scalar_column
    double timeout_seconds = 60.0;
    std::vector<std::string> extra_args;   ///< appended after the input path
    Eigen::Index output_dimension = 1;

    void validate() const {
        if (executable.empty()) throw ConfigError("driver executable must be set");
        if (template_path.empty()) throw ConfigError("driver template path must be set");
        if (!(timeout_seconds > 0.0)) throw ConfigError("timeout must be positive");
        if (column < 0) throw ConfigError("column index must not be negative");
        if (output_dimension < 1) throw ConfigError("output dimension must be at least 1");
        if (!std::filesystem::exists(template_path))
            throw ConfigError("template not found: " + template_path);
    }
};

/// Complete record of one external-solver run.
struct JobRecord {
    std::size_t id = 0;
    Eigen::VectorXd input;
    std::string rendered_input_path;
    std::string working_directory;
    int exit_code = -1;
    EvalStatus status = EvalStatus::failed;
    Eigen::VectorXd output;  ///< NaN-filled unless completed
    std::string diagnostic;
    double wall_seconds = 0.0;
    std::string stdout_path;
    std::string stderr_path;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline bool try_parse_double(const std::string& cell, double& out) {
    const std::string t = trim(cell);
    if (t.empty()) return false;
    const char* begin = t.data();
    const char* end = t.data() + t.size();
    const auto res = std::from_chars(begin, end, out);
    return res.ec == std::errc() && res.ptr == end;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return cells;
}

inline std::vector<std::string> read_data_lines(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw EvaluationError("output file missing: " + file.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!trim(line).empty()) lines.push_back(line);
    }
    if (lines.empty()) throw EvaluationError("output file empty: " + file.string());
    return lines;
}

}  // namespace detail

/// Parses the declared output file. csv_scalar_column takes the last
/// row's value in the configured column (a non-numeric first row is
/// treated as a header); csv_vector_row takes the first data row;
/// single_number_file expects exactly one number.
inline Eigen::VectorXd extract_output(const std::filesystem::path& file,
                                      const DriverConfig& config) {
    const auto lines = detail::read_data_lines(file);
    switch (config.extractor) {
        case Extractor::csv_scalar_column: {
            std::size_t first_data = 0;
            {
                const auto cells = detail::split_csv(lines[0]);
                double probe;
                const bool numeric = static_cast<std::size_t>(config.column) < cells.size() &&
                                     detail::try_parse_double(cells[config.column], probe);
                if (!numeric && lines.size() > 1) first_data = 1;
            }
            if (first_data >= lines.size())
                throw EvaluationError("no data rows in '" + file.string() + "'");
            const auto cells = detail::split_csv(lines.back());
            if (static_cast<std::size_t>(config.column) >= cells.size())
                throw EvaluationError("missing column value in '" + file.string() + "': row has " +
                                      std::to_string(cells.size()) + " cells, need column " +
                                      std::to_string(config.column));
            double v;
            if (!detail::try_parse_double(cells[config.column], v))
                throw EvaluationError("missing column value in '" + file.string() +
                                      "': cell in column " + std::to_string(config.column) +
                                      " is not numeric");
            return Eigen::VectorXd::Constant(1, v);
        }
        case Extractor::csv_vector_row: {
            const auto cells = detail::split_csv(lines[0]);
            Eigen::VectorXd out(static_cast<Eigen::Index>(cells.size()));
            for (std::size_t i = 0; i < cells.size(); ++i) {
                double v;
                if (!detail::try_parse_double(cells[i], v))
                    throw EvaluationError("non-numeric cell " + std::to_string(i) + " in '" +
                                          file.string() + "'");
                out[static_cast<Eigen::Index>(i)] = v;
            }
            return out;
        }
        case Extractor::single_number_file: {
            if (lines.size() != 1)
                throw EvaluationError("expected a single number in '" + file.string() + "', got " +
                                      std::to_string(lines.size()) + " lines");
            double v;
            if (!detail::try_parse_double(lines[0], v))
                throw EvaluationError("not a number: '" + detail::trim(lines[0]) + "' in '" +
                                      file.string() + "'");
            return Eigen::VectorXd::Constant(1, v);
        }
    }
    throw EvaluationError("unknown extractor");
}

/// Renders the input, runs the solver in its own `job_<id>/` directory
/// with stdout/stderr captured, enforces the timeout, and parses the
/// declared output file. Per-job failures are reported in the record,
/// never thrown; configuration problems (bad template) do throw.
inline JobRecord execute_job(const DriverConfig& config, const std::vector<std::string>& names,
                             const Eigen::VectorXd& row, std::size_t job_id,
                             const std::filesystem::path& workspace_root,
                             RunLogger* logger = nullptr, const std::string& dir_suffix = {}) {
    if (static_cast<std::size_t>(row.size()) != names.size())
        throw Error("dimension mismatch: row has " + std::to_string(row.size()) +
                    " values for " + std::to_string(names.size()) + " parameter names");

    JobRecord record;
    record.id = job_id;
    record.input = row;
    record.output =
        Eigen::VectorXd::Constant(config.output_dimension, std::numeric_limits<double>::quiet_NaN());

    const std::filesystem::path job_dir =
        workspace_root / ("job_" + std::to_string(job_id) + dir_suffix);
    std::filesystem::create_directories(job_dir);
    record.working_directory = job_dir.string();

    // Render the input file.
    std::ifstream tmpl_in(config.template_path);
    if (!tmpl_in) throw ConfigError("cannot read template: " + config.template_path);
    std::ostringstream tmpl_text;
    tmpl_text << tmpl_in.rdbuf();
    std::vector<std::pair<std::string, double>> params;
    params.reserve(names.size());
    for (std::size_t i = 0; i < names.size(); ++i)
        params.emplace_back(names[i], row[static_cast<Eigen::Index>(i)]);
    const std::string rendered = render_template(tmpl_text.str(), params);

    const std::filesystem::path input_path = job_dir / "input.rendered";
    {
        std::ofstream out(input_path);
        out << rendered;
        if (!out) throw Error("cannot write rendered input: " + input_path.string());
    }
    record.rendered_input_path = input_path.string();
    record.stdout_path = (job_dir / "stdout.log").string();
    record.stderr_path = (job_dir / "stderr.log").string();

    // Resolve the executable before forking (the child changes directory).
    std::string exe = config.executable;
    if (exe.find('/') != std::string::npos) exe = std::filesystem::absolute(exe).string();
    std::vector<std::string> arg_storage;
    arg_storage.push_back(exe);
    arg_storage.push_back("input.rendered");
    for (const auto& a : config.extra_args) arg_storage.push_back(a);
    std::vector<char*> argv;
    for (auto& a : arg_storage) argv.push_back(a.data());
    argv.push_back(nullptr);
    const std::string job_dir_str = job_dir.string();

    if (logger)
        logger->info("job " + std::to_string(job_id) + dir_suffix + ": running (" +
                     config.executable + ")");
    const auto start = std::chrono::steady_clock::now();
    const pid_t pid = ::fork();
    if (pid < 0) throw Error("fork failed");
    if (pid == 0) {
        // Child: only async-signal-safe calls until exec.
        if (::chdir(job_dir_str.c_str()) != 0) ::_exit(126);
        const int out_fd = ::open("stdout.log", O_WRONLY | O_CREAT | O_TRUNC, 0644);
        const int err_fd = ::open("stderr.log", O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (out_fd < 0 || err_fd < 0) ::_exit(126);
        ::dup2(out_fd, STDOUT_FILENO);
        ::dup2(err_fd, STDERR_FILENO);
        ::close(out_fd);
        ::close(err_fd);
        ::execvp(argv[0], argv.data());
        const char msg[] = "exec failed\n";
        const ssize_t rc = ::write(STDERR_FILENO, msg, sizeof(msg) - 1);
        (void)rc;
        ::_exit(127);
    }

    // Parent: poll for exit, enforce the timeout.
    const auto deadline =
        start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                    std::chrono::duration<double>(config.timeout_seconds));
    int wait_status = 0;
    bool exited = false;
    bool killed = false;
    while (true) {
        const pid_t r = ::waitpid(pid, &wait_status, WNOHANG);
        if (r == pid) {
            exited = true;
            break;
        }
        if (r < 0) break;  // should not happen; treat as failure below
        if (!killed && std::chrono::steady_clock::now() >= deadline) {
            ::kill(pid, SIGKILL);
            killed = true;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (killed) {
        record.status = EvalStatus::timed_out;
        record.exit_code = exited && WIFEXITED(wait_status) ? WEXITSTATUS(wait_status) : -1;
        record.diagnostic =
            "timed out after " + render_double(config.timeout_seconds) + " s (killed)";
    } else if (!exited) {
        record.status = EvalStatus::failed;
        record.diagnostic = "waitpid failed";
    } else if (WIFSIGNALED(wait_status)) {
        record.status = EvalStatus::failed;
        record.exit_code = 128 + WTERMSIG(wait_status);
        record.diagnostic = "terminated by signal " + std::to_string(WTERMSIG(wait_status));
    } else {
        record.exit_code = WEXITSTATUS(wait_status);
        if (record.exit_code != 0) {
            record.status = EvalStatus::failed;
            record.diagnostic = "exit code " + std::to_string(record.exit_code);
        } else {
            try {
                Eigen::VectorXd out = extract_output(job_dir / config.output_file, config);
                if (out.size() != config.output_dimension)
                    throw EvaluationError("parsed " + std::to_string(out.size()) +
                                          " outputs, declared " +
                                          std::to_string(config.output_dimension));
                record.output = out;
                record.status = EvalStatus::completed;
            } catch (const std::exception& e) {
                record.status = EvalStatus::failed;
                record.diagnostic = e.what();
            }
        }
    }
    if (logger)
        logger->info("job " + std::to_string(job_id) + dir_suffix + ": " +
                     to_string(record.status) +
                     (record.diagnostic.empty() ? "" : " (" + record.diagnostic + ")") + " in " +
                     render_double(record.wall_seconds) + " s");
    return record;
}

}  // namespace queens
