/// Tests for the external-solver driver (template rendering, job
/// execution, output extraction) and the concurrent scheduler.

#include <catch_amalgamated.hpp>

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>

#include <queens/driver.hpp>
#include <queens/parameter_space.hpp>
#include <queens/scheduler.hpp>

using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using namespace queens;
namespace fs = std::filesystem;

namespace {

const char* mock_solver() { return MOCK_SOLVER_PATH; }

fs::path fresh_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const fs::path p = fs::temp_directory_path() /
                       ("queens_exec_" + std::to_string(::getpid()) + "_" + tag + "_" +
                        std::to_string(counter++));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
    return path;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

DriverConfig sum_driver(const fs::path& dir) {
    DriverConfig cfg;
    cfg.executable = mock_solver();
    cfg.template_path =
        write_text(dir / "in.tmpl", "a = {{ a }}\nb = {{ b }}\n").string();
    return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// Template rendering
// ---------------------------------------------------------------------------

TEST_CASE("placeholders are substituted with shortest decimals", "[driver]") {
    const std::string text = "stiffness = {{ youngs }}\nratio = {{nue}}\n";
    const std::string out =
        render_template(text, {{"youngs", 1.5}, {"nue", -2.0}});
    REQUIRE(out == "stiffness = 1.5\nratio = -2\n");
}

TEST_CASE("rendered values parse back to the same double", "[driver]") {
    const double v = 0.1 + 0.2;  // not exactly 0.3
    const std::string out = render_template("{{ x }}", {{"x", v}});
    REQUIRE(std::stod(out) == v);
}

TEST_CASE("unresolved placeholders are hard errors", "[driver]") {
    REQUIRE_THROWS_MATCHES(
        render_template("a = {{ damping }}", {{"a", 1.0}}), ConfigError,
        Catch::Matchers::MessageMatches(ContainsSubstring("unresolved placeholder damping")));
}

TEST_CASE("unused parameters are hard errors", "[driver]") {
    REQUIRE_THROWS_MATCHES(
        render_template("a = {{ a }}", {{"a", 1.0}, {"extra", 2.0}}), ConfigError,
        Catch::Matchers::MessageMatches(ContainsSubstring("unused parameter extra")));
}

TEST_CASE("malformed templates are rejected", "[driver]") {
    REQUIRE_THROWS_MATCHES(render_template("a = {{ a ", {{"a", 1.0}}), ConfigError,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("unterminated placeholder")));
}

// ---------------------------------------------------------------------------
// Job execution
// ---------------------------------------------------------------------------

TEST_CASE("a job renders, runs, and parses its output", "[driver]") {
    const fs::path dir = fresh_dir("run");
    const DriverConfig cfg = sum_driver(dir);
    Eigen::VectorXd row(2);
    row << 1.25, 2.5;

    const JobRecord rec = execute_job(cfg, {"a", "b"}, row, 7, dir / "ws");
    REQUIRE(rec.status == EvalStatus::completed);
    REQUIRE(rec.exit_code == 0);
    REQUIRE(rec.output.size() == 1);
    REQUIRE_THAT(rec.output[0], WithinAbs(3.75, 1e-15));
    REQUIRE(rec.id == 7);
    REQUIRE_THAT(rec.working_directory, ContainsSubstring("job_7"));
    REQUIRE(fs::exists(rec.rendered_input_path));
    REQUIRE(fs::exists(rec.stdout_path));
    REQUIRE(fs::exists(rec.stderr_path));
    REQUIRE_THAT(read_text(rec.rendered_input_path), ContainsSubstring("a = 1.25"));
}

TEST_CASE("a crashing solver is reported, not thrown", "[driver]") {
    const fs::path dir = fresh_dir("crash");
    DriverConfig cfg = sum_driver(dir);
    cfg.extra_args = {"--crash"};
    Eigen::VectorXd row(2);
    row << 1.0, 2.0;

    const JobRecord rec = execute_job(cfg, {"a", "b"}, row, 0, dir / "ws");
    REQUIRE(rec.status == EvalStatus::failed);
    REQUIRE(rec.exit_code == 9);
    REQUIRE_THAT(rec.diagnostic, ContainsSubstring("exit code 9"));
    REQUIRE(std::isnan(rec.output[0]));
    REQUIRE_THAT(read_text(rec.stderr_path), ContainsSubstring("crash requested"));
}

TEST_CASE("a hanging solver is killed at the timeout", "[driver]") {
    const fs::path dir = fresh_dir("hang");
    DriverConfig cfg = sum_driver(dir);
    cfg.extra_args = {"--sleep", "10"};
    cfg.timeout_seconds = 0.5;
    Eigen::VectorXd row(2);
    row << 1.0, 2.0;

    const auto start = std::chrono::steady_clock::now();
    const JobRecord rec = execute_job(cfg, {"a", "b"}, row, 0, dir / "ws");
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    REQUIRE(rec.status == EvalStatus::timed_out);
    REQUIRE_THAT(rec.diagnostic, ContainsSubstring("timed out"));
    REQUIRE(wall < 3.0);
}

TEST_CASE("driver configuration is validated", "[driver]") {
    DriverConfig cfg;
    cfg.executable = "solver";
    cfg.template_path = "/definitely/not/there.tmpl";
    REQUIRE_THROWS_MATCHES(cfg.validate(), ConfigError,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("template not found: ")));
    cfg.template_path.clear();
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("output extraction handles each declared shape", "[driver]") {
    const fs::path dir = fresh_dir("extract");
    DriverConfig cfg;

    SECTION("scalar column takes the last row and skips a header") {
        cfg.extractor = Extractor::csv_scalar_column;
        cfg.column = 1;
        const auto f = write_text(dir / "a.csv", "step,value\n1,10\n2,20\n");
        const Eigen::VectorXd v = extract_output(f, cfg);
        REQUIRE(v.size() == 1);
        REQUIRE_THAT(v[0], WithinAbs(20.0, 1e-15));
    }
    SECTION("vector row takes the first data row") {
        cfg.extractor = Extractor::csv_vector_row;
        const auto f = write_text(dir / "b.csv", "1.5,2.5,3.5\n");
        const Eigen::VectorXd v = extract_output(f, cfg);
        REQUIRE(v.size() == 3);
        REQUIRE_THAT(v[2], WithinAbs(3.5, 1e-15));
    }
    SECTION("single number file rejects extra lines") {
        cfg.extractor = Extractor::single_number_file;
        const auto good = write_text(dir / "c.txt", "42.5\n");
        REQUIRE_THAT(extract_output(good, cfg)[0], WithinAbs(42.5, 1e-15));
        const auto bad = write_text(dir / "d.txt", "1\n2\n");
        REQUIRE_THROWS_AS(extract_output(bad, cfg), EvaluationError);
    }
    SECTION("non-numeric cells are reported") {
        cfg.extractor = Extractor::csv_vector_row;
        const auto f = write_text(dir / "e.csv", "1.5,oops,3.5\n");
        REQUIRE_THROWS_MATCHES(extract_output(f, cfg), EvaluationError,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("non-numeric cell 1")));
    }
    SECTION("a missing output file is reported") {
        REQUIRE_THROWS_MATCHES(extract_output(dir / "nope.csv", cfg), EvaluationError,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("output file missing")));
    }
}

// ---------------------------------------------------------------------------
// Scheduler
// ---------------------------------------------------------------------------

TEST_CASE("a batch of 100 jobs completes under the concurrency ceiling", "[scheduler]") {
    const fs::path dir = fresh_dir("batch100");
    const DriverConfig cfg = sum_driver(dir);
    SchedulerConfig sched;
    sched.max_concurrent = 4;
    sched.workspace_root = (dir / "ws").string();

    std::vector<std::pair<Eigen::VectorXd, DriverConfig>> jobs;
    for (int i = 0; i < 100; ++i) {
        Eigen::VectorXd row(2);
        row << i, 2.0 * i;
        jobs.emplace_back(row, cfg);
    }
    const BatchReport report = submit_batch(jobs, sched, {"a", "b"});
    REQUIRE(report.completed == 100);
    REQUIRE(report.failed == 0);
    REQUIRE(report.peak_concurrent <= 4);
    REQUIRE(report.peak_concurrent >= 1);
    // Records stay in submission order regardless of completion order.
    for (int i = 0; i < 100; ++i) {
        REQUIRE(report.records[i].id == static_cast<std::size_t>(i));
        REQUIRE_THAT(report.records[i].output[0], WithinAbs(3.0 * i, 1e-12));
    }
}

TEST_CASE("one crashing job does not disturb the others", "[scheduler]") {
    const fs::path dir = fresh_dir("isolate");
    const DriverConfig good = sum_driver(dir);
    DriverConfig bad = good;
    bad.extra_args = {"--crash"};

    std::vector<std::pair<Eigen::VectorXd, DriverConfig>> jobs;
    for (int i = 0; i < 10; ++i) {
        Eigen::VectorXd row(2);
        row << i, i;
        jobs.emplace_back(row, i == 3 ? bad : good);
    }
    SchedulerConfig sched;
    sched.max_concurrent = 4;
    sched.workspace_root = (dir / "ws").string();
    const BatchReport report = submit_batch(jobs, sched, {"a", "b"});
    REQUIRE(report.completed == 9);
    REQUIRE(report.failed == 1);
    REQUIRE(report.records[3].status == EvalStatus::failed);
    REQUIRE(std::isnan(report.records[3].output[0]));
    REQUIRE_THAT(report.records[4].output[0], WithinAbs(8.0, 1e-12));
}

TEST_CASE("a batch of one job works", "[scheduler]") {
    const fs::path dir = fresh_dir("single");
    const DriverConfig cfg = sum_driver(dir);
    SchedulerConfig sched;
    sched.workspace_root = (dir / "ws").string();
    Eigen::VectorXd row(2);
    row << 2.0, 3.0;
    const BatchReport report = submit_batch({{row, cfg}}, sched, {"a", "b"});
    REQUIRE(report.completed == 1);
    REQUIRE_THAT(report.records[0].output[0], WithinAbs(5.0, 1e-15));
}

TEST_CASE("empty batches are rejected", "[scheduler]") {
    SchedulerConfig sched;
    const std::vector<std::pair<Eigen::VectorXd, DriverConfig>> no_jobs;
    REQUIRE_THROWS_MATCHES(submit_batch(no_jobs, sched, {"a"}), Error,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("batch must be non-empty")));
}

TEST_CASE("transient failures succeed on retry", "[scheduler]") {
    const fs::path dir = fresh_dir("retry");
    DriverConfig cfg = sum_driver(dir);
    cfg.extra_args = {"--fail-once", (dir / "marker.txt").string()};
    Eigen::VectorXd row(2);
    row << 1.0, 1.0;

    SECTION("with one retry the job completes in a retry directory") {
        SchedulerConfig sched;
        sched.retries = 1;
        sched.workspace_root = (dir / "ws_retry").string();
        const BatchReport report = submit_batch({{row, cfg}}, sched, {"a", "b"});
        REQUIRE(report.completed == 1);
        REQUIRE_THAT(report.records[0].working_directory, ContainsSubstring("_retry1"));
    }
    SECTION("without retries the transient failure sticks") {
        SchedulerConfig sched;
        sched.workspace_root = (dir / "ws_noretry").string();
        cfg.extra_args = {"--fail-once", (dir / "marker2.txt").string()};
        const BatchReport report = submit_batch({{row, cfg}}, sched, {"a", "b"});
        REQUIRE(report.failed == 1);
        REQUIRE(report.records[0].exit_code == 4);
    }
}

TEST_CASE("sleep jobs overlap under the worker pool", "[scheduler]") {
    const fs::path dir = fresh_dir("overlap");
    DriverConfig cfg = sum_driver(dir);
    cfg.extra_args = {"--sleep", "0.15"};
    SchedulerConfig sched;
    sched.max_concurrent = 4;
    sched.workspace_root = (dir / "ws").string();

    std::vector<std::pair<Eigen::VectorXd, DriverConfig>> jobs;
    for (int i = 0; i < 8; ++i) {
        Eigen::VectorXd row(2);
        row << i, i;
        jobs.emplace_back(row, cfg);
    }
    const BatchReport report = submit_batch(jobs, sched, {"a", "b"});
    REQUIRE(report.completed == 8);
    REQUIRE(report.peak_concurrent >= 2);
    REQUIRE(report.peak_concurrent <= 4);
    // Serial execution would need at least 1.2 s of sleeping alone.
    REQUIRE(report.wall_seconds < 1.1);
}

TEST_CASE("the scheduler exposes a driver as a model", "[scheduler]") {
    const fs::path dir = fresh_dir("model");
    const DriverConfig cfg = sum_driver(dir);
    SchedulerConfig sched;
    sched.max_concurrent = 2;
    sched.workspace_root = (dir / "ws").string();
    ParameterSpace space({{"a", Distribution::uniform(0, 10)},
                          {"b", Distribution::uniform(0, 10)}});
    const SchedulerModel model(cfg, sched, space);
    REQUIRE(model.input_dimension() == 2);
    REQUIRE(model.output_dimension() == 1);

    Eigen::MatrixXd design(2, 2);
    design << 1.0, 2.0, 3.0, 4.0;
    const BatchResult r = model.evaluate(design);
    REQUIRE(r.all_completed());
    REQUIRE_THAT(r.outputs(0, 0), WithinAbs(3.0, 1e-15));
    REQUIRE_THAT(r.outputs(1, 0), WithinAbs(7.0, 1e-15));

    // A second evaluation lands in fresh job directories.
    const BatchResult r2 = model.evaluate(design);
    REQUIRE(r2.all_completed());
    REQUIRE(fs::exists(dir / "ws" / "job_0"));
    REQUIRE(fs::exists(dir / "ws" / "job_3"));
}

TEST_CASE("failing parameter regions fail row-wise through the model", "[scheduler]") {
    const fs::path dir = fresh_dir("region");
    DriverConfig cfg = sum_driver(dir);
    cfg.extra_args = {"--fail-if", "a>0.5"};
    SchedulerConfig sched;
    sched.workspace_root = (dir / "ws").string();
    ParameterSpace space({{"a", Distribution::uniform(0, 1)},
                          {"b", Distribution::uniform(0, 1)}});
    const SchedulerModel model(cfg, sched, space);

    Eigen::MatrixXd design(2, 2);
    design << 0.4, 0.1, 0.9, 0.1;
    const BatchResult r = model.evaluate(design);
    REQUIRE(r.statuses[0] == EvalStatus::completed);
    REQUIRE(r.statuses[1] == EvalStatus::failed);
    REQUIRE_THAT(r.outputs(0, 0), WithinAbs(0.5, 1e-15));
    REQUIRE(std::isnan(r.outputs(1, 0)));
    REQUIRE_THAT(r.diagnostics[1], ContainsSubstring("exit code 3"));
}
