#pragma once

#include <unistd.h>

#include <Eigen/Dense>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "queens/driver.hpp"
#include "queens/errors.hpp"
#include "queens/log.hpp"
#include "queens/model.hpp"
#include "queens/parameter_space.hpp"

namespace queens {

/// Local concurrent execution policy for driver jobs.
struct SchedulerConfig {
    std::size_t max_concurrent = 1;
    std::size_t retries = 0;          ///< re-runs of failed jobs
    std::string workspace_root = "."; ///< parent of all job_<id>/ directories

    void validate() const {
        if (max_concurrent < 1) throw ConfigError("max_concurrent must be at least 1");
        if (workspace_root.empty()) throw ConfigError("workspace root must be set");
    }
};

/// Outcome of one batch: records in submission order plus tallies and
/// the instrumented peak of simultaneously running jobs.
struct BatchReport {
    std::vector<JobRecord> records;
    std::size_t completed = 0;
    std::size_t failed = 0;
    std::size_t timed_out = 0;
    double wall_seconds = 0.0;
    std::size_t peak_concurrent = 0;
};

/// Runs every job through a fixed-size worker pool (at most
/// max_concurrent running at any instant). One job's failure never
/// cancels the others; a failed job is retried in a fresh
/// `job_<id>_retry<k>` directory up to the configured count.
inline BatchReport submit_batch(const std::vector<std::pair<Eigen::VectorXd, DriverConfig>>& jobs,
                                const SchedulerConfig& sched,
                                const std::vector<std::string>& names,
                                RunLogger* logger = nullptr, std::size_t first_id = 0) {
    sched.validate();
    if (jobs.empty()) throw Error("batch must be non-empty");

    const std::filesystem::path root(sched.workspace_root);
    std::error_code ec;
    std::filesystem::create_directories(root, ec);
    if (ec || ::access(root.c_str(), W_OK) != 0)
        throw Error("workspace not writable: " + sched.workspace_root);

    const std::size_t n = jobs.size();
    if (logger)
        for (std::size_t i = 0; i < n; ++i)
            logger->info("job " + std::to_string(first_id + i) + ": queued");

    BatchReport report;
    report.records.resize(n);
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> running{0};
    std::atomic<std::size_t> peak{0};

    const auto start = std::chrono::steady_clock::now();
    const auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            const std::size_t now_running = running.fetch_add(1) + 1;
            std::size_t seen = peak.load();
            while (now_running > seen && !peak.compare_exchange_weak(seen, now_running)) {
            }
            JobRecord record;
            for (std::size_t attempt = 0;; ++attempt) {
                const std::string suffix =
                    attempt == 0 ? std::string() : "_retry" + std::to_string(attempt);
                record = execute_job(jobs[i].second, names, jobs[i].first, first_id + i, root,
                                     logger, suffix);
                if (record.status == EvalStatus::completed || attempt >= sched.retries) break;
                if (logger)
                    logger->info("job " + std::to_string(first_id + i) + ": retrying (attempt " +
                                 std::to_string(attempt + 1) + " of " +
                                 std::to_string(sched.retries) + ")");
            }
            running.fetch_sub(1);
            report.records[i] = std::move(record);
        }
    };

    const std::size_t pool = std::min(sched.max_concurrent, n);
    std::vector<std::thread> threads;
    threads.reserve(pool);
    for (std::size_t t = 0; t < pool; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.peak_concurrent = peak.load();
    for (const auto& r : report.records) {
        switch (r.status) {
            case EvalStatus::completed: ++report.completed; break;
            case EvalStatus::failed: ++report.failed; break;
            case EvalStatus::timed_out: ++report.timed_out; break;
        }
    }
    if (logger)
        logger->info("batch done: " + std::to_string(report.completed) + " completed, " +
                     std::to_string(report.failed) + " failed, " +
                     std::to_string(report.timed_out) + " timed out in " +
                     render_double(report.wall_seconds) + " s");
    return report;
}

/// Convenience: one driver config for every row of a design.
inline BatchReport submit_batch(const DesignMatrix& design, const DriverConfig& driver,
                                const SchedulerConfig& sched, RunLogger* logger = nullptr,
                                std::size_t first_id = 0) {
    std::vector<std::pair<Eigen::VectorXd, DriverConfig>> jobs;
    jobs.reserve(static_cast<std::size_t>(design.rows()));
    for (Eigen::Index i = 0; i < design.rows(); ++i)
        jobs.emplace_back(design.row(i).transpose(), driver);
    return submit_batch(jobs, sched, design.column_names, logger, first_id);
}

/// An external solver wired through the scheduler, exposed as a Model.
/// Job ids keep increasing across evaluate() calls so every job of a
/// run lands in its own directory.
class SchedulerModel final : public Model {
  public:
    SchedulerModel(DriverConfig driver, SchedulerConfig sched, const ParameterSpace& space,
                   RunLogger* logger = nullptr)
        : driver_(std::move(driver)),
          sched_(std::move(sched)),
          names_(space.names()),
          logger_(logger) {
        driver_.validate();
        sched_.validate();
    }

    Eigen::Index input_dimension() const override {
        return static_cast<Eigen::Index>(names_.size());
    }
    Eigen::Index output_dimension() const override { return driver_.output_dimension; }
    std::string name() const override { return "driver:" + driver_.executable; }

    const SchedulerConfig& scheduler_config() const { return sched_; }
    const DriverConfig& driver_config() const { return driver_; }

  protected:
    BatchResult evaluate_rows(const Eigen::MatrixXd& rows) const override {
        BatchResult result = make_result(rows.rows());
        if (rows.rows() == 0) return result;
        std::vector<std::pair<Eigen::VectorXd, DriverConfig>> jobs;
        jobs.reserve(static_cast<std::size_t>(rows.rows()));
        for (Eigen::Index i = 0; i < rows.rows(); ++i)
            jobs.emplace_back(rows.row(i).transpose(), driver_);
        const std::size_t first_id =
            next_id_.fetch_add(static_cast<std::size_t>(rows.rows()));
        const BatchReport report = submit_batch(jobs, sched_, names_, logger_, first_id);
        for (Eigen::Index i = 0; i < rows.rows(); ++i) {
            const auto& rec = report.records[static_cast<std::size_t>(i)];
            result.statuses[static_cast<std::size_t>(i)] = rec.status;
            result.diagnostics[static_cast<std::size_t>(i)] = rec.diagnostic;
            if (rec.status == EvalStatus::completed) result.outputs.row(i) = rec.output.transpose();
        }
        return result;
    }

  private:
    DriverConfig driver_;
    SchedulerConfig sched_;
    std::vector<std::string> names_;
    RunLogger* logger_;
    mutable std::atomic<std::size_t> next_id_{0};
};

}  // namespace queens
