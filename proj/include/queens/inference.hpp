#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "queens/detail/special_functions.hpp"
#include "queens/errors.hpp"
#include "queens/log.hpp"
#include "queens/model.hpp"
#include "queens/parameter_space.hpp"
#include "queens/random.hpp"

namespace queens {

namespace detail {

inline double standard_normal(RandomStream& rng) {
    return normal_inverse_cdf(rng.uniform_open01());
}

inline double logsumexp(const Eigen::ArrayXd& x) {
    const double m = x.maxCoeff();
    if (!std::isfinite(m)) return m;  // all -inf (or a stray +inf/NaN dominates)
    return m + std::log((x - m).exp().sum());
}

inline std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            cells.push_back(trim(std::string_view(line).substr(start)));
            break;
        }
        cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
        start = comma + 1;
    }
    return cells;
}

}  // namespace detail

/// Experimental observations: one row per observed value, with optional
/// coordinate columns describing where each value was measured, plus
/// the fixed noise variance of the measurement process.
struct ObservationSet {
    std::vector<std::string> coordinate_names;
    Eigen::MatrixXd coordinates;  ///< m-by-c (c may be 0)
    Eigen::VectorXd values;       ///< m
    double noise_variance = 1.0;

    Eigen::Index size() const { return values.size(); }
};

/// Reads observations from a CSV file with a header of coord_<name>
/// columns (optional) and a mandatory value column.
inline ObservationSet load_observations(const std::string& path, double noise_variance) {
    if (!(noise_variance > 0.0)) throw ConfigError("noise variance must be positive");
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open observations file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw ConfigError("observations file is empty: " + path);
    const std::vector<std::string> header = detail::split_csv_line(line);

    ObservationSet out;
    std::vector<Eigen::Index> coord_cols;
    Eigen::Index value_col = -1;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string& name = header[c];
        if (name == "value") {
            if (value_col >= 0) throw ConfigError("duplicate column value in " + path);
            value_col = static_cast<Eigen::Index>(c);
        } else if (name.rfind("coord_", 0) == 0) {
            const std::string coord = name.substr(6);
            if (coord.empty())
                throw ConfigError("coordinate column needs a name after coord_ in " + path);
            for (const auto& existing : out.coordinate_names)
                if (existing == coord)
                    throw ConfigError("duplicate column " + name + " in " + path);
            out.coordinate_names.push_back(coord);
            coord_cols.push_back(static_cast<Eigen::Index>(c));
        } else {
            throw ConfigError("unexpected column '" + name + "' in observations file " + path +
                              " (expected coord_<name> or value)");
        }
    }
    if (value_col < 0) throw ConfigError("missing column value in observations file " + path);

    std::vector<std::vector<double>> rows;
    std::size_t line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (detail::trim(line).empty()) continue;
        const std::vector<std::string> cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw ConfigError("row " + std::to_string(line_number) + " has " +
                              std::to_string(cells.size()) + " cells, expected " +
                              std::to_string(header.size()) + " in " + path);
        std::vector<double> parsed(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const std::string& cell = cells[c];
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc{} || ptr != cell.data() + cell.size())
                throw ConfigError("non-numeric cell in row " + std::to_string(line_number) +
                                  ", column '" + header[c] + "' in " + path);
            parsed[c] = v;
        }
        rows.push_back(std::move(parsed));
    }
    if (rows.empty()) throw ConfigError("observations file has no data rows: " + path);

    const auto m = static_cast<Eigen::Index>(rows.size());
    out.noise_variance = noise_variance;
    out.coordinates.resize(m, static_cast<Eigen::Index>(coord_cols.size()));
    out.values.resize(m);
    for (Eigen::Index r = 0; r < m; ++r) {
        const auto& row = rows[static_cast<std::size_t>(r)];
        out.values[r] = row[static_cast<std::size_t>(value_col)];
        for (std::size_t c = 0; c < coord_cols.size(); ++c)
            out.coordinates(r, static_cast<Eigen::Index>(c)) =
                row[static_cast<std::size_t>(coord_cols[c])];
    }
    return out;
}

/// Gaussian log-likelihood of observed values given model predictions
/// with i.i.d. noise of the given variance. Non-finite predictions are
/// treated as an impossible fit (-inf).
inline double gaussian_loglike(const Eigen::VectorXd& predicted, const Eigen::VectorXd& observed,
                               double noise_variance) {
    if (!(noise_variance > 0.0)) throw ConfigError("noise variance must be positive");
    if (predicted.size() != observed.size())
        throw Error("dimension mismatch: " + std::to_string(predicted.size()) +
                    " predictions for " + std::to_string(observed.size()) + " observations");
    if (!predicted.allFinite()) return -std::numeric_limits<double>::infinity();
    const auto m = static_cast<double>(observed.size());
    const double ss = (observed - predicted).squaredNorm();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return -0.5 * m * std::log(two_pi * noise_variance) - 0.5 * ss / noise_variance;
}

/// Gaussian likelihood of a forward model against observations, usable
/// both as a scalar-output model (for surrogate training: failed
/// forward rows stay failed) and through log_likelihood (for samplers:
/// failed forward rows become -inf and are counted).
class LikelihoodModel final : public Model {
  public:
    LikelihoodModel(std::shared_ptr<const Model> forward, ObservationSet observations,
                    RunLogger* logger = nullptr)
        : forward_(std::move(forward)),
          observations_(std::move(observations)),
          noise_variance_(observations_.noise_variance),
          logger_(logger) {
        if (!forward_) throw ConfigError("likelihood needs a forward model");
        if (!(noise_variance_ > 0.0)) throw ConfigError("noise variance must be positive");
        if (observations_.size() < 1) throw ConfigError("likelihood needs at least 1 observation");
        if (forward_->output_dimension() != observations_.size())
            throw ConfigError("forward model produces " +
                              std::to_string(forward_->output_dimension()) + " outputs but " +
                              std::to_string(observations_.size()) + " values were observed");
    }

    Eigen::Index input_dimension() const override { return forward_->input_dimension(); }
    Eigen::Index output_dimension() const override { return 1; }
    std::string name() const override { return "gaussian_likelihood(" + forward_->name() + ")"; }

    const ObservationSet& observations() const { return observations_; }
    double noise_variance() const { return noise_variance_; }
    std::size_t forward_failure_count() const { return failures_.load(); }

    /// Log-likelihood per row; failed forward evaluations map to -inf.
    Eigen::VectorXd log_likelihood(const Eigen::MatrixXd& rows) const {
        const BatchResult fw = forward_->evaluate(rows);
        Eigen::VectorXd out(rows.rows());
        for (Eigen::Index i = 0; i < rows.rows(); ++i) {
            if (fw.statuses[static_cast<std::size_t>(i)] == EvalStatus::completed) {
                out[i] = gaussian_loglike(fw.outputs.row(i).transpose(), observations_.values,
                                          noise_variance_);
            } else {
                out[i] = -std::numeric_limits<double>::infinity();
                failures_.fetch_add(1);
                if (logger_ != nullptr)
                    logger_->warning(
                        "likelihood set to -inf: forward evaluation failed (" +
                        std::string(to_string(fw.statuses[static_cast<std::size_t>(i)])) +
                        (fw.diagnostics[static_cast<std::size_t>(i)].empty()
                             ? std::string(")")
                             : ": " + fw.diagnostics[static_cast<std::size_t>(i)] + ")"));
            }
        }
        return out;
    }

    double log_likelihood(const Eigen::VectorXd& x) const {
        return log_likelihood(Eigen::MatrixXd(x.transpose()))[0];
    }

  protected:
    BatchResult evaluate_rows(const Eigen::MatrixXd& rows) const override {
        const BatchResult fw = forward_->evaluate(rows);
        BatchResult r = make_result(rows.rows());
        for (Eigen::Index i = 0; i < rows.rows(); ++i) {
            const auto k = static_cast<std::size_t>(i);
            if (fw.statuses[k] == EvalStatus::completed) {
                r.outputs(i, 0) = gaussian_loglike(fw.outputs.row(i).transpose(),
                                                   observations_.values, noise_variance_);
                r.statuses[k] = EvalStatus::completed;
            } else {
                r.statuses[k] = fw.statuses[k];
                r.diagnostics[k] = fw.diagnostics[k];
            }
        }
        return r;
    }

  private:
    std::shared_ptr<const Model> forward_;
    ObservationSet observations_;
    double noise_variance_;
    RunLogger* logger_;
    mutable std::atomic<std::size_t> failures_{0};
};

/// Effective sample size 1 / sum(w^2) of normalized weights.
inline double ess(const Eigen::VectorXd& weights) {
    if (weights.size() == 0) throw Error("weights must be non-empty");
    if ((weights.array() < 0.0).any()) throw Error("weights must be non-negative");
    if (std::abs(weights.sum() - 1.0) > 1e-9)
        throw Error("weights must be normalized, sum is " + std::to_string(weights.sum()));
    return 1.0 / weights.squaredNorm();
}

/// Finds the largest temperature phi in (phi_prev, 1] such that
/// reweighting the ensemble by exp((phi - phi_prev) * loglike) keeps
/// the effective sample size at or above threshold * N, by bisection to
/// an absolute tolerance of 1e-6. Always advances by at least 1e-6.
inline double adapt_temperature(const Eigen::VectorXd& weights, const Eigen::VectorXd& loglikes,
                                double phi_prev, double threshold) {
    if (loglikes.size() != weights.size())
        throw Error("dimension mismatch: weights and log-likelihoods differ in length");
    if (!(phi_prev >= 0.0) || phi_prev >= 1.0)
        throw Error("previous temperature must lie in [0, 1)");
    if (!(threshold > 0.0) || !(threshold < 1.0)) throw Error("ESS threshold must be in (0, 1)");
    bool any_finite = false;
    for (Eigen::Index k = 0; k < loglikes.size(); ++k)
        any_finite = any_finite || (std::isfinite(loglikes[k]) && weights[k] > 0.0);
    if (!any_finite) throw Error("every particle log-likelihood is non-finite");

    const Eigen::ArrayXd log_w = weights.array().log();  // zero weights -> -inf
    const double target = threshold * static_cast<double>(weights.size());
    const auto ess_at = [&](double phi) {
        const Eigen::ArrayXd lw = log_w + (phi - phi_prev) * loglikes.array();
        const double lse1 = detail::logsumexp(lw);
        const double lse2 = detail::logsumexp(2.0 * lw);
        return std::exp(2.0 * lse1 - lse2);
    };

    if (ess_at(1.0) >= target) return 1.0;
    double lo = phi_prev;
    double hi = 1.0;
    while (hi - lo > 1e-6) {
        const double mid = 0.5 * (lo + hi);
        if (ess_at(mid) >= target)
            lo = mid;
        else
            hi = mid;
    }
    return lo > phi_prev ? lo : std::min(1.0, phi_prev + 1e-6);
}

/// Systematic resampling: N evenly spaced points with one common random
/// offset mapped through the weight CDF. Returns ancestor indices.
inline std::vector<Eigen::Index> systematic_resample(const Eigen::VectorXd& weights,
                                                     RandomStream& rng) {
    const Eigen::Index n = weights.size();
    if (n == 0) throw Error("weights must be non-empty");
    if ((weights.array() < 0.0).any()) throw Error("weights must be non-negative");
    if (std::abs(weights.sum() - 1.0) > 1e-9)
        throw Error("weights must be normalized, sum is " + std::to_string(weights.sum()));

    std::vector<Eigen::Index> indices(static_cast<std::size_t>(n));
    const double offset = rng.uniform01() / static_cast<double>(n);
    double cdf = weights[0];
    Eigen::Index j = 0;
    for (Eigen::Index k = 0; k < n; ++k) {
        const double u = offset + static_cast<double>(k) / static_cast<double>(n);
        while (u > cdf && j + 1 < n) cdf += weights[++j];
        indices[static_cast<std::size_t>(k)] = j;
    }
    return indices;
}

/// A Markov chain produced by a Metropolis-Hastings run: all visited
/// states (the initial state first), their log-posteriors, and the
/// acceptance count.
struct Chain {
    Eigen::MatrixXd states;          ///< (steps+1)-by-d
    Eigen::VectorXd log_posteriors;  ///< one per state
    std::size_t accepted = 0;
    std::size_t proposed = 0;

    double acceptance_rate() const {
        return proposed == 0 ? 0.0
                             : static_cast<double>(accepted) / static_cast<double>(proposed);
    }
};

using LogDensityFn = std::function<double(const Eigen::VectorXd&)>;

/// Random-walk Metropolis-Hastings with an independent Gaussian
/// proposal of the given per-dimension scales.
inline Chain metropolis_hastings(const LogDensityFn& log_target, const Eigen::VectorXd& initial,
                                 std::size_t steps, const Eigen::VectorXd& proposal_scales,
                                 RandomStream& rng) {
    if (!log_target) throw ConfigError("sampler needs a log-density");
    if (initial.size() == 0) throw ConfigError("initial state must be non-empty");
    if (proposal_scales.size() != initial.size())
        throw ConfigError("dimension mismatch: " + std::to_string(proposal_scales.size()) +
                          " proposal scales for " + std::to_string(initial.size()) +
                          " dimensions");
    if (!(proposal_scales.minCoeff() > 0.0))
        throw ConfigError("proposal scale must be positive");
    const double lp0 = log_target(initial);
    if (!std::isfinite(lp0))
        throw Error("initial state has non-finite log-density " + std::to_string(lp0));

    const Eigen::Index d = initial.size();
    Chain chain;
    chain.proposed = steps;
    chain.states.resize(static_cast<Eigen::Index>(steps) + 1, d);
    chain.log_posteriors.resize(static_cast<Eigen::Index>(steps) + 1);
    chain.states.row(0) = initial.transpose();
    chain.log_posteriors[0] = lp0;

    Eigen::VectorXd x = initial;
    double lp = lp0;
    Eigen::VectorXd proposal(d);
    for (std::size_t t = 1; t <= steps; ++t) {
        for (Eigen::Index j = 0; j < d; ++j)
            proposal[j] = x[j] + proposal_scales[j] * detail::standard_normal(rng);
        const double lpp = log_target(proposal);
        const double log_u = std::log(rng.uniform_open01());
        if (!std::isnan(lpp) && log_u < lpp - lp) {
            x = proposal;
            lp = lpp;
            ++chain.accepted;
        }
        chain.states.row(static_cast<Eigen::Index>(t)) = x.transpose();
        chain.log_posteriors[static_cast<Eigen::Index>(t)] = lp;
    }
    return chain;
}

/// Batched log-likelihood: one value per input row, -inf where the
/// underlying evaluation failed.
using BatchLogLikeFn = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

struct SMCOptions {
    std::size_t particle_count = 1000;
    double ess_threshold = 0.5;         ///< resample/adapt target as a fraction of N
    std::size_t rejuvenation_sweeps = 5;  ///< MH sweeps per tempering stage
    std::size_t max_stages = 1000;      ///< safeguard against a stalled schedule
};

/// Per-stage record of an SMC run.
struct SMCStage {
    double temperature = 0.0;
    double ess = 0.0;
    bool resampled = false;
    std::size_t accepted = 0;  ///< accepted rejuvenation moves
    std::size_t proposed = 0;
};

/// Weighted particle population at some tempering stage, with the
/// per-particle log-likelihood cache the sampler maintains.
struct ParticleEnsemble {
    Eigen::MatrixXd particles;   ///< N-by-d
    Eigen::VectorXd weights;     ///< normalized
    Eigen::VectorXd loglikes;    ///< cached log-likelihood per particle
    double temperature = 0.0;    ///< phi in [0, 1]

    Eigen::VectorXd mean() const { return particles.transpose() * weights; }

    /// Weighted (biased) per-dimension variance around the weighted mean.
    Eigen::VectorXd variance() const {
        const Eigen::VectorXd m = mean();
        Eigen::VectorXd v = Eigen::VectorXd::Zero(particles.cols());
        for (Eigen::Index k = 0; k < particles.rows(); ++k) {
            const Eigen::VectorXd c = particles.row(k).transpose() - m;
            v += weights[k] * c.cwiseProduct(c);
        }
        return v;
    }
};

/// Final ensemble of a sequential Monte Carlo run at temperature 1.
struct SMCResult {
    ParticleEnsemble ensemble;
    double log_evidence = 0.0;
    std::vector<SMCStage> stages;

    Eigen::VectorXd mean() const { return ensemble.mean(); }
    Eigen::VectorXd variance() const { return ensemble.variance(); }
};

/// Adaptive-tempering sequential Monte Carlo from the prior to the
/// posterior: each stage picks the next temperature by ESS control,
/// importance-reweights, resamples systematically when the ESS drops
/// below the threshold, and rejuvenates every particle with random-walk
/// MH sweeps targeting the current tempered posterior. Log-evidence is
/// accumulated from the stage-wise mean incremental weights.
inline SMCResult smc_run(const ParameterSpace& prior, const BatchLogLikeFn& loglike,
                         const SMCOptions& options, RandomStream& rng,
                         RunLogger* logger = nullptr) {
    if (!loglike) throw ConfigError("SMC needs a log-likelihood");
    if (options.particle_count < 10)
        throw ConfigError("SMC needs at least 10 particles, got " +
                          std::to_string(options.particle_count));
    if (!(options.ess_threshold > 0.0) || !(options.ess_threshold < 1.0))
        throw ConfigError("ESS threshold must be in (0, 1)");
    if (options.rejuvenation_sweeps < 1)
        throw ConfigError("at least 1 rejuvenation sweep is needed");
    if (options.max_stages < 1) throw ConfigError("at least one stage is needed");

    const auto n = static_cast<Eigen::Index>(options.particle_count);
    const Eigen::Index d = prior.dimension();
    const double inf = std::numeric_limits<double>::infinity();

    Eigen::MatrixXd particles = prior.sample(options.particle_count, rng).values;
    Eigen::VectorXd log_prior(n);
    for (Eigen::Index k = 0; k < n; ++k)
        log_prior[k] = prior.log_pdf(particles.row(k).transpose());
    Eigen::VectorXd loglikes = loglike(particles);
    if (loglikes.size() != n)
        throw Error("log-likelihood returned " + std::to_string(loglikes.size()) +
                    " values for " + std::to_string(n) + " particles");
    for (Eigen::Index k = 0; k < n; ++k)
        if (std::isnan(loglikes[k])) loglikes[k] = -inf;
    if ((loglikes.array() == -inf).all())
        throw Error("every particle log-likelihood is non-finite");

    Eigen::VectorXd weights = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    double phi = 0.0;
    SMCResult result;

    while (phi < 1.0) {
        if (result.stages.size() >= options.max_stages)
            throw Error("temperature schedule did not reach 1 within " +
                        std::to_string(options.max_stages) + " stages");
        SMCStage stage;
        const double phi_next = adapt_temperature(weights, loglikes, phi, options.ess_threshold);
        const double dphi = phi_next - phi;

        // Mean incremental weight under the current weights, in log space.
        Eigen::ArrayXd lw = weights.array().log() + dphi * loglikes.array();
        const double log_mean_increment = detail::logsumexp(lw);
        result.log_evidence += log_mean_increment;
        lw -= log_mean_increment;
        weights = lw.exp().matrix();
        weights /= weights.sum();  // absorb rounding
        phi = phi_next;
        stage.temperature = phi;
        stage.ess = ess(weights);

        if (stage.ess < options.ess_threshold * static_cast<double>(n)) {
            stage.resampled = true;
            const std::vector<Eigen::Index> ancestors = systematic_resample(weights, rng);
            Eigen::MatrixXd new_particles(n, d);
            Eigen::VectorXd new_prior(n), new_like(n);
            for (Eigen::Index k = 0; k < n; ++k) {
                new_particles.row(k) = particles.row(ancestors[static_cast<std::size_t>(k)]);
                new_prior[k] = log_prior[ancestors[static_cast<std::size_t>(k)]];
                new_like[k] = loglikes[ancestors[static_cast<std::size_t>(k)]];
            }
            particles = std::move(new_particles);
            log_prior = std::move(new_prior);
            loglikes = std::move(new_like);
            weights.setConstant(1.0 / static_cast<double>(n));
        }

        // Proposal scale: half the weighted ensemble spread per dimension.
        const Eigen::VectorXd center = particles.transpose() * weights;
        Eigen::VectorXd scale = Eigen::VectorXd::Zero(d);
        for (Eigen::Index k = 0; k < n; ++k) {
            const Eigen::VectorXd c = particles.row(k).transpose() - center;
            scale += weights[k] * c.cwiseProduct(c);
        }
        scale = 0.5 * scale.cwiseSqrt();

        for (std::size_t sweep = 0; sweep < options.rejuvenation_sweeps; ++sweep) {
            Eigen::MatrixXd proposals(n, d);
            Eigen::VectorXd proposal_prior(n);
            std::vector<Eigen::Index> feasible;
            feasible.reserve(static_cast<std::size_t>(n));
            for (Eigen::Index k = 0; k < n; ++k) {
                for (Eigen::Index j = 0; j < d; ++j)
                    proposals(k, j) = particles(k, j) + scale[j] * detail::standard_normal(rng);
                proposal_prior[k] = prior.log_pdf(proposals.row(k).transpose());
                if (std::isfinite(proposal_prior[k])) feasible.push_back(k);
            }
            Eigen::VectorXd proposal_like = Eigen::VectorXd::Constant(n, -inf);
            if (!feasible.empty()) {
                Eigen::MatrixXd feasible_rows(static_cast<Eigen::Index>(feasible.size()), d);
                for (std::size_t f = 0; f < feasible.size(); ++f)
                    feasible_rows.row(static_cast<Eigen::Index>(f)) = proposals.row(feasible[f]);
                const Eigen::VectorXd evaluated = loglike(feasible_rows);
                for (std::size_t f = 0; f < feasible.size(); ++f)
                    proposal_like[feasible[f]] =
                        std::isnan(evaluated[static_cast<Eigen::Index>(f)])
                            ? -inf
                            : evaluated[static_cast<Eigen::Index>(f)];
            }
            for (Eigen::Index k = 0; k < n; ++k) {
                ++stage.proposed;
                const double current = log_prior[k] + phi * loglikes[k];
                const double candidate = proposal_prior[k] + phi * proposal_like[k];
                if (std::isnan(candidate)) continue;
                if (std::log(rng.uniform_open01()) < candidate - current) {
                    particles.row(k) = proposals.row(k);
                    log_prior[k] = proposal_prior[k];
                    loglikes[k] = proposal_like[k];
                    ++stage.accepted;
                }
            }
        }

        if (logger != nullptr) {
            char line[160];
            std::snprintf(line, sizeof line,
                          "SMC stage %zu: temperature %.6f, ESS %.1f%s, rejuvenation "
                          "acceptance %.2f",
                          result.stages.size() + 1, stage.temperature, stage.ess,
                          stage.resampled ? " (resampled)" : "",
                          stage.proposed == 0 ? 0.0
                                              : static_cast<double>(stage.accepted) /
                                                    static_cast<double>(stage.proposed));
            logger->info(line);
        }
        result.stages.push_back(stage);
    }

    result.ensemble.particles = std::move(particles);
    result.ensemble.weights = std::move(weights);
    result.ensemble.loglikes = std::move(loglikes);
    result.ensemble.temperature = phi;
    return result;
}

}  // namespace queens
