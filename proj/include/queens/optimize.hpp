#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "queens/errors.hpp"
#include "queens/log.hpp"
#include "queens/model.hpp"

namespace queens {

/// Why an optimizer stopped.
enum class Termination { gradient_tol, step_tol, objective_tol, max_iter, stalled };

inline const char* to_string(Termination t) {
    switch (t) {
        case Termination::gradient_tol: return "gradient_tol";
        case Termination::step_tol: return "step_tol";
        case Termination::objective_tol: return "objective_tol";
        case Termination::max_iter: return "max_iter";
        case Termination::stalled: return "stalled";
    }
    return "unknown";
}

/// Outcome of an optimization run, including the full iterate trace
/// (trace.size() == iterations + 1; entry 0 is the starting point).
struct OptimResult {
    Eigen::VectorXd x;
    double objective = 0.0;
    std::size_t iterations = 0;
    Termination reason = Termination::max_iter;
    std::vector<std::pair<Eigen::VectorXd, double>> trace;
};

/// Levenberg-Marquardt settings. The objective is the sum of squared
/// residuals; lambda follows Marquardt's multiplicative schedule. An
/// analytic Jacobian (rows = residuals, columns = parameters) may be
/// supplied; otherwise finite differences per `gradient` are used,
/// with all columns evaluated as one batch.
struct LMOptions {
    double grad_tol = 1e-8;                ///< on the max-norm of J^T r
    double step_tol = 1e-10;               ///< relative step length cutoff
    std::size_t max_iter = 200;
    double lambda_init_scale = 1e-3;       ///< lambda0 = scale * max diag(J^T J)
    double lambda_max = 1e12;              ///< beyond this the search is stalled
    GradientSpec gradient;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
    RunLogger* logger = nullptr;
};

/// Damped least squares on a residual model r: R^d -> R^m, minimizing
/// |r(x)|^2. Each iteration solves (J^T J + lambda diag(J^T J)) delta =
/// -J^T r, first probing lambda/10 and escalating tenfold on rejection,
/// so an accepted step leaves lambda divided by 10.
inline OptimResult levenberg_marquardt(const Model& residual_model, const Eigen::VectorXd& x0,
                                       const LMOptions& opts = {}) {
    const Eigen::Index d = residual_model.input_dimension();
    const Eigen::Index m = residual_model.output_dimension();
    if (x0.size() != d)
        throw Error("dimension mismatch: expected " + std::to_string(d) + " components, got " +
                    std::to_string(x0.size()));
    if (m < d && opts.logger)
        opts.logger->warning("levenberg_marquardt: underdetermined residual system (" +
                             std::to_string(m) + " residuals < " + std::to_string(d) +
                             " parameters)");

    const auto jacobian_at = [&](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
        if (opts.jacobian) {
            Eigen::MatrixXd J = opts.jacobian(x);
            if (J.rows() != m || J.cols() != d)
                throw Error("analytic Jacobian has wrong shape");
            return J;
        }
        return fd_gradient(residual_model, x, opts.gradient).transpose();
    };

    OptimResult result;
    Eigen::VectorXd x = x0;
    Eigen::VectorXd r = residual_model.evaluate_point(x);
    double ssq = r.squaredNorm();
    result.trace.emplace_back(x, ssq);

    double lambda = -1.0;  // set from the first Jacobian
    result.reason = Termination::max_iter;
    for (std::size_t iter = 0; iter < opts.max_iter; ++iter) {
        const Eigen::MatrixXd J = jacobian_at(x);
        const Eigen::VectorXd g = J.transpose() * r;
        if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
            result.reason = Termination::gradient_tol;
            break;
        }
        const Eigen::MatrixXd JtJ = J.transpose() * J;
        Eigen::VectorXd diag = JtJ.diagonal();
        const double max_diag = diag.maxCoeff();
        for (Eigen::Index i = 0; i < d; ++i)
            diag[i] = std::max(diag[i], 1e-14 * max_diag +
                                            std::numeric_limits<double>::denorm_min());
        if (lambda < 0.0) lambda = opts.lambda_init_scale * max_diag;

        // Probe decreasing damping first; escalate while rejected.
        bool accepted = false;
        bool step_converged = false;
        double lambda_try = lambda / 10.0;
        while (lambda_try <= opts.lambda_max) {
            Eigen::MatrixXd A = JtJ;
            A.diagonal() += lambda_try * diag;
            const Eigen::VectorXd delta = A.ldlt().solve(-g);
            const Eigen::VectorXd x_new = x + delta;
            const Eigen::VectorXd r_new = residual_model.evaluate_point(x_new);
            const double ssq_new = r_new.squaredNorm();
            if (ssq_new < ssq) {
                lambda = lambda_try;
                x = x_new;
                r = r_new;
                ssq = ssq_new;
                ++result.iterations;
                result.trace.emplace_back(x, ssq);
                step_converged = delta.norm() < opts.step_tol * (x.norm() + opts.step_tol);
                accepted = true;
                break;
            }
            lambda_try *= 10.0;
        }
        if (!accepted) {
            result.reason = Termination::stalled;
            break;
        }
        if (step_converged) {
            result.reason = Termination::step_tol;
            break;
        }
    }

    result.x = x;
    result.objective = ssq;
    return result;
}

/// Settings for the stochastic first-order family.
struct StochasticOptimizerConfig {
    enum class Kind { adam, adamax, rmsprop };
    Kind kind = Kind::adam;
    double step_size = 0.001;  ///< alpha
    double beta1 = 0.9;        ///< first-moment decay (adam, adamax)
    double beta2 = 0.999;      ///< second-moment decay (adam, adamax)
    double rho = 0.9;          ///< squared-gradient decay (rmsprop)
    double epsilon = 1e-8;
    std::size_t max_iter = 1000;
    double grad_tol = 1e-8;    ///< on the 2-norm of the gradient

    void validate() const {
        if (!(step_size > 0.0)) throw ConfigError("step size must be positive");
        if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
        if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in (0, 1)");
        if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in (0, 1)");
        if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
    }
};

inline StochasticOptimizerConfig::Kind stochastic_kind_from_string(const std::string& s) {
    if (s == "adam") return StochasticOptimizerConfig::Kind::adam;
    if (s == "adamax") return StochasticOptimizerConfig::Kind::adamax;
    if (s == "rmsprop") return StochasticOptimizerConfig::Kind::rmsprop;
    throw ConfigError("unknown stochastic optimizer '" + s +
                      "'; available: adam, adamax, rmsprop");
}

/// Objective-with-gradient callable: x -> (f(x), grad f(x)).
using ObjectiveFn = std::function<std::pair<double, Eigen::VectorXd>(const Eigen::VectorXd&)>;

/// First-order minimization with Adam, Adamax, or RMSProp.
///
/// Adam uses bias-corrected first and second moments; Adamax tracks an
/// infinity-norm second moment; RMSProp divides by the root of an
/// exponential moving average of squared gradients (stabilizer inside
/// the root). Stops when the gradient 2-norm drops below grad_tol.
inline OptimResult stochastic_minimize(const ObjectiveFn& fg, const Eigen::VectorXd& x0,
                                       const StochasticOptimizerConfig& cfg = {}) {
    cfg.validate();
    using Kind = StochasticOptimizerConfig::Kind;

    OptimResult result;
    Eigen::VectorXd x = x0;
    auto [f, g] = fg(x);
    if (!g.allFinite() || !std::isfinite(f)) throw EvaluationError("non-finite gradient");
    result.trace.emplace_back(x, f);

    const Eigen::Index d = x0.size();
    Eigen::VectorXd m1 = Eigen::VectorXd::Zero(d);  // first moment / EMA of g^2
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(d);  // second moment / inf-norm moment

    result.reason = Termination::max_iter;
    if (g.norm() < cfg.grad_tol) {
        result.reason = Termination::gradient_tol;
    } else {
        for (std::size_t t = 1; t <= cfg.max_iter; ++t) {
            switch (cfg.kind) {
                case Kind::adam: {
                    m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * g;
                    m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * g.cwiseProduct(g);
                    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
                    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
                    const Eigen::ArrayXd mhat = m1.array() / bc1;
                    const Eigen::ArrayXd vhat = m2.array() / bc2;
                    x.array() -= cfg.step_size * mhat / (vhat.sqrt() + cfg.epsilon);
                    break;
                }
                case Kind::adamax: {
                    m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * g;
                    m2 = (cfg.beta2 * m2.array()).max(g.array().abs()).matrix();
                    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
                    for (Eigen::Index i = 0; i < d; ++i)
                        if (m2[i] > 0.0) x[i] -= cfg.step_size / bc1 * m1[i] / m2[i];
                    break;
                }
                case Kind::rmsprop: {
                    m1 = cfg.rho * m1 + (1.0 - cfg.rho) * g.cwiseProduct(g);
                    x.array() -= cfg.step_size * g.array() / (m1.array() + cfg.epsilon).sqrt();
                    break;
                }
            }
            std::tie(f, g) = fg(x);
            if (!g.allFinite() || !std::isfinite(f))
                throw EvaluationError("non-finite gradient");
            result.trace.emplace_back(x, f);
            result.iterations = t;
            if (g.norm() < cfg.grad_tol) {
                result.reason = Termination::gradient_tol;
                break;
            }
        }
    }

    result.x = x;
    result.objective = f;
    return result;
}

/// Wraps a scalar-output model and a finite-difference scheme as an
/// objective-with-gradient callable.
inline ObjectiveFn objective_from_model(const Model& model, GradientSpec spec = {}) {
    if (model.output_dimension() != 1)
        throw ConfigError("objective model must have one output, '" + model.name() + "' has " +
                          std::to_string(model.output_dimension()));
    return [&model, spec](const Eigen::VectorXd& x) {
        const double f = model.evaluate_point(x)[0];
        const Eigen::VectorXd g = fd_gradient(model, x, spec).col(0);
        return std::make_pair(f, g);
    };
}

/// Convenience overload: minimize a scalar-output model directly.
inline OptimResult stochastic_minimize(const Model& model, const Eigen::VectorXd& x0,
                                       const StochasticOptimizerConfig& cfg = {},
                                       GradientSpec spec = {}) {
    return stochastic_minimize(objective_from_model(model, spec), x0, cfg);
}

}  // namespace queens
