#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "queens/errors.hpp"
#include "queens/model.hpp"
#include "queens/optimize.hpp"
#include "queens/random.hpp"

namespace queens {

/// Hyperparameters of an anisotropic squared-exponential kernel.
struct GPHyperparameters {
    double signal_variance = 1.0;   ///< sigma_f^2 > 0
    Eigen::VectorXd lengthscales;   ///< one per input dimension, > 0
    double noise_variance = 1e-4;   ///< sigma_n^2 >= 0

    void validate(Eigen::Index d) const {
        if (!(signal_variance > 0.0)) throw ConfigError("signal variance must be positive");
        if (lengthscales.size() != d)
            throw ConfigError("expected " + std::to_string(d) + " lengthscales, got " +
                              std::to_string(lengthscales.size()));
        for (Eigen::Index k = 0; k < d; ++k)
            if (!(lengthscales[k] > 0.0)) throw ConfigError("lengthscales must be positive");
        if (!(noise_variance >= 0.0)) throw ConfigError("noise variance must not be negative");
    }
};

namespace detail {

/// Squared-exponential (ARD) cross-kernel matrix between row sets.
inline Eigen::MatrixXd se_kernel(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                 double signal_variance, const Eigen::VectorXd& ell) {
    const Eigen::MatrixXd As = A.array().rowwise() / ell.transpose().array();
    const Eigen::MatrixXd Bs = B.array().rowwise() / ell.transpose().array();
    const Eigen::VectorXd a2 = As.rowwise().squaredNorm();
    const Eigen::VectorXd b2 = Bs.rowwise().squaredNorm();
    Eigen::MatrixXd d2 = (-2.0 * As * Bs.transpose());
    d2.colwise() += a2;
    d2.rowwise() += b2.transpose();
    return signal_variance * (-0.5 * d2.array().max(0.0)).exp();
}

/// Cholesky of K + sigma_n^2 I (+ jitter I), escalating jitter from
/// 1e-10 to 1e-4 of the mean kernel diagonal until factorization
/// succeeds. Returns the factorization and the jitter used.
inline std::pair<Eigen::LLT<Eigen::MatrixXd>, double> jittered_llt(const Eigen::MatrixXd& Ky,
                                                                   double diag_scale) {
    Eigen::LLT<Eigen::MatrixXd> llt(Ky);
    if (llt.info() == Eigen::Success) return {llt, 0.0};
    for (double jitter = 1e-10 * diag_scale; jitter <= 1e-4 * diag_scale; jitter *= 10.0) {
        Eigen::MatrixXd J = Ky;
        J.diagonal().array() += jitter;
        llt.compute(J);
        if (llt.info() == Eigen::Success) return {llt, jitter};
    }
    throw Error("kernel factorization failed after jitter escalation");
}

}  // namespace detail

/// Log marginal likelihood of data (X, y) under the squared-exponential
/// GP, with its analytic gradient.
struct LMLResult {
    double value = 0.0;
    /// d/d log(sigma_f^2), d/d log(ell_1..d), d/d log(sigma_n^2)
    Eigen::VectorXd gradient;
};

inline LMLResult log_marginal_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                         const GPHyperparameters& hyper) {
    const Eigen::Index n = X.rows();
    const Eigen::Index d = X.cols();
    hyper.validate(d);
    if (y.size() != n) throw Error("dimension mismatch: targets do not match inputs");

    const Eigen::MatrixXd K = detail::se_kernel(X, X, hyper.signal_variance, hyper.lengthscales);
    Eigen::MatrixXd Ky = K;
    Ky.diagonal().array() += hyper.noise_variance;
    const auto [llt, jitter] = detail::jittered_llt(Ky, hyper.signal_variance);
    (void)jitter;

    const Eigen::VectorXd alpha = llt.solve(y);
    const Eigen::MatrixXd L = llt.matrixL();
    double logdet_half = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) logdet_half += std::log(L(i, i));

    LMLResult out;
    out.value = -0.5 * y.dot(alpha) - logdet_half -
                0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);

    // W = alpha alpha^T - Ky^-1; dLML/dtheta = 0.5 tr(W dKy/dtheta).
    Eigen::MatrixXd W = -llt.solve(Eigen::MatrixXd::Identity(n, n));
    W += alpha * alpha.transpose();

    out.gradient.resize(d + 2);
    out.gradient[0] = 0.5 * W.cwiseProduct(K).sum();  // d/d log sigma_f^2
    for (Eigen::Index k = 0; k < d; ++k) {
        const Eigen::VectorXd xk = X.col(k) / hyper.lengthscales[k];
        Eigen::MatrixXd d2k = -2.0 * xk * xk.transpose();
        d2k.colwise() += xk.cwiseProduct(xk);
        d2k.rowwise() += xk.cwiseProduct(xk).transpose();
        out.gradient[k + 1] = 0.5 * W.cwiseProduct(K.cwiseProduct(d2k)).sum();
    }
    out.gradient[d + 1] = 0.5 * hyper.noise_variance * W.trace();  // d/d log sigma_n^2
    return out;
}

/// Training budget for the marginal-likelihood ascent.
struct GPTrainOptions {
    std::size_t restarts = 5;      ///< random restarts (first uses the heuristic start)
    std::size_t steps = 500;       ///< Adam steps per restart
    double step_size = 0.05;       ///< Adam step in log space
    double noise_floor = 1e-12;    ///< lower bound on standardized noise variance
    std::uint64_t seed = 0;        ///< seeds the restart perturbations
};

/// Gaussian process regressor with a squared-exponential ARD kernel.
/// Targets are standardized internally; all reported quantities
/// (predictions, hyperparameters) are on the original scale. Immutable
/// once built; exposed as a Model whose output is the predictive mean.
class GPModel final : public Model {
  public:
    /// Builds the model at fixed hyperparameters (original-y scale).
    GPModel(Eigen::MatrixXd X, Eigen::VectorXd y, const GPHyperparameters& hyper)
        : X_(std::move(X)), y_(std::move(y)) {
        if (X_.rows() < 2) throw Error("GP training needs at least 2 points, got " +
                                       std::to_string(X_.rows()));
        if (y_.size() != X_.rows()) throw Error("dimension mismatch: targets do not match inputs");
        if (!y_.allFinite()) throw Error("non-finite targets");
        hyper.validate(X_.cols());

        y_mean_ = y_.mean();
        const double var =
            (y_.array() - y_mean_).square().sum() / static_cast<double>(y_.size() - 1);
        y_sd_ = var > 0.0 ? std::sqrt(var) : 1.0;

        hyper_std_ = hyper;
        hyper_std_.signal_variance = hyper.signal_variance / (y_sd_ * y_sd_);
        hyper_std_.noise_variance = hyper.noise_variance / (y_sd_ * y_sd_);
        factorize();
    }

    Eigen::Index input_dimension() const override { return X_.cols(); }
    Eigen::Index output_dimension() const override { return 1; }
    std::string name() const override { return "gp_surrogate"; }

    /// Posterior mean and latent variance (no noise term) at each row
    /// of Xstar, on the original target scale.
    std::pair<Eigen::VectorXd, Eigen::VectorXd> predict(const Eigen::MatrixXd& Xstar) const {
        check_query(Xstar);
        const Eigen::MatrixXd Ks =
            detail::se_kernel(X_, Xstar, hyper_std_.signal_variance, hyper_std_.lengthscales);
        Eigen::VectorXd mean = Ks.transpose() * alpha_;
        const Eigen::MatrixXd V = llt_.matrixL().solve(Ks);
        Eigen::VectorXd var = Eigen::VectorXd::Constant(Xstar.rows(), hyper_std_.signal_variance);
        var -= V.colwise().squaredNorm().transpose();
        var = var.cwiseMax(0.0);
        mean = (mean.array() * y_sd_ + y_mean_).matrix();
        var *= y_sd_ * y_sd_;
        return {std::move(mean), std::move(var)};
    }

    /// Posterior mean only (skips the variance solve).
    Eigen::VectorXd predict_mean(const Eigen::MatrixXd& Xstar) const {
        check_query(Xstar);
        const Eigen::MatrixXd Ks =
            detail::se_kernel(X_, Xstar, hyper_std_.signal_variance, hyper_std_.lengthscales);
        return ((Ks.transpose() * alpha_).array() * y_sd_ + y_mean_).matrix();
    }

    /// Hyperparameters on the original target scale.
    GPHyperparameters hyperparameters() const {
        GPHyperparameters h = hyper_std_;
        h.signal_variance *= y_sd_ * y_sd_;
        h.noise_variance *= y_sd_ * y_sd_;
        return h;
    }

    double noise_variance() const { return hyper_std_.noise_variance * y_sd_ * y_sd_; }

    /// Log marginal likelihood of the standardized training data at the
    /// trained hyperparameters.
    double trained_log_marginal_likelihood() const { return lml_; }

    const Eigen::MatrixXd& training_inputs() const { return X_; }
    const Eigen::VectorXd& training_targets() const { return y_; }
    double jitter() const { return jitter_; }

  protected:
    BatchResult evaluate_rows(const Eigen::MatrixXd& rows) const override {
        BatchResult r = make_result(rows.rows());
        const Eigen::VectorXd mean = predict_mean(rows);
        for (Eigen::Index i = 0; i < rows.rows(); ++i) {
            r.outputs(i, 0) = mean[i];
            r.statuses[static_cast<std::size_t>(i)] = EvalStatus::completed;
        }
        return r;
    }

  private:
    void check_query(const Eigen::MatrixXd& Xstar) const {
        if (Xstar.cols() != X_.cols())
            throw Error("dimension mismatch: query has " + std::to_string(Xstar.cols()) +
                        " columns, model expects " + std::to_string(X_.cols()));
    }

    void factorize() {
        const Eigen::VectorXd ys = (y_.array() - y_mean_) / y_sd_;
        const Eigen::MatrixXd K =
            detail::se_kernel(X_, X_, hyper_std_.signal_variance, hyper_std_.lengthscales);
        Eigen::MatrixXd Ky = K;
        Ky.diagonal().array() += hyper_std_.noise_variance;
        auto [llt, jitter] = detail::jittered_llt(Ky, hyper_std_.signal_variance);
        llt_ = std::move(llt);
        jitter_ = jitter;
        alpha_ = llt_.solve(ys);

        const Eigen::MatrixXd L = llt_.matrixL();
        double logdet_half = 0.0;
        for (Eigen::Index i = 0; i < X_.rows(); ++i) logdet_half += std::log(L(i, i));
        lml_ = -0.5 * ys.dot(alpha_) - logdet_half -
               0.5 * static_cast<double>(X_.rows()) * std::log(2.0 * M_PI);
    }

    Eigen::MatrixXd X_;
    Eigen::VectorXd y_;
    double y_mean_ = 0.0;
    double y_sd_ = 1.0;
    GPHyperparameters hyper_std_;  // on the standardized-target scale
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::VectorXd alpha_;
    double jitter_ = 0.0;
    double lml_ = 0.0;
};

/// Trains a GP by maximizing the log marginal likelihood with
/// multi-restart Adam in log-hyperparameter space. Restart 0 starts
/// from the supplied hyperparameters (or a data-driven heuristic);
/// later restarts perturb that start randomly.
inline GPModel train_gp(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const GPHyperparameters* initial = nullptr,
                        const GPTrainOptions& options = {}) {
    const Eigen::Index n = X.rows();
    const Eigen::Index d = X.cols();
    if (n < 2) throw Error("GP training needs at least 2 points, got " + std::to_string(n));
    if (y.size() != n) throw Error("dimension mismatch: targets do not match inputs");
    if (!y.allFinite()) throw Error("non-finite targets");

    const double y_mean = y.mean();
    const double y_var = (y.array() - y_mean).square().sum() / static_cast<double>(n - 1);
    const double y_sd = y_var > 0.0 ? std::sqrt(y_var) : 1.0;
    const Eigen::VectorXd ys = (y.array() - y_mean) / y_sd;

    // Heuristic start on the standardized scale.
    Eigen::VectorXd theta0(d + 2);
    if (initial) {
        initial->validate(d);
        theta0[0] = std::log(initial->signal_variance / (y_sd * y_sd));
        for (Eigen::Index k = 0; k < d; ++k) theta0[k + 1] = std::log(initial->lengthscales[k]);
        theta0[d + 1] = std::log(std::max(initial->noise_variance / (y_sd * y_sd),
                                          options.noise_floor));
    } else {
        theta0[0] = 0.0;  // sigma_f^2 = 1
        for (Eigen::Index k = 0; k < d; ++k) {
            const double mu = X.col(k).mean();
            const double sd =
                std::sqrt((X.col(k).array() - mu).square().sum() / static_cast<double>(n));
            theta0[k + 1] = std::log(sd > 0.0 ? sd : 1.0);
        }
        theta0[d + 1] = std::log(1e-4);
    }

    const double floor = options.noise_floor;
    const auto unpack = [&](const Eigen::VectorXd& theta) {
        GPHyperparameters h;
        h.signal_variance = std::exp(theta[0]);
        h.lengthscales = theta.segment(1, d).array().exp().matrix();
        h.noise_variance = floor + std::exp(theta[d + 1]);
        return h;
    };
    // Negative LML with the noise coordinate mapped through
    // sigma_n^2 = floor + exp(theta): chain rule scales that gradient
    // component by exp(theta) / sigma_n^2.
    const ObjectiveFn objective = [&](const Eigen::VectorXd& theta) {
        const GPHyperparameters h = unpack(theta);
        LMLResult lml = log_marginal_likelihood(X, ys, h);
        Eigen::VectorXd grad = -lml.gradient;
        grad[d + 1] *= std::exp(theta[d + 1]) / h.noise_variance;
        return std::make_pair(-lml.value, grad);
    };

    RandomStream rng(options.seed, 0x6709);
    StochasticOptimizerConfig adam;
    adam.kind = StochasticOptimizerConfig::Kind::adam;
    adam.step_size = options.step_size;
    adam.max_iter = options.steps;
    adam.grad_tol = 1e-10;

    bool have_best = false;
    double best_value = 0.0;
    Eigen::VectorXd best_theta;
    std::string last_error = "no restarts configured";
    const std::size_t restarts = std::max<std::size_t>(options.restarts, 1);
    for (std::size_t r = 0; r < restarts; ++r) {
        Eigen::VectorXd theta = theta0;
        if (r > 0)
            for (Eigen::Index k = 0; k < theta.size(); ++k)
                theta[k] += (2.0 * rng.uniform01() - 1.0) * 2.0;
        try {
            const OptimResult res = stochastic_minimize(objective, theta, adam);
            if (!have_best || res.objective < best_value) {
                have_best = true;
                best_value = res.objective;
                best_theta = res.x;
            }
        } catch (const std::exception& e) {
            last_error = e.what();  // e.g. factorization failure in a bad region
        }
    }
    if (!have_best) throw Error("GP training failed in every restart: " + last_error);

    GPHyperparameters h = unpack(best_theta);
    h.signal_variance *= y_sd * y_sd;  // back to the original target scale
    h.noise_variance *= y_sd * y_sd;
    return GPModel(X, y, h);
}

}  // namespace queens
