#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "queens/design_matrix.hpp"
#include "queens/errors.hpp"

namespace queens {

/// Terminal state of one model evaluation.
enum class EvalStatus { completed, failed, timed_out };

inline const char* to_string(EvalStatus s) {
    switch (s) {
        case EvalStatus::completed: return "completed";
        case EvalStatus::failed: return "failed";
        case EvalStatus::timed_out: return "timed_out";
    }
    return "unknown";
}

/// Row-aligned outcome of a batch evaluation. Failed rows keep their
/// place: outputs are NaN-filled and the status/diagnostic says why.
struct BatchResult {
    Eigen::MatrixXd outputs;                 ///< n-by-m; NaN rows for failures
    std::vector<EvalStatus> statuses;        ///< one per input row
    std::vector<std::string> diagnostics;    ///< empty string when completed

    std::size_t count(EvalStatus s) const {
        std::size_t c = 0;
        for (auto st : statuses)
            if (st == s) ++c;
        return c;
    }
    bool all_completed() const { return count(EvalStatus::completed) == statuses.size(); }
};

/// Abstract mapping from a parameter vector to an output vector with
/// fixed input/output dimensions. Implementations must be safe to call
/// from multiple threads on disjoint rows.
class Model {
  public:
    virtual ~Model() = default;

    virtual Eigen::Index input_dimension() const = 0;
    virtual Eigen::Index output_dimension() const = 0;
    virtual std::string name() const = 0;

    /// Batch evaluation; never throws for per-row failures. Rejects the
    /// whole batch (before any evaluation) on a dimension mismatch.
    BatchResult evaluate(const Eigen::MatrixXd& rows) const {
        if (rows.cols() != input_dimension())
            throw Error("dimension mismatch: model '" + name() + "' expects " +
                        std::to_string(input_dimension()) + " inputs, design has " +
                        std::to_string(rows.cols()) + " columns");
        return evaluate_rows(rows);
    }

    BatchResult evaluate(const DesignMatrix& design) const { return evaluate(design.values); }

    /// Single-point evaluation; throws EvaluationError if the row fails.
    Eigen::VectorXd evaluate_point(const Eigen::VectorXd& x) const {
        BatchResult r = evaluate(Eigen::MatrixXd(x.transpose()));
        if (r.statuses[0] != EvalStatus::completed)
            throw EvaluationError("model '" + name() + "' evaluation failed: " +
                                  (r.diagnostics[0].empty() ? to_string(r.statuses[0])
                                                            : r.diagnostics[0]));
        return r.outputs.row(0).transpose();
    }

  protected:
    virtual BatchResult evaluate_rows(const Eigen::MatrixXd& rows) const = 0;

    /// NaN-filled result skeleton with every row initially failed.
    BatchResult make_result(Eigen::Index n) const {
        BatchResult r;
        r.outputs.setConstant(n, output_dimension(), std::numeric_limits<double>::quiet_NaN());
        r.statuses.assign(static_cast<std::size_t>(n), EvalStatus::failed);
        r.diagnostics.assign(static_cast<std::size_t>(n), std::string());
        return r;
    }
};

/// In-process model wrapping a pure function. A thrown exception or a
/// non-finite output marks the row failed without disturbing the batch.
class FunctionModel final : public Model {
  public:
    using Fn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

    FunctionModel(std::string name, Eigen::Index input_dim, Eigen::Index output_dim, Fn fn)
        : name_(std::move(name)), d_(input_dim), m_(output_dim), fn_(std::move(fn)) {
        if (d_ < 1 || m_ < 1) throw ConfigError("model dimensions must be at least 1");
        if (!fn_) throw ConfigError("function model needs a callable");
    }

    Eigen::Index input_dimension() const override { return d_; }
    Eigen::Index output_dimension() const override { return m_; }
    std::string name() const override { return name_; }

  protected:
    BatchResult evaluate_rows(const Eigen::MatrixXd& rows) const override {
        BatchResult r = make_result(rows.rows());
        for (Eigen::Index i = 0; i < rows.rows(); ++i) {
            try {
                Eigen::VectorXd y = fn_(rows.row(i).transpose());
                if (y.size() != m_)
                    throw EvaluationError("function returned " + std::to_string(y.size()) +
                                          " outputs, declared " + std::to_string(m_));
                if (!y.allFinite()) {
                    r.diagnostics[static_cast<std::size_t>(i)] = "non-finite output";
                    continue;
                }
                r.outputs.row(i) = y.transpose();
                r.statuses[static_cast<std::size_t>(i)] = EvalStatus::completed;
            } catch (const std::exception& e) {
                r.diagnostics[static_cast<std::size_t>(i)] = e.what();
            }
        }
        return r;
    }

  private:
    std::string name_;
    Eigen::Index d_;
    Eigen::Index m_;
    Fn fn_;
};

/// Finite-difference scheme selection. The default mirrors the usual
/// sqrt-epsilon forward rule.
struct GradientSpec {
    enum class Scheme { forward, central };
    Scheme scheme = Scheme::forward;
    double h_rel = 1.49e-8;
};

/// Finite-difference gradient at x as a d-by-m matrix (row i holds
/// the sensitivities of all outputs to input i). Perturbed points are
/// evaluated as one batch.
inline Eigen::MatrixXd fd_gradient(const Model& model, const Eigen::VectorXd& x,
                                   const GradientSpec& spec = {}) {
    if (!(spec.h_rel > 0.0)) throw ConfigError("relative step size must be positive");
    const Eigen::Index d = model.input_dimension();
    if (x.size() != d)
        throw Error("dimension mismatch: expected " + std::to_string(d) + " components, got " +
                    std::to_string(x.size()));

    Eigen::VectorXd h(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        const double hi = spec.h_rel * std::max(1.0, std::abs(x[i]));
        // Use the exactly representable step actually taken.
        volatile double xph = x[i] + hi;
        h[i] = xph - x[i];
    }

    const bool central = spec.scheme == GradientSpec::Scheme::central;
    const Eigen::Index n = central ? 2 * d : d + 1;
    Eigen::MatrixXd batch(n, d);
    if (central) {
        for (Eigen::Index i = 0; i < d; ++i) {
            batch.row(2 * i) = x.transpose();
            batch(2 * i, i) = x[i] + h[i];
            batch.row(2 * i + 1) = x.transpose();
            batch(2 * i + 1, i) = x[i] - h[i];
        }
    } else {
        batch.row(0) = x.transpose();
        for (Eigen::Index i = 0; i < d; ++i) {
            batch.row(i + 1) = x.transpose();
            batch(i + 1, i) = x[i] + h[i];
        }
    }

    const BatchResult r = model.evaluate(batch);
    for (Eigen::Index k = 0; k < n; ++k) {
        if (r.statuses[static_cast<std::size_t>(k)] != EvalStatus::completed) {
            const Eigen::Index comp = central ? k / 2 : (k == 0 ? -1 : k - 1);
            const std::string where =
                comp < 0 ? "base point" : "perturbation of component " + std::to_string(comp);
            throw EvaluationError("finite-difference gradient failed at " + where + ": " +
                                  (r.diagnostics[static_cast<std::size_t>(k)].empty()
                                       ? to_string(r.statuses[static_cast<std::size_t>(k)])
                                       : r.diagnostics[static_cast<std::size_t>(k)]));
        }
    }

    const Eigen::Index m = model.output_dimension();
    Eigen::MatrixXd grad(d, m);
    if (central) {
        for (Eigen::Index i = 0; i < d; ++i)
            grad.row(i) = (r.outputs.row(2 * i) - r.outputs.row(2 * i + 1)) / (2.0 * h[i]);
    } else {
        for (Eigen::Index i = 0; i < d; ++i)
            grad.row(i) = (r.outputs.row(i + 1) - r.outputs.row(0)) / h[i];
    }
    return grad;
}

/// Builds one of the shipped in-process models. `dimension` selects the
/// input dimension for families defined in any dimension (sum,
/// quadratic_sphere); fixed-dimension models reject a mismatch.
inline std::shared_ptr<Model> make_builtin_model(const std::string& name,
                                                 Eigen::Index dimension) {
    static const char* available = "ishigami, quadratic_sphere, rosenbrock_residuals, sum";
    if (dimension < 1) throw ConfigError("model dimensions must be at least 1");
    if (name == "sum") {
        return std::make_shared<FunctionModel>(
            "sum", dimension, 1,
            [](const Eigen::VectorXd& x) { return Eigen::VectorXd::Constant(1, x.sum()); });
    }
    if (name == "quadratic_sphere") {
        return std::make_shared<FunctionModel>("quadratic_sphere", dimension, 1,
                                               [](const Eigen::VectorXd& x) {
                                                   return Eigen::VectorXd::Constant(
                                                       1, x.squaredNorm());
                                               });
    }
    if (name == "rosenbrock_residuals") {
        if (dimension != 2)
            throw ConfigError("rosenbrock_residuals is defined for 2 inputs, got " +
                              std::to_string(dimension));
        return std::make_shared<FunctionModel>("rosenbrock_residuals", 2, 2,
                                               [](const Eigen::VectorXd& x) {
                                                   Eigen::VectorXd r(2);
                                                   r[0] = 10.0 * (x[1] - x[0] * x[0]);
                                                   r[1] = 1.0 - x[0];
                                                   return r;
                                               });
    }
    if (name == "ishigami") {
        if (dimension != 3)
            throw ConfigError("ishigami is defined for 3 inputs, got " +
                              std::to_string(dimension));
        return std::make_shared<FunctionModel>(
            "ishigami", 3, 1, [](const Eigen::VectorXd& x) {
                const double a = 7.0;
                const double b = 0.1;
                const double y = std::sin(x[0]) + a * std::sin(x[1]) * std::sin(x[1]) +
                                 b * std::pow(x[2], 4) * std::sin(x[0]);
                return Eigen::VectorXd::Constant(1, y);
            });
    }
    throw ConfigError("unknown function model '" + name + "'; available: " + available);
}

}  // namespace queens
