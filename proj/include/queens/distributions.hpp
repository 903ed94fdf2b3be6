#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "queens/detail/special_functions.hpp"
#include "queens/errors.hpp"
#include "queens/random.hpp"

namespace queens {

/// One-dimensional marginal distribution. Immutable after construction
/// and safe to share across threads.
///
/// Supported families: uniform[lower, upper], normal(mean, sd),
/// lognormal(log_mean, log_sd), and beta(a, b) rescaled to
/// [lower, upper]. A degenerate uniform with lower == upper acts as a
/// fixed value.
class Distribution {
  public:
    enum class Kind { uniform, normal, lognormal, beta };

    static Distribution uniform(double lower, double upper) {
        if (!std::isfinite(lower) || !std::isfinite(upper))
            throw ConfigError("uniform bounds must be finite");
        if (!(lower <= upper))
            throw ConfigError("lower bound must not exceed upper bound");
        Distribution d(Kind::uniform);
        d.p_[0] = lower;
        d.p_[1] = upper;
        d.lower_ = lower;
        d.upper_ = upper;
        return d;
    }

    static Distribution normal(double mean, double standard_deviation) {
        if (!std::isfinite(mean) || !std::isfinite(standard_deviation))
            throw ConfigError("normal parameters must be finite");
        if (!(standard_deviation > 0.0))
            throw ConfigError("standard deviation must be positive");
        Distribution d(Kind::normal);
        d.p_[0] = mean;
        d.p_[1] = standard_deviation;
        d.lower_ = -std::numeric_limits<double>::infinity();
        d.upper_ = std::numeric_limits<double>::infinity();
        return d;
    }

    static Distribution lognormal(double log_mean, double log_standard_deviation) {
        if (!std::isfinite(log_mean) || !std::isfinite(log_standard_deviation))
            throw ConfigError("lognormal parameters must be finite");
        if (!(log_standard_deviation > 0.0))
            throw ConfigError("standard deviation must be positive");
        Distribution d(Kind::lognormal);
        d.p_[0] = log_mean;
        d.p_[1] = log_standard_deviation;
        d.lower_ = 0.0;
        d.upper_ = std::numeric_limits<double>::infinity();
        return d;
    }

    static Distribution beta(double shape_a, double shape_b, double lower, double upper) {
        if (!(shape_a > 0.0)) throw ConfigError("shape a must be positive");
        if (!(shape_b > 0.0)) throw ConfigError("shape b must be positive");
        if (!std::isfinite(lower) || !std::isfinite(upper))
            throw ConfigError("beta bounds must be finite");
        if (!(lower < upper))
            throw ConfigError("lower bound must be strictly less than upper bound");
        Distribution d(Kind::beta);
        d.p_[0] = shape_a;
        d.p_[1] = shape_b;
        d.p_[2] = lower;
        d.p_[3] = upper;
        d.lower_ = lower;
        d.upper_ = upper;
        return d;
    }

    Kind kind() const { return kind_; }

    const char* kind_name() const {
        switch (kind_) {
            case Kind::uniform: return "uniform";
            case Kind::normal: return "normal";
            case Kind::lognormal: return "lognormal";
            case Kind::beta: return "beta";
        }
        return "unknown";
    }

    /// Lower edge of the support (-inf if unbounded below).
    double lower() const { return lower_; }
    /// Upper edge of the support (+inf if unbounded above).
    double upper() const { return upper_; }
    /// True when both support edges are finite.
    bool bounded() const { return std::isfinite(lower_) && std::isfinite(upper_); }

    /// Named kind-specific parameters, for reporting and persistence.
    std::vector<std::pair<std::string, double>> parameters() const {
        switch (kind_) {
            case Kind::uniform:
                return {{"lower", p_[0]}, {"upper", p_[1]}};
            case Kind::normal:
                return {{"mean", p_[0]}, {"standard_deviation", p_[1]}};
            case Kind::lognormal:
                return {{"log_mean", p_[0]}, {"log_standard_deviation", p_[1]}};
            case Kind::beta:
                return {{"shape_a", p_[0]}, {"shape_b", p_[1]}, {"lower", p_[2]}, {"upper", p_[3]}};
        }
        return {};
    }

    /// Log-density at x; -inf outside the support. A degenerate uniform
    /// reports 0 at its point and -inf elsewhere, so fixed parameters do
    /// not perturb joint densities.
    double log_pdf(double x) const {
        switch (kind_) {
            case Kind::uniform: {
                if (x < p_[0] || x > p_[1]) return -std::numeric_limits<double>::infinity();
                if (p_[1] == p_[0]) return 0.0;
                return -std::log(p_[1] - p_[0]);
            }
            case Kind::normal: {
                const double z = (x - p_[0]) / p_[1];
                return -0.5 * std::log(2.0 * M_PI) - std::log(p_[1]) - 0.5 * z * z;
            }
            case Kind::lognormal: {
                if (x <= 0.0) return -std::numeric_limits<double>::infinity();
                const double lx = std::log(x);
                const double z = (lx - p_[0]) / p_[1];
                return -lx - std::log(p_[1]) - 0.5 * std::log(2.0 * M_PI) - 0.5 * z * z;
            }
            case Kind::beta: {
                const double s = p_[3] - p_[2];
                const double z = (x - p_[2]) / s;
                if (z < 0.0 || z > 1.0) return -std::numeric_limits<double>::infinity();
                const double la = (p_[0] - 1.0) * std::log(z);
                const double lb = (p_[1] - 1.0) * std::log1p(-z);
                return la + lb - detail::log_beta(p_[0], p_[1]) - std::log(s);
            }
        }
        return -std::numeric_limits<double>::infinity();
    }

    /// Cumulative distribution function at x.
    double cdf(double x) const {
        switch (kind_) {
            case Kind::uniform: {
                if (x < p_[0]) return 0.0;
                if (x >= p_[1]) return 1.0;
                return (x - p_[0]) / (p_[1] - p_[0]);
            }
            case Kind::normal:
                return detail::normal_cdf((x - p_[0]) / p_[1]);
            case Kind::lognormal: {
                if (x <= 0.0) return 0.0;
                return detail::normal_cdf((std::log(x) - p_[0]) / p_[1]);
            }
            case Kind::beta: {
                const double z = (x - p_[2]) / (p_[3] - p_[2]);
                return detail::regularized_incomplete_beta(p_[0], p_[1], z);
            }
        }
        return 0.0;
    }

    /// Quantile function; u must lie in [0, 1].
    double inverse_cdf(double u) const {
        if (!(u >= 0.0 && u <= 1.0)) throw Error("unit-cube violation: value outside [0, 1]");
        switch (kind_) {
            case Kind::uniform:
                return p_[0] + u * (p_[1] - p_[0]);
            case Kind::normal:
                return p_[0] + p_[1] * detail::normal_inverse_cdf(u);
            case Kind::lognormal:
                return std::exp(p_[0] + p_[1] * detail::normal_inverse_cdf(u));
            case Kind::beta:
                return p_[2] + (p_[3] - p_[2]) *
                                   detail::inverse_regularized_incomplete_beta(p_[0], p_[1], u);
        }
        return 0.0;
    }

    /// Draw one value. Uses inverse-transform sampling so that draws and
    /// unit-cube mappings share one distributional definition.
    double sample(RandomStream& rng) const {
        if (kind_ == Kind::uniform) return p_[0] + rng.uniform01() * (p_[1] - p_[0]);
        return inverse_cdf(rng.uniform_open01());
    }

  private:
    explicit Distribution(Kind kind) : kind_(kind) {}

    Kind kind_;
    double p_[4] = {0.0, 0.0, 0.0, 0.0};
    double lower_ = 0.0;
    double upper_ = 0.0;
};

}  // namespace queens
