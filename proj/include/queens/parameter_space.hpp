#pragma once

#include <Eigen/Dense>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "queens/design_matrix.hpp"
#include "queens/distributions.hpp"
#include "queens/errors.hpp"
#include "queens/random.hpp"

namespace queens {

/// Ordered collection of named marginal distributions. Declaration
/// order is preserved; it fixes the column order of every design
/// matrix and the component order of every parameter vector.
///
/// Immutable after construction; safe to share across threads.
class ParameterSpace {
  public:
    /// Builds a space from (name, distribution) pairs in declaration order.
    /// Throws ConfigError for an empty list, empty names, or duplicates.
    explicit ParameterSpace(std::vector<std::pair<std::string, Distribution>> entries)
        : entries_(std::move(entries)) {
        if (entries_.empty()) throw ConfigError("empty parameter block");
        std::set<std::string> seen;
        for (const auto& [name, dist] : entries_) {
            (void)dist;
            if (name.empty()) throw ConfigError("parameter name must be non-empty");
            if (!seen.insert(name).second)
                throw ConfigError("duplicate parameter name '" + name + "'");
        }
    }

    /// Number of parameters d.
    Eigen::Index dimension() const { return static_cast<Eigen::Index>(entries_.size()); }

    const std::string& name(Eigen::Index j) const { return entries_[static_cast<std::size_t>(j)].first; }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& [name, dist] : entries_) {
            (void)dist;
            out.push_back(name);
        }
        return out;
    }

    const Distribution& marginal(Eigen::Index j) const {
        return entries_[static_cast<std::size_t>(j)].second;
    }

    /// True when every marginal has finite support (grid designs need this).
    bool bounded() const {
        for (const auto& [name, dist] : entries_) {
            (void)name;
            if (!dist.bounded()) return false;
        }
        return true;
    }

    /// n i.i.d. draws from the joint (product) distribution.
    DesignMatrix sample(std::size_t n, RandomStream& rng) const {
        if (n == 0) throw Error("sample count must be at least 1");
        DesignMatrix design;
        design.values.resize(static_cast<Eigen::Index>(n), dimension());
        for (Eigen::Index i = 0; i < design.values.rows(); ++i)
            for (Eigen::Index j = 0; j < dimension(); ++j)
                design.values(i, j) = marginal(j).sample(rng);
        design.column_names = names();
        design.provenance.generator = "monte_carlo";
        design.provenance.seed = rng.seed();
        return design;
    }

    /// Joint log-density at x: the sum of marginal log-densities,
    /// -inf anywhere outside the support.
    double log_pdf(const Eigen::VectorXd& x) const {
        if (x.size() != dimension())
            throw Error("dimension mismatch: expected " + std::to_string(dimension()) +
                        " components, got " + std::to_string(x.size()));
        double total = 0.0;
        for (Eigen::Index j = 0; j < dimension(); ++j) {
            const double lp = marginal(j).log_pdf(x[j]);
            if (lp == -std::numeric_limits<double>::infinity())
                return -std::numeric_limits<double>::infinity();
            total += lp;
        }
        return total;
    }

    /// Componentwise inverse-CDF map of an n-by-d matrix of unit-cube
    /// coordinates onto the parameter support.
    DesignMatrix from_unit_cube(const Eigen::MatrixXd& u) const {
        if (u.cols() != dimension())
            throw Error("dimension mismatch: expected " + std::to_string(dimension()) +
                        " columns, got " + std::to_string(u.cols()));
        DesignMatrix design;
        design.values.resize(u.rows(), u.cols());
        for (Eigen::Index i = 0; i < u.rows(); ++i) {
            for (Eigen::Index j = 0; j < u.cols(); ++j) {
                const double v = u(i, j);
                if (!(v >= 0.0 && v <= 1.0))
                    throw Error("unit-cube violation: entry (" + std::to_string(i) + ", " +
                                std::to_string(j) + ") = " + std::to_string(v));
                design.values(i, j) = marginal(j).inverse_cdf(v);
            }
        }
        design.column_names = names();
        design.provenance.generator = "unit_cube";
        return design;
    }

    /// Single-point convenience overload of from_unit_cube.
    Eigen::VectorXd point_from_unit_cube(const Eigen::VectorXd& u) const {
        if (u.size() != dimension())
            throw Error("dimension mismatch: expected " + std::to_string(dimension()) +
                        " components, got " + std::to_string(u.size()));
        Eigen::VectorXd x(u.size());
        for (Eigen::Index j = 0; j < u.size(); ++j) {
            const double v = u[j];
            if (!(v >= 0.0 && v <= 1.0)) throw Error("unit-cube violation");
            x[j] = marginal(j).inverse_cdf(v);
        }
        return x;
    }

  private:
    std::vector<std::pair<std::string, Distribution>> entries_;
};

}  // namespace queens
