#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace queens {

/// How a design matrix was produced, for run metadata and persistence.
struct DesignProvenance {
    std::string generator;   ///< "grid", "monte_carlo", "lhs", "sobol", ...
    std::uint64_t seed = 0;  ///< RNG seed, when the generator is randomized
    std::size_t skip = 0;    ///< leading points skipped, for sequences
};

/// An n-by-d batch of parameter realizations with named columns.
/// The unit of batch model evaluation.
struct DesignMatrix {
    Eigen::MatrixXd values;                 ///< n rows, one per realization
    std::vector<std::string> column_names;  ///< one per parameter, in space order
    DesignProvenance provenance;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
    Eigen::RowVectorXd row(Eigen::Index i) const { return values.row(i); }
};

}  // namespace queens
