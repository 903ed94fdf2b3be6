#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "queens/design_matrix.hpp"
#include "queens/designs.hpp"
#include "queens/errors.hpp"
#include "queens/model.hpp"
#include "queens/parameter_space.hpp"
#include "queens/random.hpp"

namespace queens {

/// One-at-a-time screening design: r trajectories of d+1 points each on
/// a p-level grid in the unit cube, stored both in unit coordinates
/// (where elementary effects are defined) and transformed to the
/// parameter space (where the model is evaluated).
struct MorrisDesign {
    std::size_t trajectories = 0;
    std::size_t levels = 0;
    double delta = 0.0;
    Eigen::MatrixXd unit;              ///< r*(d+1) rows, unit-cube coordinates
    DesignMatrix design;               ///< same rows through from_unit_cube
    std::vector<std::size_t> trajectory_of_row;
    std::vector<Eigen::Index> varied_dimension;  ///< -1 for each trajectory's base row
};

/// Screening indices of the Elementary Effects method.
struct MorrisIndices {
    Eigen::VectorXd mu;        ///< mean elementary effect
    Eigen::VectorXd mu_star;   ///< mean absolute elementary effect
    Eigen::VectorXd sigma;     ///< standard deviation of elementary effects
    std::size_t used_trajectories = 0;
    std::size_t discarded_trajectories = 0;
};

/// Builds r randomized one-at-a-time trajectories on the p-level unit
/// grid (delta = p / (2(p-1))), with random +/- step directions and a
/// random dimension order per trajectory.
inline MorrisDesign morris_design(const ParameterSpace& space, std::size_t trajectories,
                                  std::size_t levels, RandomStream& rng) {
    if (levels < 2 || levels % 2 != 0)
        throw Error("Morris levels must be even and at least 2, got " + std::to_string(levels));
    if (trajectories < 1) throw Error("Morris needs at least one trajectory");

    const Eigen::Index d = space.dimension();
    const std::size_t p = levels;
    const double delta = static_cast<double>(p) / (2.0 * static_cast<double>(p - 1));
    // Grid levels k/(p-1); a step of delta spans p/2 grid cells, so each
    // direction leaves p/2 admissible start levels.
    const std::size_t starts = p / 2;
    const std::size_t rows_per_traj = static_cast<std::size_t>(d) + 1;

    MorrisDesign out;
    out.trajectories = trajectories;
    out.levels = p;
    out.delta = delta;
    out.unit.resize(static_cast<Eigen::Index>(trajectories * rows_per_traj), d);
    out.trajectory_of_row.resize(trajectories * rows_per_traj);
    out.varied_dimension.assign(trajectories * rows_per_traj, -1);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
    for (std::size_t t = 0; t < trajectories; ++t) {
        Eigen::RowVectorXd point(d);
        Eigen::VectorXd step(d);
        for (Eigen::Index j = 0; j < d; ++j) {
            const bool up = rng.uniform01() < 0.5;
            step[j] = up ? delta : -delta;
            const std::size_t level = rng.uniform_below(starts);
            const double base = static_cast<double>(level) / static_cast<double>(p - 1);
            point[j] = up ? base : 1.0 - base;  // mirror so -delta stays inside
        }
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        for (std::size_t i = order.size() - 1; i > 0; --i)
            std::swap(order[i], order[rng.uniform_below(i + 1)]);

        const std::size_t row0 = t * rows_per_traj;
        out.unit.row(static_cast<Eigen::Index>(row0)) = point;
        out.trajectory_of_row[row0] = t;
        for (std::size_t s = 0; s < static_cast<std::size_t>(d); ++s) {
            const Eigen::Index dim = order[s];
            point[dim] += step[dim];
            const std::size_t row = row0 + s + 1;
            out.unit.row(static_cast<Eigen::Index>(row)) = point;
            out.trajectory_of_row[row] = t;
            out.varied_dimension[row] = dim;
        }
    }
    // Guard against representation drift at the upper boundary.
    out.unit = out.unit.cwiseMax(0.0).cwiseMin(1.0);
    out.design = space.from_unit_cube(out.unit);
    out.design.provenance.generator = "morris";
    out.design.provenance.seed = rng.seed();
    return out;
}

/// Elementary-effect statistics from a row-aligned evaluation of a
/// Morris design. Trajectories containing any failed row are discarded
/// whole and counted; the effects are measured on the unit-cube
/// parametrization.
inline MorrisIndices morris_indices(const MorrisDesign& design, const BatchResult& outputs) {
    const Eigen::Index d = design.unit.cols();
    const std::size_t rows_per_traj = static_cast<std::size_t>(d) + 1;
    if (outputs.statuses.size() != design.trajectory_of_row.size())
        throw Error("outputs are not row-aligned with the design");
    if (outputs.outputs.cols() != 1)
        throw Error("sensitivity analysis needs a scalar model output");

    std::vector<std::vector<double>> effects(static_cast<std::size_t>(d));
    std::size_t used = 0;
    std::size_t discarded = 0;
    for (std::size_t t = 0; t < design.trajectories; ++t) {
        const std::size_t row0 = t * rows_per_traj;
        bool ok = true;
        for (std::size_t s = 0; s < rows_per_traj; ++s)
            ok = ok && outputs.statuses[row0 + s] == EvalStatus::completed;
        if (!ok) {
            ++discarded;
            continue;
        }
        ++used;
        for (std::size_t s = 1; s < rows_per_traj; ++s) {
            const std::size_t row = row0 + s;
            const Eigen::Index dim = design.varied_dimension[row];
            const double du = design.unit(static_cast<Eigen::Index>(row), dim) -
                              design.unit(static_cast<Eigen::Index>(row - 1), dim);
            const double dy = outputs.outputs(static_cast<Eigen::Index>(row), 0) -
                              outputs.outputs(static_cast<Eigen::Index>(row - 1), 0);
            effects[static_cast<std::size_t>(dim)].push_back(dy / du);
        }
    }
    if (used == 0) throw Error("all trajectories discarded (every one contained a failed row)");

    MorrisIndices out;
    out.used_trajectories = used;
    out.discarded_trajectories = discarded;
    out.mu.resize(d);
    out.mu_star.resize(d);
    out.sigma.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        const auto& ee = effects[static_cast<std::size_t>(j)];
        const double n = static_cast<double>(ee.size());
        double mean = 0.0;
        double mean_abs = 0.0;
        for (double e : ee) {
            mean += e;
            mean_abs += std::abs(e);
        }
        mean /= n;
        mean_abs /= n;
        double ss = 0.0;
        for (double e : ee) ss += (e - mean) * (e - mean);
        out.mu[j] = mean;
        out.mu_star[j] = mean_abs;
        out.sigma[j] = ee.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    }
    return out;
}

/// Pick-freeze design for variance-based indices: blocks A, B, and
/// A_B^(i) (A with column i replaced from B), stacked in that order.
struct SaltelliDesign {
    std::size_t base_count = 0;  ///< N
    Eigen::Index dimension = 0;  ///< d
    DesignMatrix design;         ///< N*(d+2) rows

    Eigen::Index row_a(std::size_t k) const { return static_cast<Eigen::Index>(k); }
    Eigen::Index row_b(std::size_t k) const { return static_cast<Eigen::Index>(base_count + k); }
    Eigen::Index row_ab(Eigen::Index i, std::size_t k) const {
        return static_cast<Eigen::Index>((2 + static_cast<std::size_t>(i)) * base_count + k);
    }
};

/// Variance-based first-order and total-effect indices.
struct SobolIndices {
    Eigen::VectorXd first_order;   ///< S_i
    Eigen::VectorXd total_effect;  ///< ST_i
    double output_variance = 0.0;
};

/// Builds the A/B/A_B blocks from one 2d-dimensional Sobol-sequence
/// block (A = first d columns, B = last d), so the design is
/// deterministic for a fixed skip.
inline SaltelliDesign saltelli_design(const ParameterSpace& space, std::size_t base_count,
                                      std::uint64_t skip = 1) {
    if (base_count < 2) throw Error("Saltelli design needs a base count of at least 2");
    const Eigen::Index d = space.dimension();
    const Eigen::MatrixXd joint =
        detail::sobol_unit_points(static_cast<Eigen::Index>(base_count), 2 * d, skip);
    const Eigen::MatrixXd A = joint.leftCols(d);
    const Eigen::MatrixXd B = joint.rightCols(d);

    const auto n = static_cast<Eigen::Index>(base_count);
    Eigen::MatrixXd stacked(n * (d + 2), d);
    stacked.topRows(n) = A;
    stacked.middleRows(n, n) = B;
    for (Eigen::Index i = 0; i < d; ++i) {
        Eigen::MatrixXd ab = A;
        ab.col(i) = B.col(i);
        stacked.middleRows((2 + i) * n, n) = ab;
    }

    SaltelliDesign out;
    out.base_count = base_count;
    out.dimension = d;
    out.design = space.from_unit_cube(stacked);
    out.design.provenance.generator = "saltelli";
    out.design.provenance.skip = skip;
    return out;
}

/// First-order indices by the Saltelli-2010 estimator and total-effect
/// indices by the Jansen estimator, normalized by the unbiased sample
/// variance of the concatenated A and B outputs. Failed rows are a hard
/// error: the estimators need every block entry.
inline SobolIndices sobol_indices(const SaltelliDesign& design, const BatchResult& outputs) {
    const auto n = static_cast<Eigen::Index>(design.base_count);
    const Eigen::Index d = design.dimension;
    if (static_cast<Eigen::Index>(outputs.statuses.size()) != n * (d + 2))
        throw Error("outputs are not row-aligned with the design");
    if (outputs.outputs.cols() != 1)
        throw Error("sensitivity analysis needs a scalar model output");
    const std::size_t failed =
        outputs.statuses.size() - outputs.count(EvalStatus::completed);
    if (failed > 0)
        throw Error(std::to_string(failed) +
                    " failed rows; variance-based estimation needs every row");

    const Eigen::VectorXd y = outputs.outputs.col(0);
    const Eigen::VectorXd fA = y.segment(0, n);
    const Eigen::VectorXd fB = y.segment(n, n);

    Eigen::VectorXd both(2 * n);
    both << fA, fB;
    const double mean = both.mean();
    const double variance =
        (both.array() - mean).square().sum() / static_cast<double>(2 * n - 1);
    // The min == max test catches exactly constant outputs, which rounding
    // noise in the accumulated variance would otherwise let through.
    if (both.minCoeff() == both.maxCoeff() || !(variance > 0.0))
        throw Error("zero output variance; indices are undefined");

    SobolIndices out;
    out.output_variance = variance;
    out.first_order.resize(d);
    out.total_effect.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        const Eigen::VectorXd fAB = y.segment((2 + i) * n, n);
        out.first_order[i] =
            (fB.array() * (fAB - fA).array()).mean() / variance;
        out.total_effect[i] = (fA - fAB).array().square().mean() / (2.0 * variance);
    }
    return out;
}

}  // namespace queens
