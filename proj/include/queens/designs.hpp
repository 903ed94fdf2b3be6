#pragma once

#include <Eigen/Dense>
#include <bit>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "queens/design_matrix.hpp"
#include "queens/detail/sobol_joe_kuo.hpp"
#include "queens/errors.hpp"
#include "queens/parameter_space.hpp"
#include "queens/random.hpp"

namespace queens {

namespace detail {

/// Base-2 digital Sobol sequence in Gray-code order, 32 bits of
/// precision, using the bundled Joe-Kuo direction numbers.
class SobolSequence {
  public:
    explicit SobolSequence(Eigen::Index dimension, std::uint64_t skip = 1) {
        if (dimension < 1) throw Error("Sobol dimension must be at least 1");
        if (static_cast<std::size_t>(dimension) > sobol_max_dimension)
            throw Error("dimension exceeds direction-number table (" +
                        std::to_string(dimension) + " > " +
                        std::to_string(sobol_max_dimension) + ")");
        const auto d = static_cast<std::size_t>(dimension);
        v_.assign(d, std::array<std::uint32_t, 32>{});
        for (std::size_t j = 0; j < d; ++j) {
            auto& v = v_[j];
            if (j == 0) {
                for (std::size_t i = 0; i < 32; ++i) v[i] = 1u << (31 - i);
                continue;
            }
            const std::uint32_t poly = sobol_poly[j];
            const std::size_t s = static_cast<std::size_t>(std::bit_width(poly)) - 1;
            for (std::size_t i = 0; i < s; ++i) v[i] = sobol_vinit[j][i] << (31 - i);
            for (std::size_t i = s; i < 32; ++i) {
                std::uint32_t x = v[i - s];
                x ^= x >> s;
                for (std::size_t k = 1; k < s; ++k)
                    if ((poly >> (s - k)) & 1u) x ^= v[i - k];
                v[i] = x;
            }
        }
        if (skip >= (1ull << 32)) throw Error("Sobol skip exceeds sequence capacity (2^32)");
        // Jump directly to point `skip` via its Gray code.
        state_.assign(d, 0u);
        index_ = skip;
        std::uint64_t gray = skip ^ (skip >> 1);
        for (std::size_t b = 0; b < 32 && gray != 0; ++b, gray >>= 1)
            if (gray & 1u)
                for (std::size_t j = 0; j < d; ++j) state_[j] ^= v_[j][b];
    }

    Eigen::Index dimension() const { return static_cast<Eigen::Index>(state_.size()); }

    /// Returns the current point in [0,1)^d and advances the sequence.
    Eigen::RowVectorXd next() {
        if (exhausted_) throw Error("Sobol sequence exhausted (2^32 points)");
        Eigen::RowVectorXd point(dimension());
        for (Eigen::Index j = 0; j < dimension(); ++j)
            point[j] = state_[static_cast<std::size_t>(j)] * 0x1.0p-32;
        ++index_;
        if (index_ >= (1ull << 32)) {
            exhausted_ = true;
            return point;
        }
        const auto bit = static_cast<std::size_t>(std::countr_zero(index_));
        for (std::size_t j = 0; j < state_.size(); ++j) state_[j] ^= v_[j][bit];
        return point;
    }

  private:
    std::vector<std::array<std::uint32_t, 32>> v_;
    std::vector<std::uint32_t> state_;
    std::uint64_t index_ = 0;
    bool exhausted_ = false;
};

/// Unit-cube Sobol points skip .. skip+n-1 as an n-by-d matrix.
inline Eigen::MatrixXd sobol_unit_points(Eigen::Index n, Eigen::Index d, std::uint64_t skip) {
    SobolSequence seq(d, skip);
    Eigen::MatrixXd u(n, d);
    for (Eigen::Index i = 0; i < n; ++i) u.row(i) = seq.next();
    return u;
}

}  // namespace detail

/// Full-factorial design: the Cartesian product of equispaced points
/// per axis, endpoints included (a count of 1 takes the interval
/// midpoint). Rows are ordered lexicographically with the last axis
/// varying fastest.
inline DesignMatrix grid_design(const ParameterSpace& space,
                                const std::vector<std::size_t>& points_per_axis) {
    const auto d = static_cast<std::size_t>(space.dimension());
    if (points_per_axis.size() != d)
        throw Error("grid design needs one count per dimension (got " +
                    std::to_string(points_per_axis.size()) + " for " + std::to_string(d) +
                    " parameters)");
    std::size_t total = 1;
    for (std::size_t j = 0; j < d; ++j) {
        if (points_per_axis[j] == 0) throw Error("points per axis must be at least 1");
        if (!space.marginal(static_cast<Eigen::Index>(j)).bounded())
            throw Error("grid design requires bounded marginals; parameter '" +
                        space.name(static_cast<Eigen::Index>(j)) + "' is unbounded");
        total *= points_per_axis[j];
    }

    std::vector<std::vector<double>> axes(d);
    for (std::size_t j = 0; j < d; ++j) {
        const auto& m = space.marginal(static_cast<Eigen::Index>(j));
        const std::size_t c = points_per_axis[j];
        axes[j].resize(c);
        if (c == 1) {
            axes[j][0] = 0.5 * (m.lower() + m.upper());
        } else {
            const double step = (m.upper() - m.lower()) / static_cast<double>(c - 1);
            for (std::size_t i = 0; i < c; ++i)
                axes[j][i] = m.lower() + static_cast<double>(i) * step;
            axes[j][c - 1] = m.upper();
        }
    }

    DesignMatrix design;
    design.values.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(d));
    for (std::size_t r = 0; r < total; ++r) {
        std::size_t rem = r;
        for (std::size_t j = d; j-- > 0;) {
            const std::size_t c = points_per_axis[j];
            design.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
                axes[j][rem % c];
            rem /= c;
        }
    }
    design.column_names = space.names();
    design.provenance.generator = "grid";
    return design;
}

/// Latin hypercube design: per dimension, one point uniformly placed
/// inside each of n equiprobable strata, strata independently permuted
/// per dimension, then mapped through the marginal inverse CDFs.
inline DesignMatrix lhs_design(const ParameterSpace& space, std::size_t n, RandomStream& rng) {
    if (n == 0) throw Error("sample count must be at least 1");
    const Eigen::Index d = space.dimension();
    Eigen::MatrixXd u(static_cast<Eigen::Index>(n), d);
    std::vector<std::size_t> perm(n);
    for (Eigen::Index j = 0; j < d; ++j) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        for (std::size_t i = n - 1; i > 0; --i) {
            const std::size_t k = rng.uniform_below(i + 1);
            std::swap(perm[i], perm[k]);
        }
        for (std::size_t i = 0; i < n; ++i)
            u(static_cast<Eigen::Index>(i), j) =
                (static_cast<double>(perm[i]) + rng.uniform01()) / static_cast<double>(n);
    }
    DesignMatrix design = space.from_unit_cube(u);
    design.provenance.generator = "lhs";
    design.provenance.seed = rng.seed();
    return design;
}

/// Sobol-sequence design: points skip .. skip+n-1 of the base-2 digital
/// sequence, mapped through the marginal inverse CDFs. Deterministic;
/// the default skip of 1 drops the all-zeros point.
inline DesignMatrix sobol_design(const ParameterSpace& space, std::size_t n,
                                 std::uint64_t skip = 1) {
    if (n == 0) throw Error("sample count must be at least 1");
    const Eigen::MatrixXd u =
        detail::sobol_unit_points(static_cast<Eigen::Index>(n), space.dimension(), skip);
    DesignMatrix design = space.from_unit_cube(u);
    design.provenance.generator = "sobol";
    design.provenance.skip = skip;
    return design;
}

/// Monte Carlo design: i.i.d. draws from the joint distribution.
inline DesignMatrix mc_design(const ParameterSpace& space, std::size_t n, RandomStream& rng) {
    return space.sample(n, rng);
}

}  // namespace queens
