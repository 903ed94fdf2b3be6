#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "queens/errors.hpp"
#include "queens/gp.hpp"
#include "queens/log.hpp"
#include "queens/model.hpp"
#include "queens/parameter_space.hpp"
#include "queens/random.hpp"

namespace queens {

/// Summary statistics of a scalar-output sample, with the plot-ready
/// histogram and empirical CDF support.
struct OutputStatistics {
    std::size_t sample_count = 0;  ///< completed evaluations
    std::size_t failed_count = 0;
    double mean = 0.0;
    double variance = 0.0;  ///< unbiased
    double standard_deviation = 0.0;
    std::vector<double> quantile_levels;  ///< 0.05, 0.25, 0.5, 0.75, 0.95
    std::vector<double> quantiles;
    std::vector<double> histogram_edges;   ///< bins + 1 entries
    std::vector<double> histogram_counts;  ///< per-bin counts
    std::vector<double> ecdf_values;       ///< sorted sample, F(v_k) = (k+1)/n
};

namespace detail {

/// Linear-interpolation sample quantile of sorted data (the convention
/// where level q maps to fractional index q * (n - 1)).
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double h = q * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

/// Statistics of the completed entries of one output column; failed
/// rows are counted and excluded.
inline OutputStatistics summarize_output(const BatchResult& result, Eigen::Index column = 0,
                                         std::size_t histogram_bins = 20) {
    if (column < 0 || column >= result.outputs.cols())
        throw Error("output column " + std::to_string(column) + " out of range");
    if (histogram_bins < 1) throw Error("histogram needs at least one bin");

    std::vector<double> values;
    values.reserve(result.statuses.size());
    for (std::size_t k = 0; k < result.statuses.size(); ++k)
        if (result.statuses[k] == EvalStatus::completed)
            values.push_back(result.outputs(static_cast<Eigen::Index>(k), column));
    OutputStatistics out;
    out.sample_count = values.size();
    out.failed_count = result.statuses.size() - values.size();
    if (values.empty()) throw Error("every evaluation failed; no statistics to compute");
    if (values.size() < 2)
        throw Error("statistics need at least 2 completed evaluations");

    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    out.mean = mean;
    out.variance = ss / (n - 1.0);
    out.standard_deviation = std::sqrt(out.variance);

    std::sort(values.begin(), values.end());
    out.quantile_levels = {0.05, 0.25, 0.5, 0.75, 0.95};
    for (double q : out.quantile_levels)
        out.quantiles.push_back(detail::sorted_quantile(values, q));

    const double lo = values.front();
    const double hi = values.back();
    const double width = hi > lo ? (hi - lo) / static_cast<double>(histogram_bins) : 1.0;
    out.histogram_edges.resize(histogram_bins + 1);
    for (std::size_t b = 0; b <= histogram_bins; ++b)
        out.histogram_edges[b] = lo + width * static_cast<double>(b);
    out.histogram_counts.assign(histogram_bins, 0.0);
    for (double v : values) {
        auto bin = static_cast<std::size_t>((v - lo) / width);
        bin = std::min(bin, histogram_bins - 1);  // top edge closes the last bin
        out.histogram_counts[bin] += 1.0;
    }
    out.ecdf_values = values;
    return out;
}

/// Plain Monte Carlo forward propagation: sample the input space,
/// evaluate the model once per sample, summarize the scalar output.
inline OutputStatistics propagate_mc(Model& model, const ParameterSpace& space, std::size_t n,
                                     RandomStream& rng, std::size_t histogram_bins = 20,
                                     RunLogger* logger = nullptr) {
    if (n < 2) throw Error("Monte Carlo propagation needs at least 2 samples");
    if (model.output_dimension() != 1)
        throw Error("Monte Carlo propagation needs a scalar model output");
    const DesignMatrix design = space.sample(n, rng);
    const BatchResult result = model.evaluate(design);
    const OutputStatistics stats = summarize_output(result, 0, histogram_bins);
    if (logger != nullptr && stats.failed_count > 0)
        logger->warning("forward propagation: " + std::to_string(stats.failed_count) + " of " +
                     std::to_string(n) + " evaluations failed; statistics use the rest");
    return stats;
}

/// Density of a scalar quantity on a uniform grid, as produced by the
/// multi-fidelity estimator.
struct DensityEstimate {
    std::vector<double> grid;
    std::vector<double> density;

    /// Trapezoid-rule integral of the density (should be close to 1).
    double integral() const {
        double acc = 0.0;
        for (std::size_t k = 1; k < grid.size(); ++k)
            acc += 0.5 * (density[k] + density[k - 1]) * (grid[k] - grid[k - 1]);
        return acc;
    }

    /// Trapezoid-rule mean of the estimated density.
    double mean() const {
        double acc = 0.0;
        for (std::size_t k = 1; k < grid.size(); ++k)
            acc += 0.5 * (grid[k] * density[k] + grid[k - 1] * density[k - 1]) *
                   (grid[k] - grid[k - 1]);
        return acc / integral();
    }
};

/// Options for the Bayesian multi-fidelity density estimate.
struct BMFMCOptions {
    std::size_t grid_size = 201;
    GPTrainOptions gp;
};

/// Bayesian multi-fidelity Monte Carlo density estimate: a 1-D GP maps
/// low-fidelity outputs to high-fidelity outputs from a few paired
/// evaluations; the high-fidelity density is then the GP predictive
/// mixture over the full low-fidelity sample.
///
/// The returned density integrates to 1 up to the mass outside the
/// mean +/- 4 sd grid span (well below 1e-3).
inline DensityEstimate bmfmc_estimate(const Eigen::VectorXd& lf_outputs,
                                      const Eigen::VectorXd& paired_lf,
                                      const Eigen::VectorXd& paired_hf,
                                      const BMFMCOptions& options = {},
                                      RunLogger* logger = nullptr) {
    if (lf_outputs.size() < 100)
        throw Error("multi-fidelity estimate needs at least 100 low-fidelity samples, got " +
                    std::to_string(lf_outputs.size()));
    if (paired_lf.size() != paired_hf.size())
        throw Error("paired low- and high-fidelity outputs differ in length");
    if (paired_hf.size() < 5)
        throw Error("insufficient high-fidelity data: need at least 5 pairs, got " +
                    std::to_string(paired_hf.size()));
    if (!lf_outputs.allFinite() || !paired_lf.allFinite() || !paired_hf.allFinite())
        throw Error("multi-fidelity inputs must be finite");
    if (options.grid_size < 2) throw Error("density grid needs at least 2 points");

    const double lf_min = lf_outputs.minCoeff();
    const double lf_max = lf_outputs.maxCoeff();
    if ((paired_lf.array() < lf_min).any() || (paired_lf.array() > lf_max).any()) {
        if (logger != nullptr)
            logger->warning("multi-fidelity pairs lie outside the low-fidelity sample range; "
                         "the regression extrapolates");
    }

    const GPModel gp = train_gp(paired_lf, paired_hf, nullptr, options.gp);
    const auto n = lf_outputs.size();
    const auto [m, v] = gp.predict(lf_outputs);
    Eigen::ArrayXd sd = (v.array() + gp.noise_variance()).sqrt();

    // Mixture kernels narrower than the grid spacing would alias under
    // the trapezoid rule, so their width is floored at one grid step
    // (the span is widened consistently before the floor is applied).
    const double cells = static_cast<double>(options.grid_size - 1);
    double step = ((m.array() + 4.0 * sd).maxCoeff() - (m.array() - 4.0 * sd).minCoeff()) / cells;
    sd = sd.max(step);
    const double lo = (m.array() - 4.0 * sd).minCoeff();
    const double hi = (m.array() + 4.0 * sd).maxCoeff();
    step = (hi - lo) / cells;
    sd = sd.max(step);

    DensityEstimate out;
    out.grid.resize(options.grid_size);
    out.density.assign(options.grid_size, 0.0);
    for (std::size_t g = 0; g < options.grid_size; ++g)
        out.grid[g] = lo + step * static_cast<double>(g);

    const double inv_sqrt_2pi = 0.3989422804014326779;
    for (std::size_t g = 0; g < options.grid_size; ++g) {
        const double y = out.grid[g];
        double acc = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double z = (y - m[j]) / sd[j];
            acc += std::exp(-0.5 * z * z) / sd[j];
        }
        out.density[g] = inv_sqrt_2pi * acc / static_cast<double>(n);
    }
    return out;
}

}  // namespace queens
