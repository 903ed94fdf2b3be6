/// Tests for the screening and variance-based sensitivity methods and
/// the forward-UQ statistics (Monte Carlo summary, multi-fidelity
/// density estimate).

#include <catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include <queens/model.hpp>
#include <queens/parameter_space.hpp>
#include <queens/sensitivity.hpp>
#include <queens/uq.hpp>

using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using namespace queens;

namespace {

ParameterSpace unit_cube(Eigen::Index d) {
    std::vector<std::pair<std::string, Distribution>> decl;
    for (Eigen::Index j = 0; j < d; ++j)
        decl.emplace_back("u" + std::to_string(j + 1), Distribution::uniform(0.0, 1.0));
    return ParameterSpace(decl);
}

FunctionModel scalar_model(Eigen::Index d, std::function<double(const Eigen::VectorXd&)> f) {
    return FunctionModel("scalar", d, 1, [f = std::move(f)](const Eigen::VectorXd& x) {
        Eigen::VectorXd y(1);
        y << f(x);
        return y;
    });
}

}  // namespace

// ---------------------------------------------------------------------------
// Morris screening
// ---------------------------------------------------------------------------

TEST_CASE("the step size follows the level count", "[sensitivity]") {
    RandomStream rng(7, 0);
    const MorrisDesign d = morris_design(unit_cube(2), 1, 4, rng);
    REQUIRE_THAT(d.delta, WithinAbs(2.0 / 3.0, 1e-15));
    REQUIRE_THROWS_MATCHES(morris_design(unit_cube(2), 1, 3, rng), Error,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("levels must be even")));
    REQUIRE_THROWS_AS(morris_design(unit_cube(2), 0, 4, rng), Error);
}

TEST_CASE("trajectories change one coordinate at a time", "[sensitivity]") {
    RandomStream rng(7, 0);
    const MorrisDesign d = morris_design(unit_cube(2), 10, 4, rng);
    REQUIRE(d.unit.rows() == 30);  // r * (d + 1)
    REQUIRE((d.unit.array() >= 0.0).all());
    REQUIRE((d.unit.array() <= 1.0).all());

    for (std::size_t t = 0; t < 10; ++t) {
        const std::size_t row0 = t * 3;
        REQUIRE(d.trajectory_of_row[row0] == t);
        REQUIRE(d.varied_dimension[row0] == -1);
        std::set<Eigen::Index> varied;
        for (std::size_t s = 1; s <= 2; ++s) {
            const auto row = static_cast<Eigen::Index>(row0 + s);
            int changed = 0;
            for (Eigen::Index j = 0; j < 2; ++j) {
                const double du = d.unit(row, j) - d.unit(row - 1, j);
                if (du != 0.0) {
                    ++changed;
                    REQUIRE_THAT(std::abs(du), WithinAbs(d.delta, 1e-12));
                    REQUIRE(j == d.varied_dimension[row]);
                }
            }
            REQUIRE(changed == 1);
            varied.insert(d.varied_dimension[row]);
        }
        REQUIRE(varied.size() == 2);  // every dimension moved exactly once
    }
}

TEST_CASE("a linear map yields exact screening indices", "[sensitivity]") {
    RandomStream rng(11, 0);
    const MorrisDesign d = morris_design(unit_cube(2), 10, 4, rng);
    const auto model = scalar_model(
        2, [](const Eigen::VectorXd& x) { return 3.0 * x[0] + 5.0 * x[1] + 7.0; });
    const MorrisIndices idx = morris_indices(d, model.evaluate(d.design));
    REQUIRE_THAT(idx.mu[0], WithinAbs(3.0, 1e-12));
    REQUIRE_THAT(idx.mu[1], WithinAbs(5.0, 1e-12));
    REQUIRE_THAT(idx.mu_star[0], WithinAbs(3.0, 1e-12));
    REQUIRE_THAT(idx.mu_star[1], WithinAbs(5.0, 1e-12));
    REQUIRE_THAT(idx.sigma[0], WithinAbs(0.0, 1e-12));
    REQUIRE_THAT(idx.sigma[1], WithinAbs(0.0, 1e-12));
    REQUIRE(idx.used_trajectories == 10);
    REQUIRE(idx.discarded_trajectories == 0);
}

TEST_CASE("an inert input screens to zero", "[sensitivity]") {
    RandomStream rng(13, 0);
    const MorrisDesign d = morris_design(unit_cube(2), 8, 4, rng);
    const auto model = scalar_model(2, [](const Eigen::VectorXd& x) { return 2.0 * x[0]; });
    const MorrisIndices idx = morris_indices(d, model.evaluate(d.design));
    REQUIRE_THAT(idx.mu_star[0], WithinAbs(2.0, 1e-12));
    REQUIRE_THAT(idx.mu_star[1], WithinAbs(0.0, 1e-12));
}

TEST_CASE("interactions show up in the effect spread", "[sensitivity]") {
    RandomStream rng(17, 0);
    const MorrisDesign d = morris_design(unit_cube(2), 20, 4, rng);
    const auto model = scalar_model(2, [](const Eigen::VectorXd& x) { return x[0] * x[1]; });
    const MorrisIndices idx = morris_indices(d, model.evaluate(d.design));
    REQUIRE(idx.sigma[0] > 0.05);
    REQUIRE(idx.sigma[1] > 0.05);
}

TEST_CASE("a failed row discards its whole trajectory", "[sensitivity]") {
    RandomStream rng(11, 0);
    const MorrisDesign d = morris_design(unit_cube(2), 10, 4, rng);
    const auto model = scalar_model(
        2, [](const Eigen::VectorXd& x) { return 3.0 * x[0] + 5.0 * x[1]; });
    BatchResult r = model.evaluate(d.design);
    r.statuses[4] = EvalStatus::failed;  // second trajectory, middle row
    const MorrisIndices idx = morris_indices(d, r);
    REQUIRE(idx.used_trajectories == 9);
    REQUIRE(idx.discarded_trajectories == 1);
    // The linear indices stay exact on the surviving trajectories.
    REQUIRE_THAT(idx.mu_star[0], WithinAbs(3.0, 1e-12));
    REQUIRE_THAT(idx.mu_star[1], WithinAbs(5.0, 1e-12));

    for (auto& s : r.statuses) s = EvalStatus::failed;
    REQUIRE_THROWS_MATCHES(morris_indices(d, r), Error,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("all trajectories discarded")));
}

// ---------------------------------------------------------------------------
// Variance-based indices
// ---------------------------------------------------------------------------

TEST_CASE("the pick-freeze design has the declared block structure", "[sensitivity]") {
    const auto space = unit_cube(3);
    const SaltelliDesign d = saltelli_design(space, 1024);
    REQUIRE(d.design.values.rows() == 1024 * 5);  // N (d + 2)
    REQUIRE(d.dimension == 3);

    for (std::size_t k : {std::size_t{0}, std::size_t{17}, std::size_t{1023}}) {
        for (Eigen::Index i = 0; i < 3; ++i) {
            const Eigen::VectorXd a = d.design.values.row(d.row_a(k));
            const Eigen::VectorXd b = d.design.values.row(d.row_b(k));
            const Eigen::VectorXd ab = d.design.values.row(d.row_ab(i, k));
            for (Eigen::Index j = 0; j < 3; ++j) {
                if (j == i) REQUIRE(ab[j] == b[j]);
                else REQUIRE(ab[j] == a[j]);
            }
        }
    }
    // Deterministic for a fixed skip; shifted for another.
    REQUIRE(saltelli_design(space, 1024).design.values == d.design.values);
    REQUIRE(saltelli_design(space, 1024, 9).design.values != d.design.values);
}

TEST_CASE("an additive map splits the variance evenly", "[sensitivity]") {
    const auto space = unit_cube(2);
    const SaltelliDesign d = saltelli_design(space, 2048);
    const auto model = scalar_model(2, [](const Eigen::VectorXd& x) { return x[0] + x[1]; });
    const SobolIndices s = sobol_indices(d, model.evaluate(d.design));
    REQUIRE_THAT(s.first_order[0], WithinAbs(0.5, 0.05));
    REQUIRE_THAT(s.first_order[1], WithinAbs(0.5, 0.05));
    REQUIRE_THAT(s.total_effect[0], WithinAbs(0.5, 0.05));
    REQUIRE_THAT(s.total_effect[1], WithinAbs(0.5, 0.05));
    REQUIRE_THAT(s.output_variance, WithinAbs(2.0 / 12.0, 0.01));
}

TEST_CASE("an inert input has vanishing indices", "[sensitivity]") {
    const auto space = unit_cube(2);
    const SaltelliDesign d = saltelli_design(space, 2048);
    const auto model = scalar_model(2, [](const Eigen::VectorXd& x) { return x[0]; });
    const SobolIndices s = sobol_indices(d, model.evaluate(d.design));
    REQUIRE(s.first_order[0] >= 0.95);
    REQUIRE(s.total_effect[0] >= 0.95);
    REQUIRE(std::abs(s.first_order[1]) <= 0.05);
    REQUIRE(s.total_effect[1] <= 0.05);
}

TEST_CASE("the classic three-input benchmark matches its analytic indices", "[sensitivity]") {
    // f = sin(x1) + a sin^2(x2) + b x3^4 sin(x1) on [-pi, pi]^3.
    const double a = 7.0;
    const double b = 0.1;
    const double pi4 = std::pow(M_PI, 4);
    const double pi8 = pi4 * pi4;
    const double V1 = 0.5 * std::pow(1.0 + b * pi4 / 5.0, 2);
    const double V2 = a * a / 8.0;
    const double V13 = 8.0 * b * b * pi8 / 225.0;
    const double V = V1 + V2 + V13;

    std::vector<std::pair<std::string, Distribution>> decl;
    for (int j = 1; j <= 3; ++j)
        decl.emplace_back("x" + std::to_string(j), Distribution::uniform(-M_PI, M_PI));
    const ParameterSpace space(decl);
    const SaltelliDesign d = saltelli_design(space, 8192);
    const auto model = make_builtin_model("ishigami", 3);
    const SobolIndices s = sobol_indices(d, model->evaluate(d.design));

    REQUIRE_THAT(s.first_order[0], WithinAbs(V1 / V, 0.05));
    REQUIRE_THAT(s.first_order[1], WithinAbs(V2 / V, 0.05));
    REQUIRE_THAT(s.first_order[2], WithinAbs(0.0, 0.05));
    REQUIRE_THAT(s.total_effect[0], WithinAbs((V1 + V13) / V, 0.05));
    REQUIRE_THAT(s.total_effect[1], WithinAbs(V2 / V, 0.05));
    REQUIRE_THAT(s.total_effect[2], WithinAbs(V13 / V, 0.05));
}

TEST_CASE("degenerate outputs are rejected by the estimators", "[sensitivity]") {
    const auto space = unit_cube(2);
    const SaltelliDesign d = saltelli_design(space, 64);

    const auto constant = scalar_model(2, [](const Eigen::VectorXd&) { return 4.2; });
    REQUIRE_THROWS_MATCHES(sobol_indices(d, constant.evaluate(d.design)), Error,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("zero output variance")));

    const auto model = scalar_model(2, [](const Eigen::VectorXd& x) { return x[0]; });
    BatchResult r = model.evaluate(d.design);
    r.statuses[10] = EvalStatus::failed;
    REQUIRE_THROWS_MATCHES(sobol_indices(d, r), Error,
                           Catch::Matchers::MessageMatches(ContainsSubstring("failed rows")));

    BatchResult misaligned = model.evaluate(d.design.values.topRows(10));
    REQUIRE_THROWS_MATCHES(sobol_indices(d, misaligned), Error,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("not row-aligned")));
}

// ---------------------------------------------------------------------------
// Output statistics
// ---------------------------------------------------------------------------

namespace {

BatchResult result_from_values(const std::vector<double>& values) {
    BatchResult r;
    r.outputs.resize(static_cast<Eigen::Index>(values.size()), 1);
    for (std::size_t i = 0; i < values.size(); ++i)
        r.outputs(static_cast<Eigen::Index>(i), 0) = values[i];
    r.statuses.assign(values.size(), EvalStatus::completed);
    r.diagnostics.assign(values.size(), "");
    return r;
}

}  // namespace

TEST_CASE("summary statistics match the linear-interpolation quantiles", "[uq]") {
    const BatchResult r = result_from_values({10, 9, 8, 7, 6, 5, 4, 3, 2, 1});
    const OutputStatistics s = summarize_output(r);
    REQUIRE(s.sample_count == 10);
    REQUIRE(s.failed_count == 0);
    REQUIRE_THAT(s.mean, WithinAbs(5.5, 1e-12));
    REQUIRE_THAT(s.variance, WithinAbs(55.0 / 6.0, 1e-12));
    const std::vector<double> expected = {1.45, 3.25, 5.5, 7.75, 9.55};
    REQUIRE(s.quantiles.size() == 5);
    for (std::size_t i = 0; i < 5; ++i)
        REQUIRE_THAT(s.quantiles[i], WithinAbs(expected[i], 1e-12));
    REQUIRE(std::is_sorted(s.ecdf_values.begin(), s.ecdf_values.end()));
    double total = 0.0;
    for (double c : s.histogram_counts) total += c;
    REQUIRE_THAT(total, WithinAbs(10.0, 1e-15));
    REQUIRE(s.histogram_edges.size() == s.histogram_counts.size() + 1);
}

TEST_CASE("constant outputs produce zero spread", "[uq]") {
    const BatchResult r = result_from_values({4.2, 4.2, 4.2, 4.2});
    const OutputStatistics s = summarize_output(r);
    REQUIRE_THAT(s.mean, WithinAbs(4.2, 1e-15));
    REQUIRE(s.variance == 0.0);
    REQUIRE(s.standard_deviation == 0.0);
    for (double q : s.quantiles) REQUIRE_THAT(q, WithinAbs(4.2, 1e-15));
    REQUIRE_THAT(s.histogram_counts[0], WithinAbs(4.0, 1e-15));
}

TEST_CASE("failed rows are excluded and counted", "[uq]") {
    BatchResult r = result_from_values(std::vector<double>(100, 0.0));
    for (int i = 0; i < 100; ++i) r.outputs(i, 0) = i;
    for (std::size_t i = 0; i < 10; ++i) {
        r.statuses[i * 10] = EvalStatus::failed;
        r.outputs(static_cast<Eigen::Index>(i * 10), 0) =
            std::numeric_limits<double>::quiet_NaN();
    }
    const OutputStatistics s = summarize_output(r);
    REQUIRE(s.sample_count == 90);
    REQUIRE(s.failed_count == 10);
    REQUIRE(std::isfinite(s.mean));
    REQUIRE(std::isfinite(s.variance));
}

TEST_CASE("statistics require enough completed evaluations", "[uq]") {
    BatchResult r = result_from_values({1.0, 2.0, 3.0});
    for (auto& s : r.statuses) s = EvalStatus::failed;
    REQUIRE_THROWS_MATCHES(summarize_output(r), Error,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("every evaluation failed")));
    r.statuses[0] = EvalStatus::completed;
    REQUIRE_THROWS_MATCHES(summarize_output(r), Error,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("at least 2 completed")));
}

TEST_CASE("forward propagation recovers the moments of a sum", "[uq]") {
    ParameterSpace space({{"a", Distribution::uniform(0.0, 1.0)},
                          {"b", Distribution::uniform(0.0, 2.0)}});
    auto model = scalar_model(2, [](const Eigen::VectorXd& x) { return x[0] + x[1]; });
    RandomStream rng(31337, 0);
    const OutputStatistics s = propagate_mc(model, space, 10000, rng);
    REQUIRE(s.sample_count == 10000);
    REQUIRE_THAT(s.mean, WithinAbs(1.5, 0.02));
    REQUIRE_THAT(s.variance, WithinAbs(5.0 / 12.0, 0.02));

    RandomStream rng2(31337, 0);
    REQUIRE_THROWS_AS(propagate_mc(model, space, 1, rng2), Error);
    auto vector_model = FunctionModel("pair", 2, 2,
                                      [](const Eigen::VectorXd& x) { return x; });
    REQUIRE_THROWS_AS(propagate_mc(vector_model, space, 100, rng2), Error);
}

// ---------------------------------------------------------------------------
// Multi-fidelity density estimate
// ---------------------------------------------------------------------------

namespace {

/// Deterministic standard-normal sample via the quantile function.
Eigen::VectorXd normal_sample(Eigen::Index n, std::uint64_t seed) {
    RandomStream rng(seed, 0);
    const auto dist = Distribution::normal(0.0, 1.0);
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z[i] = dist.sample(rng);
    return z;
}

/// Supremum distance between the density's CDF (trapezoid-integrated)
/// and a reference CDF evaluated on the grid.
double sup_cdf_distance(const DensityEstimate& est,
                        const std::function<double(double)>& ref_cdf) {
    double acc = 0.0;
    double sup = std::abs(0.0 - ref_cdf(est.grid.front()));
    for (std::size_t k = 1; k < est.grid.size(); ++k) {
        acc += 0.5 * (est.density[k] + est.density[k - 1]) * (est.grid[k] - est.grid[k - 1]);
        sup = std::max(sup, std::abs(acc - ref_cdf(est.grid[k])));
    }
    return sup;
}

Eigen::VectorXd linspace(double lo, double hi, Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

GPTrainOptions light_training() {
    GPTrainOptions gp;
    gp.restarts = 2;
    gp.steps = 120;
    gp.seed = 5;
    return gp;
}

}  // namespace

TEST_CASE("an affine fidelity map is corrected exactly", "[uq]") {
    // High fidelity = 2 * low fidelity + 1, so the corrected density must
    // be N(1, 4) when the low-fidelity outputs are standard normal.
    const Eigen::VectorXd z = normal_sample(1000, 99);
    const Eigen::VectorXd plf = linspace(-2.0, 2.0, 15);
    const Eigen::VectorXd phf = 2.0 * plf + Eigen::VectorXd::Ones(15);

    BMFMCOptions options;
    options.gp = light_training();
    const DensityEstimate est = bmfmc_estimate(z, plf, phf, options);

    REQUIRE_THAT(est.integral(), WithinAbs(1.0, 1e-3));
    REQUIRE_THAT(est.mean(), WithinAbs(2.0 * z.mean() + 1.0, 0.05));

    // Standard deviation through the second moment of the density.
    double m2 = 0.0;
    for (std::size_t k = 1; k < est.grid.size(); ++k) {
        const double a = est.grid[k - 1];
        const double b = est.grid[k];
        m2 += 0.5 * (a * a * est.density[k - 1] + b * b * est.density[k]) * (b - a);
    }
    const double sd = std::sqrt(m2 - est.mean() * est.mean());
    REQUIRE_THAT(sd, WithinAbs(2.0, 0.25));
}

TEST_CASE("the identity fidelity map reproduces the sample distribution", "[uq]") {
    const Eigen::VectorXd z = normal_sample(1000, 321);
    const Eigen::VectorXd plf = linspace(-2.5, 2.5, 15);

    BMFMCOptions options;
    options.gp = light_training();
    const DensityEstimate est = bmfmc_estimate(z, plf, plf, options);
    const auto normal = Distribution::normal(0.0, 1.0);
    REQUIRE(sup_cdf_distance(est, [&](double y) { return normal.cdf(y); }) < 0.05);
}

TEST_CASE("shifting the high-fidelity outputs shifts the density", "[uq]") {
    const Eigen::VectorXd z = normal_sample(600, 1234);
    const Eigen::VectorXd plf = linspace(-2.0, 2.0, 12);
    const Eigen::VectorXd shifted = plf + 0.5 * Eigen::VectorXd::Ones(12);

    BMFMCOptions options;
    options.gp = light_training();
    const DensityEstimate base = bmfmc_estimate(z, plf, plf, options);
    const DensityEstimate moved = bmfmc_estimate(z, plf, shifted, options);

    REQUIRE(base.grid.size() == moved.grid.size());
    double sup = 0.0;
    for (std::size_t k = 0; k < base.grid.size(); ++k) {
        sup = std::max(sup, std::abs(moved.grid[k] - (base.grid[k] + 0.5)));
        sup = std::max(sup, std::abs(moved.density[k] - base.density[k]));
    }
    REQUIRE(sup < 0.01);
    REQUIRE_THAT(moved.mean() - base.mean(), WithinAbs(0.5, 0.01));
}

TEST_CASE("the multi-fidelity estimator validates its inputs", "[uq]") {
    const Eigen::VectorXd z = normal_sample(1000, 5);
    const Eigen::VectorXd plf = linspace(-2.0, 2.0, 3);

    REQUIRE_THROWS_MATCHES(bmfmc_estimate(normal_sample(50, 5), plf, plf), Error,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("at least 100 low-fidelity samples")));
    REQUIRE_THROWS_MATCHES(bmfmc_estimate(z, plf, plf), Error,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("insufficient high-fidelity data")));
    REQUIRE_THROWS_MATCHES(bmfmc_estimate(z, linspace(-2, 2, 6), linspace(-2, 2, 5)), Error,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("differ in length")));
    Eigen::VectorXd bad = z;
    bad[0] = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_MATCHES(
        bmfmc_estimate(bad, linspace(-2, 2, 6), linspace(-2, 2, 6)), Error,
        Catch::Matchers::MessageMatches(ContainsSubstring("must be finite")));
}
