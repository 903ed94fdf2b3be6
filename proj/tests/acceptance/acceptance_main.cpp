/// Acceptance suite. Each criterion is selected by name on the command
/// line, prints exactly one [PASS]/[FAIL] line, and is held to its
/// wall-time budget in-process. Run with "list" to see the names or
/// "all" to run every criterion in sequence.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <queens/queens.hpp>

namespace fs = std::filesystem;
using namespace queens;

namespace {

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool condition, const std::string& reason) {
    if (!condition) throw Failure(reason);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

fs::path fresh_dir(const std::string& tag) {
    static int counter = 0;
    const fs::path dir = fs::temp_directory_path() /
                         ("queens_accept_" + tag + "_" + std::to_string(::getpid()) + "_" +
                          std::to_string(counter++));
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
    require(out.good(), "cannot write " + p.string());
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    require(in.good(), "cannot read " + p.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void cleanup(const fs::path& p) {
    std::error_code ec;
    fs::remove_all(p, ec);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / static_cast<double>(n - 1);
    return v;
}

const std::string ab_template = "a = {{ a }}\nb = {{ b }}\n";

// ---------------------------------------------------------------------------
// 1. Grid study against the external mock solver with a failing corner.
// ---------------------------------------------------------------------------

void criterion_grid_study_driver() {
    ::unsetenv("QUEENS_WORKSPACE");
    const fs::path base = fresh_dir("grid");
    write_text(base / "input.tmpl", ab_template);
    const std::string config = R"({
      "global_settings": {"run_name": "grid100", "output_directory": "out", "seed": 1},
      "scheduler": {"max_concurrent": 4, "workspace_root": "ws"},
      "parameters": {
        "a": {"distribution": "uniform", "lower": 0, "upper": 1},
        "b": {"distribution": "uniform", "lower": 0, "upper": 1}
      },
      "solver": {"type": "driver", "executable": ")" MOCK_SOLVER_PATH R"(",
                 "input_template": "input.tmpl",
                 "extra_args": ["--fail-if", "a>0.75", "--fail-if", "b>0.75"]},
      "method": {"name": "grid_study", "model": "solver", "points_per_axis": 10}
    })";
    const RunOutcome outcome = run(build_plan(parse_config(config, base)));
    const ordered_json& doc = outcome.results;

    const auto rows = doc.at("samples").at("values").size();
    require(rows == 100, "expected exactly 100 result rows, got " + std::to_string(rows));
    require(doc.at("statuses").size() == 100, "statuses are not row-aligned");

    std::size_t failed = 0;
    for (std::size_t i = 0; i < 100; ++i) {
        const double a = number_from_json(doc.at("samples").at("values")[i][0]);
        const double b = number_from_json(doc.at("samples").at("values")[i][1]);
        const std::string status = doc.at("statuses")[i].get<std::string>();
        const ordered_json& out = doc.at("outputs").at("values")[i][0];
        if (a > 0.75 && b > 0.75) {
            ++failed;
            require(status == "failed", "cell (" + fmt(a) + ", " + fmt(b) +
                                            ") should have failed, status is " + status);
            require(out.is_string() && out == "NaN",
                    "failed cell (" + fmt(a) + ", " + fmt(b) + ") lacks the NaN sentinel");
        } else {
            require(status == "completed", "cell (" + fmt(a) + ", " + fmt(b) +
                                               ") should have completed, status is " + status);
            const double y = number_from_json(out);
            require(y == a + b, "cell (" + fmt(a) + ", " + fmt(b) + "): output " + fmt(y) +
                                    " is not exactly a + b");
        }
    }
    require(failed == 9, "expected 9 failed corner cells, got " + std::to_string(failed));
    require(doc.at("method_results").at("failed") == 9, "method results disagree on failures");
    cleanup(base);
}

// ---------------------------------------------------------------------------
// 2. Calibration: driver -> Gaussian likelihood -> GP surrogate -> SMC,
//    with posterior coverage of the known truth over 20 repetitions.
// ---------------------------------------------------------------------------

void criterion_calibration_coverage() {
    ::unsetenv("QUEENS_WORKSPACE");
    const fs::path base = fresh_dir("cal");
    write_text(base / "poly.tmpl", "x1 = {{ x1 }}\nx2 = {{ x2 }}\n");

    // Forward map at probe coordinates c: y(c) = x1 c + x2 c^2.
    const double truth1 = 0.4;
    const double truth2 = 0.7;
    const std::vector<double> coords = {-1.0, 0.5, 1.0};
    const double sigma = 0.1;

    int hits = 0;
    for (int rep = 0; rep < 20; ++rep) {
        RandomStream noise_rng(9000 + static_cast<std::uint64_t>(rep), 0);
        std::ostringstream obs;
        obs << "coord_c,value\n";
        for (const double c : coords) {
            const double y =
                truth1 * c + truth2 * c * c + sigma * detail::standard_normal(noise_rng);
            char row[80];
            std::snprintf(row, sizeof row, "%.17g,%.17g\n", c, y);
            obs << row;
        }
        const std::string obs_name = "obs_" + std::to_string(rep) + ".csv";
        write_text(base / obs_name, obs.str());

        const std::string out_name = "out_" + std::to_string(rep);
        const std::string ws_name = "ws_" + std::to_string(rep);
        const std::string config = R"({
          "global_settings": {"run_name": "cal", "output_directory": ")" +
                                   out_name + R"(", "seed": )" + std::to_string(1000 + rep) +
                                   R"(},
          "scheduler": {"max_concurrent": 4, "workspace_root": ")" + ws_name + R"("},
          "parameters": {
            "x1": {"distribution": "uniform", "lower": 0, "upper": 1},
            "x2": {"distribution": "uniform", "lower": 0, "upper": 1}
          },
          "solver": {"type": "driver", "executable": ")" MOCK_SOLVER_PATH R"(",
                     "input_template": "poly.tmpl",
                     "extractor": "csv_vector_row", "output_dimension": 3,
                     "extra_args": ["--op", "polyprobe", "--coords", "-1,0.5,1"]},
          "loglike": {"type": "likelihood", "forward_model": "solver",
                      "observations": ")" + obs_name + R"(", "noise_variance": 0.01},
          "post": {"type": "surrogate", "target_model": "loglike",
                   "training": {"samples": 500, "design": "sobol", "restarts": 1,
                                "steps": 40, "validation_samples": 0}},
          "method": {"name": "smc", "model": "post"}
        })";
        const RunOutcome outcome = run(build_plan(parse_config(config, base)));
        const auto& mr = outcome.results.at("method_results");
        const double m1 = number_from_json(mr.at("mean")[0]);
        const double m2 = number_from_json(mr.at("mean")[1]);
        const double v1 = number_from_json(mr.at("variance")[0]);
        const double v2 = number_from_json(mr.at("variance")[1]);
        require(v1 > 0.0 && v2 > 0.0, "repetition " + std::to_string(rep) +
                                          ": posterior variance is not positive");
        const bool hit = std::abs(m1 - truth1) <= 3.0 * std::sqrt(v1) &&
                         std::abs(m2 - truth2) <= 3.0 * std::sqrt(v2);
        if (hit) ++hits;
        cleanup(base / out_name);
        cleanup(base / ws_name);
        cleanup(base / obs_name);
    }
    require(hits >= 16, "posterior covered the truth in only " + std::to_string(hits) +
                            " of 20 repetitions (need >= 16)");
    cleanup(base);
}

// ---------------------------------------------------------------------------
// 3. Conjugate-Gaussian sequential Monte Carlo.
// ---------------------------------------------------------------------------

void criterion_smc_conjugate() {
    ParameterSpace prior({{"x", Distribution::normal(0.0, 1.0)}});
    const BatchLogLikeFn loglike = [](const Eigen::MatrixXd& rows) {
        Eigen::VectorXd ll(rows.rows());
        for (Eigen::Index k = 0; k < rows.rows(); ++k) {
            const double r = rows(k, 0) - 1.0;
            ll[k] = -0.5 * std::log(2.0 * M_PI) - 0.5 * r * r;
        }
        return ll;
    };
    SMCOptions options;
    options.particle_count = 2000;
    RandomStream rng(123, 0);
    const SMCResult result = smc_run(prior, loglike, options, rng);

    const double mean_err = std::abs(result.mean()[0] - 0.5);
    const double var_err = std::abs(result.variance()[0] - 0.5);
    const double logz = -0.5 * std::log(4.0 * M_PI) - 0.25;
    const double logz_err = std::abs(result.log_evidence - logz);
    require(mean_err <= 0.05,
            "posterior mean error " + fmt(mean_err) + " exceeds 0.05 (target N(0.5, 0.5))");
    require(var_err <= 0.1,
            "posterior variance error " + fmt(var_err) + " exceeds 0.1 (target N(0.5, 0.5))");
    require(logz_err <= 0.1, "log-evidence " + fmt(result.log_evidence) + " is " +
                                 fmt(logz_err) + " from the analytic value " + fmt(logz));
}

// ---------------------------------------------------------------------------
// 4. Random-walk Metropolis-Hastings on a standard normal.
// ---------------------------------------------------------------------------

void criterion_mh_standard_normal() {
    const LogDensityFn target = [](const Eigen::VectorXd& x) { return -0.5 * x.squaredNorm(); };
    Eigen::VectorXd x0(1), scale(1);
    x0 << 0.0;
    scale << 2.4;
    RandomStream rng(2024, 0);
    const Chain chain = metropolis_hastings(target, x0, 100000, scale, rng);

    const double mean = chain.states.col(0).mean();
    const double var = (chain.states.col(0).array() - mean).square().sum() /
                       static_cast<double>(chain.states.rows() - 1);
    require(std::abs(mean) < 0.05, "chain mean " + fmt(mean) + " not within 0.05 of 0");
    require(var >= 0.9 && var <= 1.1, "chain variance " + fmt(var) + " outside [0.9, 1.1]");
}

// ---------------------------------------------------------------------------
// 5. Variance-based indices on the Ishigami function.
// ---------------------------------------------------------------------------

void criterion_sobol_ishigami() {
    ParameterSpace space({{"u1", Distribution::uniform(-M_PI, M_PI)},
                          {"u2", Distribution::uniform(-M_PI, M_PI)},
                          {"u3", Distribution::uniform(-M_PI, M_PI)}});
    const auto model = make_builtin_model("ishigami", 3);
    const SaltelliDesign design = saltelli_design(space, 8192);
    const SobolIndices indices = sobol_indices(design, model->evaluate(design.design));

    const double a = 7.0, b = 0.1;
    const double pi4 = std::pow(M_PI, 4), pi8 = std::pow(M_PI, 8);
    const double V1 = 0.5 * std::pow(1.0 + b * pi4 / 5.0, 2);
    const double V2 = a * a / 8.0;
    const double V13 = 8.0 * b * b * pi8 / 225.0;
    const double V = V1 + V2 + V13;
    const double S[3] = {V1 / V, V2 / V, 0.0};
    const double ST[3] = {(V1 + V13) / V, V2 / V, V13 / V};

    for (int i = 0; i < 3; ++i) {
        const double s_err = std::abs(indices.first_order[i] - S[i]);
        const double st_err = std::abs(indices.total_effect[i] - ST[i]);
        require(s_err <= 0.05, "S" + std::to_string(i + 1) + " = " +
                                   fmt(indices.first_order[i]) + " is " + fmt(s_err) +
                                   " from the analytic " + fmt(S[i]));
        require(st_err <= 0.05, "ST" + std::to_string(i + 1) + " = " +
                                    fmt(indices.total_effect[i]) + " is " + fmt(st_err) +
                                    " from the analytic " + fmt(ST[i]));
    }
}

// ---------------------------------------------------------------------------
// 6. Morris screening: exact elementary effects and coefficient ranking.
// ---------------------------------------------------------------------------

void criterion_morris_linear() {
    // Exactness on one linear map.
    ParameterSpace cube({{"u1", Distribution::uniform(0.0, 1.0)},
                         {"u2", Distribution::uniform(0.0, 1.0)},
                         {"u3", Distribution::uniform(0.0, 1.0)}});
    const FunctionModel linear("linear", 3, 1, [](const Eigen::VectorXd& x) {
        return Eigen::VectorXd::Constant(1, 3.0 * x[0] + 5.0 * x[1] + 1.5 * x[2] + 7.0);
    });
    RandomStream rng(42, 0);
    const MorrisDesign design = morris_design(cube, 10, 4, rng);
    const MorrisIndices indices = morris_indices(design, linear.evaluate(design.design));
    const double expected[3] = {3.0, 5.0, 1.5};
    for (int j = 0; j < 3; ++j) {
        require(std::abs(indices.mu_star[j] - expected[j]) <= 1e-12,
                "mu* for coefficient " + fmt(expected[j]) + " is " + fmt(indices.mu_star[j]) +
                    ", not exact to 1e-12");
        require(std::abs(indices.sigma[j]) <= 1e-9,
                "sigma should vanish on a linear map, got " + fmt(indices.sigma[j]));
    }

    // Ranking property over 20 random linear maps in 5 dimensions.
    ParameterSpace cube5({{"u1", Distribution::uniform(0.0, 1.0)},
                          {"u2", Distribution::uniform(0.0, 1.0)},
                          {"u3", Distribution::uniform(0.0, 1.0)},
                          {"u4", Distribution::uniform(0.0, 1.0)},
                          {"u5", Distribution::uniform(0.0, 1.0)}});
    RandomStream coef_rng(777, 1);
    for (int map = 0; map < 20; ++map) {
        Eigen::VectorXd c(5);
        for (bool ok = false; !ok;) {
            for (int j = 0; j < 5; ++j) c[j] = (coef_rng.uniform01() - 0.5) * 10.0;
            ok = true;  // keep |c| well separated so the ranking is unambiguous
            for (int i = 0; i < 5 && ok; ++i)
                for (int j = i + 1; j < 5; ++j)
                    if (std::abs(std::abs(c[i]) - std::abs(c[j])) < 1e-3) ok = false;
        }
        const FunctionModel f("map", 5, 1, [c](const Eigen::VectorXd& x) {
            return Eigen::VectorXd::Constant(1, c.dot(x));
        });
        RandomStream traj_rng(888, static_cast<std::uint64_t>(map));
        const MorrisDesign d5 = morris_design(cube5, 6, 4, traj_rng);
        const MorrisIndices ind = morris_indices(d5, f.evaluate(d5.design));

        std::vector<int> by_mu_star = {0, 1, 2, 3, 4};
        std::vector<int> by_coef = {0, 1, 2, 3, 4};
        std::sort(by_mu_star.begin(), by_mu_star.end(),
                  [&](int i, int j) { return ind.mu_star[i] > ind.mu_star[j]; });
        std::sort(by_coef.begin(), by_coef.end(),
                  [&](int i, int j) { return std::abs(c[i]) > std::abs(c[j]); });
        require(by_mu_star == by_coef,
                "mu* ranking disagrees with the coefficient magnitudes on random map " +
                    std::to_string(map));
    }
}

// ---------------------------------------------------------------------------
// 7. GP regression: interpolation and marginal-likelihood gradients.
// ---------------------------------------------------------------------------

void criterion_gp_quality() {
    // Noise-free interpolation.
    Eigen::MatrixXd X(6, 1);
    Eigen::VectorXd y(6);
    for (int i = 0; i < 6; ++i) {
        X(i, 0) = 0.4 * i;
        y[i] = std::sin(X(i, 0));
    }
    GPHyperparameters hyper;
    hyper.signal_variance = 1.0;
    hyper.lengthscales = Eigen::VectorXd::Constant(1, 0.7);
    hyper.noise_variance = 1e-10;
    const GPModel gp(X, y, hyper);
    const auto [mean, var] = gp.predict(X);
    const double interp_err = (mean - y).cwiseAbs().maxCoeff();
    require(interp_err <= 1e-6,
            "interpolation error at training points is " + fmt(interp_err) + " (> 1e-6)");
    require(var.minCoeff() >= -1e-12, "predictive variance went negative");

    // Analytic gradient vs central finite differences at 20 random
    // hyperparameter settings (log-space; order sf2, ell..., sn2).
    Eigen::MatrixXd Xg(10, 2);
    Eigen::VectorXd yg(10);
    RandomStream data_rng(4242, 0);
    for (int i = 0; i < 10; ++i) {
        Xg(i, 0) = data_rng.uniform01();
        Xg(i, 1) = data_rng.uniform01();
        yg[i] = std::sin(2.0 * Xg(i, 0)) + 0.5 * std::cos(3.0 * Xg(i, 1)) + 0.1 * Xg(i, 1);
    }
    RandomStream hyper_rng(777, 2);
    const double h = 1e-5;
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd logp(4);
        logp[0] = hyper_rng.uniform01() * 2.0 - 1.0;         // log sf2
        logp[1] = hyper_rng.uniform01() * 2.0 - 1.2;         // log ell1
        logp[2] = hyper_rng.uniform01() * 2.0 - 1.2;         // log ell2
        logp[3] = hyper_rng.uniform01() * 4.0 - 6.0;         // log sn2
        const auto make = [](const Eigen::VectorXd& lp) {
            GPHyperparameters hp;
            hp.signal_variance = std::exp(lp[0]);
            hp.lengthscales = Eigen::Vector2d(std::exp(lp[1]), std::exp(lp[2]));
            hp.noise_variance = std::exp(lp[3]);
            return hp;
        };
        const LMLResult lml = log_marginal_likelihood(Xg, yg, make(logp));
        for (int k = 0; k < 4; ++k) {
            Eigen::VectorXd up = logp, down = logp;
            up[k] += h;
            down[k] -= h;
            const double fd = (log_marginal_likelihood(Xg, yg, make(up)).value -
                               log_marginal_likelihood(Xg, yg, make(down)).value) /
                              (2.0 * h);
            const double scale = std::max({1.0, std::abs(fd), std::abs(lml.gradient[k])});
            const double rel = std::abs(lml.gradient[k] - fd) / scale;
            require(rel <= 1e-4, "gradient component " + std::to_string(k) + " at setting " +
                                     std::to_string(trial) + ": relative error " + fmt(rel) +
                                     " (analytic " + fmt(lml.gradient[k]) + ", differences " +
                                     fmt(fd) + ")");
        }
    }
}

// ---------------------------------------------------------------------------
// 8. Levenberg-Marquardt: exact linear solve and Rosenbrock.
// ---------------------------------------------------------------------------

void criterion_lm_convergence() {
    Eigen::MatrixXd A(3, 2);
    A << 1.0, 0.1, 0.2, 0.9, 0.1, 0.2;
    Eigen::VectorXd b(3);
    b << 0.3, 0.5, 0.12;
    const FunctionModel residuals("linear_residuals", 2, 3, [A, b](const Eigen::VectorXd& x) {
        return Eigen::VectorXd(A * x - b);
    });
    const Eigen::VectorXd solution = (A.transpose() * A).ldlt().solve(A.transpose() * b);

    const OptimResult linear = levenberg_marquardt(residuals, Eigen::Vector2d(0.0, 0.0));
    const double linear_err = (linear.x - solution).cwiseAbs().maxCoeff();
    require(linear.iterations <= 2, "linear least squares took " +
                                        std::to_string(linear.iterations) +
                                        " iterations (> 2)");
    require(linear_err <= 1e-8,
            "linear least squares error " + fmt(linear_err) + " exceeds 1e-8");

    const auto rosenbrock = make_builtin_model("rosenbrock_residuals", 2);
    const OptimResult curved = levenberg_marquardt(*rosenbrock, Eigen::Vector2d(-1.2, 1.0));
    const double curved_err = (curved.x - Eigen::Vector2d(1.0, 1.0)).cwiseAbs().maxCoeff();
    require(curved_err <= 1e-6, "Rosenbrock minimum missed by " + fmt(curved_err) +
                                    " (> 1e-6) after " + std::to_string(curved.iterations) +
                                    " iterations");
}

// ---------------------------------------------------------------------------
// 9. Stochastic optimizers: hand-computed single steps, then the sphere
//    invariant (defaults, |x0| = 1, < 1e-2 within 10^4 iterations).
// ---------------------------------------------------------------------------

void criterion_stochastic_steps() {
    Eigen::VectorXd g(2);
    g << -3.0, 2.0;
    const ObjectiveFn constant_gradient = [g](const Eigen::VectorXd& x) {
        return std::make_pair(g.dot(x), g);
    };
    const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(2);
    StochasticOptimizerConfig cfg;
    cfg.max_iter = 1;
    const double alpha = cfg.step_size, eps = cfg.epsilon, beta1 = cfg.beta1, rho = cfg.rho;

    const auto single_step = [&](StochasticOptimizerConfig::Kind kind) {
        StochasticOptimizerConfig c = cfg;
        c.kind = kind;
        return stochastic_minimize(constant_gradient, x0, c);
    };
    const auto check_step = [&](const char* name, const OptimResult& r,
                                const Eigen::VectorXd& expected) {
        require(r.iterations == 1, std::string(name) + " did not take exactly one step");
        const double err = (r.x - expected).cwiseAbs().maxCoeff();
        require(err <= 1e-12, std::string(name) + " single step off by " + fmt(err) +
                                  " from the hand formula (> 1e-12)");
    };

    Eigen::VectorXd adam_expected(2), adamax_expected(2), rmsprop_expected(2);
    for (int i = 0; i < 2; ++i) {
        // Bias-corrected first step: mhat = g, sqrt(vhat) = |g|.
        adam_expected[i] = x0[i] - alpha * g[i] / (std::abs(g[i]) + eps);
        // Infinity-norm moment: u = |g|, so the step is alpha * sign(g).
        adamax_expected[i] = x0[i] - (alpha / (1.0 - beta1)) * (1.0 - beta1) * g[i] /
                                         std::abs(g[i]);
        // EMA of g^2 after one update is (1 - rho) g^2.
        rmsprop_expected[i] = x0[i] - alpha * g[i] / std::sqrt((1.0 - rho) * g[i] * g[i] + eps);
    }
    check_step("adam", single_step(StochasticOptimizerConfig::Kind::adam), adam_expected);
    check_step("adamax", single_step(StochasticOptimizerConfig::Kind::adamax), adamax_expected);
    check_step("rmsprop", single_step(StochasticOptimizerConfig::Kind::rmsprop),
               rmsprop_expected);

    // Sphere invariant at default settings from a unit-norm start.
    const ObjectiveFn sphere = [](const Eigen::VectorXd& x) {
        return std::make_pair(x.squaredNorm(), Eigen::VectorXd(2.0 * x));
    };
    Eigen::VectorXd start(4);
    start << 0.5, -0.5, 0.5, -0.5;  // |x0| = 1
    for (const auto kind : {StochasticOptimizerConfig::Kind::adam,
                            StochasticOptimizerConfig::Kind::adamax,
                            StochasticOptimizerConfig::Kind::rmsprop}) {
        StochasticOptimizerConfig c;
        c.kind = kind;
        c.max_iter = 10000;
        const OptimResult r = stochastic_minimize(sphere, start, c);
        const char* name = kind == StochasticOptimizerConfig::Kind::adam      ? "adam"
                           : kind == StochasticOptimizerConfig::Kind::adamax  ? "adamax"
                                                                              : "rmsprop";
        require(r.x.norm() < 1e-2, std::string(name) + " finished the sphere at |x| = " +
                                       fmt(r.x.norm()) + " (>= 1e-2) after " +
                                       std::to_string(r.iterations) + " iterations");
    }
}

// ---------------------------------------------------------------------------
// 10. Multi-fidelity density estimate: identity fidelity, shift
//     equivariance, and normalization.
// ---------------------------------------------------------------------------

void criterion_bmfmc_lite() {
    const Distribution std_normal = Distribution::normal(0.0, 1.0);
    RandomStream rng(909, 0);
    Eigen::VectorXd z(2000);
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = std_normal.sample(rng);

    const std::vector<double> anchors = linspace(-2.5, 2.5, 15);
    Eigen::VectorXd plf = Eigen::Map<const Eigen::VectorXd>(
        anchors.data(), static_cast<Eigen::Index>(anchors.size()));

    // Identity fidelity: the estimated density must match the sampling
    // distribution of the low-fidelity outputs.
    const DensityEstimate identity = bmfmc_estimate(z, plf, plf);
    require(std::abs(identity.integral() - 1.0) <= 1e-3,
            "identity-case density integrates to " + fmt(identity.integral()) +
                " (off by more than 1e-3)");
    double cdf = 0.0, ks = std::abs(normal_cdf(identity.grid.front()));
    for (std::size_t i = 1; i < identity.grid.size(); ++i) {
        cdf += 0.5 * (identity.density[i - 1] + identity.density[i]) *
               (identity.grid[i] - identity.grid[i - 1]);
        ks = std::max(ks, std::abs(cdf - normal_cdf(identity.grid[i])));
    }
    require(ks <= 0.05, "identity-fidelity KS distance " + fmt(ks) + " exceeds 0.05");

    // Shift equivariance: shifting the high-fidelity pairs by delta
    // shifts the density without changing its shape.
    const double delta = 0.5;
    const Eigen::VectorXd phf = plf.array() + delta;
    const DensityEstimate shifted = bmfmc_estimate(z, plf, phf);
    require(std::abs(shifted.integral() - 1.0) <= 1e-3,
            "shifted density integrates to " + fmt(shifted.integral()));
    require(std::abs(shifted.mean() - identity.mean() - delta) <= 0.05,
            "density mean moved by " + fmt(shifted.mean() - identity.mean()) +
                " instead of " + fmt(delta));
    // Interpolate the shifted density at grid + delta and compare.
    double sup = 0.0;
    for (std::size_t i = 0; i < identity.grid.size(); ++i) {
        const double x = identity.grid[i] + delta;
        if (x < shifted.grid.front() || x > shifted.grid.back()) continue;
        const auto it = std::upper_bound(shifted.grid.begin(), shifted.grid.end(), x);
        const std::size_t hi = std::min(
            static_cast<std::size_t>(std::distance(shifted.grid.begin(), it)),
            shifted.grid.size() - 1);
        const std::size_t lo = hi == 0 ? 0 : hi - 1;
        double value = shifted.density[lo];
        if (hi != lo) {
            const double t = (x - shifted.grid[lo]) / (shifted.grid[hi] - shifted.grid[lo]);
            value = (1.0 - t) * shifted.density[lo] + t * shifted.density[hi];
        }
        sup = std::max(sup, std::abs(value - identity.density[i]));
    }
    require(sup <= 0.05, "shift-equivariance sup-norm " + fmt(sup) + " exceeds 0.05");
}

// ---------------------------------------------------------------------------
// 11. Scheduler: concurrency ceiling, fault isolation, and speedup.
// ---------------------------------------------------------------------------

void criterion_scheduler_concurrency() {
    const fs::path base = fresh_dir("sched");
    write_text(base / "input.tmpl", ab_template);
    const std::vector<std::string> names = {"a", "b"};
    DriverConfig driver;
    driver.executable = MOCK_SOLVER_PATH;
    driver.template_path = (base / "input.tmpl").string();

    // Ceiling: the instrumented peak never exceeds the configured limit.
    {
        DriverConfig sleepy = driver;
        sleepy.extra_args = {"--sleep", "0.08"};
        std::vector<std::pair<Eigen::VectorXd, DriverConfig>> jobs;
        for (int i = 0; i < 24; ++i)
            jobs.emplace_back(Eigen::Vector2d(static_cast<double>(i), 2.0 * i), sleepy);
        SchedulerConfig sched;
        sched.max_concurrent = 4;
        sched.workspace_root = (base / "ws_ceiling").string();
        const BatchReport report = submit_batch(jobs, sched, names);
        require(report.completed == 24, "expected 24 completed sleep jobs, got " +
                                            std::to_string(report.completed));
        require(report.peak_concurrent <= 4, "peak concurrency " +
                                                 std::to_string(report.peak_concurrent) +
                                                 " exceeded the limit of 4");
        require(report.peak_concurrent >= 2, "jobs never overlapped (peak " +
                                                 std::to_string(report.peak_concurrent) + ")");
        for (int i = 0; i < 24; ++i) {
            const double y = report.records[static_cast<std::size_t>(i)].output[0];
            require(y == 3.0 * i, "job " + std::to_string(i) + " returned " + fmt(y) +
                                      " instead of " + fmt(3.0 * i));
        }
    }

    // Fault isolation: one crashing job must not disturb its neighbors.
    {
        DriverConfig crash = driver;
        crash.extra_args = {"--crash"};
        std::vector<std::pair<Eigen::VectorXd, DriverConfig>> jobs;
        for (int i = 0; i < 10; ++i)
            jobs.emplace_back(Eigen::Vector2d(static_cast<double>(i), 0.5),
                              i == 3 ? crash : driver);
        SchedulerConfig sched;
        sched.max_concurrent = 4;
        sched.workspace_root = (base / "ws_isolation").string();
        const BatchReport report = submit_batch(jobs, sched, names);
        require(report.completed == 9 && report.failed == 1,
                "expected 9 completed and 1 failed, got " + std::to_string(report.completed) +
                    " and " + std::to_string(report.failed));
        require(report.records[3].status == EvalStatus::failed, "job 3 should have failed");
        require(std::isnan(report.records[3].output[0]), "failed job lacks the NaN sentinel");
        for (int i = 0; i < 10; ++i) {
            require(report.records[static_cast<std::size_t>(i)].id == i,
                    "records are out of order");
            if (i == 3) continue;
            const double y = report.records[static_cast<std::size_t>(i)].output[0];
            require(y == i + 0.5, "neighbor job " + std::to_string(i) + " was disturbed");
        }
    }

    // Speedup: eight 0.3 s sleep jobs at 4 workers beat the 2.4 s serial
    // time with room to spare.
    {
        DriverConfig sleepy = driver;
        sleepy.extra_args = {"--sleep", "0.3"};
        std::vector<std::pair<Eigen::VectorXd, DriverConfig>> jobs;
        for (int i = 0; i < 8; ++i) jobs.emplace_back(Eigen::Vector2d(1.0, 1.0), sleepy);
        SchedulerConfig sched;
        sched.max_concurrent = 4;
        sched.workspace_root = (base / "ws_speedup").string();
        const BatchReport report = submit_batch(jobs, sched, names);
        require(report.completed == 8, "sleep jobs did not all complete");
        require(report.wall_seconds < 1.5,
                "8 x 0.3 s jobs at 4 workers took " + fmt(report.wall_seconds) +
                    " s (serial would be 2.4 s; need < 1.5 s)");
    }
    cleanup(base);
}

// ---------------------------------------------------------------------------
// 12. Determinism and persistence.
// ---------------------------------------------------------------------------

void criterion_determinism_persistence() {
    const fs::path base = fresh_dir("determ");
    const auto config_for = [](const std::string& outdir) {
        return std::string(R"({
          "global_settings": {"run_name": "mc", "output_directory": ")" +
                           outdir + R"(", "seed": 2024},
          "parameters": {
            "a": {"distribution": "normal", "mean": 0, "std": 1},
            "b": {"distribution": "uniform", "lower": 0, "upper": 2}
          },
          "m": {"type": "function", "function": "sum"},
          "method": {"name": "monte_carlo", "model": "m", "samples": 300}
        })");
    };
    const RunOutcome r1 = run(build_plan(parse_config(config_for("d1"), base)));
    const RunOutcome r2 = run(build_plan(parse_config(config_for("d2"), base)));

    require(read_text(base / "d1" / "samples.csv") == read_text(base / "d2" / "samples.csv"),
            "samples.csv differs between two runs with identical config and seed");
    require(read_text(base / "d1" / "outputs.csv") == read_text(base / "d2" / "outputs.csv"),
            "outputs.csv differs between two runs with identical config and seed");
    for (const char* section : {"parameters", "samples", "outputs", "statuses",
                                "method_results"}) {
        require(r1.results.at(section) == r2.results.at(section),
                std::string("results.json payload section '") + section +
                    "' differs between identical runs");
    }

    // Write/read round trip: re-reading the sealed artifact reproduces
    // the in-memory document bit for bit (checksum included).
    const ordered_json reread = read_results(r1.results_path);
    require(reread == r1.results, "re-reading results.json changed the document");
    const Eigen::MatrixXd s1 = matrix_from_json(r1.results.at("samples").at("values"));
    const Eigen::MatrixXd s2 = matrix_from_json(reread.at("samples").at("values"));
    require(s1 == s2, "sample matrices differ after the round trip");
    require(s1.rows() == 300, "expected 300 sample rows");
    cleanup(base);
}

// ---------------------------------------------------------------------------
// Harness
// ---------------------------------------------------------------------------

struct Criterion {
    double budget_seconds;  // 0 disables the budget check
    std::function<void()> fn;
};

const std::vector<std::pair<std::string, Criterion>>& criteria() {
    static const std::vector<std::pair<std::string, Criterion>> table = {
        {"grid_study_driver", {30.0, criterion_grid_study_driver}},
        {"calibration_coverage", {600.0, criterion_calibration_coverage}},
        {"smc_conjugate", {30.0, criterion_smc_conjugate}},
        {"mh_standard_normal", {10.0, criterion_mh_standard_normal}},
        {"sobol_ishigami", {10.0, criterion_sobol_ishigami}},
        {"morris_linear", {5.0, criterion_morris_linear}},
        {"gp_quality", {30.0, criterion_gp_quality}},
        {"lm_convergence", {5.0, criterion_lm_convergence}},
        {"stochastic_steps", {10.0, criterion_stochastic_steps}},
        {"bmfmc_lite", {60.0, criterion_bmfmc_lite}},
        {"scheduler_concurrency", {60.0, criterion_scheduler_concurrency}},
        {"determinism_persistence", {0.0, criterion_determinism_persistence}},
    };
    return table;
}

int run_criterion(const std::string& name, const Criterion& criterion) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
        criterion.fn();
    } catch (const std::exception& e) {
        std::printf("[FAIL] %s: %s\n", name.c_str(), e.what());
        return 1;
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (criterion.budget_seconds > 0.0 && seconds > criterion.budget_seconds) {
        std::printf("[FAIL] %s: checks passed but wall time %.1f s exceeds the %.0f s budget\n",
                    name.c_str(), seconds, criterion.budget_seconds);
        return 1;
    }
    std::printf("[PASS] %s (%.1f s)\n", name.c_str(), seconds);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::fprintf(stderr, "usage: %s <criterion>|all|list\n", argv[0]);
        for (const auto& [name, c] : criteria()) std::fprintf(stderr, "  %s\n", name.c_str());
        return 2;
    }
    const std::string selection = argv[1];
    if (selection == "list") {
        for (const auto& [name, c] : criteria()) std::printf("%s\n", name.c_str());
        return 0;
    }
    if (selection == "all") {
        int failures = 0;
        for (const auto& [name, c] : criteria()) failures += run_criterion(name, c);
        return failures == 0 ? 0 : 1;
    }
    for (const auto& [name, c] : criteria())
        if (name == selection) return run_criterion(name, c);
    std::fprintf(stderr, "unknown criterion '%s' (try list)\n", selection.c_str());
    return 2;
}
