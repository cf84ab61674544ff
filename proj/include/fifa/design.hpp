#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fifa::design {

/// Linear reward world: observing feature i yields phi_i . theta_star plus
/// Gaussian noise of scale noise_scale.
struct DesignProblem {
    std::vector<std::vector<double>> features;  // m rows of dimension d
    std::vector<double> theta_star;
    double noise_scale = 1.0;
};

struct DesignDistribution {
    std::vector<double> pi;  // non-negative, sums to 1 within 1e-12
};

struct Observation {
    std::size_t feature_index = 0;
    double reward = 0.0;
};

struct DesignResult {
    DesignDistribution pi;
    double g = 0.0;  // max feature norm in the V(pi) metric
    std::uint64_t iterations = 0;
    bool converged = false;  // g <= d + tol reached within max_iters
};

/// allocation[i] observations of feature i; rewards are
/// phi_i . theta_star + noise, in a fixed seeded order.
std::vector<Observation> simulate_rewards(const DesignProblem& problem,
                                          std::span<const std::uint64_t> allocation,
                                          std::uint64_t rng_seed);

/// Least squares: theta_hat = V^-1 sum r_i phi_i with V = sum phi phi^T
/// over the observations. Throws SingularDesignError (with the numerical
/// rank) when V is rank-deficient.
std::vector<double> ols_estimate(const std::vector<std::vector<double>>& features,
                                 std::span<const Observation> observations);

/// g(pi) = max_i phi_i^T V(pi)^-1 phi_i. Invariant under global feature
/// scaling. Throws SingularDesignError when V(pi) is rank-deficient.
double g_value(const DesignDistribution& pi, const std::vector<std::vector<double>>& features);

/// Frank-Wolfe ascent on log det V(pi) from the uniform start, with the
/// closed-form step toward the current worst-covered feature. Stops once
/// g <= d + tol; past max_iters it returns the best distribution seen with
/// converged = false rather than throwing. Throws SpanDeficientError when
/// the features do not span R^d.
DesignResult optimize_design(const std::vector<std::vector<double>>& features,
                             std::uint64_t max_iters = 50000, double tol = 1e-4);

/// n_i = ceil(2 pi_i g / epsilon^2 * ln(1/delta)).
std::vector<std::uint64_t> sample_allocation(const DesignDistribution& pi, double g,
                                             double epsilon, double delta);

/// One-sided confidence radius sqrt(2 |phi|^2_{V^-1} ln(1/delta)) where V
/// is the unnormalized sample matrix of the allocation.
double prediction_bound(const std::vector<std::vector<double>>& features,
                        std::span<const std::uint64_t> allocation, std::span<const double> phi,
                        double delta);

struct MarginTrialRow {
    std::uint64_t trial = 0;
    std::string policy;  // uniform | high_margin | g_optimal
    double max_pred_error = 0.0;
    bool bound_violated = false;
};

struct MarginReport {
    std::vector<MarginTrialRow> rows;
    std::string csv() const;  // header + one row per (trial, policy)
    double mean_max_error(const std::string& policy) const;
    double violation_rate(const std::string& policy) const;
};

/// Per trial: random features (Gaussian directions with lognormal norms)
/// and a Gaussian theta_star, three equal-budget allocation policies
/// (uniform over all features; even budget over the top half of features
/// — at least d of them — ranked by |phi . theta_star|; G-optimal pi
/// rounded by largest remainder), OLS fit, max_i phi_i . (theta_hat -
/// theta_star), and a confidence-bound check on one seeded-uniform
/// feature. Trials use derived seeds (rng_seed + trial), so reports are
/// reproducible.
MarginReport run_margin_experiment(std::size_t d, std::size_t m, std::uint64_t n_budget,
                                   std::uint64_t trials, std::uint64_t rng_seed,
                                   double delta = 0.1, double noise_scale = 1.0);

}  // namespace fifa::design
