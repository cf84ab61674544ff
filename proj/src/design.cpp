#include "fifa/design.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "fifa/canonical.hpp"
#include "fifa/errors.hpp"
#include "fifa/rng.hpp"

namespace fifa::design {
namespace {

constexpr double kRankThreshold = 1e-10;  // relative to the largest singular value

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& features) {
    if (features.empty()) throw ConfigError("feature set is empty");
    const std::size_t m = features.size();
    const std::size_t d = features[0].size();
    if (d == 0) throw ConfigError("features must have dimension at least 1");
    Eigen::MatrixXd phi(m, d);
    for (std::size_t i = 0; i < m; ++i) {
        if (features[i].size() != d)
            throw ConfigError("feature " + std::to_string(i) + " has dimension " +
                              std::to_string(features[i].size()) + ", expected " +
                              std::to_string(d));
        for (std::size_t j = 0; j < d; ++j) phi(i, j) = features[i][j];
    }
    return phi;
}

// Eigendecomposition of a symmetric PSD matrix with a rank check; used for
// both the singularity test and the solves, so both agree on "singular".
struct SpectralSolver {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
    int rank = 0;

    explicit SpectralSolver(const Eigen::MatrixXd& v) : eig(v) {
        double largest = eig.eigenvalues().cwiseAbs().maxCoeff();
        double cutoff = largest * kRankThreshold;
        for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i)
            if (std::abs(eig.eigenvalues()(i)) > cutoff && largest > 0.0) ++rank;
    }

    bool singular() const { return rank < eig.eigenvalues().size(); }

    Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
        Eigen::VectorXd coeffs = eig.eigenvectors().transpose() * b;
        for (Eigen::Index i = 0; i < coeffs.size(); ++i) coeffs(i) /= eig.eigenvalues()(i);
        return eig.eigenvectors() * coeffs;
    }
};

Eigen::MatrixXd weighted_gram(const Eigen::MatrixXd& phi, const Eigen::VectorXd& w) {
    return phi.transpose() * w.asDiagonal() * phi;
}

void check_distribution(const DesignDistribution& pi, std::size_t m) {
    if (pi.pi.size() != m)
        throw ConfigError("design distribution has " + std::to_string(pi.pi.size()) +
                          " weights for " + std::to_string(m) + " features");
    double sum = 0.0;
    for (double p : pi.pi) {
        if (!(p >= 0.0)) throw ConfigError("design weights must be non-negative");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw ConfigError("design weights sum to " + std::to_string(sum) + ", expected 1");
}

// Rounds budget * pi to integers summing exactly to budget: floors first,
// then hands leftover units to the largest fractional parts (ties to the
// lower index).
std::vector<std::uint64_t> largest_remainder(std::uint64_t budget, std::span<const double> pi) {
    std::vector<std::uint64_t> alloc(pi.size(), 0);
    std::vector<std::pair<double, std::size_t>> frac;
    frac.reserve(pi.size());
    std::uint64_t used = 0;
    for (std::size_t i = 0; i < pi.size(); ++i) {
        double target = static_cast<double>(budget) * pi[i];
        double fl = std::floor(target);
        alloc[i] = static_cast<std::uint64_t>(fl);
        used += alloc[i];
        frac.emplace_back(target - fl, i);
    }
    std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t j = 0; used < budget && j < frac.size(); ++j, ++used) ++alloc[frac[j].second];
    return alloc;
}

}  // namespace

std::vector<Observation> simulate_rewards(const DesignProblem& problem,
                                          std::span<const std::uint64_t> allocation,
                                          std::uint64_t rng_seed) {
    const std::size_t m = problem.features.size();
    if (allocation.size() != m)
        throw ConfigError("allocation has " + std::to_string(allocation.size()) +
                          " entries for " + std::to_string(m) + " features");
    if (problem.noise_scale < 0.0) throw ConfigError("noise scale must be non-negative");
    std::mt19937_64 rng(rng_seed);
    GaussianSampler gauss(rng);
    std::vector<Observation> out;
    for (std::size_t i = 0; i < m; ++i) {
        const auto& phi = problem.features[i];
        if (phi.size() != problem.theta_star.size())
            throw ConfigError("feature/theta dimension mismatch");
        double mean = std::inner_product(phi.begin(), phi.end(), problem.theta_star.begin(), 0.0);
        for (std::uint64_t s = 0; s < allocation[i]; ++s) {
            double noise = problem.noise_scale == 0.0 ? 0.0 : problem.noise_scale * gauss();
            out.push_back({i, mean + noise});
        }
    }
    return out;
}

std::vector<double> ols_estimate(const std::vector<std::vector<double>>& features,
                                 std::span<const Observation> observations) {
    Eigen::MatrixXd phi = to_matrix(features);
    const Eigen::Index d = phi.cols();
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(d);
    for (const Observation& obs : observations) {
        if (obs.feature_index >= features.size())
            throw ConfigError("observation references feature " +
                              std::to_string(obs.feature_index));
        Eigen::VectorXd row = phi.row(static_cast<Eigen::Index>(obs.feature_index));
        v.noalias() += row * row.transpose();
        b.noalias() += obs.reward * row;
    }
    SpectralSolver solver(v);
    if (solver.singular())
        throw SingularDesignError("observed design matrix is rank-deficient", solver.rank);
    Eigen::VectorXd theta = solver.solve(b);
    return {theta.data(), theta.data() + theta.size()};
}

double g_value(const DesignDistribution& pi, const std::vector<std::vector<double>>& features) {
    Eigen::MatrixXd phi = to_matrix(features);
    check_distribution(pi, features.size());
    Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(pi.pi.data(),
                                                          static_cast<Eigen::Index>(pi.pi.size()));
    SpectralSolver solver(weighted_gram(phi, w));
    if (solver.singular())
        throw SingularDesignError("V(pi) is rank-deficient", solver.rank);
    double g = 0.0;
    for (Eigen::Index i = 0; i < phi.rows(); ++i) {
        Eigen::VectorXd row = phi.row(i);
        g = std::max(g, row.dot(solver.solve(row)));
    }
    return g;
}

DesignResult optimize_design(const std::vector<std::vector<double>>& features,
                             std::uint64_t max_iters, double tol) {
    Eigen::MatrixXd phi = to_matrix(features);
    const std::size_t m = features.size();
    const double d = static_cast<double>(phi.cols());
    {
        SpectralSolver span_check(phi.transpose() * phi);
        if (span_check.singular())
            throw SpanDeficientError("features span a subspace of rank " +
                                     std::to_string(span_check.rank) + " < " +
                                     std::to_string(phi.cols()));
    }

    Eigen::VectorXd w = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m), 1.0 / double(m));
    DesignResult result;
    double best_g = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_w = w;
    std::uint64_t iter = 0;
    for (; iter < max_iters; ++iter) {
        SpectralSolver solver(weighted_gram(phi, w));
        if (solver.singular())
            throw SpanDeficientError("design collapsed to rank " + std::to_string(solver.rank));
        double g = 0.0;
        Eigen::Index worst = 0;
        for (Eigen::Index i = 0; i < phi.rows(); ++i) {
            Eigen::VectorXd row = phi.row(i);
            double norm = row.dot(solver.solve(row));
            if (norm > g) {
                g = norm;
                worst = i;
            }
        }
        if (g < best_g) {
            best_g = g;
            best_w = w;
        }
        if (g <= d + tol) {
            result.converged = true;
            break;
        }
        // Closed-form line-search step toward the worst-covered feature.
        double lambda = (g / d - 1.0) / (g - 1.0);
        lambda = std::clamp(lambda, 0.0, 1.0);
        if (lambda == 0.0) break;  // numerically stuck; best-so-far is the answer
        w *= (1.0 - lambda);
        w(worst) += lambda;
    }
    result.iterations = iter;
    result.g = best_g;
    result.pi.pi.assign(best_w.data(), best_w.data() + best_w.size());
    // Renormalize drift so downstream invariants (sum == 1) hold exactly.
    double sum = std::accumulate(result.pi.pi.begin(), result.pi.pi.end(), 0.0);
    for (double& p : result.pi.pi) p /= sum;
    return result;
}

std::vector<std::uint64_t> sample_allocation(const DesignDistribution& pi, double g,
                                             double epsilon, double delta) {
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    check_distribution(pi, pi.pi.size());
    std::vector<std::uint64_t> out;
    out.reserve(pi.pi.size());
    double scale = 2.0 * g / (epsilon * epsilon) * std::log(1.0 / delta);
    for (double p : pi.pi)
        out.push_back(static_cast<std::uint64_t>(std::ceil(p * scale)));
    return out;
}

double prediction_bound(const std::vector<std::vector<double>>& features,
                        std::span<const std::uint64_t> allocation, std::span<const double> phi,
                        double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    Eigen::MatrixXd mat = to_matrix(features);
    if (allocation.size() != features.size())
        throw ConfigError("allocation/feature count mismatch");
    if (static_cast<Eigen::Index>(phi.size()) != mat.cols())
        throw ConfigError("query feature dimension mismatch");
    Eigen::VectorXd counts(static_cast<Eigen::Index>(allocation.size()));
    for (std::size_t i = 0; i < allocation.size(); ++i)
        counts(static_cast<Eigen::Index>(i)) = static_cast<double>(allocation[i]);
    SpectralSolver solver(weighted_gram(mat, counts));
    if (solver.singular())
        throw SingularDesignError("allocated design matrix is rank-deficient", solver.rank);
    Eigen::VectorXd q = Eigen::Map<const Eigen::VectorXd>(phi.data(),
                                                          static_cast<Eigen::Index>(phi.size()));
    double norm2 = q.dot(solver.solve(q));
    return std::sqrt(2.0 * std::max(norm2, 0.0) * std::log(1.0 / delta));
}

std::string MarginReport::csv() const {
    std::string out = "trial,policy,max_pred_error,bound_violated\n";
    for (const MarginTrialRow& row : rows) {
        out += std::to_string(row.trial);
        out += ',';
        out += row.policy;
        out += ',';
        out += format_double(row.max_pred_error);
        out += ',';
        out += row.bound_violated ? '1' : '0';
        out += '\n';
    }
    return out;
}

double MarginReport::mean_max_error(const std::string& policy) const {
    double sum = 0.0;
    std::uint64_t n = 0;
    for (const MarginTrialRow& row : rows)
        if (row.policy == policy) {
            sum += row.max_pred_error;
            ++n;
        }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double MarginReport::violation_rate(const std::string& policy) const {
    std::uint64_t hits = 0;
    std::uint64_t n = 0;
    for (const MarginTrialRow& row : rows)
        if (row.policy == policy) {
            hits += row.bound_violated ? 1 : 0;
            ++n;
        }
    return n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
}

MarginReport run_margin_experiment(std::size_t d, std::size_t m, std::uint64_t n_budget,
                                   std::uint64_t trials, std::uint64_t rng_seed, double delta,
                                   double noise_scale) {
    if (d == 0 || m == 0 || n_budget == 0 || trials == 0)
        throw ConfigError("experiment parameters must be positive");
    if (m < d) throw ConfigError("need at least d features for identifiability");

    MarginReport report;
    report.rows.reserve(trials * 3);
    for (std::uint64_t t = 0; t < trials; ++t) {
        std::mt19937_64 rng(rng_seed + t);
        GaussianSampler gauss(rng);

        DesignProblem problem;
        problem.noise_scale = noise_scale;
        problem.features.assign(m, std::vector<double>(d));
        for (auto& row : problem.features) {
            // Gaussian direction with a lognormal norm: margins are only
            // informative when feature norms actually vary, which is the
            // regime the margin policy is meant to exploit.
            double scale = std::exp(gauss());
            for (double& x : row) x = scale * gauss();
        }
        problem.theta_star.resize(d);
        for (double& x : problem.theta_star) x = gauss();
        std::size_t checked = static_cast<std::size_t>(rng() % m);  // bound-audit feature

        // Policy (a): spread the budget evenly over all features.
        std::vector<std::uint64_t> uniform_alloc(m, n_budget / m);
        for (std::size_t i = 0; i < n_budget % m; ++i) ++uniform_alloc[i];

        // Policy (b): evenly over the high-margin half of the features (at
        // least d of them, so theta stays identifiable). Concentrating any
        // harder starves the directions orthogonal to theta*.
        std::size_t n_top = std::max(d, (m + 1) / 2);
        std::vector<std::size_t> by_margin(m);
        std::iota(by_margin.begin(), by_margin.end(), std::size_t{0});
        auto margin_of = [&](std::size_t i) {
            return std::abs(std::inner_product(problem.features[i].begin(),
                                               problem.features[i].end(),
                                               problem.theta_star.begin(), 0.0));
        };
        std::sort(by_margin.begin(), by_margin.end(), [&](std::size_t a, std::size_t b) {
            double ma = margin_of(a);
            double mb = margin_of(b);
            if (ma != mb) return ma > mb;
            return a < b;
        });
        std::vector<std::uint64_t> margin_alloc(m, 0);
        for (std::size_t r = 0; r < n_top; ++r)
            margin_alloc[by_margin[r]] = n_budget / n_top + (r < n_budget % n_top ? 1 : 0);

        // Policy (c): G-optimal design, rounded to the budget.
        DesignResult opt = optimize_design(problem.features, 20000, 1e-3);
        std::vector<std::uint64_t> g_alloc = largest_remainder(n_budget, opt.pi.pi);

        struct Policy {
            const char* name;
            const std::vector<std::uint64_t>* alloc;
        };
        const Policy policies[] = {{"uniform", &uniform_alloc},
                                   {"high_margin", &margin_alloc},
                                   {"g_optimal", &g_alloc}};
        for (std::size_t p = 0; p < 3; ++p) {
            std::vector<std::uint64_t> alloc = *policies[p].alloc;
            std::uint64_t reward_seed = (rng_seed + t) * 1000003ull + p;
            std::vector<double> theta_hat;
            for (int attempt = 0;; ++attempt) {
                try {
                    theta_hat = ols_estimate(problem.features,
                                             simulate_rewards(problem, alloc, reward_seed));
                    break;
                } catch (const SingularDesignError&) {
                    // Rounding can drop a support point; re-spend the budget
                    // on the d heaviest design weights, which always
                    // identifies theta for Gaussian features.
                    if (attempt > 0) throw;
                    std::vector<std::size_t> by_pi(m);
                    std::iota(by_pi.begin(), by_pi.end(), std::size_t{0});
                    std::sort(by_pi.begin(), by_pi.end(), [&](std::size_t a, std::size_t b) {
                        if (opt.pi.pi[a] != opt.pi.pi[b]) return opt.pi.pi[a] > opt.pi.pi[b];
                        return a < b;
                    });
                    alloc.assign(m, 0);
                    for (std::size_t r = 0; r < d; ++r)
                        alloc[by_pi[r]] = n_budget / d + (r < n_budget % d ? 1 : 0);
                }
            }

            MarginTrialRow row;
            row.trial = t;
            row.policy = policies[p].name;
            Eigen::VectorXd diff(static_cast<Eigen::Index>(d));
            for (std::size_t j = 0; j < d; ++j)
                diff(static_cast<Eigen::Index>(j)) = theta_hat[j] - problem.theta_star[j];
            double max_err = -std::numeric_limits<double>::infinity();
            for (const auto& feature : problem.features) {
                double inner = 0.0;
                for (std::size_t j = 0; j < d; ++j) inner += feature[j] * diff(j);
                max_err = std::max(max_err, inner);
            }
            row.max_pred_error = max_err;
            double bound = prediction_bound(problem.features, alloc, problem.features[checked],
                                            delta);
            double checked_err = 0.0;
            for (std::size_t j = 0; j < d; ++j)
                checked_err += problem.features[checked][j] * diff(j);
            row.bound_violated = checked_err >= bound;
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

}  // namespace fifa::design
