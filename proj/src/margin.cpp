#include "fifa/margin.hpp"

#include <algorithm>
#include <cmath>

#include "fifa/errors.hpp"

namespace fifa {

double reward_margin(double reward_w, double reward_l) {
    if (!std::isfinite(reward_w) || !std::isfinite(reward_l))
        throw NonFiniteError("reward_margin: non-finite reward");
    return std::abs(reward_w - reward_l);
}

double cdpo_weight(double reward_w, double reward_l, double temperature) {
    if (!std::isfinite(reward_w) || !std::isfinite(reward_l))
        throw NonFiniteError("cdpo_weight: non-finite reward");
    if (!(temperature > 0.0)) throw Error("cdpo_weight: temperature must be positive");
    const double z = (reward_w - reward_l) / temperature;
    // Both orderings share exp(-|z|) so that omega(a,b) + omega(b,a) == 1 exactly.
    if (z >= 0.0) {
        const double e = std::exp(-z);
        return e / (1.0 + e);
    }
    const double e = std::exp(z);
    return 1.0 / (1.0 + e);
}

namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

}  // namespace

double dpo_pair_loss(const DpoErrorTerms& t) {
    if (!(t.beta_t_omega > 0.0)) throw Error("dpo_pair_loss: beta_t_omega must be positive");
    for (double v : {t.ew_theta, t.ew_ref, t.el_theta, t.el_ref})
        if (!std::isfinite(v) || v < 0.0)
            throw NonFiniteError("dpo_pair_loss: error terms must be finite and >= 0");
    const double bracket = (t.ew_theta - t.ew_ref) - (t.el_theta - t.el_ref);
    // -log sigma(-b*x) == softplus(b*x)
    return softplus(t.beta_t_omega * bracket);
}

double cdpo_pair_loss(double loss_wl, double loss_lw, double omega) {
    if (!(omega > 0.0 && omega < 1.0)) throw Error("cdpo_pair_loss: omega must lie in (0,1)");
    return (1.0 - omega) * loss_wl + omega * loss_lw;
}

Histogram margin_histogram(std::span<const double> margins, std::size_t n_bins) {
    if (margins.empty()) throw EmptyInputError("margin_histogram: empty input");
    if (n_bins < 1) throw Error("margin_histogram: n_bins must be >= 1");
    double hi = 0.0;
    for (double m : margins) {
        if (!std::isfinite(m) || m < 0.0)
            throw NonFiniteError("margin_histogram: margins must be finite and >= 0");
        hi = std::max(hi, m);
    }
    Histogram h;
    const double lo = 0.0;
    if (hi == lo) {  // degenerate range: single bin
        h.edges = {lo, hi};
        h.counts = {margins.size()};
        return h;
    }
    h.edges.resize(n_bins + 1);
    for (std::size_t i = 0; i <= n_bins; ++i)
        h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_bins);
    h.edges.back() = hi;
    h.counts.assign(n_bins, 0);
    for (double m : margins) {
        auto bin = static_cast<std::size_t>((m - lo) / (hi - lo) * static_cast<double>(n_bins));
        if (bin >= n_bins) bin = n_bins - 1;  // right-inclusive last bin
        ++h.counts[bin];
    }
    return h;
}

}  // namespace fifa
