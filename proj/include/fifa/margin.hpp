#pragma once

#include <span>

#include "fifa/types.hpp"

namespace fifa {

/// The four squared-error norms of the per-pair diffusion preference loss,
/// plus the combined coefficient in front of the bracket. The inner
/// expectation over timesteps is collapsed into beta_t_omega by the caller.
struct DpoErrorTerms {
    double ew_theta = 0.0;
    double ew_ref = 0.0;
    double el_theta = 0.0;
    double el_ref = 0.0;
    double beta_t_omega = 1.0;
};

/// |reward_w - reward_l|. Throws NonFiniteError on non-finite input.
double reward_margin(double reward_w, double reward_l);

/// Label-flip weight omega = softmax over rewards at temperature T,
/// evaluated as 1 / (1 + exp((r_w - r_l)/T)) in overflow-free form.
/// Default temperature used by the reward-weighted loss is 0.01.
double cdpo_weight(double reward_w, double reward_l, double temperature = 0.01);

/// -log sigma(-beta_t_omega * [(ew_theta - ew_ref) - (el_theta - el_ref)]).
double dpo_pair_loss(const DpoErrorTerms& terms);

/// Conservative mix of both pair orderings: (1-omega)*loss_wl + omega*loss_lw.
double cdpo_pair_loss(double loss_wl, double loss_lw, double omega);

/// Uniform histogram over [0, max(values)], right-inclusive last bin.
/// An all-zero input collapses to a single [0,0] bin.
Histogram margin_histogram(std::span<const double> margins, std::size_t n_bins);

}  // namespace fifa
