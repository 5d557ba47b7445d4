#pragma once

#include <span>
#include <vector>

namespace qfl {

/// Probability-level noise applied to measured outcome distributions.
struct NoiseSpec {
    bool enabled = false;
    double depolarizing_p = 0.0;
    double readout_flip_p = 0.0;

    void validate() const;
    [[nodiscard]] bool active() const noexcept {
        return enabled && (depolarizing_p > 0.0 || readout_flip_p > 0.0);
    }
};

/// Depolarizing mix p' = (1 - p) * probs + p / 2^Q followed by an
/// independent bit flip of every qubit with probability readout_flip_p.
/// Identity when the spec is disabled.
[[nodiscard]] std::vector<double> apply_noise(std::span<const double> probs, const NoiseSpec& spec);

}  // namespace qfl
