#include "qfl/noise.hpp"

#include <bit>
#include <string>

#include "qfl/error.hpp"

namespace qfl {

namespace {

void check_probability(double p, const char* field) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ConfigError(std::string(field) + " must be in [0, 1], got " + std::to_string(p));
    }
}

}  // namespace

void NoiseSpec::validate() const {
    check_probability(depolarizing_p, "noise.depolarizing_p");
    check_probability(readout_flip_p, "noise.readout_flip_p");
}

std::vector<double> apply_noise(std::span<const double> probs, const NoiseSpec& spec) {
    spec.validate();
    std::vector<double> out(probs.begin(), probs.end());
    if (!spec.enabled) {
        return out;
    }
    const std::size_t dim = out.size();
    if (dim < 2 || !std::has_single_bit(dim)) {
        throw StructuralError("outcome distribution length must be a power of two >= 2");
    }
    if (spec.depolarizing_p > 0.0) {
        const double keep = 1.0 - spec.depolarizing_p;
        const double floor = spec.depolarizing_p / static_cast<double>(dim);
        for (auto& p : out) {
            p = keep * p + floor;
        }
    }
    if (spec.readout_flip_p > 0.0) {
        const double f = spec.readout_flip_p;
        std::vector<double> next(dim);
        for (std::size_t bit = 1; bit < dim; bit <<= 1) {
            for (std::size_t i = 0; i < dim; ++i) {
                next[i] = (1.0 - f) * out[i] + f * out[i ^ bit];
            }
            out.swap(next);
        }
    }
    return out;
}

}  // namespace qfl
