#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "qfl/random.hpp"
#include "qfl/state_vector.hpp"

namespace qfl {

using ParameterVector = std::vector<double>;

/// Layered ansatz: every layer applies RX, RY, RZ to each qubit in turn and
/// then a CNOT ring q -> (q + 1) mod Q (skipped for a single qubit).
/// Parameter slot of (layer, qubit, axis) is 3 * (layer * Q + qubit) + axis.
struct CircuitSpec {
    int num_qubits = 0;
    int num_layers = 0;
    std::vector<GateOp> gates;
    std::size_t num_parameters = 0;

    [[nodiscard]] std::size_t dimension() const noexcept { return std::size_t{1} << num_qubits; }
};

[[nodiscard]] CircuitSpec build_circuit(int num_qubits, int num_layers);

/// Reads the first `num_classes` outcome probabilities and renormalizes them.
struct ClassMapping {
    int num_classes = 0;

    /// Throws ConfigError when the register has fewer outcomes than classes.
    void validate(int num_qubits) const;
};

/// Applies every gate of `spec` to `encoded`, binding rotation angles
/// from `params`.
[[nodiscard]] StateVector forward(const CircuitSpec& spec, std::span<const double> params, StateVector encoded);

/// Encode, run the circuit and return the 2^Q outcome probabilities.
[[nodiscard]] std::vector<double> outcome_probabilities(const CircuitSpec& spec, std::span<const double> params,
                                                        std::span<const double> features);

/// First-C renormalize readout. Uniform 1/C when the head carries less than
/// 1e-12 of the probability mass.
[[nodiscard]] std::vector<double> class_probabilities(std::span<const double> outcomes,
                                                      const ClassMapping& mapping);

[[nodiscard]] std::vector<double> predict_probs(const CircuitSpec& spec, std::span<const double> params,
                                                const ClassMapping& mapping, std::span<const double> features);

/// Uniform draws in [-pi/10, pi/10].
[[nodiscard]] ParameterVector init_parameters(const CircuitSpec& spec, Rng& rng);

}  // namespace qfl
