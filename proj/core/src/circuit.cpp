#include "qfl/circuit.hpp"

#include <algorithm>
#include <numbers>
#include <string>

#include "qfl/error.hpp"

namespace qfl {

CircuitSpec build_circuit(int num_qubits, int num_layers) {
    check_qubit_count(num_qubits);
    if (num_layers < 1) {
        throw ConfigError("num_layers must be >= 1, got " + std::to_string(num_layers));
    }
    CircuitSpec spec;
    spec.num_qubits = num_qubits;
    spec.num_layers = num_layers;
    constexpr GateKind axes[] = {GateKind::RX, GateKind::RY, GateKind::RZ};
    std::size_t slot = 0;
    for (int layer = 0; layer < num_layers; ++layer) {
        for (int q = 0; q < num_qubits; ++q) {
            for (GateKind axis : axes) {
                spec.gates.push_back(GateOp::rotation(axis, q, slot++));
            }
        }
        if (num_qubits > 1) {
            for (int q = 0; q < num_qubits; ++q) {
                spec.gates.push_back(GateOp::cnot(q, (q + 1) % num_qubits));
            }
        }
    }
    spec.num_parameters = slot;
    return spec;
}

void ClassMapping::validate(int num_qubits) const {
    if (num_classes < 1) {
        throw ConfigError("num_classes must be >= 1");
    }
    const std::size_t outcomes = std::size_t{1} << num_qubits;
    if (static_cast<std::size_t>(num_classes) > outcomes) {
        throw ConfigError("num_classes exceeds 2^Q: " + std::to_string(num_classes) + " classes need at least " +
                          std::to_string(qubits_for(static_cast<std::size_t>(num_classes))) +
                          " qubits, got " + std::to_string(num_qubits));
    }
}

StateVector forward(const CircuitSpec& spec, std::span<const double> params, StateVector encoded) {
    if (encoded.num_qubits() != spec.num_qubits) {
        throw StructuralError("state has " + std::to_string(encoded.num_qubits()) + " qubits, circuit expects " +
                              std::to_string(spec.num_qubits));
    }
    if (params.size() != spec.num_parameters) {
        throw StructuralError("circuit expects " + std::to_string(spec.num_parameters) + " parameters, got " +
                              std::to_string(params.size()));
    }
    for (const GateOp& gate : spec.gates) {
        if (gate.angle_slot) {
            encoded.apply(gate, params[*gate.angle_slot]);
        } else {
            encoded.apply(gate);
        }
    }
    return encoded;
}

std::vector<double> outcome_probabilities(const CircuitSpec& spec, std::span<const double> params,
                                          std::span<const double> features) {
    return probabilities(forward(spec, params, amplitude_encode(features, spec.num_qubits)));
}

std::vector<double> class_probabilities(std::span<const double> outcomes, const ClassMapping& mapping) {
    const auto c = static_cast<std::size_t>(mapping.num_classes);
    if (c == 0 || c > outcomes.size()) {
        throw ConfigError("num_classes exceeds 2^Q");
    }
    double head = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
        head += outcomes[i];
    }
    std::vector<double> out(c);
    if (head < 1e-12) {
        std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(c));
        return out;
    }
    for (std::size_t i = 0; i < c; ++i) {
        out[i] = outcomes[i] / head;
    }
    return out;
}

std::vector<double> predict_probs(const CircuitSpec& spec, std::span<const double> params,
                                  const ClassMapping& mapping, std::span<const double> features) {
    mapping.validate(spec.num_qubits);
    return class_probabilities(outcome_probabilities(spec, params, features), mapping);
}

ParameterVector init_parameters(const CircuitSpec& spec, Rng& rng) {
    std::uniform_real_distribution<double> angle(-std::numbers::pi / 10, std::numbers::pi / 10);
    ParameterVector params(spec.num_parameters);
    for (auto& p : params) {
        p = angle(rng);
    }
    return params;
}

}  // namespace qfl
