#include "qfl/state_vector.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

#include <spdlog/spdlog.h>

#include "qfl/error.hpp"

namespace qfl {

const char* to_string(GateKind kind) noexcept {
    switch (kind) {
    case GateKind::RX:
        return "RX";
    case GateKind::RY:
        return "RY";
    case GateKind::RZ:
        return "RZ";
    case GateKind::CNOT:
        return "CNOT";
    }
    return "?";
}

GateOp GateOp::rotation(GateKind kind, int target, std::size_t slot) {
    if (!is_rotation(kind)) {
        throw StructuralError("GateOp::rotation called with CNOT");
    }
    return GateOp{kind, target, std::nullopt, slot};
}

GateOp GateOp::cnot(int control, int target) {
    return GateOp{GateKind::CNOT, target, control, std::nullopt};
}

void GateOp::validate(int num_qubits) const {
    auto in_range = [num_qubits](int q) { return q >= 0 && q < num_qubits; };
    if (!in_range(target)) {
        throw StructuralError(std::string(to_string(kind)) + " target " + std::to_string(target) +
                              " outside register of " + std::to_string(num_qubits) + " qubits");
    }
    if (kind == GateKind::CNOT) {
        if (!control) {
            throw StructuralError("CNOT requires a control qubit");
        }
        if (!in_range(*control)) {
            throw StructuralError("CNOT control " + std::to_string(*control) + " outside register of " +
                                  std::to_string(num_qubits) + " qubits");
        }
        if (*control == target) {
            throw StructuralError("CNOT control and target must differ");
        }
        if (angle_slot) {
            throw StructuralError("CNOT does not take an angle slot");
        }
    } else {
        if (control) {
            throw StructuralError(std::string(to_string(kind)) + " does not take a control qubit");
        }
        if (!angle_slot) {
            throw StructuralError(std::string(to_string(kind)) + " requires an angle slot");
        }
    }
}

void check_qubit_count(int num_qubits) {
    if (num_qubits < 1 || num_qubits > kMaxQubits) {
        throw ConfigError("num_qubits must be in [1, " + std::to_string(kMaxQubits) + "], got " +
                          std::to_string(num_qubits));
    }
}

int qubits_for(std::size_t n) noexcept {
    if (n <= 1) {
        return 0;
    }
    return static_cast<int>(std::bit_width(n - 1));
}

StateVector::StateVector(int num_qubits) : num_qubits_(num_qubits) {
    check_qubit_count(num_qubits);
    amplitudes_.assign(std::size_t{1} << num_qubits, Complex{0.0, 0.0});
    amplitudes_[0] = 1.0;
}

StateVector::StateVector(int num_qubits, std::vector<Complex> amplitudes)
    : num_qubits_(num_qubits), amplitudes_(std::move(amplitudes)) {}

StateVector StateVector::from_amplitudes(std::vector<Complex> amplitudes) {
    const std::size_t n = amplitudes.size();
    if (n < 2 || !std::has_single_bit(n)) {
        throw StructuralError("amplitude count must be a power of two >= 2, got " + std::to_string(n));
    }
    const int q = qubits_for(n);
    check_qubit_count(q);
    return StateVector(q, std::move(amplitudes));
}

double StateVector::norm_squared() const noexcept {
    double sum = 0.0;
    for (const auto& a : amplitudes_) {
        sum += std::norm(a);
    }
    return sum;
}

void StateVector::check_qubit(int qubit) const {
    if (qubit < 0 || qubit >= num_qubits_) {
        throw StructuralError("qubit " + std::to_string(qubit) + " outside register of " +
                              std::to_string(num_qubits_) + " qubits");
    }
}

namespace {

// Applies the 2x2 matrix [[m00, m01], [m10, m11]] to every amplitude pair
// that differs only in the bit selected by `stride`.
void apply_single(std::vector<Complex>& amps, std::size_t stride, Complex m00, Complex m01, Complex m10,
                  Complex m11) {
    const std::size_t dim = amps.size();
    for (std::size_t block = 0; block < dim; block += 2 * stride) {
        for (std::size_t i0 = block; i0 < block + stride; ++i0) {
            const std::size_t i1 = i0 + stride;
            const Complex a0 = amps[i0];
            const Complex a1 = amps[i1];
            amps[i0] = m00 * a0 + m01 * a1;
            amps[i1] = m10 * a0 + m11 * a1;
        }
    }
}

}  // namespace

void StateVector::apply_rx(int qubit, double angle) {
    check_qubit(qubit);
    const double c = std::cos(angle / 2);
    const double s = std::sin(angle / 2);
    const std::size_t st = stride(qubit);
    const std::size_t dim = amplitudes_.size();
    for (std::size_t block = 0; block < dim; block += 2 * st) {
        for (std::size_t i0 = block; i0 < block + st; ++i0) {
            const Complex a0 = amplitudes_[i0];
            const Complex a1 = amplitudes_[i0 + st];
            // -i*s*a = (s*a.imag, -s*a.real)
            amplitudes_[i0] = Complex(c * a0.real() + s * a1.imag(), c * a0.imag() - s * a1.real());
            amplitudes_[i0 + st] = Complex(c * a1.real() + s * a0.imag(), c * a1.imag() - s * a0.real());
        }
    }
}

void StateVector::apply_ry(int qubit, double angle) {
    check_qubit(qubit);
    const double c = std::cos(angle / 2);
    const double s = std::sin(angle / 2);
    const std::size_t st = stride(qubit);
    const std::size_t dim = amplitudes_.size();
    for (std::size_t block = 0; block < dim; block += 2 * st) {
        for (std::size_t i0 = block; i0 < block + st; ++i0) {
            const Complex a0 = amplitudes_[i0];
            const Complex a1 = amplitudes_[i0 + st];
            amplitudes_[i0] = c * a0 - s * a1;
            amplitudes_[i0 + st] = s * a0 + c * a1;
        }
    }
}

void StateVector::apply_rz(int qubit, double angle) {
    check_qubit(qubit);
    const Complex lower = std::polar(1.0, -angle / 2);
    const Complex upper = std::polar(1.0, angle / 2);
    apply_single(amplitudes_, stride(qubit), lower, 0.0, 0.0, upper);
}

void StateVector::apply_cnot(int control, int target) {
    check_qubit(control);
    check_qubit(target);
    if (control == target) {
        throw StructuralError("CNOT control and target must differ");
    }
    const std::size_t cbit = stride(control);
    const std::size_t tbit = stride(target);
    const std::size_t dim = amplitudes_.size();
    for (std::size_t i = 0; i < dim; ++i) {
        if ((i & cbit) != 0 && (i & tbit) == 0) {
            std::swap(amplitudes_[i], amplitudes_[i | tbit]);
        }
    }
}

void StateVector::apply(const GateOp& gate, std::optional<double> angle) {
    gate.validate(num_qubits_);
    if (is_rotation(gate.kind) != angle.has_value()) {
        throw StructuralError(std::string(to_string(gate.kind)) +
                              (angle ? " does not take an angle" : " requires an angle"));
    }
    switch (gate.kind) {
    case GateKind::RX:
        apply_rx(gate.target, *angle);
        break;
    case GateKind::RY:
        apply_ry(gate.target, *angle);
        break;
    case GateKind::RZ:
        apply_rz(gate.target, *angle);
        break;
    case GateKind::CNOT:
        apply_cnot(*gate.control, gate.target);
        break;
    }
}

StateVector zero_state(int num_qubits) { return StateVector(num_qubits); }

StateVector amplitude_encode(std::span<const double> features, int num_qubits) {
    check_qubit_count(num_qubits);
    const std::size_t dim = std::size_t{1} << num_qubits;
    if (features.size() > dim) {
        const int needed = qubits_for(features.size());
        throw DimensionError("feature vector of length " + std::to_string(features.size()) +
                                 " needs at least " + std::to_string(needed) + " qubits, register has " +
                                 std::to_string(num_qubits),
                             needed);
    }
    double norm2 = 0.0;
    for (double w : features) {
        norm2 += w * w;
    }
    std::vector<Complex> amps(dim, Complex{0.0, 0.0});
    if (norm2 == 0.0) {
        static std::atomic<std::uint64_t> zero_inputs{0};
        if (zero_inputs.fetch_add(1, std::memory_order_relaxed) == 0) {
            spdlog::warn("all-zero feature vector encoded as |0...0> (further occurrences logged at debug)");
        } else {
            spdlog::debug("all-zero feature vector encoded as |0...0>");
        }
        amps[0] = 1.0;
        return StateVector::from_amplitudes(std::move(amps));
    }
    // Inputs that are already unit up to summation rounding pass through
    // unchanged, so encoding is idempotent.
    const double slack = 2.0 * static_cast<double>(features.size()) * std::numeric_limits<double>::epsilon();
    const double scale = std::abs(norm2 - 1.0) <= slack ? 1.0 : 1.0 / std::sqrt(norm2);
    for (std::size_t i = 0; i < features.size(); ++i) {
        amps[i] = features[i] * scale;
    }
    return StateVector::from_amplitudes(std::move(amps));
}

StateVector apply_gate(StateVector state, const GateOp& gate, std::optional<double> angle) {
    state.apply(gate, angle);
    return state;
}

std::vector<double> probabilities(const StateVector& state) {
    std::vector<double> out(state.dimension());
    std::transform(state.amplitudes().begin(), state.amplitudes().end(), out.begin(),
                   [](const Complex& a) { return std::norm(a); });
    return out;
}

namespace {

void check_observable(const StateVector& state, int qubit) {
    if (qubit < 0 || qubit >= state.num_qubits()) {
        throw StructuralError("observable qubit " + std::to_string(qubit) + " outside register of " +
                              std::to_string(state.num_qubits()) + " qubits");
    }
}

}  // namespace

double expectation_z(const StateVector& state, int qubit) {
    check_observable(state, qubit);
    const std::size_t bit = std::size_t{1} << (state.num_qubits() - 1 - qubit);
    double sum = 0.0;
    for (std::size_t i = 0; i < state.dimension(); ++i) {
        const double p = std::norm(state[i]);
        sum += (i & bit) ? -p : p;
    }
    return sum;
}

std::vector<double> sample_frequencies(std::span<const double> probs, std::uint64_t shots, Rng& rng) {
    if (shots == 0) {
        throw ConfigError("shot count must be >= 1");
    }
    std::discrete_distribution<std::size_t> dist(probs.begin(), probs.end());
    std::vector<double> counts(probs.size(), 0.0);
    for (std::uint64_t s = 0; s < shots; ++s) {
        counts[dist(rng)] += 1.0;
    }
    for (auto& c : counts) {
        c /= static_cast<double>(shots);
    }
    return counts;
}

double shot_estimate_z(const StateVector& state, int qubit, std::uint64_t shots, Rng& rng) {
    check_observable(state, qubit);
    if (shots == 0) {
        throw ConfigError("shot count must be >= 1");
    }
    const std::size_t bit = std::size_t{1} << (state.num_qubits() - 1 - qubit);
    double p_zero = 0.0;
    for (std::size_t i = 0; i < state.dimension(); ++i) {
        if ((i & bit) == 0) {
            p_zero += std::norm(state[i]);
        }
    }
    // Outcomes of Z_q only depend on the marginal of qubit q.
    std::bernoulli_distribution plus(std::clamp(p_zero, 0.0, 1.0));
    std::int64_t total = 0;
    for (std::uint64_t s = 0; s < shots; ++s) {
        total += plus(rng) ? 1 : -1;
    }
    return static_cast<double>(total) / static_cast<double>(shots);
}

}  // namespace qfl
