#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "qfl/random.hpp"

#ifndef QFL_MAX_QUBITS
#define QFL_MAX_QUBITS 14
#endif

namespace qfl {

using Complex = std::complex<double>;

/// Largest register the simulator accepts (2^14 = 16384 amplitudes by default).
inline constexpr int kMaxQubits = QFL_MAX_QUBITS;

enum class GateKind { RX, RY, RZ, CNOT };

[[nodiscard]] const char* to_string(GateKind kind) noexcept;
[[nodiscard]] constexpr bool is_rotation(GateKind kind) noexcept { return kind != GateKind::CNOT; }

/// One gate in a circuit. Rotations carry the index of the parameter they
/// read (`angle_slot`); CNOT carries a control qubit instead.
struct GateOp {
    GateKind kind = GateKind::RX;
    int target = 0;
    std::optional<int> control;
    std::optional<std::size_t> angle_slot;

    static GateOp rotation(GateKind kind, int target, std::size_t slot);
    static GateOp cnot(int control, int target);

    /// Throws StructuralError if the gate is malformed or indexes outside
    /// a register of `num_qubits`.
    void validate(int num_qubits) const;

    friend bool operator==(const GateOp&, const GateOp&) = default;
};

/// Pure state of a Q-qubit register.
///
/// Basis index convention: qubit 0 is the most significant bit, so for
/// Q = 2 the amplitudes are ordered |00>, |01>, |10>, |11> with the left
/// label belonging to qubit 0.
class StateVector {
  public:
    /// |0...0> on `num_qubits` qubits.
    explicit StateVector(int num_qubits);

    /// Wraps amplitudes whose length must be a power of two within the
    /// qubit cap. The caller is responsible for normalization.
    static StateVector from_amplitudes(std::vector<Complex> amplitudes);

    [[nodiscard]] int num_qubits() const noexcept { return num_qubits_; }
    [[nodiscard]] std::size_t dimension() const noexcept { return amplitudes_.size(); }
    [[nodiscard]] std::span<const Complex> amplitudes() const noexcept { return amplitudes_; }
    [[nodiscard]] const Complex& operator[](std::size_t i) const { return amplitudes_[i]; }

    [[nodiscard]] double norm_squared() const noexcept;

    /// Applies `gate` in place. `angle` must be present iff the gate is a
    /// rotation.
    void apply(const GateOp& gate, std::optional<double> angle = std::nullopt);

    void apply_rx(int qubit, double angle);
    void apply_ry(int qubit, double angle);
    void apply_rz(int qubit, double angle);
    void apply_cnot(int control, int target);

  private:
    StateVector(int num_qubits, std::vector<Complex> amplitudes);

    [[nodiscard]] std::size_t stride(int qubit) const noexcept {
        return std::size_t{1} << (num_qubits_ - 1 - qubit);
    }
    void check_qubit(int qubit) const;

    int num_qubits_;
    std::vector<Complex> amplitudes_;
};

/// Throws ConfigError unless 1 <= num_qubits <= kMaxQubits.
void check_qubit_count(int num_qubits);

/// Smallest Q with 2^Q >= n (0 for n <= 1).
[[nodiscard]] int qubits_for(std::size_t n) noexcept;

[[nodiscard]] StateVector zero_state(int num_qubits);

/// Zero-pads `features` to 2^Q and divides by the l2 norm. An all-zero
/// vector encodes to |0...0> and logs a warning.
[[nodiscard]] StateVector amplitude_encode(std::span<const double> features, int num_qubits);

[[nodiscard]] StateVector apply_gate(StateVector state, const GateOp& gate,
                                     std::optional<double> angle = std::nullopt);

[[nodiscard]] std::vector<double> probabilities(const StateVector& state);

/// <psi|Z_q|psi>.
[[nodiscard]] double expectation_z(const StateVector& state, int qubit);

/// Mean of `shots` samples of Z_q drawn from the measurement distribution.
[[nodiscard]] double shot_estimate_z(const StateVector& state, int qubit, std::uint64_t shots, Rng& rng);

/// Empirical outcome frequencies from `shots` draws of `probs`.
[[nodiscard]] std::vector<double> sample_frequencies(std::span<const double> probs, std::uint64_t shots,
                                                     Rng& rng);

}  // namespace qfl
