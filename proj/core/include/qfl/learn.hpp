#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "qfl/circuit.hpp"
#include "qfl/noise.hpp"
#include "qfl/random.hpp"

namespace qfl {

struct LabeledSample {
    std::vector<double> features;
    int label = 0;
};

enum class OptimizerKind { kAdam, kSgd };

struct TrainingHyper {
    double learning_rate = 0.01;
    int local_epochs = 3;
    int batch_size = 16;
    OptimizerKind optimizer = OptimizerKind::kAdam;
    /// Finite shot count for inference readout; nullopt means exact.
    std::optional<std::uint64_t> shots;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

struct OptimizerState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::uint64_t step_count = 0;

    explicit OptimizerState(std::size_t num_parameters)
        : first_moment(num_parameters, 0.0), second_moment(num_parameters, 0.0) {}
};

/// Probabilities below this floor are clamped before taking the log.
inline constexpr double kProbabilityFloor = 1e-12;

/// -ln(max(probs[label], 1e-12)).
[[nodiscard]] double cross_entropy(std::span<const double> probs, int label);

/// Mean cross entropy of the quantum classifier over `batch`.
[[nodiscard]] double batch_loss(const CircuitSpec& spec, std::span<const double> params,
                                const ClassMapping& mapping, std::span<const LabeledSample> batch);

struct LossAndGradient {
    double loss = 0.0;
    std::vector<double> gradient;
};

/// Batch loss and its exact gradient.
///
/// Every outcome probability p_i(w) is the expectation of a projector, so
/// dp_i/dw_d = (p_i(w + pi/2 e_d) - p_i(w - pi/2 e_d)) / 2 holds exactly.
/// The shifted probabilities are chained with the analytic derivative of
/// the renormalized cross entropy with respect to p.
[[nodiscard]] LossAndGradient parameter_shift_loss_and_gradient(const CircuitSpec& spec,
                                                                std::span<const double> params,
                                                                const ClassMapping& mapping,
                                                                std::span<const LabeledSample> batch);

[[nodiscard]] std::vector<double> parameter_shift_gradient(const CircuitSpec& spec, std::span<const double> params,
                                                           const ClassMapping& mapping,
                                                           std::span<const LabeledSample> batch);

/// One SGD or Adam (bias-corrected) update applied in place.
void optimizer_step(std::span<double> params, std::span<const double> grad, OptimizerState& state,
                    const TrainingHyper& hyper);

/// Readout options used outside of training.
struct Readout {
    NoiseSpec noise;
    std::optional<std::uint64_t> shots;
};

/// A trainable classifier with a flat parameter vector.
class Model {
  public:
    virtual ~Model() = default;

    [[nodiscard]] virtual std::size_t num_parameters() const = 0;
    [[nodiscard]] virtual int num_classes() const = 0;
    [[nodiscard]] virtual ParameterVector initial_parameters(Rng& rng) const = 0;

    /// Class probabilities for one feature vector.
    [[nodiscard]] virtual std::vector<double> predict(std::span<const double> params,
                                                      std::span<const double> features) const = 0;

    /// Class probabilities with noise and finite-shot sampling applied where
    /// the model supports them. Defaults to predict().
    [[nodiscard]] virtual std::vector<double> predict_readout(std::span<const double> params,
                                                              std::span<const double> features,
                                                              const Readout& readout, Rng& rng) const;

    [[nodiscard]] virtual LossAndGradient loss_and_gradient(std::span<const double> params,
                                                            std::span<const LabeledSample> batch) const = 0;
};

class QuantumModel final : public Model {
  public:
    QuantumModel(CircuitSpec spec, ClassMapping mapping);

    [[nodiscard]] const CircuitSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] const ClassMapping& mapping() const noexcept { return mapping_; }

    [[nodiscard]] std::size_t num_parameters() const override { return spec_.num_parameters; }
    [[nodiscard]] int num_classes() const override { return mapping_.num_classes; }
    [[nodiscard]] ParameterVector initial_parameters(Rng& rng) const override;
    [[nodiscard]] std::vector<double> predict(std::span<const double> params,
                                              std::span<const double> features) const override;
    [[nodiscard]] std::vector<double> predict_readout(std::span<const double> params,
                                                      std::span<const double> features, const Readout& readout,
                                                      Rng& rng) const override;
    [[nodiscard]] LossAndGradient loss_and_gradient(std::span<const double> params,
                                                    std::span<const LabeledSample> batch) const override;

  private:
    CircuitSpec spec_;
    ClassMapping mapping_;
};

/// Multinomial logistic regression: weights (C x d, row-major) followed by
/// C biases. The classical baseline for federated comparisons.
class SoftmaxModel final : public Model {
  public:
    SoftmaxModel(int num_classes, std::size_t feature_dim);

    [[nodiscard]] std::size_t feature_dim() const noexcept { return feature_dim_; }

    [[nodiscard]] std::size_t num_parameters() const override;
    [[nodiscard]] int num_classes() const override { return num_classes_; }
    [[nodiscard]] ParameterVector initial_parameters(Rng& rng) const override;
    [[nodiscard]] std::vector<double> predict(std::span<const double> params,
                                              std::span<const double> features) const override;
    [[nodiscard]] LossAndGradient loss_and_gradient(std::span<const double> params,
                                                    std::span<const LabeledSample> batch) const override;

  private:
    int num_classes_;
    std::size_t feature_dim_;
};

struct LocalTrainResult {
    ParameterVector params;
    /// Batch loss before each epoch's update, one entry per epoch.
    std::vector<double> losses;
};

/// Runs `hyper.local_epochs` epochs. Each epoch reshuffles the shard, takes
/// the first `batch_size` samples as its mini-batch and performs a single
/// optimizer step. Optimizer state starts fresh on every call.
[[nodiscard]] LocalTrainResult local_train(const Model& model, std::span<const LabeledSample> shard,
                                           ParameterVector init, const TrainingHyper& hyper, Rng& rng);

[[nodiscard]] LocalTrainResult classical_local_train(const SoftmaxModel& model, std::span<const LabeledSample> shard,
                                                     ParameterVector init, const TrainingHyper& hyper, Rng& rng);

}  // namespace qfl
