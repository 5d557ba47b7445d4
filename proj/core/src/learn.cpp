#include "qfl/learn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "qfl/error.hpp"

namespace qfl {

void TrainingHyper::validate() const {
    if (!(learning_rate > 0.0)) {
        throw ConfigError("learning_rate must be > 0");
    }
    if (local_epochs < 1) {
        throw ConfigError("local_epochs must be >= 1");
    }
    if (batch_size < 1) {
        throw ConfigError("batch_size must be >= 1");
    }
    if (shots && *shots == 0) {
        throw ConfigError("shots must be >= 1 or EXACT");
    }
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
        throw ConfigError("adam betas must lie in (0, 1)");
    }
    if (!(adam_eps > 0.0)) {
        throw ConfigError("adam_eps must be > 0");
    }
}

double cross_entropy(std::span<const double> probs, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= probs.size()) {
        throw StructuralError("label " + std::to_string(label) + " outside [0, " + std::to_string(probs.size()) +
                              ")");
    }
    return -std::log(std::max(probs[static_cast<std::size_t>(label)], kProbabilityFloor));
}

namespace {

void check_batch(std::span<const LabeledSample> batch) {
    if (batch.empty()) {
        throw StructuralError("batch must not be empty");
    }
}

// Sum over the first `count` outcomes of weight_i * |amp_i|^2.
double weighted_head(const StateVector& state, std::span<const double> weights) {
    double sum = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        sum += weights[i] * std::norm(state[i]);
    }
    return sum;
}

void apply_bound(StateVector& state, const GateOp& gate, std::span<const double> params, double shift = 0.0) {
    if (gate.angle_slot) {
        state.apply(gate, params[*gate.angle_slot] + shift);
    } else {
        state.apply(gate);
    }
}

}  // namespace

double batch_loss(const CircuitSpec& spec, std::span<const double> params, const ClassMapping& mapping,
                  std::span<const LabeledSample> batch) {
    check_batch(batch);
    double total = 0.0;
    for (const auto& sample : batch) {
        total += cross_entropy(predict_probs(spec, params, mapping, sample.features), sample.label);
    }
    return total / static_cast<double>(batch.size());
}

LossAndGradient parameter_shift_loss_and_gradient(const CircuitSpec& spec, std::span<const double> params,
                                                  const ClassMapping& mapping,
                                                  std::span<const LabeledSample> batch) {
    check_batch(batch);
    mapping.validate(spec.num_qubits);
    if (params.size() != spec.num_parameters) {
        throw StructuralError("circuit expects " + std::to_string(spec.num_parameters) + " parameters, got " +
                              std::to_string(params.size()));
    }
    const auto classes = static_cast<std::size_t>(mapping.num_classes);
    constexpr double kShift = std::numbers::pi / 2;

    LossAndGradient out;
    out.gradient.assign(spec.num_parameters, 0.0);
    std::vector<double> dloss_dp(classes);

    for (const auto& sample : batch) {
        if (sample.label < 0 || static_cast<std::size_t>(sample.label) >= classes) {
            throw StructuralError("label " + std::to_string(sample.label) + " outside [0, " +
                                  std::to_string(classes) + ")");
        }
        const auto label = static_cast<std::size_t>(sample.label);
        const StateVector encoded = amplitude_encode(sample.features, spec.num_qubits);
        const auto outcomes = probabilities(forward(spec, params, encoded));
        out.loss += cross_entropy(class_probabilities(outcomes, mapping), sample.label);

        // loss = -ln p_y + ln S with S the head mass. Flat (zero gradient)
        // where the uniform fallback or the log clamp is active.
        const double head = std::accumulate(outcomes.begin(), outcomes.begin() + static_cast<long>(classes), 0.0);
        if (head < 1e-12 || outcomes[label] / head < kProbabilityFloor) {
            continue;
        }
        std::fill(dloss_dp.begin(), dloss_dp.end(), 1.0 / head);
        dloss_dp[label] -= 1.0 / outcomes[label];

        StateVector prefix = encoded;
        for (std::size_t g = 0; g < spec.gates.size(); ++g) {
            const GateOp& gate = spec.gates[g];
            if (gate.angle_slot) {
                double shifted[2];
                for (int side = 0; side < 2; ++side) {
                    StateVector state = prefix;
                    apply_bound(state, gate, params, side == 0 ? kShift : -kShift);
                    for (std::size_t rest = g + 1; rest < spec.gates.size(); ++rest) {
                        apply_bound(state, spec.gates[rest], params);
                    }
                    shifted[side] = weighted_head(state, dloss_dp);
                }
                out.gradient[*gate.angle_slot] += 0.5 * (shifted[0] - shifted[1]);
            }
            apply_bound(prefix, gate, params);
        }
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    out.loss *= inv;
    for (auto& g : out.gradient) {
        g *= inv;
    }
    return out;
}

std::vector<double> parameter_shift_gradient(const CircuitSpec& spec, std::span<const double> params,
                                             const ClassMapping& mapping, std::span<const LabeledSample> batch) {
    return parameter_shift_loss_and_gradient(spec, params, mapping, batch).gradient;
}

void optimizer_step(std::span<double> params, std::span<const double> grad, OptimizerState& state,
                    const TrainingHyper& hyper) {
    if (params.size() != grad.size() || state.first_moment.size() != params.size() ||
        state.second_moment.size() != params.size()) {
        throw StructuralError("optimizer_step: parameter, gradient and state lengths differ");
    }
    ++state.step_count;
    if (hyper.optimizer == OptimizerKind::kSgd) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            params[i] -= hyper.learning_rate * grad[i];
        }
        return;
    }
    const double b1 = hyper.adam_beta1;
    const double b2 = hyper.adam_beta2;
    const auto t = static_cast<double>(state.step_count);
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        m = b1 * m + (1.0 - b1) * grad[i];
        v = b2 * v + (1.0 - b2) * grad[i] * grad[i];
        params[i] -= hyper.learning_rate * (m / c1) / (std::sqrt(v / c2) + hyper.adam_eps);
    }
}

std::vector<double> Model::predict_readout(std::span<const double> params, std::span<const double> features,
                                           const Readout& /*readout*/, Rng& /*rng*/) const {
    return predict(params, features);
}

QuantumModel::QuantumModel(CircuitSpec spec, ClassMapping mapping)
    : spec_(std::move(spec)), mapping_(mapping) {
    mapping_.validate(spec_.num_qubits);
}

ParameterVector QuantumModel::initial_parameters(Rng& rng) const { return init_parameters(spec_, rng); }

std::vector<double> QuantumModel::predict(std::span<const double> params, std::span<const double> features) const {
    return class_probabilities(outcome_probabilities(spec_, params, features), mapping_);
}

std::vector<double> QuantumModel::predict_readout(std::span<const double> params, std::span<const double> features,
                                                  const Readout& readout, Rng& rng) const {
    auto outcomes = apply_noise(outcome_probabilities(spec_, params, features), readout.noise);
    if (readout.shots) {
        outcomes = sample_frequencies(outcomes, *readout.shots, rng);
    }
    return class_probabilities(outcomes, mapping_);
}

LossAndGradient QuantumModel::loss_and_gradient(std::span<const double> params,
                                                std::span<const LabeledSample> batch) const {
    return parameter_shift_loss_and_gradient(spec_, params, mapping_, batch);
}

SoftmaxModel::SoftmaxModel(int num_classes, std::size_t feature_dim)
    : num_classes_(num_classes), feature_dim_(feature_dim) {
    if (num_classes < 1 || feature_dim < 1) {
        throw ConfigError("softmax model needs >= 1 class and >= 1 feature");
    }
}

std::size_t SoftmaxModel::num_parameters() const {
    return static_cast<std::size_t>(num_classes_) * (feature_dim_ + 1);
}

ParameterVector SoftmaxModel::initial_parameters(Rng& rng) const {
    std::uniform_real_distribution<double> small(-0.1, 0.1);
    ParameterVector params(num_parameters());
    for (auto& p : params) {
        p = small(rng);
    }
    return params;
}

std::vector<double> SoftmaxModel::predict(std::span<const double> params, std::span<const double> features) const {
    if (params.size() != num_parameters()) {
        throw StructuralError("softmax model expects " + std::to_string(num_parameters()) + " parameters, got " +
                              std::to_string(params.size()));
    }
    if (features.size() != feature_dim_) {
        throw StructuralError("softmax model expects " + std::to_string(feature_dim_) + " features, got " +
                              std::to_string(features.size()));
    }
    const auto classes = static_cast<std::size_t>(num_classes_);
    const std::size_t bias = classes * feature_dim_;
    std::vector<double> logits(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        double z = params[bias + c];
        for (std::size_t j = 0; j < feature_dim_; ++j) {
            z += params[c * feature_dim_ + j] * features[j];
        }
        logits[c] = z;
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (auto& z : logits) {
        z = std::exp(z - top);
        sum += z;
    }
    for (auto& z : logits) {
        z /= sum;
    }
    return logits;
}

LossAndGradient SoftmaxModel::loss_and_gradient(std::span<const double> params,
                                                std::span<const LabeledSample> batch) const {
    check_batch(batch);
    const auto classes = static_cast<std::size_t>(num_classes_);
    const std::size_t bias = classes * feature_dim_;
    LossAndGradient out;
    out.gradient.assign(num_parameters(), 0.0);
    for (const auto& sample : batch) {
        const auto probs = predict(params, sample.features);
        out.loss += cross_entropy(probs, sample.label);
        const auto label = static_cast<std::size_t>(sample.label);
        if (probs[label] < kProbabilityFloor) {
            continue;
        }
        for (std::size_t c = 0; c < classes; ++c) {
            const double delta = probs[c] - (c == label ? 1.0 : 0.0);
            for (std::size_t j = 0; j < feature_dim_; ++j) {
                out.gradient[c * feature_dim_ + j] += delta * sample.features[j];
            }
            out.gradient[bias + c] += delta;
        }
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    out.loss *= inv;
    for (auto& g : out.gradient) {
        g *= inv;
    }
    return out;
}

LocalTrainResult local_train(const Model& model, std::span<const LabeledSample> shard, ParameterVector init,
                             const TrainingHyper& hyper, Rng& rng) {
    if (shard.empty()) {
        throw ConfigError("client shard is empty");
    }
    if (init.size() != model.num_parameters()) {
        throw StructuralError("initial parameters have length " + std::to_string(init.size()) + ", model expects " +
                              std::to_string(model.num_parameters()));
    }
    if (hyper.batch_size < 1) {
        throw ConfigError("batch_size must be >= 1");
    }
    LocalTrainResult result{std::move(init), {}};
    OptimizerState state(result.params.size());
    std::vector<std::size_t> order(shard.size());
    std::vector<LabeledSample> batch;
    const std::size_t batch_size = std::min(shard.size(), static_cast<std::size_t>(hyper.batch_size));
    for (int epoch = 0; epoch < hyper.local_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        batch.clear();
        for (std::size_t i = 0; i < batch_size; ++i) {
            batch.push_back(shard[order[i]]);
        }
        const auto step = model.loss_and_gradient(result.params, batch);
        result.losses.push_back(step.loss);
        optimizer_step(result.params, step.gradient, state, hyper);
    }
    return result;
}

LocalTrainResult classical_local_train(const SoftmaxModel& model, std::span<const LabeledSample> shard,
                                       ParameterVector init, const TrainingHyper& hyper, Rng& rng) {
    return local_train(model, shard, std::move(init), hyper, rng);
}

}  // namespace qfl
