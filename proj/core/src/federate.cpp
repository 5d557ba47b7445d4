#include "qfl/federate.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <numeric>
#include <thread>

#include <spdlog/spdlog.h>

#include "qfl/error.hpp"
#include "qfl/random.hpp"

namespace qfl {

const char* to_string(Framework framework) noexcept {
    return framework == Framework::kQfl ? "QFL" : "CLASSICAL_FL";
}

void SimulationConfig::validate() const {
    if (num_clients < 1 || num_clients > kMaxClients) {
        throw ConfigError("num_clients must be in [1, " + std::to_string(kMaxClients) + "]");
    }
    if (global_rounds < 0) {
        throw ConfigError("global_rounds must be >= 0");
    }
    hyper.validate();
    noise.validate();
    if (framework == Framework::kQfl) {
        if (!num_qubits) {
            throw ConfigError("num_qubits is required for QFL");
        }
        if (!num_layers) {
            throw ConfigError("num_layers is required for QFL");
        }
        check_qubit_count(*num_qubits);
        if (*num_layers < 1) {
            throw ConfigError("num_layers must be >= 1");
        }
    } else if (num_qubits || num_layers) {
        throw ConfigError("num_qubits/num_layers only apply to QFL");
    }
    if (partition == PartitionMode::kNonIidLabelSkew && shards_per_client < 1) {
        throw ConfigError("shards_per_client must be >= 1");
    }
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ConfigError("test_fraction must be in (0, 1)");
    }
    if (max_parallel_clients < 0) {
        throw ConfigError("max_parallel_clients must be >= 0");
    }
}

double RoundMetrics::mean_client_loss() const noexcept {
    if (client_train_loss.empty()) {
        return 0.0;
    }
    return std::accumulate(client_train_loss.begin(), client_train_loss.end(), 0.0) /
           static_cast<double>(client_train_loss.size());
}

ParameterVector aggregate(std::span<const ParameterVector> client_params, std::span<const std::size_t> shard_sizes) {
    if (client_params.empty()) {
        throw StructuralError("aggregate: no client parameters");
    }
    if (client_params.size() != shard_sizes.size()) {
        throw StructuralError("aggregate: " + std::to_string(client_params.size()) + " parameter vectors but " +
                              std::to_string(shard_sizes.size()) + " shard sizes");
    }
    const std::size_t dim = client_params.front().size();
    std::size_t total = 0;
    for (std::size_t n = 0; n < client_params.size(); ++n) {
        if (client_params[n].size() != dim) {
            throw StructuralError("aggregate: client " + std::to_string(n) + " has " +
                                  std::to_string(client_params[n].size()) + " parameters, expected " +
                                  std::to_string(dim));
        }
        if (shard_sizes[n] == 0) {
            throw StructuralError("aggregate: client " + std::to_string(n) + " has an empty shard");
        }
        total += shard_sizes[n];
    }
    // |D_n| / D is a correctly rounded quotient of integers, so uniformly
    // scaling every size leaves the weights bit-identical.
    std::vector<double> weights(client_params.size());
    for (std::size_t n = 0; n < weights.size(); ++n) {
        weights[n] = static_cast<double>(shard_sizes[n]) / static_cast<double>(total);
    }
    ParameterVector out(dim, 0.0);
    for (std::size_t j = 0; j < dim; ++j) {
        double sum = 0.0;
        double lo = client_params.front()[j];
        double hi = lo;
        for (std::size_t n = 0; n < client_params.size(); ++n) {
            const double v = client_params[n][j];
            sum += weights[n] * v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        out[j] = std::clamp(sum, lo, hi);
    }
    return out;
}

int argmax_class(std::span<const double> probs) {
    if (probs.empty()) {
        throw StructuralError("argmax of an empty distribution");
    }
    return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

Evaluation evaluate(const Model& model, std::span<const double> params, std::span<const LabeledSample> test,
                    const Readout& readout, Rng& rng) {
    if (test.empty()) {
        throw StructuralError("evaluate: test split is empty");
    }
    Evaluation eval;
    std::size_t correct = 0;
    for (const auto& sample : test) {
        const auto probs = model.predict_readout(params, sample.features, readout, rng);
        eval.loss += cross_entropy(probs, sample.label);
        if (argmax_class(probs) == sample.label) {
            ++correct;
        }
    }
    eval.loss /= static_cast<double>(test.size());
    eval.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
    return eval;
}

namespace {

DataBundle prepared(const SimulationConfig& config, const DataBundle& data) {
    data.train.validate();
    Dataset train = data.train;
    Dataset test;
    if (data.test) {
        data.test->validate();
        if (data.test->feature_dim != train.feature_dim) {
            throw ConfigError("test split has " + std::to_string(data.test->feature_dim) + " features, train has " +
                              std::to_string(train.feature_dim));
        }
        test = *data.test;
        test.num_classes = std::max(test.num_classes, train.num_classes);
        train.num_classes = test.num_classes;
    } else {
        auto split = train_test_split(train, config.test_fraction, config.seed);
        train = std::move(split.train);
        test = std::move(split.test);
    }
    const auto scaling = FeatureScaling::fit(train);
    const std::optional<int> qubits = config.framework == Framework::kQfl ? config.num_qubits : std::nullopt;
    return DataBundle{preprocess(train, scaling, qubits), preprocess(test, scaling, qubits)};
}

}  // namespace

Simulation::Simulation(SimulationConfig config, const DataBundle& data) : config_(std::move(config)) {
    config_.validate();
    auto prepared_data = prepared(config_, data);
    const Dataset& train = prepared_data.train;
    const int classes = train.num_classes;

    if (config_.framework == Framework::kQfl) {
        ClassMapping mapping{classes};
        mapping.validate(*config_.num_qubits);
        model_ = std::make_unique<QuantumModel>(build_circuit(*config_.num_qubits, *config_.num_layers), mapping);
    } else {
        model_ = std::make_unique<SoftmaxModel>(classes, train.feature_dim);
    }

    const PartitionPlan plan{config_.partition, config_.num_clients, config_.shards_per_client, config_.seed};
    const auto shards = partition(train, plan);
    for (std::size_t c = 0; c < shards.size(); ++c) {
        clients_.push_back(ClientState{static_cast<int>(c), gather(train, shards[c]), {}});
    }
    test_ = std::move(prepared_data.test->samples);

    Rng init_rng = make_rng(config_.seed, Stream::kInit);
    global_.params = model_->initial_parameters(init_rng);
    global_.round = 0;
}

RoundMetrics Simulation::run_round() {
    const auto started = std::chrono::steady_clock::now();
    const int round = global_.round + 1;
    const std::size_t n = clients_.size();

    // Broadcast copies the global vector into every client.
    for (auto& client : clients_) {
        client.params = global_.params;
    }

    std::vector<LocalTrainResult> results(n);
    std::vector<std::exception_ptr> failures(n);
    auto train_client = [&](std::size_t c) {
        try {
            Rng rng = make_rng(config_.seed, Stream::kClient, static_cast<std::uint64_t>(clients_[c].client_id),
                               static_cast<std::uint64_t>(round));
            results[c] = local_train(*model_, clients_[c].shard, clients_[c].params, config_.hyper, rng);
        } catch (...) {
            failures[c] = std::current_exception();
        }
    };

    std::size_t workers = config_.max_parallel_clients > 0 ? static_cast<std::size_t>(config_.max_parallel_clients)
                                                          : std::max(1U, std::thread::hardware_concurrency());
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t c = 0; c < n; ++c) {
            train_client(c);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t c = next.fetch_add(1); c < n; c = next.fetch_add(1)) {
                    train_client(c);
                }
            });
        }
    }

    for (std::size_t c = 0; c < n; ++c) {
        if (failures[c]) {
            try {
                std::rethrow_exception(failures[c]);
            } catch (const std::exception& e) {
                throw ClientError(round, clients_[c].client_id, e.what());
            }
        }
    }

    std::vector<ParameterVector> updates;
    std::vector<std::size_t> sizes;
    RoundMetrics metrics;
    metrics.round = round;
    for (std::size_t c = 0; c < n; ++c) {
        clients_[c].params = results[c].params;
        updates.push_back(std::move(results[c].params));
        sizes.push_back(clients_[c].shard.size());
        metrics.client_train_loss.push_back(results[c].losses.empty() ? 0.0 : results[c].losses.back());
        metrics.client_epoch_losses.push_back(std::move(results[c].losses));
    }
    global_.params = aggregate(updates, sizes);
    global_.round = round;

    Rng eval_rng = make_rng(config_.seed, Stream::kEvaluate, static_cast<std::uint64_t>(round));
    const Readout readout{config_.noise, config_.hyper.shots};
    const auto eval = evaluate(*model_, global_.params, test_, readout, eval_rng);
    metrics.test_loss = eval.loss;
    metrics.test_accuracy = eval.accuracy;
    metrics.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return metrics;
}

SimulationResult run_simulation(const SimulationConfig& config, const DataBundle& data, const MetricSink& sink,
                                std::stop_token stop) {
    Simulation sim(config, data);
    SimulationResult result;
    for (int r = 0; r < config.global_rounds; ++r) {
        if (stop.stop_requested()) {
            result.cancelled = true;
            break;
        }
        auto metrics = sim.run_round();
        spdlog::debug("round {}: test_loss={:.6f} test_accuracy={:.4f}", metrics.round, metrics.test_loss,
                      metrics.test_accuracy);
        if (sink) {
            sink(metrics);
        }
        result.history.push_back(std::move(metrics));
    }
    result.final_model = sim.global();
    return result;
}

}  // namespace qfl
