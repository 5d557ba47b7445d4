#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stop_token>
#include <string>
#include <vector>

#include "qfl/data.hpp"
#include "qfl/error.hpp"
#include "qfl/learn.hpp"
#include "qfl/noise.hpp"

namespace qfl {

enum class Framework { kQfl, kClassicalFl };

/// Everything needed to reproduce a run, apart from the dataset itself.
struct SimulationConfig {
    Framework framework = Framework::kQfl;
    int num_clients = 5;
    int global_rounds = 20;
    TrainingHyper hyper;
    std::optional<int> num_qubits;
    std::optional<int> num_layers;
    PartitionMode partition = PartitionMode::kIid;
    int shards_per_client = 2;
    NoiseSpec noise;
    std::uint64_t seed = 0;
    /// Held-out fraction when the dataset has no dedicated test split.
    double test_fraction = 0.2;
    /// Upper bound on concurrently training clients; 0 picks the hardware
    /// concurrency. Results do not depend on this value.
    int max_parallel_clients = 0;

    /// Throws ConfigError on the first violated constraint.
    void validate() const;
};

struct GlobalModel {
    ParameterVector params;
    int round = 0;
};

struct ClientState {
    int client_id = 0;
    std::vector<LabeledSample> shard;
    ParameterVector params;
};

struct RoundMetrics {
    int round = 0;
    double test_loss = 0.0;
    double test_accuracy = 0.0;
    /// Last recorded batch loss of every client, in client order.
    std::vector<double> client_train_loss;
    /// All per-epoch batch losses of every client, in client order.
    std::vector<std::vector<double>> client_epoch_losses;
    double wall_time_ms = 0.0;

    [[nodiscard]] double mean_client_loss() const noexcept;
};

/// Size-weighted average sum_n |D_n| w_n / sum_n |D_n|.
[[nodiscard]] ParameterVector aggregate(std::span<const ParameterVector> client_params,
                                        std::span<const std::size_t> shard_sizes);

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
};

/// Index of the largest entry; ties resolve to the lowest index.
[[nodiscard]] int argmax_class(std::span<const double> probs);

[[nodiscard]] Evaluation evaluate(const Model& model, std::span<const double> params,
                                  std::span<const LabeledSample> test, const Readout& readout, Rng& rng);

/// Raised when one client fails inside a round; the round is discarded.
class ClientError : public Error {
  public:
    ClientError(int round, int client_id, const std::string& what)
        : Error("round " + std::to_string(round) + ", client " + std::to_string(client_id) + ": " + what),
          round_(round),
          client_id_(client_id) {}

    [[nodiscard]] int round() const noexcept { return round_; }
    [[nodiscard]] int client_id() const noexcept { return client_id_; }

  private:
    int round_;
    int client_id_;
};

/// A prepared federation: preprocessed data, client shards, model and the
/// current global parameters.
class Simulation {
  public:
    Simulation(SimulationConfig config, const DataBundle& data);

    [[nodiscard]] const SimulationConfig& config() const noexcept { return config_; }
    [[nodiscard]] const Model& model() const noexcept { return *model_; }
    [[nodiscard]] const GlobalModel& global() const noexcept { return global_; }
    [[nodiscard]] const std::vector<ClientState>& clients() const noexcept { return clients_; }
    [[nodiscard]] std::span<const LabeledSample> test_set() const noexcept { return test_; }

    /// Broadcast, train every client, aggregate and evaluate one round.
    RoundMetrics run_round();

  private:
    SimulationConfig config_;
    std::unique_ptr<Model> model_;
    std::vector<ClientState> clients_;
    std::vector<LabeledSample> test_;
    GlobalModel global_;
};

using MetricSink = std::function<void(const RoundMetrics&)>;

struct SimulationResult {
    GlobalModel final_model;
    std::vector<RoundMetrics> history;
    bool cancelled = false;
};

/// Runs config.global_rounds rounds, handing each RoundMetrics to `sink` as
/// soon as it is produced. A stop request is honoured between rounds.
[[nodiscard]] SimulationResult run_simulation(const SimulationConfig& config, const DataBundle& data,
                                              const MetricSink& sink = {}, std::stop_token stop = {});

[[nodiscard]] const char* to_string(Framework framework) noexcept;

}  // namespace qfl
