#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "qfl/error.hpp"
#include "qfl/service/config.hpp"
#include "qfl/service/export.hpp"

namespace qfl::service {

enum class RunStatus { kPending, kRunning, kCompleted, kFailed, kCancelled };

[[nodiscard]] const char* to_string(RunStatus status) noexcept;
[[nodiscard]] std::optional<RunStatus> parse_status(std::string_view text) noexcept;
[[nodiscard]] bool is_terminal(RunStatus status) noexcept;
/// PENDING -> RUNNING -> {COMPLETED, FAILED, CANCELLED}; PENDING may also
/// go straight to CANCELLED or FAILED. Nothing leaves a terminal state.
[[nodiscard]] bool can_transition(RunStatus from, RunStatus to) noexcept;

struct SimulationHandle {
    std::string id;
    RunStatus status = RunStatus::kPending;
    nlohmann::json config;
    std::string created_at;
    std::optional<std::string> error;
    int rounds_completed = 0;
    int total_rounds = 0;

    [[nodiscard]] nlohmann::json to_json() const;
};

class NotFoundError : public Error {
  public:
    using Error::Error;
};

/// The request conflicts with the current run state (HTTP 409).
class ConflictError : public Error {
  public:
    using Error::Error;
};

/// Too many runs are waiting (HTTP 429).
class QueueFullError : public Error {
  public:
    using Error::Error;
};

struct EventBatch {
    std::vector<nlohmann::json> rounds;
    /// Set once the run is terminal and every round event has been returned.
    std::optional<nlohmann::json> terminal;
};

struct DatasetSummary {
    std::string id;
    std::string filename;
    std::size_t num_features = 0;
    int num_classes = 0;
    std::size_t num_rows = 0;
    std::vector<std::string> label_map;

    [[nodiscard]] nlohmann::json to_json() const;
};

inline constexpr std::size_t kMaxUploadBytes = 50ULL * 1024 * 1024;

/// Owns every simulation run of a service instance: validation, a bounded
/// worker pool, append-only per-run event logs and on-disk persistence under
/// <state_dir>/runs/<id>/ and <state_dir>/datasets/.
class RunManager {
  public:
    struct Options {
        std::filesystem::path state_dir = "qfl_state";
        std::filesystem::path data_dir = BuiltinOptions::default_data_dir();
        int max_concurrent_runs = 2;
        std::size_t max_pending = 32;
    };

    explicit RunManager(Options options);
    ~RunManager();

    RunManager(const RunManager&) = delete;
    RunManager& operator=(const RunManager&) = delete;

    /// Throws ValidationError or QueueFullError.
    SimulationHandle create(const nlohmann::json& body);
    [[nodiscard]] SimulationHandle get(const std::string& id) const;
    [[nodiscard]] std::vector<SimulationHandle> list() const;

    /// PENDING runs cancel immediately; RUNNING runs stop after the round in
    /// flight. Throws ConflictError for terminal runs.
    SimulationHandle cancel(const std::string& id);

    /// Round events with round > after_round, waiting up to `timeout` for
    /// at least one new event or the terminal state.
    [[nodiscard]] EventBatch wait_events(const std::string& id, int after_round,
                                         std::chrono::milliseconds timeout) const;

    /// Throws ConflictError unless the run is COMPLETED or CANCELLED.
    [[nodiscard]] ExportBundle export_bundle(const std::string& id) const;

    /// Parses and stores an uploaded CSV. Defaults to the last column as
    /// label. Throws ParseError/ConfigError on bad input.
    DatasetSummary upload_dataset(std::string_view csv, std::string filename,
                                  std::optional<LabelColumn> label_column = std::nullopt);

    /// Blocks until no run is pending or running.
    void wait_idle() const;

    [[nodiscard]] const Options& options() const noexcept { return options_; }

  private:
    struct Run;

    void worker_loop(std::stop_token stop);
    void execute(const std::shared_ptr<Run>& run);
    void set_status(Run& run, RunStatus status, std::optional<std::string> error = std::nullopt);
    void persist_status(const Run& run) const;
    void append_log(Run& run, const std::string& line);
    void load_existing();
    [[nodiscard]] std::shared_ptr<Run> find(const std::string& id) const;
    [[nodiscard]] SimulationHandle handle_of(const Run& run) const;
    [[nodiscard]] std::filesystem::path run_dir(const std::string& id) const;

    Options options_;
    mutable std::mutex mutex_;
    std::condition_variable_any queue_cv_;
    mutable std::condition_variable_any events_cv_;
    std::map<std::string, std::shared_ptr<Run>> runs_;
    std::deque<std::shared_ptr<Run>> queue_;
    int active_ = 0;
    std::vector<std::jthread> workers_;
};

}  // namespace qfl::service
