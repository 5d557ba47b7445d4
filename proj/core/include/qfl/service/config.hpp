#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qfl/data.hpp"
#include "qfl/error.hpp"
#include "qfl/federate.hpp"

namespace qfl::service {

/// Where the training data of a run comes from.
struct DatasetRef {
    /// A builtin name, "csv" (file on the server) or "upload" (an uploaded id).
    std::string name = "digits8x8";
    BlobOptions blobs;
    std::optional<std::string> path;
    std::optional<LabelColumn> label_column;
    std::optional<std::string> upload_id;

    friend bool operator==(const DatasetRef&, const DatasetRef&) = default;
};

/// The run document accepted by `qflsim run --config` and POST /api/simulations.
struct RunConfig {
    SimulationConfig sim;
    DatasetRef dataset;
    /// Write measured wall-clock times into metrics.csv. Off by default so
    /// the exported table is byte-identical for identical seeds.
    bool record_wall_time = false;
};

struct FieldError {
    std::string field;
    std::string message;
};

/// Every violated field of a rejected document.
class ValidationError : public ConfigError {
  public:
    explicit ValidationError(std::vector<FieldError> errors);
    ValidationError(std::string field, std::string message);

    [[nodiscard]] const std::vector<FieldError>& errors() const noexcept { return errors_; }
    [[nodiscard]] nlohmann::json to_json() const;

  private:
    std::vector<FieldError> errors_;
};

/// Parses and validates a run document. Unknown fields are rejected.
/// Throws ValidationError listing every problem found.
[[nodiscard]] RunConfig parse_run_config(const nlohmann::json& doc);

[[nodiscard]] RunConfig load_run_config(const std::filesystem::path& path);

/// Normalized document with every default filled in; parse_run_config of
/// the result yields an equal configuration.
[[nodiscard]] nlohmann::json to_json(const RunConfig& config);

[[nodiscard]] bool equivalent(const RunConfig& a, const RunConfig& b);

struct DatasetLocations {
    std::filesystem::path data_dir = BuiltinOptions::default_data_dir();
    /// Directory holding uploaded CSVs as <id>.csv plus <id>.json metadata.
    std::filesystem::path uploads_dir;
};

/// Loads the referenced data. Throws ValidationError on dataset problems.
[[nodiscard]] DataBundle resolve_dataset(const DatasetRef& ref, const DatasetLocations& where);

/// Cross-checks a config against its data (class count vs register size).
void check_compatibility(const RunConfig& config, const DataBundle& data);

}  // namespace qfl::service
