#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qfl/federate.hpp"

namespace qfl::service {

inline constexpr std::string_view kMetricsCsvHeader = "round,test_loss,test_accuracy,mean_client_loss,wall_time_ms";

/// Per-round table. Values are printed with 17 significant digits so the
/// file round-trips; wall_time_ms is written as 0 unless requested.
[[nodiscard]] std::string metrics_csv(std::span<const RoundMetrics> history, bool include_wall_time);

/// One human-readable line per round for terminal output.
[[nodiscard]] std::string metrics_line(const RoundMetrics& metrics, int total_rounds);

/// Event payload streamed to dashboards.
[[nodiscard]] nlohmann::json round_event(const RoundMetrics& metrics);
[[nodiscard]] RoundMetrics round_from_event(const nlohmann::json& event);

struct ArchiveEntry {
    std::string name;
    std::string content;
};

/// Files of a finished (or cancelled) run.
struct ExportBundle {
    std::string metrics_csv;
    std::string parameters_json;
    std::string config_json;
    std::string run_log;

    [[nodiscard]] std::vector<ArchiveEntry> entries() const;
    void write_to(const std::filesystem::path& dir) const;
};

[[nodiscard]] std::string parameters_json(std::span<const double> params, int round);

/// POSIX ustar archive of regular files.
[[nodiscard]] std::string make_tar(std::span<const ArchiveEntry> entries);
[[nodiscard]] std::vector<ArchiveEntry> read_tar(std::string_view archive);

}  // namespace qfl::service
