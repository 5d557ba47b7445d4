#include "qfl/service/export.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "qfl/error.hpp"

namespace qfl::service {

using nlohmann::json;

std::string metrics_csv(std::span<const RoundMetrics> history, bool include_wall_time) {
    std::string out(kMetricsCsvHeader);
    out += '\n';
    for (const auto& m : history) {
        out += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.3f}\n", m.round, m.test_loss, m.test_accuracy,
                           m.mean_client_loss(), include_wall_time ? m.wall_time_ms : 0.0);
    }
    return out;
}

std::string metrics_line(const RoundMetrics& m, int total_rounds) {
    return fmt::format("round {:>3}/{:<3} test_loss={:.6f} test_accuracy={:.4f} mean_client_loss={:.6f} ({:.0f} ms)",
                       m.round, total_rounds, m.test_loss, m.test_accuracy, m.mean_client_loss(), m.wall_time_ms);
}

json round_event(const RoundMetrics& m) {
    return {
        {"round", m.round},
        {"test_loss", m.test_loss},
        {"test_accuracy", m.test_accuracy},
        {"mean_client_loss", m.mean_client_loss()},
        {"client_train_loss", m.client_train_loss},
        {"client_epoch_losses", m.client_epoch_losses},
        {"wall_time_ms", m.wall_time_ms},
    };
}

RoundMetrics round_from_event(const json& event) {
    RoundMetrics m;
    m.round = event.at("round").get<int>();
    m.test_loss = event.at("test_loss").get<double>();
    m.test_accuracy = event.at("test_accuracy").get<double>();
    m.client_train_loss = event.at("client_train_loss").get<std::vector<double>>();
    m.client_epoch_losses = event.at("client_epoch_losses").get<std::vector<std::vector<double>>>();
    m.wall_time_ms = event.at("wall_time_ms").get<double>();
    return m;
}

std::string parameters_json(std::span<const double> params, int round) {
    json doc = {{"round", round}, {"num_parameters", params.size()},
                {"parameters", std::vector<double>(params.begin(), params.end())}};
    return doc.dump(2) + "\n";
}

std::vector<ArchiveEntry> ExportBundle::entries() const {
    return {
        {"metrics.csv", metrics_csv},
        {"parameters.json", parameters_json},
        {"config.json", config_json},
        {"run.log", run_log},
    };
}

void ExportBundle::write_to(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (const auto& entry : entries()) {
        std::ofstream out(dir / entry.name, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot write " + (dir / entry.name).string());
        }
        out << entry.content;
    }
}

namespace {

constexpr std::size_t kBlock = 512;

void put_octal(char* field, std::size_t width, std::uint64_t value) {
    // width - 1 digits followed by NUL.
    const auto text = fmt::format("{:0{}o}", value, width - 1);
    std::memcpy(field, text.data(), width - 1);
    field[width - 1] = '\0';
}

std::uint64_t get_octal(const char* field, std::size_t width) {
    std::uint64_t value = 0;
    for (std::size_t i = 0; i < width && field[i] != '\0' && field[i] != ' '; ++i) {
        if (field[i] < '0' || field[i] > '7') {
            throw Error("corrupt tar header");
        }
        value = value * 8 + static_cast<std::uint64_t>(field[i] - '0');
    }
    return value;
}

}  // namespace

std::string make_tar(std::span<const ArchiveEntry> entries) {
    std::string out;
    for (const auto& entry : entries) {
        if (entry.name.empty() || entry.name.size() > 99) {
            throw StructuralError("tar entry names must be 1..99 characters");
        }
        std::array<char, kBlock> header{};
        std::memcpy(header.data(), entry.name.data(), entry.name.size());
        put_octal(&header[100], 8, 0644);
        put_octal(&header[108], 8, 0);
        put_octal(&header[116], 8, 0);
        put_octal(&header[124], 12, entry.content.size());
        put_octal(&header[136], 12, 0);
        std::memset(&header[148], ' ', 8);
        header[156] = '0';
        std::memcpy(&header[257], "ustar", 6);
        std::memcpy(&header[263], "00", 2);
        std::uint64_t checksum = 0;
        for (char c : header) {
            checksum += static_cast<unsigned char>(c);
        }
        put_octal(&header[148], 7, checksum);
        header[155] = ' ';
        out.append(header.data(), header.size());
        out += entry.content;
        out.append((kBlock - entry.content.size() % kBlock) % kBlock, '\0');
    }
    out.append(2 * kBlock, '\0');
    return out;
}

std::vector<ArchiveEntry> read_tar(std::string_view archive) {
    std::vector<ArchiveEntry> entries;
    std::size_t pos = 0;
    while (pos + kBlock <= archive.size()) {
        const char* header = archive.data() + pos;
        if (header[0] == '\0') {
            break;
        }
        ArchiveEntry entry;
        entry.name.assign(header, strnlen(header, 100));
        const auto size = get_octal(header + 124, 12);
        pos += kBlock;
        if (pos + size > archive.size()) {
            throw Error("truncated tar archive");
        }
        entry.content.assign(archive.substr(pos, size));
        pos += size + (kBlock - size % kBlock) % kBlock;
        entries.push_back(std::move(entry));
    }
    return entries;
}

}  // namespace qfl::service
