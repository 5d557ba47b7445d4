#include "qfl/service/run_manager.hpp"

#include <ctime>
#include <fstream>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace qfl::service {

using nlohmann::json;
namespace fs = std::filesystem;

const char* to_string(RunStatus status) noexcept {
    switch (status) {
        case RunStatus::kPending:
            return "PENDING";
        case RunStatus::kRunning:
            return "RUNNING";
        case RunStatus::kCompleted:
            return "COMPLETED";
        case RunStatus::kFailed:
            return "FAILED";
        case RunStatus::kCancelled:
            return "CANCELLED";
    }
    return "UNKNOWN";
}

std::optional<RunStatus> parse_status(std::string_view text) noexcept {
    for (auto s : {RunStatus::kPending, RunStatus::kRunning, RunStatus::kCompleted, RunStatus::kFailed,
                   RunStatus::kCancelled}) {
        if (text == to_string(s)) {
            return s;
        }
    }
    return std::nullopt;
}

bool is_terminal(RunStatus status) noexcept {
    return status == RunStatus::kCompleted || status == RunStatus::kFailed || status == RunStatus::kCancelled;
}

bool can_transition(RunStatus from, RunStatus to) noexcept {
    switch (from) {
        case RunStatus::kPending:
            return to == RunStatus::kRunning || to == RunStatus::kCancelled || to == RunStatus::kFailed;
        case RunStatus::kRunning:
            return is_terminal(to);
        default:
            return false;
    }
}

json SimulationHandle::to_json() const {
    return {
        {"id", id},
        {"status", to_string(status)},
        {"config", config},
        {"created_at", created_at},
        {"error", error ? json(*error) : json(nullptr)},
        {"rounds_completed", rounds_completed},
        {"total_rounds", total_rounds},
    };
}

json DatasetSummary::to_json() const {
    return {
        {"id", id},
        {"filename", filename},
        {"num_features", num_features},
        {"num_classes", num_classes},
        {"num_rows", num_rows},
        {"label_map", label_map},
    };
}

struct RunManager::Run {
    std::string id;
    RunConfig config;
    json config_json;
    std::string created_at;
    RunStatus status = RunStatus::kPending;
    std::optional<std::string> error;
    std::vector<json> events;
    std::vector<RoundMetrics> history;
    std::string log;
    std::string parameters;
    std::shared_ptr<const DataBundle> data;
    std::stop_source stop;
};

namespace {

std::string utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string new_id(std::string_view prefix) {
    static std::mutex mutex;
    static std::mt19937_64 gen{std::random_device{}()};
    std::lock_guard lock(mutex);
    return fmt::format("{}{:012x}", prefix, gen() & 0xffffffffffffULL);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, std::string_view content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot write " + path.string());
        }
        out << content;
    }
    fs::rename(tmp, path);
}

void append_file(const fs::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out << content;
}

// Column count of the first line, honouring quotes.
std::size_t count_columns(std::string_view csv) {
    std::size_t columns = 1;
    bool quoted = false;
    for (char c : csv) {
        if (c == '"') {
            quoted = !quoted;
        } else if (!quoted && c == ',') {
            ++columns;
        } else if (!quoted && (c == '\n' || c == '\r')) {
            break;
        }
    }
    return columns;
}

}  // namespace

RunManager::RunManager(Options options) : options_(std::move(options)) {
    if (options_.max_concurrent_runs < 1) {
        throw ConfigError("max_concurrent_runs must be at least 1");
    }
    fs::create_directories(options_.state_dir / "runs");
    fs::create_directories(options_.state_dir / "datasets");
    load_existing();
    for (int i = 0; i < options_.max_concurrent_runs; ++i) {
        workers_.emplace_back([this](std::stop_token stop) { worker_loop(stop); });
    }
}

RunManager::~RunManager() {
    {
        std::lock_guard lock(mutex_);
        for (auto& [id, run] : runs_) {
            run->stop.request_stop();
        }
    }
    for (auto& worker : workers_) {
        worker.request_stop();
    }
    queue_cv_.notify_all();
    workers_.clear();
}

fs::path RunManager::run_dir(const std::string& id) const { return options_.state_dir / "runs" / id; }

void RunManager::load_existing() {
    for (const auto& entry : fs::directory_iterator(options_.state_dir / "runs")) {
        if (!entry.is_directory()) {
            continue;
        }
        const fs::path dir = entry.path();
        try {
            auto run = std::make_shared<Run>();
            run->id = dir.filename().string();
            run->config_json = json::parse(read_file(dir / "config.json"));
            run->config = parse_run_config(run->config_json);
            const json status = json::parse(read_file(dir / "status.json"));
            run->created_at = status.value("created_at", "");
            run->status = parse_status(status.at("status").get<std::string>()).value_or(RunStatus::kFailed);
            if (status.contains("error") && status["error"].is_string()) {
                run->error = status["error"].get<std::string>();
            }
            std::istringstream events(read_file(dir / "metrics.jsonl"));
            for (std::string line; std::getline(events, line);) {
                if (!line.empty()) {
                    auto event = json::parse(line);
                    run->history.push_back(round_from_event(event));
                    run->events.push_back(std::move(event));
                }
            }
            run->log = read_file(dir / "run.log");
            run->parameters = read_file(dir / "parameters.json");
            if (!is_terminal(run->status)) {
                run->status = RunStatus::kFailed;
                run->error = "interrupted by service restart";
                persist_status(*run);
            }
            runs_.emplace(run->id, std::move(run));
        } catch (const std::exception& e) {
            spdlog::warn("skipping unreadable run directory {}: {}", dir.string(), e.what());
        }
    }
}

SimulationHandle RunManager::handle_of(const Run& run) const {
    SimulationHandle h;
    h.id = run.id;
    h.status = run.status;
    h.config = run.config_json;
    h.created_at = run.created_at;
    h.error = run.error;
    h.rounds_completed = static_cast<int>(run.events.size());
    h.total_rounds = run.config.sim.global_rounds;
    return h;
}

void RunManager::persist_status(const Run& run) const {
    json doc = handle_of(run).to_json();
    doc.erase("config");
    write_file(run_dir(run.id) / "status.json", doc.dump(2) + "\n");
}

void RunManager::append_log(Run& run, const std::string& line) {
    const std::string text = fmt::format("{} {}\n", utc_now(), line);
    run.log += text;
    append_file(run_dir(run.id) / "run.log", text);
}

void RunManager::set_status(Run& run, RunStatus status, std::optional<std::string> error) {
    if (!can_transition(run.status, status)) {
        throw StructuralError(fmt::format("illegal transition {} -> {}", to_string(run.status), to_string(status)));
    }
    run.status = status;
    run.error = std::move(error);
    persist_status(run);
    append_log(run, fmt::format("status {}{}", to_string(status), run.error ? ": " + *run.error : ""));
    events_cv_.notify_all();
}

std::shared_ptr<RunManager::Run> RunManager::find(const std::string& id) const {
    const auto it = runs_.find(id);
    if (it == runs_.end()) {
        throw NotFoundError("no simulation '" + id + "'");
    }
    return it->second;
}

SimulationHandle RunManager::create(const json& body) {
    RunConfig config = parse_run_config(body);
    const DatasetLocations where{options_.data_dir, options_.state_dir / "datasets"};
    auto data = std::make_shared<const DataBundle>(resolve_dataset(config.dataset, where));
    check_compatibility(config, *data);

    std::lock_guard lock(mutex_);
    if (queue_.size() >= options_.max_pending) {
        throw QueueFullError(fmt::format("{} simulations already waiting", queue_.size()));
    }
    auto run = std::make_shared<Run>();
    run->id = new_id("sim-");
    run->config_json = to_json(config);
    run->config = std::move(config);
    run->created_at = utc_now();
    run->data = std::move(data);
    run->parameters = parameters_json({}, 0);
    fs::create_directories(run_dir(run->id));
    write_file(run_dir(run->id) / "config.json", run->config_json.dump(2) + "\n");
    write_file(run_dir(run->id) / "metrics.jsonl", "");
    write_file(run_dir(run->id) / "parameters.json", run->parameters);
    persist_status(*run);
    append_log(*run, "created");
    runs_.emplace(run->id, run);
    queue_.push_back(run);
    queue_cv_.notify_one();
    return handle_of(*run);
}

SimulationHandle RunManager::get(const std::string& id) const {
    std::lock_guard lock(mutex_);
    return handle_of(*find(id));
}

std::vector<SimulationHandle> RunManager::list() const {
    std::lock_guard lock(mutex_);
    std::vector<SimulationHandle> out;
    out.reserve(runs_.size());
    for (const auto& [id, run] : runs_) {
        out.push_back(handle_of(*run));
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return std::tie(a.created_at, a.id) < std::tie(b.created_at, b.id); });
    return out;
}

SimulationHandle RunManager::cancel(const std::string& id) {
    std::lock_guard lock(mutex_);
    auto run = find(id);
    if (is_terminal(run->status)) {
        throw ConflictError(fmt::format("simulation '{}' is already {}", id, to_string(run->status)));
    }
    if (run->status == RunStatus::kPending) {
        std::erase(queue_, run);
        run->data.reset();
        set_status(*run, RunStatus::kCancelled);
    } else {
        run->stop.request_stop();
        append_log(*run, "cancel requested");
    }
    return handle_of(*run);
}

EventBatch RunManager::wait_events(const std::string& id, int after_round, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    auto run = find(id);
    const auto first = static_cast<std::size_t>(std::max(after_round, 0));
    events_cv_.wait_for(lock, timeout, [&] { return run->events.size() > first || is_terminal(run->status); });
    EventBatch batch;
    for (std::size_t i = first; i < run->events.size(); ++i) {
        batch.rounds.push_back(run->events[i]);
    }
    if (is_terminal(run->status)) {
        json terminal = {{"status", to_string(run->status)}, {"rounds_completed", run->events.size()}};
        terminal["error"] = run->error ? json(*run->error) : json(nullptr);
        batch.terminal = std::move(terminal);
    }
    return batch;
}

ExportBundle RunManager::export_bundle(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto run = find(id);
    if (run->status != RunStatus::kCompleted && run->status != RunStatus::kCancelled) {
        throw ConflictError(fmt::format("simulation '{}' is {}; only finished runs can be exported", id,
                                        to_string(run->status)));
    }
    ExportBundle bundle;
    bundle.metrics_csv = metrics_csv(run->history, run->config.record_wall_time);
    bundle.parameters_json = run->parameters;
    bundle.config_json = run->config_json.dump(2) + "\n";
    bundle.run_log = run->log;
    return bundle;
}

DatasetSummary RunManager::upload_dataset(std::string_view csv, std::string filename,
                                          std::optional<LabelColumn> label_column) {
    if (csv.size() > kMaxUploadBytes) {
        throw ConfigError(fmt::format("upload exceeds {} bytes", kMaxUploadBytes));
    }
    const LabelColumn column = label_column.value_or(LabelColumn{count_columns(csv) - 1});
    std::istringstream in{std::string(csv)};
    const Dataset ds = parse_csv(in, column, filename);

    DatasetSummary summary;
    summary.id = new_id("ds-");
    summary.filename = filename;
    summary.num_features = ds.feature_dim;
    summary.num_classes = ds.num_classes;
    summary.num_rows = ds.size();
    summary.label_map = ds.label_names;

    json meta = summary.to_json();
    if (const auto* name = std::get_if<std::string>(&column)) {
        meta["label_column"] = *name;
    } else {
        meta["label_column"] = std::get<std::size_t>(column);
    }
    const fs::path dir = options_.state_dir / "datasets";
    write_file(dir / (summary.id + ".csv"), csv);
    write_file(dir / (summary.id + ".json"), meta.dump(2) + "\n");
    spdlog::info("stored dataset {} ({} rows, {} classes)", summary.id, summary.num_rows, summary.num_classes);
    return summary;
}

void RunManager::wait_idle() const {
    std::unique_lock lock(mutex_);
    events_cv_.wait(lock, [&] {
        return queue_.empty() && active_ == 0;
    });
}

void RunManager::worker_loop(std::stop_token stop) {
    while (true) {
        std::shared_ptr<Run> run;
        {
            std::unique_lock lock(mutex_);
            if (!queue_cv_.wait(lock, stop, [&] { return !queue_.empty(); })) {
                return;
            }
            run = queue_.front();
            queue_.pop_front();
            ++active_;
            set_status(*run, RunStatus::kRunning);
        }
        execute(run);
        {
            std::lock_guard lock(mutex_);
            --active_;
        }
        events_cv_.notify_all();
    }
}

void RunManager::execute(const std::shared_ptr<Run>& run) {
    const fs::path dir = run_dir(run->id);
    const int total = run->config.sim.global_rounds;
    auto sink = [&](const RoundMetrics& m) {
        std::lock_guard lock(mutex_);
        json event = round_event(m);
        append_file(dir / "metrics.jsonl", event.dump() + "\n");
        run->events.push_back(std::move(event));
        run->history.push_back(m);
        append_log(*run, metrics_line(m, total));
        events_cv_.notify_all();
    };
    try {
        const auto result = run_simulation(run->config.sim, *run->data, sink, run->stop.get_token());
        std::lock_guard lock(mutex_);
        run->parameters = parameters_json(result.final_model.params, result.final_model.round);
        write_file(dir / "parameters.json", run->parameters);
        run->data.reset();
        set_status(*run, result.cancelled ? RunStatus::kCancelled : RunStatus::kCompleted);
    } catch (const std::exception& e) {
        spdlog::error("simulation {} failed: {}", run->id, e.what());
        std::lock_guard lock(mutex_);
        run->data.reset();
        set_status(*run, RunStatus::kFailed, e.what());
    }
}

}  // namespace qfl::service
