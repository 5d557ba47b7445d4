#include <chrono>
#include <fstream>
#include <random>
#include <thread>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "qfl/service/run_manager.hpp"
#include "temp_dir.hpp"

using namespace qfl;
using namespace qfl::service;
using nlohmann::json;
using namespace std::chrono_literals;

namespace {

json blob_run(int rounds) {
    return json{{"framework", "QFL"},
                {"num_qubits", 2},
                {"num_layers", 1},
                {"num_clients", 2},
                {"global_rounds", rounds},
                {"local_epochs", 1},
                {"learning_rate", 0.05},
                {"seed", 3},
                {"dataset", {{"name", "synthetic_blobs"}, {"num_classes", 2}, {"num_features", 4}, {"num_samples", 60}}}};
}

RunManager::Options options(const TempDir& dir, int workers = 1) {
    RunManager::Options o;
    o.state_dir = dir.path();
    o.max_concurrent_runs = workers;
    return o;
}

SimulationHandle wait_terminal(RunManager& manager, const std::string& id) {
    for (int round = 0;;) {
        const auto batch = manager.wait_events(id, round, 1000ms);
        round += static_cast<int>(batch.rounds.size());
        if (batch.terminal) {
            return manager.get(id);
        }
    }
}

void wait_running(RunManager& manager, const std::string& id) {
    while (manager.get(id).status == RunStatus::kPending) {
        std::this_thread::sleep_for(1ms);
    }
}

bool reachable(RunStatus from, RunStatus to) {
    return from == to || can_transition(from, to) ||
           (from == RunStatus::kPending && can_transition(RunStatus::kRunning, to));
}

}  // namespace

TEST(RunStatusMachine, Transitions) {
    using S = RunStatus;
    EXPECT_TRUE(can_transition(S::kPending, S::kRunning));
    EXPECT_TRUE(can_transition(S::kPending, S::kCancelled));
    EXPECT_TRUE(can_transition(S::kRunning, S::kCompleted));
    EXPECT_TRUE(can_transition(S::kRunning, S::kFailed));
    EXPECT_FALSE(can_transition(S::kPending, S::kCompleted));
    EXPECT_FALSE(can_transition(S::kRunning, S::kPending));
    for (S t : {S::kCompleted, S::kFailed, S::kCancelled}) {
        EXPECT_TRUE(is_terminal(t));
        for (S to : {S::kPending, S::kRunning, S::kCompleted, S::kFailed, S::kCancelled}) {
            EXPECT_FALSE(can_transition(t, to));
        }
    }
    for (S s : {S::kPending, S::kRunning, S::kCompleted, S::kFailed, S::kCancelled}) {
        EXPECT_EQ(parse_status(to_string(s)), s);
    }
    EXPECT_FALSE(parse_status("DONE").has_value());
}

TEST(RunManager, CompletesAndStreamsEveryRound) {
    TempDir dir;
    RunManager manager(options(dir));
    const auto created = manager.create(blob_run(5));
    EXPECT_EQ(created.id.rfind("sim-", 0), 0U);
    EXPECT_EQ(created.total_rounds, 5);
    const auto done = wait_terminal(manager, created.id);
    EXPECT_EQ(done.status, RunStatus::kCompleted);
    EXPECT_EQ(done.rounds_completed, 5);
    const auto batch = manager.wait_events(created.id, 0, 0ms);
    ASSERT_EQ(batch.rounds.size(), 5U);
    for (int r = 0; r < 5; ++r) {
        EXPECT_EQ(batch.rounds[static_cast<std::size_t>(r)]["round"], r + 1);
    }
    EXPECT_EQ((*batch.terminal)["status"], "COMPLETED");
    EXPECT_EQ(manager.wait_events(created.id, 3, 0ms).rounds.size(), 2U);

    const auto files = manager.export_bundle(created.id).entries();
    ASSERT_EQ(files.size(), 4U);
    EXPECT_EQ(std::count(files[0].content.begin(), files[0].content.end(), '\n'), 6);
    EXPECT_EQ(json::parse(files[1].content)["round"], 5);
    EXPECT_NE(files[3].content.find("status COMPLETED"), std::string::npos);
    for (const char* name : {"config.json", "metrics.jsonl", "parameters.json", "status.json", "run.log"}) {
        EXPECT_TRUE(std::filesystem::exists(dir.path() / "runs" / created.id / name)) << name;
    }
}

TEST(RunManager, HandleJsonFields) {
    TempDir dir;
    RunManager manager(options(dir));
    const auto h = manager.create(blob_run(1));
    const auto j = h.to_json();
    for (const char* key : {"id", "status", "config", "created_at", "error", "rounds_completed", "total_rounds"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
    EXPECT_TRUE(j["error"].is_null());
    EXPECT_EQ(j["config"]["num_qubits"], 2);
}

TEST(RunManager, ValidationAndNotFound) {
    TempDir dir;
    RunManager manager(options(dir));
    auto bad = blob_run(2);
    bad["num_qubits"] = 0;
    EXPECT_THROW((void)manager.create(bad), ValidationError);
    auto too_many_classes = blob_run(2);
    too_many_classes["dataset"]["num_classes"] = 5;
    try {
        (void)manager.create(too_many_classes);
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("num_classes exceeds 2^Q"), std::string::npos);
    }
    EXPECT_THROW((void)manager.get("sim-missing"), NotFoundError);
    EXPECT_THROW((void)manager.cancel("sim-missing"), NotFoundError);
    EXPECT_THROW((void)manager.wait_events("sim-missing", 0, 0ms), NotFoundError);
    EXPECT_TRUE(manager.list().empty());
}

TEST(RunManager, CancelPendingRunningAndTerminal) {
    TempDir dir;
    RunManager manager(options(dir));
    const auto running = manager.create(blob_run(1'000'000));
    const auto pending = manager.create(blob_run(3));
    wait_running(manager, running.id);
    EXPECT_EQ(manager.get(pending.id).status, RunStatus::kPending);
    EXPECT_THROW((void)manager.export_bundle(pending.id), ConflictError);
    EXPECT_THROW((void)manager.export_bundle(running.id), ConflictError);

    EXPECT_EQ(manager.cancel(pending.id).status, RunStatus::kCancelled);
    EXPECT_THROW((void)manager.cancel(pending.id), ConflictError);

    (void)manager.wait_events(running.id, 0, 10s);
    (void)manager.cancel(running.id);
    const auto stopped = wait_terminal(manager, running.id);
    EXPECT_EQ(stopped.status, RunStatus::kCancelled);
    EXPECT_GE(stopped.rounds_completed, 1);
    EXPECT_LT(stopped.rounds_completed, 1'000'000);
    EXPECT_THROW((void)manager.cancel(running.id), ConflictError);

    const auto bundle = manager.export_bundle(running.id);
    EXPECT_EQ(json::parse(bundle.parameters_json)["round"], stopped.rounds_completed);
    EXPECT_EQ(manager.export_bundle(pending.id).metrics_csv, std::string(kMetricsCsvHeader) + "\n");
}

TEST(RunManager, QueueLimit) {
    TempDir dir;
    auto o = options(dir);
    o.max_pending = 1;
    RunManager manager(o);
    const auto first = manager.create(blob_run(1'000'000));
    wait_running(manager, first.id);
    const auto second = manager.create(blob_run(1));
    EXPECT_THROW((void)manager.create(blob_run(1)), QueueFullError);
    (void)manager.cancel(second.id);
    (void)manager.cancel(first.id);
    manager.wait_idle();
}

TEST(RunManager, StatusSequencesAreLegal) {
    TempDir dir;
    RunManager manager(options(dir, 2));
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> rounds(1, 40);
    std::bernoulli_distribution coin(0.4);
    std::vector<std::string> ids;
    std::map<std::string, std::vector<RunStatus>> seen;
    for (int i = 0; i < 12; ++i) {
        ids.push_back(manager.create(blob_run(rounds(rng))).id);
    }
    bool all_terminal = false;
    while (!all_terminal) {
        all_terminal = true;
        for (const auto& id : ids) {
            auto status = manager.get(id).status;
            if (!is_terminal(status) && coin(rng)) {
                try {
                    status = manager.cancel(id).status;
                } catch (const ConflictError&) {
                    status = manager.get(id).status;
                    EXPECT_TRUE(is_terminal(status));
                }
            }
            seen[id].push_back(status);
            all_terminal = all_terminal && is_terminal(status);
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(coin(rng) ? 1 : 0));
    }
    for (const auto& [id, statuses] : seen) {
        for (std::size_t i = 1; i < statuses.size(); ++i) {
            EXPECT_TRUE(reachable(statuses[i - 1], statuses[i]))
                << id << ": " << to_string(statuses[i - 1]) << " -> " << to_string(statuses[i]);
        }
        const auto final = manager.get(id);
        EXPECT_NE(final.status, RunStatus::kFailed);
        if (final.status == RunStatus::kCompleted) {
            EXPECT_EQ(final.rounds_completed, final.total_rounds);
        }
    }
}

TEST(RunManager, RestartKeepsFinishedRunsAndFailsInterrupted) {
    TempDir dir;
    std::string done;
    std::string interrupted;
    {
        RunManager manager(options(dir));
        done = manager.create(blob_run(3)).id;
        interrupted = manager.create(blob_run(2)).id;
        manager.wait_idle();
    }
    // Simulate a crash mid-run.
    const auto status_path = dir.path() / "runs" / interrupted / "status.json";
    std::ifstream in(status_path);
    auto status = json::parse(in);
    in.close();
    status["status"] = "RUNNING";
    std::ofstream(status_path) << status.dump();

    RunManager manager(options(dir));
    EXPECT_EQ(manager.list().size(), 2U);
    const auto kept = manager.get(done);
    EXPECT_EQ(kept.status, RunStatus::kCompleted);
    EXPECT_EQ(kept.rounds_completed, 3);
    EXPECT_EQ(manager.export_bundle(done).entries().size(), 4U);
    const auto failed = manager.get(interrupted);
    EXPECT_EQ(failed.status, RunStatus::kFailed);
    EXPECT_EQ(failed.error.value_or(""), "interrupted by service restart");
}

TEST(RunManager, UploadedDatasetCanBeTrainedOn) {
    TempDir dir;
    RunManager manager(options(dir));
    std::string csv = "a,b,label\n";
    for (int i = 0; i < 40; ++i) {
        csv += std::to_string(i % 2) + "," + std::to_string(i % 3) + "," + (i % 2 ? "cat" : "dog") + "\n";
    }
    const auto summary = manager.upload_dataset(csv, "pets.csv");
    EXPECT_EQ(summary.id.rfind("ds-", 0), 0U);
    EXPECT_EQ(summary.num_rows, 40U);
    EXPECT_EQ(summary.num_features, 2U);
    EXPECT_EQ(summary.num_classes, 2);
    EXPECT_EQ(summary.label_map, (std::vector<std::string>{"dog", "cat"}));

    auto body = blob_run(2);
    body["dataset"] = {{"name", "upload"}, {"id", summary.id}};
    const auto run = manager.create(body);
    EXPECT_EQ(wait_terminal(manager, run.id).status, RunStatus::kCompleted);

    body["dataset"]["id"] = "ds-unknown";
    EXPECT_THROW((void)manager.create(body), ValidationError);
    EXPECT_THROW((void)manager.upload_dataset("a,b\n1,x\n2,y\nz,1\n", "bad.csv"), ParseError);
}

TEST(RunManager, UploadByNamedLabelColumn) {
    TempDir dir;
    RunManager manager(options(dir));
    const auto summary = manager.upload_dataset("y,f\n0,1.5\n1,2.5\n", "t.csv", LabelColumn{std::string("y")});
    EXPECT_EQ(summary.num_features, 1U);
    EXPECT_EQ(summary.num_rows, 2U);
}
