#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "qfl/service/config.hpp"
#include "qfl/service/export.hpp"
#include "qfl/service/http_server.hpp"
#include "qfl/service/run_manager.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kInvalid = 2, kRuntime = 3 };

struct RunArgs {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    bool headless = false;
    std::string data_dir;
};

struct ServeArgs {
    std::string bind = "127.0.0.1:5000";
    std::string state_dir = "qfl_state";
    std::string static_dir = "dashboard/dist";
    std::string data_dir;
    int max_concurrent_runs = 2;
};

void print_validation(const qfl::service::ValidationError& e) {
    std::cerr << "invalid configuration:\n";
    for (const auto& f : e.errors()) {
        std::cerr << "  " << f.field << ": " << f.message << "\n";
    }
}

int run_command(const RunArgs& args) {
    using namespace qfl::service;
    RunConfig config;
    qfl::DataBundle data;
    try {
        config = load_run_config(args.config);
        if (args.seed) {
            config.sim.seed = *args.seed;
        }
        DatasetLocations where;
        if (!args.data_dir.empty()) {
            where.data_dir = args.data_dir;
        }
        data = resolve_dataset(config.dataset, where);
        check_compatibility(config, data);
    } catch (const ValidationError& e) {
        print_validation(e);
        return kInvalid;
    } catch (const qfl::ConfigError& e) {
        std::cerr << "invalid configuration: " << e.what() << "\n";
        return kInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }

    std::string log;
    const int total = config.sim.global_rounds;
    auto sink = [&](const qfl::RoundMetrics& m) {
        const std::string line = qfl::service::metrics_line(m, total);
        std::cout << line << std::endl;
        log += line + "\n";
    };
    try {
        if (!args.headless) {
            spdlog::info("{} run: {} clients, {} rounds, seed {}", qfl::to_string(config.sim.framework),
                         config.sim.num_clients, total, config.sim.seed);
        }
        const auto result = qfl::run_simulation(config.sim, data, sink);
        log += "status COMPLETED\n";
        if (!args.out.empty()) {
            ExportBundle bundle;
            bundle.metrics_csv = metrics_csv(result.history, config.record_wall_time);
            bundle.parameters_json = parameters_json(result.final_model.params, result.final_model.round);
            bundle.config_json = to_json(config).dump(2) + "\n";
            bundle.run_log = log;
            bundle.write_to(args.out);
        }
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << "\n";
        return kRuntime;
    }
    return kOk;
}

int serve_command(const ServeArgs& args) {
    using namespace qfl::service;
    // Handle termination signals synchronously on the main thread.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);
    try {
        RunManager::Options manager_options;
        manager_options.state_dir = args.state_dir;
        if (!args.data_dir.empty()) {
            manager_options.data_dir = args.data_dir;
        }
        manager_options.max_concurrent_runs = args.max_concurrent_runs;
        RunManager runs(manager_options);

        HttpServer::Options server_options;
        server_options.bind = BindAddress::parse(args.bind);
        server_options.static_dir = args.static_dir;
        HttpServer server(runs, server_options);
        const int port = server.start();
        std::cerr << "serving on http://" << server_options.bind.host << ":" << port << std::endl;
        int sig = 0;
        sigwait(&signals, &sig);
        spdlog::info("shutting down");
        server.stop();
    } catch (const qfl::ConfigError& e) {
        std::cerr << "invalid option: " << e.what() << "\n";
        return kInvalid;
    } catch (const std::exception& e) {
        std::cerr << "startup failed: " << e.what() << "\n";
        return kRuntime;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("qflsim"));

    CLI::App app{"Quantum federated learning simulator"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Run one simulation and export its results");
    run_cmd->add_option("--config", run.config, "Run document (JSON)")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--out", run.out, "Directory for metrics.csv, parameters.json, config.json, run.log");
    run_cmd->add_option("--seed", run.seed, "Override the document's seed");
    run_cmd->add_flag("--headless", run.headless, "Print only per-round metrics");
    run_cmd->add_option("--data-dir", run.data_dir, "Root of the builtin dataset files");

    ServeArgs serve;
    auto* serve_cmd = app.add_subcommand("serve", "Serve the HTTP API and dashboard");
    serve_cmd->add_option("--bind", serve.bind, "ADDR:PORT")->capture_default_str();
    serve_cmd->add_option("--state-dir", serve.state_dir, "Run and upload storage")->capture_default_str();
    serve_cmd->add_option("--static-dir", serve.static_dir, "Dashboard assets")->capture_default_str();
    serve_cmd->add_option("--data-dir", serve.data_dir, "Root of the builtin dataset files");
    serve_cmd->add_option("--max-concurrent-runs", serve.max_concurrent_runs)
        ->check(CLI::Range(1, 64))
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }
    spdlog::set_level(verbose ? spdlog::level::debug
                              : (run_cmd->parsed() && run.headless ? spdlog::level::warn : spdlog::level::info));

    if (run_cmd->parsed()) {
        return run_command(run);
    }
    return serve_command(serve);
}
