#include <csignal>
#include <fstream>
#include <iostream>
#include <iterator>
#include <string>

#include "CLI11.hpp"

#include "dsa/config.hpp"
#include "dsa/errors.hpp"
#include "dsa/gateway.hpp"
#include "dsa/pipeline.hpp"

namespace {

std::string read_stream(std::istream& in) {
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw dsa::PipelineError("cannot open " + path);
    return read_stream(in);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DatasetAgent: construct image datasets from a demand and an image corpus"};

    std::string task = "build";
    std::string demand, demand_file, config_file, workspace, root, run_id;
    bool mock_backends = false;
    bool interactive = false;
    int workers = -1;
    long long seed = -1;

    app.add_option("--task", task, "build | expand | metrics | resume")
        ->check(CLI::IsMember({"build", "expand", "metrics", "resume"}));
    app.add_option("--demand", demand, "demand text");
    app.add_option("--demand-file", demand_file, "file holding the demand text");
    app.add_option("--config", config_file, "key = value config file");
    app.add_option("--workspace", workspace, "run workspace directory");
    app.add_option("--root", root, "existing dataset root (expand/metrics)");
    app.add_option("--run-id", run_id, "run id (resume)");
    app.add_option("--workers", workers, "worker budget");
    app.add_option("--seed", seed, "global run seed");
    app.add_flag("--mock-backends", mock_backends, "use deterministic mock model backends");
    app.add_flag("--interactive", interactive, "ask clarification questions on stdin");

    CLI11_PARSE(app, argc, argv);

    dsa::pipeline::install_interrupt_handler();

    try {
        dsa::RunConfig cfg;
        if (!config_file.empty()) cfg = dsa::load_config_file(config_file);
        if (!workspace.empty()) cfg.workspace = workspace;
        if (workers > 0) cfg.workers = workers;
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
        if (mock_backends) cfg.mock_backends = true;
        if (interactive) cfg.batch_mode = false;
        if (!run_id.empty()) cfg.run_id = run_id;

        dsa::gateway::Gateway gw = cfg.mock_backends
                                       ? dsa::gateway::make_mock_gateway()
                                       : dsa::gateway::make_http_gateway(cfg.endpoints);

        std::string demand_text = demand;
        if (demand_text.empty() && !demand_file.empty()) demand_text = read_file(demand_file);
        if (demand_text.empty() && (task == "build" || task == "expand") && !interactive)
            demand_text = read_stream(std::cin);

        std::istream* clarify_in = cfg.batch_mode ? nullptr : &std::cin;

        if (task == "build")
            return dsa::pipeline::cmd_build(cfg, demand_text, gw, clarify_in, std::cout);
        if (task == "expand") {
            if (root.empty()) {
                std::cout << "expand requires --root\n";
                return dsa::pipeline::kExitAborted;
            }
            return dsa::pipeline::cmd_expand(cfg, demand_text, root, gw, clarify_in, std::cout);
        }
        if (task == "metrics") {
            const std::string target = root.empty() ? cfg.workspace.string() : root;
            return dsa::pipeline::cmd_metrics(cfg, target, std::cout);
        }
        return dsa::pipeline::cmd_resume(cfg, run_id, gw, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return dsa::pipeline::kExitAborted;
    }
}
