// Pipeline driver: ingest -> topology -> train -> evaluate -> plot.

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "evforecast/pipeline.hpp"

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        seeds.push_back(std::stoull(tok));
    }
    if (seeds.empty()) throw evf::ConfigError("--seed-list: no seeds in '" + text + "'");
    return seeds;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"evforecast: spatio-temporal EV charging demand forecasting pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::string workspace_flag;
    std::string model_name;
    std::string seed_list;
    std::size_t horizon = 1;
    long long seed_flag = -1;
    long long epochs_flag = -1;
    bool include_persistence = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "pipeline config file (JSON)")->required();
        sub->add_option("--workspace", workspace_flag,
                        "workspace directory (overrides config and " +
                            std::string(evf::kWorkspaceEnvVar) + ")");
        sub->add_option("--epochs", epochs_flag, "override training epochs");
        sub->add_option("--seed-list", seed_list, "comma-separated seeds, e.g. 0,1,2");
        sub->add_flag("--include-persistence", include_persistence,
                      "add the persistence sanity baseline to the model list");
    };

    CLI::App* c_ingest = app.add_subcommand("ingest", "parse transactions into a daily demand panel");
    add_common(c_ingest);
    CLI::App* c_topology =
        app.add_subcommand("topology", "build the station graph and raster series");
    add_common(c_topology);
    CLI::App* c_train = app.add_subcommand("train", "train one model for one horizon");
    add_common(c_train);
    c_train->add_option("--model", model_name, "model name (tgcn, cnn, cnn_lstm)")->required();
    c_train->add_option("--horizon", horizon, "forecast horizon in days")->required();
    c_train->add_option("--seed", seed_flag, "training seed (default: first configured seed)");
    CLI::App* c_eval = app.add_subcommand("evaluate", "run the experiment grid and emit reports");
    add_common(c_eval);
    CLI::App* c_plot = app.add_subcommand("plot", "emit forecast-vs-actual chart for one horizon");
    add_common(c_plot);
    c_plot->add_option("--model", model_name, "restrict the chart to one model");
    c_plot->add_option("--horizon", horizon, "forecast horizon in days")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        evf::PipelineConfig cfg = evf::PipelineConfig::load_file(config_path);
        // precedence: flags win over config, config wins over environment
        if (!workspace_flag.empty()) {
            cfg.workspace = workspace_flag;
        } else if (!cfg.workspace_from_config) {
            const char* env = std::getenv(evf::kWorkspaceEnvVar);
            if (env && *env) cfg.workspace = env;
        }
        if (epochs_flag > 0) cfg.train.epochs = std::size_t(epochs_flag);
        if (!seed_list.empty()) cfg.seeds = parse_seed_list(seed_list);
        if (include_persistence) cfg.include_persistence = true;
        if (cfg.seeds.empty()) throw evf::ConfigError("config: seed list is empty");

        if (c_ingest->parsed()) {
            evf::cmd_ingest(cfg, std::cout);
        } else if (c_topology->parsed()) {
            evf::cmd_topology(cfg, std::cout);
        } else if (c_train->parsed()) {
            std::uint64_t seed = seed_flag >= 0 ? std::uint64_t(seed_flag) : cfg.seeds.front();
            evf::cmd_train(cfg, model_name, horizon, seed, std::cout);
        } else if (c_eval->parsed()) {
            evf::EvalReport report = evf::cmd_evaluate(cfg, std::cout);
            std::ostringstream table;
            evf::write_report_table(table, report);
            std::cout << table.str();
        } else if (c_plot->parsed()) {
            evf::cmd_plot(cfg, model_name, horizon, std::cout);
        }
        return evf::kExitOk;
    } catch (const evf::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return evf::kExitConfig;
    } catch (const evf::MissingArtifactError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return evf::kExitMissingArtifact;
    } catch (const evf::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return evf::kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return evf::kExitFailure;
    }
}
