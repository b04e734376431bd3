#include <catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "evforecast/pipeline.hpp"

using namespace evf;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("evf_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

/// Transaction-log fixture: `stations` chargers a few hundred meters apart,
/// daily sessions with a weekly profile, Palo Alto-style columns plus noise
/// columns the schema mapping must skip.
void write_fixture_csv(const fs::path& p, std::size_t stations = 3, std::size_t days = 60,
                       bool with_bad_row = false) {
    std::ofstream out(p);
    out << "Station Name,MAC Address,Start Date,End Date,Energy (kWh),Port Type,Latitude,Longitude\n";
    const double weekly[7] = {1.0, 1.1, 1.2, 1.15, 1.05, 0.6, 0.5};
    Date d0 = *make_date(2018, 1, 1);
    Rng rng(5);
    for (std::size_t d = 0; d < days; ++d) {
        for (std::size_t s = 0; s < stations; ++s) {
            double energy = (8.0 + 3.0 * double(s)) * weekly[d % 7] + rng.uniform();
            out << "PALO ALTO / STATION " << s << ",00:0" << s << ","
                << format_date(d0 + std::chrono::days(long(d))) << " 09:1" << s << ","
                << format_date(d0 + std::chrono::days(long(d))) << " 11:00," << energy
                << ",Level 2," << (37.4400 + 0.002 * double(s)) << ","
                << (-122.1600 - 0.0015 * double(s)) << "\n";
        }
    }
    if (with_bad_row)
        out << "PALO ALTO / STATION 0,00:00,2018-01-05 10:00,2018-01-05 11:00,-4.0,Level 2,"
               "37.44,-122.16\n";
}

json base_config(const fs::path& raw, const fs::path& workspace) {
    json cfg;
    cfg["raw_data"] = raw.string();
    cfg["workspace"] = workspace.string();
    cfg["grid_rows"] = 2;
    cfg["grid_cols"] = 2;
    cfg["horizons"] = {1};
    cfg["lookbacks"] = {{"1", 10}};
    cfg["models"] = {"ar", "var", "cnn", "cnn_lstm", "tgcn"};
    cfg["seeds"] = {0, 1, 2};
    cfg["epochs"] = 2;
    cfg["ar_order"] = 5;
    cfg["var_order"] = 5;
    cfg["cnn_filters"] = 3;
    cfg["gcn_filters"] = {4, 3};
    cfg["lstm_hidden"] = 5;
    cfg["split_date"] = "2018-02-15";
    return cfg;
}

PipelineConfig config_from(const json& doc) { return PipelineConfig::from_json(doc); }

}  // namespace

TEST_CASE("config: unknown keys are rejected") {
    json doc = {{"epochs", 10}, {"turbo_mode", true}};
    CHECK_THROWS_AS(PipelineConfig::from_json(doc), ConfigError);
    json doc2 = {{"schema", {{"station_id", "x"}, {"zip_code", "y"}}}};
    CHECK_THROWS_AS(PipelineConfig::from_json(doc2), ConfigError);
}

TEST_CASE("config: defaults follow the experiment protocol") {
    PipelineConfig cfg = PipelineConfig::from_json(json::object());
    CHECK(cfg.horizons == std::vector<std::size_t>{1, 7, 30});
    CHECK(cfg.lookbacks.at(1) == 30);
    CHECK(cfg.lookbacks.at(7) == 30);
    CHECK(cfg.lookbacks.at(30) == 120);
    CHECK(cfg.train.epochs == 1000);
    CHECK(cfg.train.lambda == 1e-3);
    CHECK(cfg.hyper.cnn_filters == 16);
    CHECK(cfg.hyper.gcn_f0 == 16);
    CHECK(cfg.hyper.gcn_f1 == 10);
    CHECK(cfg.hyper.lstm_hidden == 50);
    CHECK(cfg.hyper.ar_order == 30);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{0, 1, 2});
    CHECK(cfg.grid_rows == 5);
    CHECK(cfg.schema.station_id == "Station Name");
    CHECK(cfg.schema.energy_kwh == "Energy (kWh)");
}

TEST_CASE("config: horizon without lookback is rejected") {
    json doc = {{"horizons", {1, 3}}, {"lookbacks", {{"1", 30}}}};
    CHECK_THROWS_AS(PipelineConfig::from_json(doc), ConfigError);
}

TEST_CASE("config: fingerprint is stable and workspace-independent") {
    json doc = base_config("raw.csv", "ws_a");
    PipelineConfig a = config_from(doc);
    doc["workspace"] = "ws_b";
    PipelineConfig b = config_from(doc);
    CHECK(a.fingerprint() == b.fingerprint());
    doc["epochs"] = 3;
    PipelineConfig c = config_from(doc);
    CHECK(a.fingerprint() != c.fingerprint());
}

TEST_CASE("cmd_ingest: writes panel, registry and diagnostics") {
    TempDir dir("ingest");
    write_fixture_csv(dir.path / "raw.csv", 3, 20, /*with_bad_row=*/true);
    PipelineConfig cfg = config_from(base_config(dir.path / "raw.csv", dir.path / "ws"));
    std::ostringstream log;
    IngestSummary s = cmd_ingest(cfg, log);
    CHECK(s.accepted == 60);
    CHECK(s.rejected == 1);
    CHECK(s.n_stations == 3);
    CHECK(s.n_days == 20);
    Workspace ws(cfg.workspace);
    CHECK(fs::exists(ws.panel_csv()));
    CHECK(fs::exists(ws.registry_csv()));
    std::string diag = read_file(ws.ingest_log());
    CHECK(diag.find("negative energy") != std::string::npos);
    // exactly one rejection line plus two summary lines
    CHECK(count_lines(diag) == 3);
}

TEST_CASE("cmd_ingest: missing input path names the path") {
    TempDir dir("missing");
    PipelineConfig cfg = config_from(base_config(dir.path / "nope.csv", dir.path / "ws"));
    try {
        std::ostringstream log;
        cmd_ingest(cfg, log);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("nope.csv") != std::string::npos);
    }
}

TEST_CASE("cmd_topology: graph and raster artifacts") {
    TempDir dir("topo");
    write_fixture_csv(dir.path / "raw.csv", 2, 15);
    PipelineConfig cfg = config_from(base_config(dir.path / "raw.csv", dir.path / "ws"));
    std::ostringstream log;
    cmd_ingest(cfg, log);
    TopologySummary s = cmd_topology(cfg, log);
    CHECK(s.n_nodes == 2);
    CHECK(s.edges == 1);  // fixture stations are a few hundred meters apart
    Workspace ws(cfg.workspace);
    std::string edges = read_file(ws.edges_csv());
    CHECK(edges.find("i,j,weight") != std::string::npos);
    CHECK(count_lines(edges) == 2);  // header + single undirected edge

    // the edge weight is exp(-h) for the station spacing
    StationRegistry reg;
    {
        auto in = std::ifstream(ws.registry_csv());
        reg = read_registry_csv(in);
    }
    double h = haversine_km(reg.stations[0].latitude, reg.stations[0].longitude,
                            reg.stations[1].latitude, reg.stations[1].longitude);
    std::string last_line = edges.substr(edges.find('\n') + 1);
    double w = std::stod(last_line.substr(last_line.rfind(',') + 1));
    CHECK(w == Catch::Approx(std::exp(-h)).margin(1e-12));

    // raster: 2x2 grid, one row per day, 4 cells plus date per row
    std::ifstream rin(ws.raster_csv());
    RasterSeries raster = read_raster_csv(rin);
    CHECK(raster.rows == 2);
    CHECK(raster.cols == 2);
    CHECK(raster.n_days == 15);
}

TEST_CASE("cmd_topology: isolated stations are flagged") {
    TempDir dir("isolated");
    // two stations ~5.5 km apart: beyond the default cutoff
    std::ofstream out(dir.path / "raw.csv");
    out << "Station Name,Start Date,Energy (kWh),Latitude,Longitude\n";
    Date d0 = *make_date(2018, 1, 1);
    for (int d = 0; d < 15; ++d) {
        out << "A," << format_date(d0 + std::chrono::days(d)) << ",5.0,37.40,-122.16\n";
        out << "B," << format_date(d0 + std::chrono::days(d)) << ",6.0,37.45,-122.16\n";
    }
    out.close();
    PipelineConfig cfg = config_from(base_config(dir.path / "raw.csv", dir.path / "ws"));
    std::ostringstream log;
    cmd_ingest(cfg, log);
    TopologySummary s = cmd_topology(cfg, log);
    CHECK(s.edges == 0);
    CHECK(s.isolated == 2);
    Workspace ws(cfg.workspace);
    std::string summary = read_file(ws.topology_log());
    CHECK(summary.find("isolated_node=A") != std::string::npos);
    CHECK(summary.find("isolated_node=B") != std::string::npos);
}

TEST_CASE("cmd_train: checkpoint, manifest and trace; reruns are byte-identical") {
    TempDir dir("train");
    write_fixture_csv(dir.path / "raw.csv", 3, 60);
    json doc = base_config(dir.path / "raw.csv", dir.path / "ws");
    doc["epochs"] = 5;
    PipelineConfig cfg = config_from(doc);
    std::ostringstream log;
    cmd_ingest(cfg, log);
    cmd_topology(cfg, log);

    TrainTrace trace = cmd_train(cfg, "tgcn", 1, 0, log);
    CHECK(trace.epoch_loss.size() == 5);
    Workspace ws(cfg.workspace);
    CHECK(fs::exists(ws.checkpoint_csv("tgcn", 1, 0)));
    CHECK(fs::exists(ws.checkpoint_manifest("tgcn", 1, 0)));
    std::string trace_text = read_file(ws.trace_csv("tgcn", 1, 0));
    CHECK(count_lines(trace_text) == 6);  // header + 5 epochs

    std::string first = read_file(ws.checkpoint_csv("tgcn", 1, 0));
    cmd_train(cfg, "tgcn", 1, 0, log);
    CHECK(read_file(ws.checkpoint_csv("tgcn", 1, 0)) == first);

    json manifest = json::parse(read_file(ws.checkpoint_manifest("tgcn", 1, 0)));
    CHECK(manifest["model"] == "tgcn");
    CHECK(manifest["horizon"] == 1);
    CHECK(manifest["lookback"] == 10);
    CHECK(manifest["topology"] == cfg.topology_fingerprint());
}

TEST_CASE("cmd_train: unknown model lists the valid names") {
    TempDir dir("badmodel");
    write_fixture_csv(dir.path / "raw.csv", 2, 30);
    PipelineConfig cfg = config_from(base_config(dir.path / "raw.csv", dir.path / "ws"));
    std::ostringstream log;
    cmd_ingest(cfg, log);
    cmd_topology(cfg, log);
    try {
        cmd_train(cfg, "transformer", 1, 0, log);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        CHECK(msg.find("tgcn") != std::string::npos);
        CHECK(msg.find("cnn_lstm") != std::string::npos);
    }
}

TEST_CASE("cmd_evaluate: full grid report with reusable checkpoints") {
    TempDir dir("eval");
    write_fixture_csv(dir.path / "raw.csv", 3, 60);
    json doc = base_config(dir.path / "raw.csv", dir.path / "ws");
    doc["include_persistence"] = true;
    PipelineConfig cfg = config_from(doc);
    std::ostringstream log;
    cmd_ingest(cfg, log);
    cmd_topology(cfg, log);
    EvalReport report = cmd_evaluate(cfg, log);
    CHECK(report.cells.size() == 6);  // 5 configured models + persistence, 1 horizon
    Workspace ws(cfg.workspace);
    CHECK(fs::exists(ws.report_csv()));
    CHECK(fs::exists(ws.report_txt()));
    CHECK(fs::exists(ws.totals_csv("tgcn", 1)));
    for (const auto& c : report.cells) {
        if (c.kind == "ar" || c.kind == "var" || c.kind == "persistence") CHECK(c.stddev == 0.0);
        CHECK(c.per_seed_rmse.size() == 3);
    }
    std::string table = read_file(ws.report_txt());
    CHECK(table.find("AR(5)") != std::string::npos);
    CHECK(table.find("Persistence") != std::string::npos);

    // checkpoints were persisted by train-on-demand; a second evaluate reuses
    // them byte-for-byte
    std::string report_a = read_file(ws.report_csv());
    std::string ckpt_a = read_file(ws.checkpoint_csv("cnn", 1, 2));
    EvalReport again = cmd_evaluate(cfg, log);
    CHECK(read_file(ws.report_csv()) == report_a);
    CHECK(read_file(ws.checkpoint_csv("cnn", 1, 2)) == ckpt_a);
}

TEST_CASE("cmd_evaluate: missing checkpoints are enumerated without train_on_demand") {
    TempDir dir("nocheck");
    write_fixture_csv(dir.path / "raw.csv", 3, 60);
    json doc = base_config(dir.path / "raw.csv", dir.path / "ws");
    doc["train_on_demand"] = false;
    doc["models"] = {"ar", "tgcn"};
    doc["seeds"] = {0};
    PipelineConfig cfg = config_from(doc);
    std::ostringstream log;
    cmd_ingest(cfg, log);
    cmd_topology(cfg, log);
    try {
        cmd_evaluate(cfg, log);
        FAIL("expected MissingArtifactError");
    } catch (const MissingArtifactError& e) {
        CHECK(std::string(e.what()).find("tgcn_h1_seed0") != std::string::npos);
    }
    // after training the missing run, evaluate succeeds
    cmd_train(cfg, "tgcn", 1, 0, log);
    EvalReport report = cmd_evaluate(cfg, log);
    CHECK(report.cells.size() == 2);
}

TEST_CASE("stale upstream artifacts are detected") {
    TempDir dir("stale");
    write_fixture_csv(dir.path / "raw.csv", 3, 60);
    json doc = base_config(dir.path / "raw.csv", dir.path / "ws");
    PipelineConfig cfg = config_from(doc);
    std::ostringstream log;
    cmd_ingest(cfg, log);
    cmd_topology(cfg, log);
    // change the grid: topology artifacts on disk no longer match
    doc["grid_rows"] = 3;
    PipelineConfig changed = config_from(doc);
    CHECK_THROWS_AS(cmd_evaluate(changed, log), MissingArtifactError);
    // untouched ingest stage still passes its check; rerunning topology heals
    cmd_topology(changed, log);
    CHECK_NOTHROW(cmd_evaluate(changed, log));
}

TEST_CASE("cmd_plot: chart and csv tied to the evaluated totals") {
    TempDir dir("plot");
    write_fixture_csv(dir.path / "raw.csv", 3, 60);
    json doc = base_config(dir.path / "raw.csv", dir.path / "ws");
    doc["models"] = {"ar", "tgcn"};
    PipelineConfig cfg = config_from(doc);
    std::ostringstream log;
    cmd_ingest(cfg, log);
    cmd_topology(cfg, log);
    cmd_evaluate(cfg, log);
    cmd_plot(cfg, "", 1, log);
    Workspace ws(cfg.workspace);
    REQUIRE(fs::exists(ws.plot_csv(1)));
    REQUIRE(fs::exists(ws.plot_svg(1)));
    std::string svg = read_file(ws.plot_svg(1));
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);

    // csv rows = test days (horizon 1 tiles every day); totals match the
    // evaluate stage's records exactly
    std::string plot_csv = read_file(ws.plot_csv(1));
    std::string totals = read_file(ws.totals_csv("tgcn", 1));
    CHECK(count_lines(plot_csv) == count_lines(totals));
    {
        std::istringstream pin(plot_csv);
        std::string header;
        std::getline(pin, header);
        CHECK(header == "date,actual,ar,tgcn");
    }

    // exact equality of the tgcn column against the totals file
    {
        std::istringstream pcsv(plot_csv), tcsv(totals);
        std::string a, b;
        std::getline(pcsv, a);
        std::getline(tcsv, b);
        while (std::getline(pcsv, a) && std::getline(tcsv, b)) {
            std::string plot_tgcn = a.substr(a.rfind(',') + 1);
            std::string tot_pred = b;
            // totals: target_date,window_step,predicted_total,actual_total
            std::size_t c1 = tot_pred.find(',');
            std::size_t c2 = tot_pred.find(',', c1 + 1);
            std::size_t c3 = tot_pred.find(',', c2 + 1);
            CHECK(plot_tgcn == tot_pred.substr(c2 + 1, c3 - c2 - 1));
        }
    }
}

TEST_CASE("cmd_plot: requires evaluation artifacts") {
    TempDir dir("plotmissing");
    write_fixture_csv(dir.path / "raw.csv", 2, 30);
    PipelineConfig cfg = config_from(base_config(dir.path / "raw.csv", dir.path / "ws"));
    std::ostringstream log;
    CHECK_THROWS_AS(cmd_plot(cfg, "", 1, log), MissingArtifactError);
    Workspace ws(cfg.workspace);
    CHECK(!fs::exists(ws.plot_csv(1)));
    CHECK(!fs::exists(ws.plot_svg(1)));
}

TEST_CASE("pipeline determinism: identical config, byte-identical reports") {
    TempDir dir("determinism");
    write_fixture_csv(dir.path / "raw.csv", 3, 60);
    auto run = [&](const std::string& ws_name) {
        json doc = base_config(dir.path / "raw.csv", dir.path / ws_name);
        doc["models"] = {"ar", "var", "tgcn"};
        PipelineConfig cfg = config_from(doc);
        std::ostringstream log;
        cmd_ingest(cfg, log);
        cmd_topology(cfg, log);
        cmd_evaluate(cfg, log);
        Workspace ws(cfg.workspace);
        return read_file(ws.report_csv()) + "|" + read_file(ws.report_txt()) + "|" +
               read_file(ws.totals_csv("tgcn", 1));
    };
    CHECK(run("ws_one") == run("ws_two"));
}

// ---- CLI binary smoke tests ----

namespace {

int run_cli(const std::string& args) {
    std::string cmd = std::string(EVF_CLI_BIN) + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("cli: end-to-end stages exit zero and honor exit-code taxonomy") {
    TempDir dir("cli");
    write_fixture_csv(dir.path / "raw.csv", 3, 60, /*with_bad_row=*/true);
    json doc = base_config(dir.path / "raw.csv", dir.path / "ws");
    doc["models"] = {"ar", "tgcn"};
    fs::path cfg_path = dir.path / "config.json";
    {
        std::ofstream out(cfg_path);
        out << doc.dump(2);
    }
    const std::string base = "--config " + cfg_path.string();

    CHECK(run_cli("ingest " + base) == 0);
    Workspace ws((dir.path / "ws").string());
    CHECK(fs::exists(ws.panel_csv()));
    std::string diag = read_file(ws.ingest_log());
    CHECK(diag.find("negative energy") != std::string::npos);

    CHECK(run_cli("topology " + base) == 0);
    CHECK(run_cli("train " + base + " --model tgcn --horizon 1 --seed 0") == 0);
    CHECK(run_cli("evaluate " + base) == 0);
    CHECK(run_cli("plot " + base + " --horizon 1") == 0);
    CHECK(fs::exists(ws.plot_svg(1)));

    // config error: unknown model name
    CHECK(run_cli("train " + base + " --model transformer --horizon 1") == kExitConfig);
    // config error: missing input path
    json bad = doc;
    bad["raw_data"] = (dir.path / "nope.csv").string();
    fs::path bad_path = dir.path / "bad.json";
    {
        std::ofstream out(bad_path);
        out << bad.dump(2);
    }
    CHECK(run_cli("ingest --config " + bad_path.string()) == kExitConfig);
    // missing artifacts: fresh workspace without upstream stages
    CHECK(run_cli("evaluate " + base + " --workspace " + (dir.path / "empty_ws").string()) ==
          kExitMissingArtifact);
}

TEST_CASE("cli: workspace precedence flag > config > environment") {
    TempDir dir("cliws");
    write_fixture_csv(dir.path / "raw.csv", 2, 20);
    json doc = base_config(dir.path / "raw.csv", dir.path / "cfg_ws");
    fs::path cfg_path = dir.path / "config.json";
    {
        std::ofstream out(cfg_path);
        out << doc.dump(2);
    }
    // flag wins over config
    CHECK(run_cli("ingest --config " + cfg_path.string() + " --workspace " +
                  (dir.path / "flag_ws").string()) == 0);
    CHECK(fs::exists(dir.path / "flag_ws" / "ingest" / "panel.csv"));
    CHECK(!fs::exists(dir.path / "cfg_ws"));

    // config wins over environment
    setenv(kWorkspaceEnvVar, (dir.path / "env_ws").string().c_str(), 1);
    CHECK(run_cli("ingest --config " + cfg_path.string()) == 0);
    CHECK(fs::exists(dir.path / "cfg_ws" / "ingest" / "panel.csv"));
    CHECK(!fs::exists(dir.path / "env_ws"));

    // environment applies when the config does not set a workspace
    json no_ws = doc;
    no_ws.erase("workspace");
    fs::path no_ws_path = dir.path / "no_ws.json";
    {
        std::ofstream out(no_ws_path);
        out << no_ws.dump(2);
    }
    CHECK(run_cli("ingest --config " + no_ws_path.string()) == 0);
    CHECK(fs::exists(dir.path / "env_ws" / "ingest" / "panel.csv"));
    unsetenv(kWorkspaceEnvVar);
}
