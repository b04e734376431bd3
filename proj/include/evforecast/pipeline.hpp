#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "evforecast/eval.hpp"
#include "evforecast/ingest.hpp"
#include "evforecast/plot.hpp"
#include "evforecast/topology.hpp"
#include "evforecast/training.hpp"

namespace evf {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MissingArtifactError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Exit codes the CLI maps errors onto.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitMissingArtifact = 3;
inline constexpr int kExitDivergence = 4;

inline const char* kWorkspaceEnvVar = "EVFORECAST_WORKSPACE";

/// Declarative pipeline configuration with defaults for the full experiment
/// grid. Unknown keys in the config document are rejected.
struct PipelineConfig {
    std::string raw_data;
    std::string workspace = "workspace";
    bool workspace_from_config = false;
    CsvSchema schema;
    std::size_t grid_rows = 5;
    std::size_t grid_cols = 5;
    double cutoff_km = 2.5;
    std::vector<std::size_t> horizons{1, 7, 30};
    std::map<std::size_t, std::size_t> lookbacks{{1, 30}, {7, 30}, {30, 120}};
    std::vector<std::string> models{"ar", "var", "cnn", "cnn_lstm", "tgcn"};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    TrainConfig train;  // epochs 1000, lambda 1e-3, lr 1e-3
    ModelHyperparams hyper;
    std::string split_date = "2019-01-01";
    std::optional<std::string> date_from;
    std::optional<std::string> date_to;
    bool include_persistence = false;
    bool train_on_demand = true;
    bool scale_inputs = true;

    static PipelineConfig from_json(const json& doc);
    static PipelineConfig load_file(const std::string& path);

    json to_json() const;
    std::string fingerprint() const;     // full-config hash
    std::string ingest_fingerprint() const;
    std::string topology_fingerprint() const;

    std::vector<std::string> model_list() const {
        std::vector<std::string> out = models;
        if (include_persistence &&
            std::find(out.begin(), out.end(), "persistence") == out.end())
            out.push_back("persistence");
        return out;
    }
};

namespace detail {

inline std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

template <typename T>
void read_key(const json& doc, const char* key, T& out) {
    if (doc.contains(key)) out = doc.at(key).get<T>();
}

}  // namespace detail

inline PipelineConfig PipelineConfig::from_json(const json& doc) {
    if (!doc.is_object()) throw ConfigError("config: top level must be an object");
    static const std::set<std::string> known{
        "raw_data", "workspace", "schema", "grid_rows", "grid_cols", "cutoff_km",
        "horizons", "lookbacks", "models", "seeds", "epochs", "lambda",
        "learning_rate", "ar_order", "var_order", "ar_ridge", "var_ridge",
        "cnn_filters", "cnn_kernel", "gcn_filters", "lstm_hidden", "split_date",
        "date_from", "date_to", "include_persistence", "train_on_demand", "scale_inputs"};
    for (auto it = doc.begin(); it != doc.end(); ++it)
        if (!known.count(it.key())) throw ConfigError("config: unknown key '" + it.key() + "'");

    PipelineConfig cfg;
    try {
        detail::read_key(doc, "raw_data", cfg.raw_data);
        if (doc.contains("workspace")) {
            cfg.workspace = doc.at("workspace").get<std::string>();
            cfg.workspace_from_config = true;
        }
        if (doc.contains("schema")) {
            const json& s = doc.at("schema");
            static const std::set<std::string> schema_keys{
                "station_id", "latitude", "longitude", "start_time", "energy_kwh", "delimiter"};
            for (auto it = s.begin(); it != s.end(); ++it)
                if (!schema_keys.count(it.key()))
                    throw ConfigError("config: unknown schema key '" + it.key() + "'");
            detail::read_key(s, "station_id", cfg.schema.station_id);
            detail::read_key(s, "latitude", cfg.schema.latitude);
            detail::read_key(s, "longitude", cfg.schema.longitude);
            detail::read_key(s, "start_time", cfg.schema.start_time);
            detail::read_key(s, "energy_kwh", cfg.schema.energy_kwh);
            if (s.contains("delimiter")) {
                std::string d = s.at("delimiter").get<std::string>();
                if (d.size() != 1) throw ConfigError("config: delimiter must be one character");
                cfg.schema.delimiter = d[0];
            }
        }
        detail::read_key(doc, "grid_rows", cfg.grid_rows);
        detail::read_key(doc, "grid_cols", cfg.grid_cols);
        detail::read_key(doc, "cutoff_km", cfg.cutoff_km);
        detail::read_key(doc, "horizons", cfg.horizons);
        if (doc.contains("lookbacks")) {
            cfg.lookbacks.clear();
            for (auto it = doc.at("lookbacks").begin(); it != doc.at("lookbacks").end(); ++it)
                cfg.lookbacks[std::stoul(it.key())] = it.value().get<std::size_t>();
        }
        detail::read_key(doc, "models", cfg.models);
        detail::read_key(doc, "seeds", cfg.seeds);
        detail::read_key(doc, "epochs", cfg.train.epochs);
        detail::read_key(doc, "lambda", cfg.train.lambda);
        detail::read_key(doc, "learning_rate", cfg.train.learning_rate);
        detail::read_key(doc, "ar_order", cfg.hyper.ar_order);
        detail::read_key(doc, "var_order", cfg.hyper.var_order);
        detail::read_key(doc, "ar_ridge", cfg.hyper.ar_ridge);
        detail::read_key(doc, "var_ridge", cfg.hyper.var_ridge);
        detail::read_key(doc, "cnn_filters", cfg.hyper.cnn_filters);
        detail::read_key(doc, "cnn_kernel", cfg.hyper.cnn_kernel);
        if (doc.contains("gcn_filters")) {
            auto f = doc.at("gcn_filters").get<std::vector<std::size_t>>();
            if (f.size() != 2) throw ConfigError("config: gcn_filters must be [f0, f1]");
            cfg.hyper.gcn_f0 = f[0];
            cfg.hyper.gcn_f1 = f[1];
        }
        detail::read_key(doc, "lstm_hidden", cfg.hyper.lstm_hidden);
        detail::read_key(doc, "split_date", cfg.split_date);
        if (doc.contains("date_from") && !doc.at("date_from").is_null())
            cfg.date_from = doc.at("date_from").get<std::string>();
        if (doc.contains("date_to") && !doc.at("date_to").is_null())
            cfg.date_to = doc.at("date_to").get<std::string>();
        detail::read_key(doc, "include_persistence", cfg.include_persistence);
        detail::read_key(doc, "train_on_demand", cfg.train_on_demand);
        detail::read_key(doc, "scale_inputs", cfg.scale_inputs);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    for (std::size_t h : cfg.horizons)
        if (!cfg.lookbacks.count(h))
            throw ConfigError("config: no lookback entry for horizon " + std::to_string(h));
    if (!parse_date(cfg.split_date)) throw ConfigError("config: bad split_date '" + cfg.split_date + "'");
    if (cfg.train.epochs < 1) throw ConfigError("config: epochs must be >= 1");
    if (cfg.train.lambda < 0.0) throw ConfigError("config: lambda must be >= 0");
    return cfg;
}

inline PipelineConfig PipelineConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
    }
    return from_json(doc);
}

inline json PipelineConfig::to_json() const {
    json doc;
    doc["raw_data"] = raw_data;
    doc["schema"] = {{"station_id", schema.station_id},
                     {"latitude", schema.latitude},
                     {"longitude", schema.longitude},
                     {"start_time", schema.start_time},
                     {"energy_kwh", schema.energy_kwh},
                     {"delimiter", std::string(1, schema.delimiter)}};
    doc["grid_rows"] = grid_rows;
    doc["grid_cols"] = grid_cols;
    doc["cutoff_km"] = cutoff_km;
    doc["horizons"] = horizons;
    json lb = json::object();
    for (const auto& [h, n] : lookbacks) lb[std::to_string(h)] = n;
    doc["lookbacks"] = lb;
    doc["models"] = models;
    doc["seeds"] = seeds;
    doc["epochs"] = train.epochs;
    doc["lambda"] = train.lambda;
    doc["learning_rate"] = train.learning_rate;
    doc["ar_order"] = hyper.ar_order;
    doc["var_order"] = hyper.var_order;
    doc["ar_ridge"] = hyper.ar_ridge;
    doc["var_ridge"] = hyper.var_ridge;
    doc["cnn_filters"] = hyper.cnn_filters;
    doc["cnn_kernel"] = hyper.cnn_kernel;
    doc["gcn_filters"] = {hyper.gcn_f0, hyper.gcn_f1};
    doc["lstm_hidden"] = hyper.lstm_hidden;
    doc["split_date"] = split_date;
    doc["date_from"] = date_from ? json(*date_from) : json(nullptr);
    doc["date_to"] = date_to ? json(*date_to) : json(nullptr);
    doc["include_persistence"] = include_persistence;
    doc["train_on_demand"] = train_on_demand;
    doc["scale_inputs"] = scale_inputs;
    return doc;
}

inline std::string PipelineConfig::fingerprint() const { return detail::fnv1a_hex(to_json().dump()); }

inline std::string PipelineConfig::ingest_fingerprint() const {
    json doc = to_json();
    json sub = {{"raw_data", doc["raw_data"]},
                {"schema", doc["schema"]},
                {"date_from", doc["date_from"]},
                {"date_to", doc["date_to"]}};
    return detail::fnv1a_hex(sub.dump());
}

inline std::string PipelineConfig::topology_fingerprint() const {
    json sub = {{"ingest", ingest_fingerprint()},
                {"grid_rows", grid_rows},
                {"grid_cols", grid_cols},
                {"cutoff_km", cutoff_km}};
    return detail::fnv1a_hex(sub.dump());
}

// ---- workspace layout ----

struct Workspace {
    fs::path root;

    explicit Workspace(const std::string& dir) : root(dir) {}

    fs::path ingest_dir() const { return root / "ingest"; }
    fs::path topology_dir() const { return root / "topology"; }
    fs::path models_dir() const { return root / "models"; }
    fs::path reports_dir() const { return root / "reports"; }
    fs::path manifest_path() const { return root / "manifest.json"; }

    fs::path panel_csv() const { return ingest_dir() / "panel.csv"; }
    fs::path registry_csv() const { return ingest_dir() / "registry.csv"; }
    fs::path ingest_log() const { return ingest_dir() / "diagnostics.log"; }
    fs::path edges_csv() const { return topology_dir() / "edges.csv"; }
    fs::path adjacency_csv() const { return topology_dir() / "adjacency.csv"; }
    fs::path normalized_csv() const { return topology_dir() / "normalized.csv"; }
    fs::path raster_csv() const { return topology_dir() / "raster.csv"; }
    fs::path cells_csv() const { return topology_dir() / "cells.csv"; }
    fs::path topology_log() const { return topology_dir() / "summary.log"; }

    std::string run_tag(const std::string& kind, std::size_t horizon, std::uint64_t seed) const {
        return kind + "_h" + std::to_string(horizon) + "_seed" + std::to_string(seed);
    }
    fs::path checkpoint_csv(const std::string& kind, std::size_t horizon, std::uint64_t seed) const {
        return models_dir() / (run_tag(kind, horizon, seed) + ".ckpt.csv");
    }
    fs::path checkpoint_manifest(const std::string& kind, std::size_t horizon,
                                 std::uint64_t seed) const {
        return models_dir() / (run_tag(kind, horizon, seed) + ".manifest.json");
    }
    fs::path trace_csv(const std::string& kind, std::size_t horizon, std::uint64_t seed) const {
        return models_dir() / (run_tag(kind, horizon, seed) + "_trace.csv");
    }
    fs::path report_csv() const { return reports_dir() / "report.csv"; }
    fs::path report_txt() const { return reports_dir() / "report.txt"; }
    fs::path totals_csv(const std::string& kind, std::size_t horizon) const {
        return reports_dir() / ("totals_" + kind + "_h" + std::to_string(horizon) + ".csv");
    }
    fs::path plot_svg(std::size_t horizon) const {
        return reports_dir() / ("plot_h" + std::to_string(horizon) + ".svg");
    }
    fs::path plot_csv(std::size_t horizon) const {
        return reports_dir() / ("plot_h" + std::to_string(horizon) + ".csv");
    }

    json read_manifest() const {
        std::ifstream in(manifest_path());
        if (!in) return json::object();
        json doc;
        try {
            in >> doc;
        } catch (...) {
            return json::object();
        }
        return doc.is_object() ? doc : json::object();
    }

    void update_manifest(const std::string& stage, const std::string& hash) const {
        json doc = read_manifest();
        doc[stage] = hash;
        std::ofstream out(manifest_path());
        out << doc.dump(2) << '\n';
    }

    /// Requires the stage to have run under the current configuration.
    void require_stage(const std::string& stage, const std::string& expected_hash) const {
        json doc = read_manifest();
        if (!doc.contains(stage))
            throw MissingArtifactError("missing artifacts: run the '" + stage +
                                       "' stage first (no manifest entry in " +
                                       manifest_path().string() + ")");
        if (doc.at(stage).get<std::string>() != expected_hash)
            throw MissingArtifactError("stale artifacts: the '" + stage +
                                       "' stage was produced by a different configuration; rerun it");
    }
};

namespace detail {

inline std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p, std::ios::binary);  // binary: LF endings everywhere
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
}

inline std::ifstream open_in_or_missing(const fs::path& p, const char* stage) {
    std::ifstream in(p);
    if (!in)
        throw MissingArtifactError(std::string("missing artifacts: ") + p.string() +
                                   " not found; run the '" + stage + "' stage first");
    return in;
}

}  // namespace detail

// ---- stage commands ----

struct IngestSummary {
    std::size_t rows_seen = 0;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t out_of_range = 0;
    std::size_t n_stations = 0;
    std::size_t n_days = 0;
};

inline IngestSummary cmd_ingest(const PipelineConfig& cfg, std::ostream& log) {
    if (cfg.raw_data.empty()) throw ConfigError("config: raw_data path is required for ingest");
    std::ifstream in(cfg.raw_data, std::ios::binary);
    if (!in) throw ConfigError("ingest: cannot open raw data file '" + cfg.raw_data + "'");

    Workspace ws(cfg.workspace);
    fs::create_directories(ws.ingest_dir());

    ParseResult parsed = parse_transactions(in, cfg.schema);
    if (parsed.transactions.empty())
        throw std::runtime_error("ingest: no valid transactions in '" + cfg.raw_data + "'");
    std::vector<Diagnostic> reg_diags;
    StationRegistry registry = build_registry(parsed.transactions, &reg_diags);

    auto [lo, hi] = date_span(parsed.transactions);
    Date from = lo, to = hi;
    if (cfg.date_from) from = *parse_date(*cfg.date_from);
    if (cfg.date_to) to = *parse_date(*cfg.date_to);
    AggregateResult agg = aggregate_daily(parsed.transactions, registry, from, to);

    {
        auto out = detail::open_out(ws.panel_csv());
        write_panel_csv(out, agg.panel, registry);
    }
    {
        auto out = detail::open_out(ws.registry_csv());
        write_registry_csv(out, registry);
    }
    {
        auto out = detail::open_out(ws.ingest_log());
        for (const auto& d : parsed.diagnostics)
            out << "line " << d.line_no << ": " << d.message << '\n';
        for (const auto& d : reg_diags) out << "registry: " << d.message << '\n';
        out << "rows_seen=" << parsed.rows_seen << " accepted=" << parsed.transactions.size()
            << " rejected=" << parsed.diagnostics.size() << " out_of_range=" << agg.out_of_range
            << '\n';
        out << "panel_days=" << agg.panel.n_days << " stations=" << agg.panel.n_stations << '\n';
    }
    ws.update_manifest("ingest", cfg.ingest_fingerprint());

    IngestSummary s;
    s.rows_seen = parsed.rows_seen;
    s.accepted = parsed.transactions.size();
    s.rejected = parsed.diagnostics.size();
    s.out_of_range = agg.out_of_range;
    s.n_stations = agg.panel.n_stations;
    s.n_days = agg.panel.n_days;
    log << "ingest: " << s.accepted << " transactions (" << s.rejected << " rejected, "
        << s.out_of_range << " out of range), panel " << s.n_days << " days x " << s.n_stations
        << " stations\n";
    return s;
}

/// Loads the ingest artifacts back. Registry order defines node order; the
/// panel columns are checked against it.
inline std::pair<DemandPanel, StationRegistry> load_ingest_artifacts(const Workspace& ws) {
    auto reg_in = detail::open_in_or_missing(ws.registry_csv(), "ingest");
    StationRegistry registry = read_registry_csv(reg_in);
    auto panel_in = detail::open_in_or_missing(ws.panel_csv(), "ingest");
    std::vector<std::string> ids;
    DemandPanel panel = read_panel_csv(panel_in, &ids);
    if (ids.size() != registry.size())
        throw MissingArtifactError("panel/registry station count mismatch; rerun ingest");
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (ids[i] != registry.stations[i].id)
            throw MissingArtifactError("panel/registry station order mismatch; rerun ingest");
    return {std::move(panel), std::move(registry)};
}

struct TopologySummary {
    std::size_t n_nodes = 0;
    std::size_t edges = 0;
    std::size_t isolated = 0;
};

inline TopologySummary cmd_topology(const PipelineConfig& cfg, std::ostream& log) {
    Workspace ws(cfg.workspace);
    ws.require_stage("ingest", cfg.ingest_fingerprint());
    auto [panel, registry] = load_ingest_artifacts(ws);
    fs::create_directories(ws.topology_dir());

    SpatialGraph graph = build_graph(registry, cfg.cutoff_km);
    NormalizedAdjacency norm = normalize_adjacency(graph);
    RasterSeries raster = build_raster(registry, panel, cfg.grid_rows, cfg.grid_cols);

    {
        auto out = detail::open_out(ws.edges_csv());
        write_edge_list_csv(out, graph);
    }
    {
        auto out = detail::open_out(ws.adjacency_csv());
        write_matrix_csv(out, graph.adjacency);
    }
    {
        auto out = detail::open_out(ws.normalized_csv());
        write_matrix_csv(out, norm.matrix);
    }
    {
        auto out = detail::open_out(ws.raster_csv());
        write_raster_csv(out, raster);
    }
    {
        auto out = detail::open_out(ws.cells_csv());
        write_cell_assignment_csv(out, raster, registry);
    }
    TopologySummary s;
    s.n_nodes = graph.n_nodes;
    s.edges = graph.edge_count();
    s.isolated = graph.isolated_nodes().size();
    {
        auto out = detail::open_out(ws.topology_log());
        out << "nodes=" << s.n_nodes << " edges=" << s.edges << " isolated=" << s.isolated << '\n';
        out << "raster=" << raster.rows << "x" << raster.cols << " days=" << raster.n_days << '\n';
        for (std::size_t i : graph.isolated_nodes())
            out << "isolated_node=" << registry.stations[i].id << '\n';
    }
    ws.update_manifest("topology", cfg.topology_fingerprint());
    log << "topology: " << s.n_nodes << " nodes, " << s.edges << " edges, " << s.isolated
        << " isolated; raster " << cfg.grid_rows << "x" << cfg.grid_cols << "\n";
    return s;
}

inline ExperimentData load_experiment_data(const PipelineConfig& cfg) {
    Workspace ws(cfg.workspace);
    ws.require_stage("ingest", cfg.ingest_fingerprint());
    ws.require_stage("topology", cfg.topology_fingerprint());
    auto [panel, registry] = load_ingest_artifacts(ws);
    auto norm_in = detail::open_in_or_missing(ws.normalized_csv(), "topology");
    auto raster_in = detail::open_in_or_missing(ws.raster_csv(), "topology");
    ExperimentData data;
    data.normalized_adjacency = read_matrix_csv(norm_in);
    data.raster = read_raster_csv(raster_in);
    data.panel = std::move(panel);
    auto split = parse_date(cfg.split_date);
    data.split_date = *split;
    return data;
}

inline ExperimentConfig experiment_config(const PipelineConfig& cfg) {
    ExperimentConfig ec;
    ec.models = cfg.model_list();
    ec.horizons = cfg.horizons;
    ec.lookbacks = cfg.lookbacks;
    ec.seeds = cfg.seeds;
    ec.train = cfg.train;
    ec.hyper = cfg.hyper;
    ec.scale_inputs = cfg.scale_inputs;
    ec.config_fingerprint = cfg.fingerprint();
    return ec;
}

namespace detail {

inline json checkpoint_manifest_json(const PipelineConfig& cfg, const std::string& kind,
                                     std::size_t horizon, std::uint64_t seed) {
    json doc;
    doc["model"] = kind;
    doc["horizon"] = horizon;
    doc["lookback"] = cfg.lookbacks.at(horizon);
    doc["seed"] = seed;
    doc["topology"] = cfg.topology_fingerprint();
    doc["epochs"] = cfg.train.epochs;
    doc["lambda"] = cfg.train.lambda;
    doc["learning_rate"] = cfg.train.learning_rate;
    doc["scale_inputs"] = cfg.scale_inputs;
    json hyper;
    hyper["cnn_filters"] = cfg.hyper.cnn_filters;
    hyper["cnn_kernel"] = cfg.hyper.cnn_kernel;
    hyper["gcn_filters"] = {cfg.hyper.gcn_f0, cfg.hyper.gcn_f1};
    hyper["lstm_hidden"] = cfg.hyper.lstm_hidden;
    doc["hyperparameters"] = hyper;
    return doc;
}

inline void save_checkpoint(const Workspace& ws, const PipelineConfig& cfg,
                            NeuralForecaster& model, std::size_t horizon, std::uint64_t seed,
                            const TrainTrace& trace) {
    fs::create_directories(ws.models_dir());
    {
        auto out = open_out(ws.checkpoint_csv(model.kind(), horizon, seed));
        model.params().save_csv(out);
    }
    {
        auto out = open_out(ws.checkpoint_manifest(model.kind(), horizon, seed));
        out << checkpoint_manifest_json(cfg, model.kind(), horizon, seed).dump(2) << '\n';
    }
    {
        auto out = open_out(ws.trace_csv(model.kind(), horizon, seed));
        out << "epoch,loss\n";
        for (std::size_t e = 0; e < trace.epoch_loss.size(); ++e)
            out << (e + 1) << ',' << fmt_g17(trace.epoch_loss[e]) << '\n';
    }
}

/// A checkpoint is usable when its manifest matches the current config.
inline std::optional<ParameterStore> load_checkpoint(const Workspace& ws,
                                                     const PipelineConfig& cfg,
                                                     const std::string& kind, std::size_t horizon,
                                                     std::uint64_t seed) {
    std::ifstream m(ws.checkpoint_manifest(kind, horizon, seed));
    if (!m) return std::nullopt;
    json doc;
    try {
        m >> doc;
    } catch (...) {
        return std::nullopt;
    }
    if (doc != checkpoint_manifest_json(cfg, kind, horizon, seed)) return std::nullopt;
    std::ifstream c(ws.checkpoint_csv(kind, horizon, seed));
    if (!c) return std::nullopt;
    return ParameterStore::load_csv(c);
}

inline bool is_trainable_kind(const std::string& kind) {
    return kind == "tgcn" || kind == "cnn" || kind == "cnn_lstm";
}

}  // namespace detail

/// Trains one (model, horizon) run and persists checkpoint + manifest + loss
/// trace.
inline TrainTrace cmd_train(const PipelineConfig& cfg, const std::string& kind,
                            std::size_t horizon, std::uint64_t seed, std::ostream& log) {
    if (!detail::is_trainable_kind(kind))
        throw ConfigError("train: unknown or untrainable model '" + kind +
                          "'; valid names: tgcn, cnn, cnn_lstm (ar/var are fit at evaluation)");
    if (std::find(cfg.horizons.begin(), cfg.horizons.end(), horizon) == cfg.horizons.end())
        throw ConfigError("train: horizon " + std::to_string(horizon) +
                          " is not in the configured horizon list");
    ExperimentData data = load_experiment_data(cfg);
    Workspace ws(cfg.workspace);

    const std::size_t lookback = cfg.lookbacks.at(horizon);
    const long split = days_between(data.panel.start_date, data.split_date);
    if (split <= long(lookback))
        throw ConfigError("train: training period before " + cfg.split_date +
                          " is shorter than the lookback " + std::to_string(lookback));

    auto model = make_neural_model(kind, data, lookback, horizon, cfg.hyper);
    DenseArray series = kind == "tgcn" ? data.panel.matrix() : data.raster.matrix();
    DenseArray train_slice({std::size_t(split), series.cols()},
                           std::vector<double>(series.data.begin(),
                                               series.data.begin() + std::size_t(split) * series.cols()));
    ScalingTransform scaler = ScalingTransform::fit(train_slice);
    DenseArray model_train = cfg.scale_inputs ? scaler.apply(train_slice) : train_slice;
    WindowSet windows = make_windows(model_train, {lookback, horizon, 1});

    TrainConfig tc = cfg.train;
    tc.seed = seed;
    TrainTrace trace = train(*model, windows, tc);
    detail::save_checkpoint(ws, cfg, *model, horizon, seed, trace);
    log << "train: " << ws.run_tag(kind, horizon, seed) << " finished " << trace.epoch_loss.size()
        << " epochs, final loss " << trace.epoch_loss.back() << "\n";
    return trace;
}

/// Runs the full experiment grid, reusing matching checkpoints (training
/// missing ones when train_on_demand is set) and writes the report files.
inline EvalReport cmd_evaluate(const PipelineConfig& cfg, std::ostream& log) {
    ExperimentData data = load_experiment_data(cfg);
    Workspace ws(cfg.workspace);
    fs::create_directories(ws.reports_dir());
    fs::create_directories(ws.models_dir());

    if (!cfg.train_on_demand) {
        std::vector<std::string> missing;
        for (const auto& kind : cfg.model_list()) {
            if (!detail::is_trainable_kind(kind)) continue;
            for (std::size_t h : cfg.horizons)
                for (std::uint64_t s : cfg.seeds)
                    if (!detail::load_checkpoint(ws, cfg, kind, h, s))
                        missing.push_back(ws.run_tag(kind, h, s));
        }
        if (!missing.empty()) {
            std::string names;
            for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
            throw MissingArtifactError(
                "evaluate: missing checkpoints (" + names +
                "); run the train stage or set train_on_demand");
        }
    }

    ExperimentHooks hooks;
    hooks.load = [&](const std::string& kind, std::size_t h, std::uint64_t s) {
        return detail::load_checkpoint(ws, cfg, kind, h, s);
    };
    hooks.save = [&](NeuralForecaster& model, std::size_t h, std::uint64_t s,
                     const TrainTrace& trace) {
        detail::save_checkpoint(ws, cfg, model, h, s, trace);
    };

    EvalReport report = run_experiment(data, experiment_config(cfg), hooks);
    {
        auto out = detail::open_out(ws.report_csv());
        write_report_csv(out, report);
    }
    {
        auto out = detail::open_out(ws.report_txt());
        write_report_table(out, report);
    }
    for (const auto& cell : report.cells) {
        auto out = detail::open_out(ws.totals_csv(cell.kind, cell.horizon));
        write_totals_csv(out, cell, data.panel);
    }
    ws.update_manifest("evaluate", cfg.fingerprint());
    log << "evaluate: " << report.cells.size() << " cells (" << cfg.model_list().size()
        << " models x " << cfg.horizons.size() << " horizons), seeds " << cfg.seeds.size() << "\n";
    return report;
}

/// Emits the forecast-vs-actual chart for one horizon: the test period is
/// tiled with consecutive non-overlapping windows so every test day carries
/// exactly one forecast per model. `model_filter` empty means every model in
/// the report.
inline void cmd_plot(const PipelineConfig& cfg, const std::string& model_filter,
                     std::size_t horizon, std::ostream& log) {
    Workspace ws(cfg.workspace);
    ws.require_stage("evaluate", cfg.fingerprint());
    auto [panel, registry] = load_ingest_artifacts(ws);
    (void)registry;

    std::vector<std::string> kinds;
    for (const auto& kind : cfg.model_list())
        if (model_filter.empty() || kind == model_filter) kinds.push_back(kind);
    if (kinds.empty())
        throw ConfigError("plot: model '" + model_filter + "' is not in the configured model list");

    // totals files share the same (target_day, step) grid for every model
    struct Parsed {
        std::vector<std::size_t> day;
        std::vector<std::size_t> step;
        std::vector<double> pred;
        std::vector<double> actual;
    };
    std::map<std::string, Parsed> per_model;
    for (const auto& kind : kinds) {
        auto in = detail::open_in_or_missing(ws.totals_csv(kind, horizon), "evaluate");
        CsvReader reader(in);
        std::vector<std::string> row;
        if (!reader.next_row(row) || row.size() != 4)
            throw MissingArtifactError("plot: bad totals file for " + kind);
        Parsed p;
        while (reader.next_row(row)) {
            if (row.size() == 1 && row[0].empty()) continue;
            auto day = parse_date(row[0]);
            if (!day) throw MissingArtifactError("plot: bad date in totals file for " + kind);
            p.day.push_back(std::size_t(days_between(panel.start_date, *day)));
            p.step.push_back(std::stoul(row[1]));
            p.pred.push_back(std::stod(row[2]));
            p.actual.push_back(std::stod(row[3]));
        }
        if (p.day.empty()) throw MissingArtifactError("plot: empty test period for " + kind);
        per_model[kind] = std::move(p);
    }

    // tile: keep records whose window start lies on a horizon-stride grid
    const Parsed& first = per_model.begin()->second;
    std::size_t test_start = *std::min_element(first.day.begin(), first.day.end());
    auto tiled = [&](const Parsed& p) {
        std::vector<std::pair<std::size_t, std::pair<double, double>>> rows;  // day -> pred, actual
        for (std::size_t i = 0; i < p.day.size(); ++i) {
            std::size_t window_start = p.day[i] - p.step[i];
            if ((window_start - test_start) % horizon == 0)
                rows.push_back({p.day[i], {p.pred[i], p.actual[i]}});
        }
        std::sort(rows.begin(), rows.end());
        return rows;
    };

    auto base = tiled(first);
    std::vector<std::string> dates;
    std::vector<double> actual;
    for (const auto& [day, pa] : base) {
        dates.push_back(format_date(panel.date_of_row(day)));
        actual.push_back(pa.second);
    }

    std::vector<PlotSeries> series{{"actual", actual}};
    std::vector<std::pair<std::string, std::vector<double>>> model_columns;
    for (const auto& kind : kinds) {
        auto rows = tiled(per_model[kind]);
        if (rows.size() != base.size())
            throw MissingArtifactError("plot: totals for " + kind + " cover a different test grid");
        std::vector<double> vals;
        for (const auto& [day, pa] : rows) vals.push_back(pa.first);
        series.push_back({kind, vals});
        model_columns.push_back({kind, std::move(vals)});
    }

    {
        auto out = detail::open_out(ws.plot_csv(horizon));
        out << "date,actual";
        for (const auto& [kind, _] : model_columns) out << ',' << kind;
        out << '\n';
        for (std::size_t i = 0; i < dates.size(); ++i) {
            out << dates[i] << ',' << fmt_g17(actual[i]);
            for (const auto& [_, vals] : model_columns) out << ',' << fmt_g17(vals[i]);
            out << '\n';
        }
    }
    {
        auto out = detail::open_out(ws.plot_svg(horizon));
        write_svg_chart(out,
                        "Total-system demand, " + std::to_string(horizon) + "-day horizon",
                        dates, series);
    }
    log << "plot: horizon " << horizon << ", " << dates.size() << " test days, "
        << model_columns.size() << " models\n";
}

}  // namespace evf
