#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "evforecast/ingest.hpp"
#include "evforecast/models/autoregressive.hpp"
#include "evforecast/models/cnn.hpp"
#include "evforecast/models/cnn_lstm.hpp"
#include "evforecast/models/tgcn.hpp"
#include "evforecast/topology.hpp"
#include "evforecast/training.hpp"

namespace evf {

inline double rmse(const std::vector<double>& pred, const std::vector<double>& actual) {
    if (pred.empty() || pred.size() != actual.size())
        throw std::invalid_argument("rmse: need equal-length nonempty series, got " +
                                    std::to_string(pred.size()) + " and " +
                                    std::to_string(actual.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - actual[i];
        s += d * d;
    }
    return std::sqrt(s / double(pred.size()));
}

/// Row sums of forecast and actual [T, D] matrices: the total-system series
/// scored throughout.
inline std::pair<std::vector<double>, std::vector<double>> total_system(const DenseArray& forecast,
                                                                        const DenseArray& actual) {
    if (forecast.shape.size() != 2 || !forecast.same_shape(actual))
        throw ShapeError("total_system: shapes " + shape_str(forecast.shape) + " and " +
                         shape_str(actual.shape) + " must match as [T, D]");
    const std::size_t t = forecast.rows(), d = forecast.cols();
    std::vector<double> f(t, 0.0), a(t, 0.0);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            f[i] += forecast.at2(i, j);
            a[i] += actual.at2(i, j);
        }
    return {f, a};
}

/// One pooled (window, step) record of total-system forecast vs actual.
struct TotalRecord {
    std::size_t target_day = 0;  // row index into the panel
    std::size_t step = 0;        // 0-based step within the window's horizon
    double predicted = 0.0;
    double actual = 0.0;
};

struct EvalCell {
    std::string kind;   // file-safe identifier (ar, var, cnn, cnn_lstm, tgcn, persistence)
    std::string model;  // display name (AR(30), T-GCN, ...)
    std::size_t horizon = 0;
    std::vector<double> per_seed_rmse;
    double mean = 0.0;
    double stddev = 0.0;  // population formula over the listed seeds
    std::vector<TotalRecord> first_seed_totals;
};

struct EvalReport {
    std::vector<EvalCell> cells;
    std::vector<std::uint64_t> seeds;
    std::string config_fingerprint;
    std::string train_range;
    std::string test_range;
};

struct ExperimentData {
    DemandPanel panel;
    DenseArray normalized_adjacency;  // [N, N]
    RasterSeries raster;
    Date split_date{};  // first test day
};

struct ModelHyperparams {
    std::size_t ar_order = 30;
    std::size_t var_order = 30;
    double ar_ridge = 1e-8;
    double var_ridge = 1e-4;
    std::size_t cnn_filters = 16;
    std::size_t cnn_kernel = 3;
    std::size_t gcn_f0 = 16;
    std::size_t gcn_f1 = 10;
    std::size_t lstm_hidden = 50;
};

struct ExperimentConfig {
    std::vector<std::string> models{"ar", "var", "cnn", "cnn_lstm", "tgcn"};
    std::vector<std::size_t> horizons{1, 7, 30};
    std::map<std::size_t, std::size_t> lookbacks{{1, 30}, {7, 30}, {30, 120}};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    TrainConfig train;
    ModelHyperparams hyper;
    bool scale_inputs = true;
    std::string config_fingerprint;
};

/// Optional persistence hooks so a driver can reuse checkpoints: `load`
/// returns trained parameters to skip training; `save` observes freshly
/// trained models.
struct ExperimentHooks {
    std::function<std::optional<ParameterStore>(const std::string& kind, std::size_t horizon,
                                                std::uint64_t seed)>
        load;
    std::function<void(NeuralForecaster&, std::size_t horizon, std::uint64_t seed,
                       const TrainTrace&)>
        save;
};

inline void load_params_into(NeuralForecaster& model, ParameterStore loaded) {
    model.init(0);  // establish the expected names and shapes
    auto& expect = model.params();
    if (loaded.size() != expect.size())
        throw std::runtime_error(model.kind() + ": checkpoint has " + std::to_string(loaded.size()) +
                                 " parameters, expected " + std::to_string(expect.size()));
    for (const auto& e : expect.entries()) {
        if (!loaded.has(e.name))
            throw std::runtime_error(model.kind() + ": checkpoint missing parameter '" + e.name + "'");
        if (loaded.value(e.name).shape != e.value.shape)
            throw std::runtime_error(model.kind() + ": checkpoint shape mismatch for '" + e.name +
                                     "': " + shape_str(loaded.value(e.name).shape) + " vs " +
                                     shape_str(e.value.shape));
    }
    expect = std::move(loaded);
}

namespace detail {

inline std::string display_name(const std::string& kind, const ModelHyperparams& hyper) {
    if (kind == "ar") return "AR(" + std::to_string(hyper.ar_order) + ")";
    if (kind == "var") return "VAR(" + std::to_string(hyper.var_order) + ")";
    if (kind == "cnn") return "CNN";
    if (kind == "cnn_lstm") return "CNN+LSTM";
    if (kind == "tgcn") return "T-GCN";
    if (kind == "persistence") return "Persistence";
    return kind;
}

inline double population_std(const std::vector<double>& xs, double mean) {
    // identical values (deterministic models) must report exactly zero, not
    // the rounding residue of (x + x + x) / 3
    bool all_equal = true;
    for (double x : xs)
        if (x != xs.front()) all_equal = false;
    if (all_equal) return 0.0;
    double s = 0.0;
    for (double x : xs) s += (x - mean) * (x - mean);
    return std::sqrt(s / double(xs.size()));
}

}  // namespace detail

/// Builds an untrained model instance for a kind that needs gradient
/// training; returns nullptr for the closed-form baselines.
inline std::unique_ptr<NeuralForecaster> make_neural_model(const std::string& kind,
                                                           const ExperimentData& data,
                                                           std::size_t lookback,
                                                           std::size_t horizon,
                                                           const ModelHyperparams& hyper) {
    if (kind == "tgcn")
        return std::make_unique<TgcnModel>(data.normalized_adjacency, lookback, horizon,
                                           hyper.gcn_f0, hyper.gcn_f1, hyper.lstm_hidden);
    if (kind == "cnn")
        return std::make_unique<CnnModel>(data.raster.rows, data.raster.cols, lookback, horizon,
                                          hyper.cnn_filters, hyper.cnn_kernel);
    if (kind == "cnn_lstm")
        return std::make_unique<CnnLstmModel>(data.raster.rows, data.raster.cols, lookback, horizon,
                                              hyper.cnn_filters, hyper.cnn_kernel,
                                              hyper.lstm_hidden);
    return nullptr;
}

namespace detail {

/// The [L, D] series a model kind consumes: station panel for the graph
/// model, raster cells for the grid models, the summed system for AR and
/// persistence.
inline DenseArray series_for(const std::string& kind, const ExperimentData& data) {
    if (kind == "tgcn") return data.panel.matrix();
    if (kind == "cnn" || kind == "cnn_lstm" || kind == "var") return data.raster.matrix();
    auto sys = data.panel.system_series();
    const std::size_t len = sys.size();
    return DenseArray({len, 1}, std::move(sys));
}

struct RollingScore {
    double rmse_value = 0.0;
    std::vector<TotalRecord> totals;
};

/// Pools total-system forecasts over every test window (targets fully inside
/// the test period) and scores one RMSE.
template <typename PredictFn>
RollingScore score_rolling(const DenseArray& series, std::size_t split, std::size_t lookback,
                           std::size_t horizon, PredictFn&& predict_window) {
    const std::size_t len = series.rows(), dim = series.cols();
    if (split < lookback)
        throw std::runtime_error("evaluation: training period shorter than the lookback");
    if (split + horizon > len)
        throw std::runtime_error("evaluation: test period shorter than the horizon");
    std::vector<double> pooled_pred, pooled_actual;
    RollingScore out;
    for (std::size_t start = split; start + horizon <= len; ++start) {
        DenseArray window = DenseArray::zeros({lookback, dim});
        std::copy_n(series.data.data() + (start - lookback) * dim, lookback * dim,
                    window.data.data());
        DenseArray pred = predict_window(window, start);  // [T, D] raw units
        DenseArray actual = DenseArray::zeros({horizon, dim});
        std::copy_n(series.data.data() + start * dim, horizon * dim, actual.data.data());
        auto [ptot, atot] = total_system(pred, actual);
        for (std::size_t s = 0; s < horizon; ++s) {
            pooled_pred.push_back(ptot[s]);
            pooled_actual.push_back(atot[s]);
            out.totals.push_back(TotalRecord{start + s, s, ptot[s], atot[s]});
        }
    }
    out.rmse_value = rmse(pooled_pred, pooled_actual);
    return out;
}

}  // namespace detail

/// Trains (or loads) every requested model for every horizon and seed,
/// forecasts the held-out period with rolling windows, and scores pooled
/// total-system RMSE. Deterministic given config and data.
inline EvalReport run_experiment(const ExperimentData& data, const ExperimentConfig& config,
                                 const ExperimentHooks& hooks = {}) {
    const std::size_t len = data.panel.n_days;
    const long split_long = days_between(data.panel.start_date, data.split_date);
    if (split_long <= 0 || std::size_t(split_long) >= len)
        throw std::runtime_error("run_experiment: split date " + format_date(data.split_date) +
                                 " leaves an empty train or test period");
    const std::size_t split = std::size_t(split_long);

    EvalReport report;
    report.seeds = config.seeds;
    report.config_fingerprint = config.config_fingerprint;
    report.train_range = format_date(data.panel.start_date) + ".." +
                         format_date(data.panel.date_of_row(split - 1));
    report.test_range =
        format_date(data.panel.date_of_row(split)) + ".." + format_date(data.panel.date_of_row(len - 1));

    for (const auto& kind : config.models) {
        for (std::size_t horizon : config.horizons) {
            auto it = config.lookbacks.find(horizon);
            if (it == config.lookbacks.end())
                throw std::runtime_error("run_experiment: no lookback configured for horizon " +
                                         std::to_string(horizon));
            const std::size_t lookback = it->second;
            DenseArray series = detail::series_for(kind, data);

            EvalCell cell;
            cell.kind = kind;
            cell.model = detail::display_name(kind, config.hyper);
            cell.horizon = horizon;

            for (std::size_t si = 0; si < config.seeds.size(); ++si) {
                const std::uint64_t seed = config.seeds[si];
                detail::RollingScore score;
                if (kind == "persistence") {
                    score = detail::score_rolling(
                        series, split, lookback, horizon,
                        [&](const DenseArray& window, std::size_t) {
                            DenseArray pred = DenseArray::zeros({horizon, series.cols()});
                            for (std::size_t s = 0; s < horizon; ++s)
                                for (std::size_t j = 0; j < series.cols(); ++j)
                                    pred.at2(s, j) = window.at2(lookback - 1, j);
                            return pred;
                        });
                } else if (kind == "ar") {
                    std::vector<double> train_series(series.data.begin(),
                                                     series.data.begin() + split);
                    ArModel ar = ArModel::fit(train_series, config.hyper.ar_order,
                                              config.hyper.ar_ridge);
                    score = detail::score_rolling(
                        series, split, std::max(lookback, config.hyper.ar_order), horizon,
                        [&](const DenseArray& window, std::size_t) {
                            auto pred = ar.predict(window.data, horizon);
                            return DenseArray({horizon, 1}, std::move(pred));
                        });
                } else if (kind == "var") {
                    DenseArray train_slice(
                        {split, series.cols()},
                        std::vector<double>(series.data.begin(),
                                            series.data.begin() + split * series.cols()));
                    VarModel var = VarModel::fit(train_slice, config.hyper.var_order,
                                                 config.hyper.var_ridge);
                    score = detail::score_rolling(
                        series, split, std::max(lookback, config.hyper.var_order), horizon,
                        [&](const DenseArray& window, std::size_t) {
                            return var.predict(window, horizon);
                        });
                } else {
                    auto model = make_neural_model(kind, data, lookback, horizon, config.hyper);
                    if (!model)
                        throw std::runtime_error("run_experiment: unknown model kind '" + kind + "'");
                    // scale on the training slice only; forecasts are inverted
                    // back to kWh before scoring
                    DenseArray train_slice(
                        {split, series.cols()},
                        std::vector<double>(series.data.begin(),
                                            series.data.begin() + split * series.cols()));
                    ScalingTransform scaler = config.scale_inputs
                                                  ? ScalingTransform::fit(train_slice)
                                                  : ScalingTransform{};
                    DenseArray model_series =
                        config.scale_inputs ? scaler.apply(series) : series;

                    std::optional<ParameterStore> loaded;
                    if (hooks.load) loaded = hooks.load(kind, horizon, seed);
                    if (loaded) {
                        load_params_into(*model, std::move(*loaded));
                    } else {
                        DenseArray model_train(
                            {split, series.cols()},
                            std::vector<double>(model_series.data.begin(),
                                                model_series.data.begin() + split * series.cols()));
                        WindowSet ws = make_windows(model_train, {lookback, horizon, 1});
                        TrainConfig tc = config.train;
                        tc.seed = seed;
                        TrainTrace trace = train(*model, ws, tc);
                        if (hooks.save) hooks.save(*model, horizon, seed, trace);
                    }
                    score = detail::score_rolling(
                        series, split, lookback, horizon,
                        [&](const DenseArray& raw_window, std::size_t) {
                            DenseArray input =
                                config.scale_inputs ? scaler.apply(raw_window) : raw_window;
                            DenseArray pred = model->predict(input);
                            return config.scale_inputs ? scaler.invert(pred) : pred;
                        });
                }
                cell.per_seed_rmse.push_back(score.rmse_value);
                if (si == 0) cell.first_seed_totals = std::move(score.totals);
            }
            double mean = 0.0;
            for (double v : cell.per_seed_rmse) mean += v;
            mean /= double(cell.per_seed_rmse.size());
            cell.mean = mean;
            cell.stddev = detail::population_std(cell.per_seed_rmse, mean);
            report.cells.push_back(std::move(cell));
        }
    }
    return report;
}

// ---- report emission ----

inline void write_report_csv(std::ostream& out, const EvalReport& report) {
    out << "model,horizon_days,mean_rmse,std_rmse";
    for (std::size_t i = 0; i < report.seeds.size(); ++i) out << ",seed_" << report.seeds[i];
    out << '\n';
    for (const auto& c : report.cells) {
        out << csv_quote(c.model) << ',' << c.horizon << ',' << fmt_g17(c.mean) << ','
            << fmt_g17(c.stddev);
        for (double v : c.per_seed_rmse) out << ',' << fmt_g17(v);
        out << '\n';
    }
}

/// Aligned plain-text table: one row per model, one column per horizon,
/// cells "mean +- std" (population std over the seed list).
inline void write_report_table(std::ostream& out, const EvalReport& report) {
    std::vector<std::string> models;
    std::vector<std::size_t> horizons;
    for (const auto& c : report.cells) {
        if (std::find(models.begin(), models.end(), c.model) == models.end())
            models.push_back(c.model);
        if (std::find(horizons.begin(), horizons.end(), c.horizon) == horizons.end())
            horizons.push_back(c.horizon);
    }
    auto cell_text = [&](const std::string& m, std::size_t h) -> std::string {
        for (const auto& c : report.cells)
            if (c.model == m && c.horizon == h) {
                char buf[64];
                std::snprintf(buf, sizeof(buf), "%.1f +- %.1f", c.mean, c.stddev);
                return buf;
            }
        return "-";
    };
    std::size_t name_w = 5;
    for (const auto& m : models) name_w = std::max(name_w, m.size());
    const std::size_t col_w = 18;
    out << "Total-system RMSE (kWh), mean +- population std over seeds {";
    for (std::size_t i = 0; i < report.seeds.size(); ++i)
        out << (i ? "," : "") << report.seeds[i];
    out << "}\n";
    out << "train " << report.train_range << ", test " << report.test_range << "\n\n";
    out << std::string(name_w, ' ');
    for (std::size_t h : horizons) {
        std::string head = std::to_string(h) + (h == 1 ? " day" : " days");
        out << std::string(col_w - head.size(), ' ') << head;
    }
    out << '\n';
    for (const auto& m : models) {
        out << m << std::string(name_w - m.size(), ' ');
        for (std::size_t h : horizons) {
            std::string cell = cell_text(m, h);
            out << std::string(col_w - cell.size(), ' ') << cell;
        }
        out << '\n';
    }
}

/// Per-(window, step) total-system records backing the report and plots.
inline void write_totals_csv(std::ostream& out, const EvalCell& cell, const DemandPanel& panel) {
    out << "target_date,window_step,predicted_total,actual_total\n";
    for (const auto& r : cell.first_seed_totals)
        out << format_date(panel.date_of_row(r.target_day)) << ',' << r.step << ','
            << fmt_g17(r.predicted) << ',' << fmt_g17(r.actual) << '\n';
}

}  // namespace evf
