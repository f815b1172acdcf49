#include "dst/forecasting.hpp"

#include "dst/csv.hpp"
#include "dst/error.hpp"

#include <algorithm>

namespace dst {

ModelPredictor::ModelPredictor(ModelParams params, TransitGraph graph)
    : params_(std::move(params)), graph_(std::move(graph)) {
    if (graph_.size() != params_.config.stations) {
        throw ContractError("model expects " + std::to_string(params_.config.stations) + " stations, network has " +
                            std::to_string(graph_.size()));
    }
}

Tensor ModelPredictor::predict(std::span<const Tensor> recent, std::span<const Tensor> historical,
                               std::span<const std::size_t>) const {
    return predict_batch(recent, historical, graph_, params_);
}

ForecastBuffer make_buffer(std::shared_ptr<const RidershipGrid> history, std::size_t target_row,
                           std::size_t recent_len) {
    if (!history) throw ContractError("forecast buffer needs a history grid");
    if (recent_len == 0) throw ConfigError("recent window length must be positive");
    if (target_row < recent_len || target_row > history->num_rows()) {
        throw CoverageError("forecast start row " + std::to_string(target_row) + " needs " +
                            std::to_string(recent_len) + " observed rows before it");
    }
    const std::size_t n = history->num_stations();
    ForecastBuffer b;
    b.recent = Tensor::matrix(n, recent_len);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t k = 0; k < recent_len; ++k) b.recent(s, k) = history->values(target_row - recent_len + k, s);
    }
    b.history = std::move(history);
    b.cursor = target_row;
    return b;
}

std::size_t max_feasible_horizon(const ForecastBuffer& buffer, std::size_t historical_len) {
    const RidershipGrid& g = *buffer.history;
    const std::size_t week = 7 * g.slots_per_day();
    // Target row t needs rows t - week - N_h + 1 .. t - week.
    if (buffer.cursor + 1 < week + historical_len) return 0;
    const std::size_t last_target = g.num_rows() + week - 1;
    return buffer.cursor > last_target ? 0 : last_target - buffer.cursor + 1;
}

Tensor historical_window(const RidershipGrid& grid, std::size_t target_row, std::size_t historical_len) {
    const std::size_t week = 7 * grid.slots_per_day();
    if (target_row + 1 < week + historical_len || target_row >= grid.num_rows() + week) {
        throw CoverageError("no week-ago coverage for row " + std::to_string(target_row));
    }
    const std::size_t end = target_row - week;
    const std::size_t n = grid.num_stations();
    Tensor h = Tensor::matrix(n, historical_len);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t k = 0; k < historical_len; ++k) h(s, k) = grid.values(end + 1 - historical_len + k, s);
    }
    return h;
}

namespace {

void advance(ForecastBuffer& b, std::span<const double> prediction) {
    const std::size_t n = b.recent.rows(), len = b.recent.cols();
    for (std::size_t s = 0; s < n; ++s) {
        auto row = b.recent.row(s);
        std::copy(row.begin() + 1, row.end(), row.begin());
        row[len - 1] = prediction[s];
    }
    b.generated.emplace_back(prediction.begin(), prediction.end());
    ++b.cursor;
}

}  // namespace

std::vector<std::vector<ForecastStep>> iterative_forecast_batch(const OneStepPredictor& model,
                                                                std::span<ForecastBuffer> buffers, std::size_t horizon,
                                                                std::size_t chunk) {
    if (horizon == 0) throw ConfigError("forecast horizon must be at least 1");
    for (const auto& b : buffers) {
        if (!b.history) throw ContractError("forecast buffer has no history grid");
        if (b.recent.cols() != model.recent_len() || b.recent.rows() != b.history->num_stations()) {
            throw DimensionError("forecast buffer is " + b.recent.shape_string() + ", model expects " +
                                 std::to_string(model.recent_len()) + " columns");
        }
        const std::size_t max = max_feasible_horizon(b, model.historical_len());
        if (horizon > max) {
            throw HorizonError("horizon " + std::to_string(horizon) + " from " +
                               format_timestamp(b.history->time_of_row(b.cursor)) +
                               " exceeds the week-ago coverage; the maximum feasible horizon is " +
                               std::to_string(max));
        }
    }
    chunk = std::max<std::size_t>(chunk, 1);
    std::vector<std::vector<ForecastStep>> out(buffers.size());
    for (std::size_t step = 0; step < horizon; ++step) {
        for (std::size_t begin = 0; begin < buffers.size(); begin += chunk) {
            const std::size_t count = std::min(chunk, buffers.size() - begin);
            std::vector<Tensor> recent, hist;
            std::vector<std::size_t> rows;
            for (std::size_t k = begin; k < begin + count; ++k) {
                recent.push_back(buffers[k].recent);
                hist.push_back(historical_window(*buffers[k].history, buffers[k].cursor, model.historical_len()));
                rows.push_back(buffers[k].cursor);
            }
            const Tensor pred = model.predict(recent, hist, rows);
            if (pred.rows() != count || pred.cols() != buffers[begin].recent.rows()) {
                throw DimensionError("predictor returned " + pred.shape_string());
            }
            for (std::size_t k = 0; k < count; ++k) {
                ForecastBuffer& b = buffers[begin + k];
                const auto values = pred.row(k);
                out[begin + k].push_back({step + 1, b.cursor, b.history->time_of_row(b.cursor),
                                          std::vector<double>(values.begin(), values.end())});
                advance(b, values);
            }
        }
    }
    return out;
}

std::vector<ForecastStep> iterative_forecast(const OneStepPredictor& model, ForecastBuffer& buffer,
                                             std::size_t horizon) {
    return std::move(iterative_forecast_batch(model, std::span<ForecastBuffer>(&buffer, 1), horizon).front());
}

std::vector<LagScore> lagged_forecast_errors(const OneStepPredictor& model, std::shared_ptr<const RidershipGrid> scaled,
                                             const ScalerParams& scaler, std::size_t max_lag, std::size_t row_begin,
                                             std::size_t row_end) {
    if (!scaled) throw ContractError("lagged_forecast_errors: no grid");
    if (max_lag == 0) throw ConfigError("lagged_forecast_errors: max_lag must be positive");
    const RidershipGrid& g = *scaled;
    const std::size_t n = g.num_stations();
    if (scaler.size() != n) throw ContractError("lagged_forecast_errors: scaler does not match the grid");
    row_end = std::min(row_end, g.num_rows());
    const std::size_t first = std::max(row_begin, first_feasible_row(g, model.recent_len(), model.historical_len()));
    if (row_end < first + max_lag) {
        throw HorizonError("no start row in range supports a " + std::to_string(max_lag) + "-step horizon");
    }
    std::vector<ForecastBuffer> buffers;
    for (std::size_t s = first; s + max_lag <= row_end; ++s) buffers.push_back(make_buffer(scaled, s, model.recent_len()));
    const auto runs = iterative_forecast_batch(model, buffers, max_lag);

    std::vector<LagScore> out;
    const auto ids = g.station_ids;
    for (std::size_t lag = 1; lag <= max_lag; ++lag) {
        Tensor observed = Tensor::matrix(runs.size(), n), predicted = Tensor::matrix(runs.size(), n);
        std::vector<Timestamp> times;
        for (std::size_t b = 0; b < runs.size(); ++b) {
            const ForecastStep& st = runs[b][lag - 1];
            times.push_back(st.time);
            for (std::size_t i = 0; i < n; ++i) {
                observed(b, i) = scaler.invert(i, g.values(st.row, i));
                predicted(b, i) = scaler.invert(i, st.values[i]);
            }
        }
        const ScoreReport r = score("lag" + std::to_string(lag), observed, predicted, times, ids);
        out.push_back({lag, r.maape, r.r2, r.peak_maape, r.nonpeak_maape, r.n});
    }
    return out;
}

std::string forecast_csv(std::span<const ForecastStep> steps, std::span<const std::string> station_ids,
                         const ScalerParams& scaler, const std::string& provenance) {
    std::string s = provenance + "\n" + "target_time,station_id,prediction,lag\n";
    for (const auto& st : steps) {
        if (st.values.size() != station_ids.size()) throw DimensionError("forecast_csv: station count mismatch");
        for (std::size_t i = 0; i < station_ids.size(); ++i) {
            s += format_timestamp(st.time) + "," + station_ids[i] + "," +
                 format_double(std::max(0.0, scaler.invert(i, st.values[i]))) + "," + std::to_string(st.lag) + "\n";
        }
    }
    return s;
}

}  // namespace dst
