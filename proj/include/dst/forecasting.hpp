#pragma once

#include "dst/data.hpp"
#include "dst/metrics.hpp"
#include "dst/model.hpp"

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dst {

/// Anything that maps (recent, historical) windows to next-interval values for every station.
class OneStepPredictor {
public:
    virtual ~OneStepPredictor() = default;

    [[nodiscard]] virtual std::size_t recent_len() const = 0;
    [[nodiscard]] virtual std::size_t historical_len() const = 0;

    /**
     * B x N_s scaled predictions. target_rows[b] is the grid row being
     * predicted by sample b; it may lie past the end of the grid.
     */
    [[nodiscard]] virtual Tensor predict(std::span<const Tensor> recent, std::span<const Tensor> historical,
                                         std::span<const std::size_t> target_rows) const = 0;
};

class ModelPredictor final : public OneStepPredictor {
public:
    ModelPredictor(ModelParams params, TransitGraph graph);

    [[nodiscard]] std::size_t recent_len() const override { return params_.config.recent_len; }
    [[nodiscard]] std::size_t historical_len() const override { return params_.config.historical_len; }
    [[nodiscard]] Tensor predict(std::span<const Tensor> recent, std::span<const Tensor> historical,
                                 std::span<const std::size_t> target_rows) const override;

private:
    ModelParams params_;
    TransitGraph graph_;
};

/**
 * Rolling input state of one forecast. `recent` always has I columns; its
 * last min(k, I) columns are the predictions of the k iterations so far.
 */
struct ForecastBuffer {
    Tensor recent;                                // N_s x I, scaled
    std::vector<std::vector<double>> generated;   // one N_s vector per iteration
    std::shared_ptr<const RidershipGrid> history;  // scaled observations for week-ago lookups
    std::size_t cursor = 0;                       // grid row of the next target

    [[nodiscard]] std::size_t iterations() const noexcept { return generated.size(); }
};

/// Buffer whose first target is `target_row`, seeded with the I observed rows before it.
[[nodiscard]] ForecastBuffer make_buffer(std::shared_ptr<const RidershipGrid> history, std::size_t target_row,
                                         std::size_t recent_len);

/// Number of further iterations whose week-ago window is covered by the history grid.
[[nodiscard]] std::size_t max_feasible_horizon(const ForecastBuffer& buffer, std::size_t historical_len);

/// Week-ago window for a target row (N_s x N_h); the row may lie past the end of the grid.
[[nodiscard]] Tensor historical_window(const RidershipGrid& grid, std::size_t target_row, std::size_t historical_len);

struct ForecastStep {
    std::size_t lag = 0;  // 1-based iteration number
    std::size_t row = 0;
    Timestamp time;
    std::vector<double> values;  // scaled, one per station
};

/**
 * Runs `horizon` iterations: predict the cursor row, append the
 * prediction to `recent`, drop the oldest column and advance the cursor.
 * Throws HorizonError naming the largest feasible horizon when the history
 * does not cover every target.
 */
std::vector<ForecastStep> iterative_forecast(const OneStepPredictor& model, ForecastBuffer& buffer,
                                             std::size_t horizon);

/// Same as iterative_forecast for many independent buffers, evaluated together in chunks.
std::vector<std::vector<ForecastStep>> iterative_forecast_batch(const OneStepPredictor& model,
                                                                std::span<ForecastBuffer> buffers, std::size_t horizon,
                                                                std::size_t chunk = 64);

/**
 * Pools every start row in [row_begin, row_end) whose full horizon is
 * observed and scores each lag on inverted, zero-clamped counts.
 */
[[nodiscard]] std::vector<LagScore> lagged_forecast_errors(const OneStepPredictor& model,
                                                           std::shared_ptr<const RidershipGrid> scaled,
                                                           const ScalerParams& scaler, std::size_t max_lag = 12,
                                                           std::size_t row_begin = 0,
                                                           std::size_t row_end = static_cast<std::size_t>(-1));

/// Rows "target_time,station_id,prediction,lag" with inverted, zero-clamped predictions.
[[nodiscard]] std::string forecast_csv(std::span<const ForecastStep> steps, std::span<const std::string> station_ids,
                                       const ScalerParams& scaler, const std::string& provenance);

}  // namespace dst
