#pragma once

#include "dst/data.hpp"
#include "dst/tensor.hpp"
#include "dst/time.hpp"

#include <span>
#include <string>
#include <vector>

namespace dst {

/// 1 - SS_res / SS_tot. Throws UndefinedVarianceError when y is constant.
[[nodiscard]] double r_squared(std::span<const double> y, std::span<const double> y_hat);

/**
 * Mean of atan(|(y - y_hat) / y|). A term is 0 when y = y_hat = 0 and
 * pi/2 when y = 0 but y_hat is not.
 */
[[nodiscard]] double maape(std::span<const double> y, std::span<const double> y_hat);
[[nodiscard]] double maape_term(double y, double y_hat) noexcept;

/// Peak hours are [06:00, 10:00) and [17:00, 21:00).
[[nodiscard]] bool is_peak(Timestamp t) noexcept;
[[nodiscard]] std::vector<bool> peak_mask(std::span<const Timestamp> times);

struct LagScore {
    std::size_t lag = 0;
    double maape = 0.0;
    double r2 = 0.0;
    double peak_maape = 0.0;
    double nonpeak_maape = 0.0;
    std::size_t n = 0;
};

/// MAAPE at lag 12 over MAAPE at lag 1. Throws UndefinedRatioError on a zero lag-1 score.
[[nodiscard]] double maape_ratio(std::span<const LagScore> lags);

/// Linear-interpolation percentile (p in [0, 100]) of the finite values.
[[nodiscard]] double percentile(std::vector<double> values, double p);

/**
 * Stations whose R^2 is strictly below the 20th percentile of all finite
 * per-station scores. Requires at least five stations.
 */
[[nodiscard]] std::vector<std::string> challenge_stations(std::span<const std::string> station_ids,
                                                          std::span<const double> station_r2);

enum class PersistenceVariant { Recent, Historical };

/// B x N_s predictions repeating the last recent (or week-ago) value of each station.
[[nodiscard]] Tensor persistence_baseline(std::span<const SampleWindow> samples,
                                          PersistenceVariant variant = PersistenceVariant::Recent);

struct ScoreReport {
    std::string dataset;
    std::vector<std::string> station_ids;
    double r2 = 0.0;
    double maape = 0.0;
    double peak_maape = 0.0;     // NaN without peak samples
    double nonpeak_maape = 0.0;  // NaN without off-peak samples
    std::vector<double> station_r2;  // NaN for constant stations
    std::vector<double> station_maape;
    std::size_t n = 0;
    std::size_t n_peak = 0;
    std::size_t n_nonpeak = 0;
};

/**
 * Scores B x N_s count matrices (row b observed at times[b]). Predictions
 * are clamped at zero first. Dataset-level figures pool all stations.
 */
[[nodiscard]] ScoreReport score(const std::string& dataset, const Tensor& observed, const Tensor& predicted,
                                std::span<const Timestamp> times, std::span<const std::string> station_ids);

/// Rows "dataset,metric,scope,station_id_or_ALL,value".
[[nodiscard]] std::string report_csv(std::span<const ScoreReport> reports, const std::string& provenance);
/// Per-station distribution summary: "dataset,metric,min,q1,median,q3,max".
[[nodiscard]] std::string quartiles_csv(std::span<const ScoreReport> reports, const std::string& provenance);
/// One row per lag: "lag,maape,r2,peak_maape,nonpeak_maape,n".
[[nodiscard]] std::string lag_csv(std::span<const LagScore> lags, const std::string& provenance);

}  // namespace dst
