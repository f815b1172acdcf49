#include "dst/metrics.hpp"

#include "dst/csv.hpp"
#include "dst/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace dst {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_lengths(std::span<const double> y, std::span<const double> y_hat, std::size_t min, const char* what) {
    if (y.size() != y_hat.size()) {
        throw DimensionError(std::string(what) + ": " + std::to_string(y.size()) + " observations, " +
                             std::to_string(y_hat.size()) + " predictions");
    }
    if (y.size() < min) throw DimensionError(std::string(what) + ": needs at least " + std::to_string(min) + " values");
}

double r2_or_nan(std::span<const double> y, std::span<const double> y_hat) {
    try {
        return r_squared(y, y_hat);
    } catch (const UndefinedVarianceError&) {
        return kNaN;
    }
}

}  // namespace

double r_squared(std::span<const double> y, std::span<const double> y_hat) {
    check_lengths(y, y_hat, 2, "r_squared");
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ss_res += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
        ss_tot += (y[i] - mean) * (y[i] - mean);
    }
    if (ss_tot == 0.0) throw UndefinedVarianceError("r_squared: observations have zero variance");
    return 1.0 - ss_res / ss_tot;
}

double maape_term(double y, double y_hat) noexcept {
    if (y == 0.0) return y_hat == 0.0 ? 0.0 : std::numbers::pi / 2.0;
    return std::atan(std::abs((y - y_hat) / y));
}

double maape(std::span<const double> y, std::span<const double> y_hat) {
    check_lengths(y, y_hat, 1, "maape");
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += maape_term(y[i], y_hat[i]);
    return acc / static_cast<double>(y.size());
}

bool is_peak(Timestamp t) noexcept {
    const int m = t.minute_of_day();
    return (m >= 6 * 60 && m < 10 * 60) || (m >= 17 * 60 && m < 21 * 60);
}

std::vector<bool> peak_mask(std::span<const Timestamp> times) {
    std::vector<bool> out(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) out[i] = is_peak(times[i]);
    return out;
}

double maape_ratio(std::span<const LagScore> lags) {
    const LagScore* first = nullptr;
    const LagScore* twelfth = nullptr;
    for (const auto& l : lags) {
        if (l.lag == 1) first = &l;
        if (l.lag == 12) twelfth = &l;
    }
    if (!first || !twelfth) throw ContractError("maape_ratio: lags 1 and 12 are required");
    if (first->maape == 0.0) throw UndefinedRatioError("maape_ratio: lag-1 MAAPE is zero");
    return twelfth->maape / first->maape;
}

double percentile(std::vector<double> values, double p) {
    std::erase_if(values, [](double v) { return !std::isfinite(v); });
    if (values.empty()) throw ContractError("percentile: no finite values");
    std::sort(values.begin(), values.end());
    const double pos = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<std::string> challenge_stations(std::span<const std::string> station_ids,
                                            std::span<const double> station_r2) {
    if (station_ids.size() != station_r2.size()) throw DimensionError("challenge_stations: length mismatch");
    if (station_ids.size() < 5) {
        throw ContractError("challenge_stations: needs at least 5 stations, got " + std::to_string(station_ids.size()));
    }
    const double cut = percentile(std::vector<double>(station_r2.begin(), station_r2.end()), 20.0);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < station_ids.size(); ++i) {
        if (std::isfinite(station_r2[i]) && station_r2[i] < cut) out.push_back(station_ids[i]);
    }
    return out;
}

Tensor persistence_baseline(std::span<const SampleWindow> samples, PersistenceVariant variant) {
    if (samples.empty()) return {};
    const std::size_t n = samples.front().recent.rows();
    Tensor out = Tensor::matrix(samples.size(), n);
    for (std::size_t b = 0; b < samples.size(); ++b) {
        const Tensor& src = variant == PersistenceVariant::Recent ? samples[b].recent : samples[b].historical;
        if (src.rows() != n) throw DimensionError("persistence_baseline: station count varies between samples");
        for (std::size_t i = 0; i < n; ++i) out(b, i) = src(i, src.cols() - 1);
    }
    return out;
}

ScoreReport score(const std::string& dataset, const Tensor& observed, const Tensor& predicted,
                  std::span<const Timestamp> times, std::span<const std::string> station_ids) {
    const std::size_t rows = observed.rows(), n = observed.cols();
    if (observed.empty()) throw ContractError("score: no samples for '" + dataset + "'");
    if (predicted.rows() != rows || predicted.cols() != n || times.size() != rows || station_ids.size() != n) {
        throw DimensionError("score: observations " + observed.shape_string() + ", predictions " +
                             predicted.shape_string() + ", " + std::to_string(times.size()) + " times, " +
                             std::to_string(station_ids.size()) + " stations");
    }
    ScoreReport rep;
    rep.dataset = dataset;
    rep.station_ids.assign(station_ids.begin(), station_ids.end());
    rep.n = rows * n;

    std::vector<double> y(rep.n), yh(rep.n);
    double peak_sum = 0.0, off_sum = 0.0;
    for (std::size_t b = 0; b < rows; ++b) {
        const bool peak = is_peak(times[b]);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t k = b * n + i;
            y[k] = observed(b, i);
            yh[k] = std::max(0.0, predicted(b, i));
            const double term = maape_term(y[k], yh[k]);
            (peak ? peak_sum : off_sum) += term;
            (peak ? rep.n_peak : rep.n_nonpeak) += 1;
        }
    }
    rep.maape = (peak_sum + off_sum) / static_cast<double>(rep.n);
    rep.peak_maape = rep.n_peak ? peak_sum / static_cast<double>(rep.n_peak) : kNaN;
    rep.nonpeak_maape = rep.n_nonpeak ? off_sum / static_cast<double>(rep.n_nonpeak) : kNaN;
    rep.r2 = rep.n >= 2 ? r2_or_nan(y, yh) : kNaN;

    std::vector<double> ys(rows), yhs(rows);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t b = 0; b < rows; ++b) {
            ys[b] = y[b * n + i];
            yhs[b] = yh[b * n + i];
        }
        rep.station_maape.push_back(maape(ys, yhs));
        rep.station_r2.push_back(rows >= 2 ? r2_or_nan(ys, yhs) : kNaN);
    }
    return rep;
}

std::string report_csv(std::span<const ScoreReport> reports, const std::string& provenance) {
    std::string s = provenance + "\n" + "dataset,metric,scope,station_id_or_ALL,value\n";
    auto row = [&](const ScoreReport& r, const char* metric, const char* scope, const std::string& id, double v) {
        s += r.dataset + "," + metric + "," + scope + "," + id + "," + format_double(v) + "\n";
    };
    for (const auto& r : reports) {
        row(r, "r2", "pooled", "ALL", r.r2);
        row(r, "maape", "pooled", "ALL", r.maape);
        row(r, "peak_maape", "pooled", "ALL", r.peak_maape);
        row(r, "nonpeak_maape", "pooled", "ALL", r.nonpeak_maape);
        row(r, "n", "pooled", "ALL", static_cast<double>(r.n));
        for (std::size_t i = 0; i < r.station_ids.size(); ++i) {
            row(r, "r2", "station", r.station_ids[i], r.station_r2[i]);
            row(r, "maape", "station", r.station_ids[i], r.station_maape[i]);
        }
    }
    return s;
}

std::string quartiles_csv(std::span<const ScoreReport> reports, const std::string& provenance) {
    std::string s = provenance + "\n" + "dataset,metric,min,q1,median,q3,max\n";
    for (const auto& r : reports) {
        for (const auto& [metric, values] : {std::pair{"r2", &r.station_r2}, std::pair{"maape", &r.station_maape}}) {
            const bool any = std::any_of(values->begin(), values->end(), [](double v) { return std::isfinite(v); });
            s += r.dataset + "," + metric;
            for (double p : {0.0, 25.0, 50.0, 75.0, 100.0}) s += "," + format_double(any ? percentile(*values, p) : kNaN);
            s += "\n";
        }
    }
    return s;
}

std::string lag_csv(std::span<const LagScore> lags, const std::string& provenance) {
    std::string s = provenance + "\n" + "lag,maape,r2,peak_maape,nonpeak_maape,n\n";
    for (const auto& l : lags) {
        s += std::to_string(l.lag) + "," + format_double(l.maape) + "," + format_double(l.r2) + "," +
             format_double(l.peak_maape) + "," + format_double(l.nonpeak_maape) + "," + std::to_string(l.n) + "\n";
    }
    return s;
}

}  // namespace dst
