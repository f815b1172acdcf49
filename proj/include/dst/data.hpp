#pragma once

#include "dst/graph.hpp"
#include "dst/tensor.hpp"
#include "dst/time.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dst {

struct RidershipRecord {
    Timestamp timestamp;
    std::string station_id;
    std::int64_t boardings = 0;

    friend auto operator<=>(const RidershipRecord&, const RidershipRecord&) = default;
};

/// Daily in-service interval, minutes after midnight, both ends inclusive.
struct ServiceWindow {
    int start_minute = 6 * 60;
    int end_minute = 23 * 60 + 59;

    [[nodiscard]] bool contains(int minute_of_day) const noexcept {
        return minute_of_day >= start_minute && minute_of_day <= end_minute;
    }
};

/**
 * Time x station boarding counts on a fixed interval grid. Only
 * in-service buckets are stored: row r is slot r % slots_per_day() of day
 * first_day + r / slots_per_day(), so consecutive days are concatenated
 * with the night block removed.
 */
struct RidershipGrid {
    std::int64_t first_day = 0;
    int interval_minutes = 15;
    ServiceWindow service;
    std::vector<std::string> station_ids;
    Tensor values;  // rows x stations

    [[nodiscard]] std::size_t slots_per_day() const noexcept;
    [[nodiscard]] int first_slot_minute() const noexcept;
    [[nodiscard]] std::size_t num_rows() const noexcept { return values.empty() ? 0 : values.rows(); }
    [[nodiscard]] std::size_t num_stations() const noexcept { return station_ids.size(); }
    [[nodiscard]] std::size_t num_days() const noexcept;
    /// Timestamp of a row; also defined for rows past the end of the grid.
    [[nodiscard]] Timestamp time_of_row(std::size_t row) const noexcept;
    [[nodiscard]] std::optional<std::size_t> row_of(Timestamp t) const noexcept;
    /// Rows covering days [first, last] (absolute day numbers), clipped to the grid.
    [[nodiscard]] std::pair<std::size_t, std::size_t> day_rows(std::int64_t first, std::int64_t last) const noexcept;
    /// Sub-grid for whole days [begin_day, end_day) relative to first_day.
    [[nodiscard]] RidershipGrid slice_days(std::size_t begin_day, std::size_t end_day) const;
};

struct AggregateResult {
    RidershipGrid grid;
    std::size_t duplicates_removed = 0;
    std::size_t out_of_service = 0;
};

/**
 * Buckets records onto the interval grid. Exact duplicate records are
 * counted once, records outside the service window are dropped and empty
 * in-service buckets are zero. The grid spans every day from the first to
 * the last record. Throws ReferenceError listing unknown station ids.
 */
[[nodiscard]] AggregateResult aggregate_detailed(std::vector<RidershipRecord> records, const TransitGraph& graph,
                                                 int interval_minutes = 15, ServiceWindow service = {});
[[nodiscard]] RidershipGrid aggregate(std::vector<RidershipRecord> records, const TransitGraph& graph,
                                      int interval_minutes = 15, ServiceWindow service = {});

/// Per-station min-max scaling fitted on training rows.
struct ScalerParams {
    std::vector<double> min;
    std::vector<double> max;

    [[nodiscard]] std::size_t size() const noexcept { return min.size(); }
    [[nodiscard]] double apply(std::size_t station, double x) const noexcept;
    [[nodiscard]] double invert(std::size_t station, double scaled) const noexcept;
    /// Applies column-wise to a rows x stations matrix.
    [[nodiscard]] Tensor apply(const Tensor& values) const;
    [[nodiscard]] Tensor invert(const Tensor& values) const;
};

[[nodiscard]] ScalerParams fit_scaler(const Tensor& training_rows);
[[nodiscard]] ScalerParams fit_scaler(const RidershipGrid& training);
[[nodiscard]] RidershipGrid apply_scaler(const RidershipGrid& grid, const ScalerParams& scaler);
[[nodiscard]] RidershipGrid invert_scaler(const RidershipGrid& grid, const ScalerParams& scaler);

/// One aligned input/target sample. Matrices are stations x time, oldest column first.
struct SampleWindow {
    Tensor recent;                // N_s x I, rows t-I .. t-1
    Tensor historical;            // N_s x N_h, rows ending at the target row one week earlier
    std::vector<double> target;   // N_s
    Timestamp target_time;
    std::size_t target_row = 0;
};

struct WindowSet {
    std::vector<SampleWindow> samples;
    std::size_t skipped = 0;
};

/// First target row with full recent and week-ago coverage.
[[nodiscard]] std::size_t first_feasible_row(const RidershipGrid& grid, std::size_t recent_len,
                                             std::size_t historical_len) noexcept;

/// Rows [row_begin, row_end) are the candidate targets; defaults to the whole grid.
[[nodiscard]] WindowSet make_windows(const RidershipGrid& grid, std::size_t recent_len = 20,
                                     std::size_t historical_len = 20, std::size_t row_begin = 0,
                                     std::size_t row_end = static_cast<std::size_t>(-1));

/// Builds the window whose target is `row`. Requires row >= first_feasible_row.
[[nodiscard]] SampleWindow window_at(const RidershipGrid& grid, std::size_t row, std::size_t recent_len,
                                     std::size_t historical_len);

struct Period {
    std::string name;
    std::int64_t first_day = 0;  // inclusive
    std::int64_t last_day = 0;   // inclusive
};

/// Parses "YYYY-MM-DD..YYYY-MM-DD".
[[nodiscard]] Period parse_period(const std::string& name, const std::string& range);

/**
 * Cuts the grid into one sub-grid per period. Ranges must not overlap;
 * with `chronological` each period must also start after the previous one
 * ends. Empty or out-of-grid ranges give empty grids.
 */
[[nodiscard]] std::vector<std::pair<std::string, RidershipGrid>> split_periods(const RidershipGrid& grid,
                                                                              const std::vector<Period>& periods,
                                                                              bool chronological = false);

void validate_periods(const std::vector<Period>& periods, bool chronological);

[[nodiscard]] std::vector<RidershipRecord> read_records(const std::filesystem::path& path);
[[nodiscard]] std::string records_csv(const std::vector<RidershipRecord>& records, const std::string& provenance);
[[nodiscard]] std::string grid_csv(const RidershipGrid& grid, const std::string& provenance);

}  // namespace dst
