#include "dst/data.hpp"

#include "dst/csv.hpp"
#include "dst/error.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace dst {

int RidershipGrid::first_slot_minute() const noexcept {
    const int iv = interval_minutes;
    return (service.start_minute + iv - 1) / iv * iv;
}

std::size_t RidershipGrid::slots_per_day() const noexcept {
    const int first = first_slot_minute();
    if (first > service.end_minute) return 0;
    return static_cast<std::size_t>((service.end_minute - first) / interval_minutes + 1);
}

std::size_t RidershipGrid::num_days() const noexcept {
    const std::size_t spd = slots_per_day();
    return spd == 0 ? 0 : num_rows() / spd;
}

Timestamp RidershipGrid::time_of_row(std::size_t row) const noexcept {
    const std::size_t spd = slots_per_day();
    const auto day = first_day + static_cast<std::int64_t>(row / spd);
    const int minute = first_slot_minute() + static_cast<int>(row % spd) * interval_minutes;
    return make_timestamp(day, minute);
}

std::optional<std::size_t> RidershipGrid::row_of(Timestamp t) const noexcept {
    const int mod = t.minute_of_day();
    const int first = first_slot_minute();
    if (mod < first || mod > service.end_minute || (mod - first) % interval_minutes != 0) return std::nullopt;
    const std::int64_t day = t.day() - first_day;
    if (day < 0) return std::nullopt;
    return static_cast<std::size_t>(day) * slots_per_day() + static_cast<std::size_t>((mod - first) / interval_minutes);
}

std::pair<std::size_t, std::size_t> RidershipGrid::day_rows(std::int64_t first, std::int64_t last) const noexcept {
    const auto days = static_cast<std::int64_t>(num_days());
    const std::int64_t lo = std::clamp<std::int64_t>(first - first_day, 0, days);
    const std::int64_t hi = std::clamp<std::int64_t>(last - first_day + 1, lo, days);
    const std::size_t spd = slots_per_day();
    return {static_cast<std::size_t>(lo) * spd, static_cast<std::size_t>(hi) * spd};
}

RidershipGrid RidershipGrid::slice_days(std::size_t begin_day, std::size_t end_day) const {
    RidershipGrid out;
    out.first_day = first_day + static_cast<std::int64_t>(begin_day);
    out.interval_minutes = interval_minutes;
    out.service = service;
    out.station_ids = station_ids;
    const std::size_t spd = slots_per_day();
    const std::size_t n = num_stations();
    const std::size_t rows = end_day > begin_day ? (end_day - begin_day) * spd : 0;
    out.values = Tensor::matrix(rows, n);
    if (rows > 0) {
        const auto offset = static_cast<std::ptrdiff_t>(begin_day * spd * n);
        std::copy_n(values.values().begin() + offset, rows * n, out.values.values().begin());
    }
    return out;
}

AggregateResult aggregate_detailed(std::vector<RidershipRecord> records, const TransitGraph& graph,
                                   int interval_minutes, ServiceWindow service) {
    if (interval_minutes <= 0 || 60 % interval_minutes != 0) {
        throw ConfigError("aggregation interval must divide 60, got " + std::to_string(interval_minutes));
    }
    std::set<std::string> unknown;
    for (const auto& r : records) {
        if (!graph.index_of(r.station_id)) unknown.insert(r.station_id);
        if (r.boardings < 0) throw ParseError("negative boardings for station '" + r.station_id + "'");
    }
    if (!unknown.empty()) {
        std::string list;
        for (const auto& u : unknown) list += (list.empty() ? "" : ", ") + u;
        throw ReferenceError("ridership references unknown stations: " + list);
    }

    AggregateResult result;
    std::sort(records.begin(), records.end());
    const auto last = std::unique(records.begin(), records.end());
    result.duplicates_removed = static_cast<std::size_t>(records.end() - last);
    records.erase(last, records.end());

    RidershipGrid& grid = result.grid;
    grid.interval_minutes = interval_minutes;
    grid.service = service;
    grid.station_ids = graph.station_ids();

    auto bucket_of = [&](const RidershipRecord& r) -> std::optional<Timestamp> {
        const int mod = r.timestamp.minute_of_day();
        const int bucket = mod / interval_minutes * interval_minutes;
        if (!service.contains(mod) || bucket < grid.first_slot_minute()) return std::nullopt;
        return make_timestamp(r.timestamp.day(), bucket);
    };
    std::vector<std::pair<Timestamp, const RidershipRecord*>> kept;
    kept.reserve(records.size());
    for (const auto& r : records) {
        if (auto b = bucket_of(r)) {
            kept.emplace_back(*b, &r);
        } else {
            ++result.out_of_service;
        }
    }
    if (kept.empty()) {
        grid.values = Tensor::matrix(0, graph.size());
        return result;
    }
    grid.first_day = kept.front().first.day();
    std::int64_t last_day = grid.first_day;
    for (const auto& [bucket, r] : kept) last_day = std::max(last_day, bucket.day());

    const std::size_t spd = grid.slots_per_day();
    const auto days = static_cast<std::size_t>(last_day - grid.first_day + 1);
    grid.values = Tensor::matrix(days * spd, graph.size());
    for (const auto& [bucket, r] : kept) {
        grid.values(*grid.row_of(bucket), *graph.index_of(r->station_id)) += static_cast<double>(r->boardings);
    }
    return result;
}

RidershipGrid aggregate(std::vector<RidershipRecord> records, const TransitGraph& graph, int interval_minutes,
                        ServiceWindow service) {
    return aggregate_detailed(std::move(records), graph, interval_minutes, service).grid;
}

double ScalerParams::apply(std::size_t station, double x) const noexcept {
    const double lo = min[station], hi = max[station];
    return hi > lo ? (x - lo) / (hi - lo) : 0.0;
}

double ScalerParams::invert(std::size_t station, double scaled) const noexcept {
    const double lo = min[station], hi = max[station];
    return hi > lo ? scaled * (hi - lo) + lo : lo;
}

Tensor ScalerParams::apply(const Tensor& values) const {
    if (values.cols() != size()) throw DimensionError("scaler: station count mismatch");
    Tensor out = values;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = apply(c, out(r, c));
    }
    return out;
}

Tensor ScalerParams::invert(const Tensor& values) const {
    if (values.cols() != size()) throw DimensionError("scaler: station count mismatch");
    Tensor out = values;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = invert(c, out(r, c));
    }
    return out;
}

ScalerParams fit_scaler(const Tensor& rows) {
    if (rows.empty() || rows.rows() == 0) throw ContractError("fit_scaler: no training rows");
    ScalerParams p;
    p.min.assign(rows.cols(), 0.0);
    p.max.assign(rows.cols(), 0.0);
    for (std::size_t c = 0; c < rows.cols(); ++c) {
        double lo = rows(0, c), hi = rows(0, c);
        for (std::size_t r = 1; r < rows.rows(); ++r) {
            lo = std::min(lo, rows(r, c));
            hi = std::max(hi, rows(r, c));
        }
        p.min[c] = lo;
        p.max[c] = hi;
    }
    return p;
}

ScalerParams fit_scaler(const RidershipGrid& training) { return fit_scaler(training.values); }

RidershipGrid apply_scaler(const RidershipGrid& grid, const ScalerParams& scaler) {
    RidershipGrid out = grid;
    if (grid.num_rows() > 0) out.values = scaler.apply(grid.values);
    return out;
}

RidershipGrid invert_scaler(const RidershipGrid& grid, const ScalerParams& scaler) {
    RidershipGrid out = grid;
    if (grid.num_rows() > 0) out.values = scaler.invert(grid.values);
    return out;
}

std::size_t first_feasible_row(const RidershipGrid& grid, std::size_t recent_len, std::size_t historical_len) noexcept {
    const std::size_t week = 7 * grid.slots_per_day();
    return std::max(recent_len, week + historical_len - 1);
}

SampleWindow window_at(const RidershipGrid& grid, std::size_t row, std::size_t recent_len, std::size_t historical_len) {
    if (recent_len == 0 || historical_len == 0) throw ConfigError("window lengths must be positive");
    if (row < first_feasible_row(grid, recent_len, historical_len) || row >= grid.num_rows()) {
        throw CoverageError("no full window coverage for row " + std::to_string(row));
    }
    const std::size_t n = grid.num_stations();
    const std::size_t week = 7 * grid.slots_per_day();
    SampleWindow w;
    w.recent = Tensor::matrix(n, recent_len);
    w.historical = Tensor::matrix(n, historical_len);
    w.target.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t k = 0; k < recent_len; ++k) w.recent(s, k) = grid.values(row - recent_len + k, s);
        const std::size_t hist_end = row - week;
        for (std::size_t k = 0; k < historical_len; ++k) {
            w.historical(s, k) = grid.values(hist_end + 1 - historical_len + k, s);
        }
        w.target[s] = grid.values(row, s);
    }
    w.target_row = row;
    w.target_time = grid.time_of_row(row);
    return w;
}

WindowSet make_windows(const RidershipGrid& grid, std::size_t recent_len, std::size_t historical_len,
                       std::size_t row_begin, std::size_t row_end) {
    if (recent_len == 0 || historical_len == 0) throw ConfigError("window lengths must be positive");
    WindowSet set;
    row_end = std::min(row_end, grid.num_rows());
    if (row_begin >= row_end) return set;
    const std::size_t first = first_feasible_row(grid, recent_len, historical_len);
    for (std::size_t row = row_begin; row < row_end; ++row) {
        if (row < first) {
            ++set.skipped;
            continue;
        }
        set.samples.push_back(window_at(grid, row, recent_len, historical_len));
    }
    return set;
}

Period parse_period(const std::string& name, const std::string& range) {
    const auto sep = range.find("..");
    if (sep == std::string::npos) throw ParseError("period '" + name + "' must look like FIRST..LAST");
    return Period{name, parse_date(range.substr(0, sep)), parse_date(range.substr(sep + 2))};
}

void validate_periods(const std::vector<Period>& periods, bool chronological) {
    for (std::size_t i = 0; i < periods.size(); ++i) {
        const Period& a = periods[i];
        if (a.first_day > a.last_day) continue;
        for (std::size_t j = i + 1; j < periods.size(); ++j) {
            const Period& b = periods[j];
            if (b.first_day > b.last_day) continue;
            if (a.first_day <= b.last_day && b.first_day <= a.last_day) {
                throw SpecError("periods '" + a.name + "' and '" + b.name + "' overlap");
            }
            if (chronological && b.first_day <= a.last_day) {
                throw SpecError("period '" + b.name + "' must start after '" + a.name + "' ends");
            }
        }
    }
}

std::vector<std::pair<std::string, RidershipGrid>> split_periods(const RidershipGrid& grid,
                                                                 const std::vector<Period>& periods,
                                                                 bool chronological) {
    validate_periods(periods, chronological);
    std::vector<std::pair<std::string, RidershipGrid>> out;
    const std::size_t spd = grid.slots_per_day();
    for (const Period& p : periods) {
        if (p.first_day > p.last_day || spd == 0) {
            out.emplace_back(p.name, grid.slice_days(0, 0));
            continue;
        }
        const auto [lo, hi] = grid.day_rows(p.first_day, p.last_day);
        out.emplace_back(p.name, grid.slice_days(lo / spd, hi / spd));
    }
    return out;
}

std::vector<RidershipRecord> read_records(const std::filesystem::path& path) {
    const CsvTable table = read_csv(path);
    require_header(table, {"timestamp", "station_id", "boardings"}, path.string());
    std::vector<RidershipRecord> out;
    out.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        out.push_back({parse_timestamp(row[0]), row[1], parse_int(row[2], "boardings")});
    }
    return out;
}

std::string records_csv(const std::vector<RidershipRecord>& records, const std::string& provenance) {
    std::ostringstream os;
    os << provenance << "\ntimestamp,station_id,boardings\n";
    for (const auto& r : records) {
        os << format_timestamp(r.timestamp) << ',' << r.station_id << ',' << r.boardings << '\n';
    }
    return os.str();
}

std::string grid_csv(const RidershipGrid& grid, const std::string& provenance) {
    std::ostringstream os;
    os << provenance << "\ntimestamp";
    for (const auto& id : grid.station_ids) os << ',' << id;
    os << '\n';
    for (std::size_t r = 0; r < grid.num_rows(); ++r) {
        os << format_timestamp(grid.time_of_row(r));
        for (std::size_t c = 0; c < grid.num_stations(); ++c) os << ',' << format_double(grid.values(r, c));
        os << '\n';
    }
    return os.str();
}

}  // namespace dst
