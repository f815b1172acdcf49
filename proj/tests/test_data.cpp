#include "dst/csv.hpp"
#include "dst/data.hpp"
#include "dst/error.hpp"
#include "dst/synth.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

using namespace dst;
using testing::kMonday;
using testing::make_grid;

namespace {

RidershipRecord rec(std::int64_t day, int minute, const std::string& id, std::int64_t b) {
    return {make_timestamp(day, minute), id, b};
}

std::size_t row_at(const RidershipGrid& g, std::int64_t day, int minute) {
    return *g.row_of(make_timestamp(day, minute));
}

}  // namespace

TEST_CASE("aggregation sums buckets, drops night records and collapses duplicates") {
    const auto g = testing::path(2);
    std::vector<RidershipRecord> r = {
        rec(kMonday, 8 * 60 + 1, "s0", 2),  rec(kMonday, 8 * 60 + 7, "s0", 3), rec(kMonday, 8 * 60 + 14, "s0", 5),
        rec(kMonday, 9 * 60, "s1", 4),      rec(kMonday, 9 * 60, "s1", 4),     rec(kMonday, 3 * 60, "s0", 100),
        rec(kMonday + 1, 6 * 60, "s1", 1),
    };
    const auto res = aggregate_detailed(r, g);
    const auto& grid = res.grid;
    CHECK(grid.num_days() == 2);
    CHECK(grid.values(row_at(grid, kMonday, 8 * 60), 0) == 10.0);
    CHECK(grid.values(row_at(grid, kMonday, 9 * 60), 1) == 4.0);
    CHECK(res.duplicates_removed == 1);
    CHECK(res.out_of_service == 1);
    const double total = std::accumulate(grid.values.values().begin(), grid.values.values().end(), 0.0);
    CHECK(total == 15.0);
    for (std::size_t row = 0; row < grid.num_rows(); ++row) CHECK(grid.service.contains(grid.time_of_row(row).minute_of_day()));

    std::reverse(r.begin(), r.end());
    CHECK(aggregate(r, g).values.storage() == grid.values.storage());
}

TEST_CASE("unknown stations are listed") {
    try {
        (void)aggregate({rec(kMonday, 480, "ghost", 1), rec(kMonday, 480, "phantom", 1)}, testing::path(2));
        FAIL("expected ReferenceError");
    } catch (const ReferenceError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("ghost") != std::string::npos);
        CHECK(msg.find("phantom") != std::string::npos);
    }
}

TEST_CASE("min-max scaling") {
    Tensor rows = Tensor::from_rows({{0, 4}, {5, 4}, {10, 4}});
    const auto sc = fit_scaler(rows);
    const Tensor scaled = sc.apply(rows);
    CHECK(scaled(0, 0) == 0.0);
    CHECK(scaled(1, 0) == 0.5);
    CHECK(scaled(2, 0) == 1.0);
    CHECK(scaled(0, 1) == 0.0);
    CHECK(scaled(1, 1) == 0.0);
    const ScalerParams p{{0.0}, {10.0}};
    CHECK(p.invert(0, p.apply(0, 7.3)) == doctest::Approx(7.3).epsilon(1e-15));

    Rng rng(4);
    const auto grid = make_grid(3, 8, [&](std::size_t, std::size_t, std::size_t) { return std::floor(rng.uniform(0, 500)); });
    const auto s = fit_scaler(grid);
    const auto back = invert_scaler(apply_scaler(grid, s), s);
    for (std::size_t i = 0; i < grid.values.size(); ++i) {
        CHECK(std::abs(back.values.values()[i] - grid.values.values()[i]) <= 1e-12 * 500);
    }
}

TEST_CASE("historical window lines up with the same interval a week earlier") {
    const auto grid = make_grid(2, 9, [](std::size_t d, std::size_t k, std::size_t s) { return 1000.0 * d + k + 0.5 * s; });
    const std::size_t tuesday = row_at(grid, kMonday + 8, 8 * 60);
    const auto w = window_at(grid, tuesday, 20, 20);
    CHECK(grid.time_of_row(tuesday).weekday() == 1);
    for (std::size_t s = 0; s < 2; ++s) {
        CHECK(w.historical(s, 19) == grid.values(row_at(grid, kMonday + 1, 8 * 60), s));
        CHECK(w.recent(s, 19) == grid.values(tuesday - 1, s));
        CHECK(w.target[s] == grid.values(tuesday, s));
    }
    CHECK(make_timestamp(kMonday + 1, 8 * 60) == grid.time_of_row(tuesday - 7 * grid.slots_per_day()));
}

TEST_CASE("short grids give no samples") {
    const auto grid = make_grid(2, 6, [](std::size_t, std::size_t, std::size_t) { return 1.0; });
    const auto set = make_windows(grid, 20, 20);
    CHECK(set.samples.empty());
    CHECK(set.skipped == grid.num_rows());
}

TEST_CASE("I = N_h = 1 windows match brute-force index arithmetic") {
    const auto grid = make_grid(3, 8, [](std::size_t d, std::size_t k, std::size_t s) { return d * 100000.0 + k * 10.0 + s; });
    const std::size_t spd = grid.slots_per_day();
    const auto set = make_windows(grid, 1, 1);
    std::size_t expected = 0;
    for (std::size_t d = 0; d < 8; ++d) {
        for (std::size_t k = 0; k < spd; ++k) {
            if (d < 7) continue;  // needs the same slot one week back
            ++expected;
        }
    }
    REQUIRE(set.samples.size() == expected);
    CHECK(set.skipped == grid.num_rows() - expected);
    for (const auto& w : set.samples) {
        const std::size_t d = w.target_row / spd, k = w.target_row % spd;
        for (std::size_t s = 0; s < 3; ++s) {
            const double prev = k > 0 ? d * 100000.0 + (k - 1) * 10.0 + s : (d - 1) * 100000.0 + (spd - 1) * 10.0 + s;
            CHECK(w.recent(s, 0) == prev);
            CHECK(w.historical(s, 0) == (d - 7) * 100000.0 + k * 10.0 + s);
        }
        CHECK(w.target_time.day() - 7 == grid.time_of_row(w.target_row - 7 * spd).day());
    }
}

TEST_CASE("sample count equals rows with full coverage") {
    const auto grid = make_grid(1, 9, [](std::size_t, std::size_t, std::size_t) { return 0.0; });
    for (std::size_t len : {1u, 5u, 20u, 80u}) {
        std::size_t brute = 0;
        for (std::size_t row = 0; row < grid.num_rows(); ++row) {
            const bool recent_ok = row >= len;
            const bool hist_ok = row >= 7 * grid.slots_per_day() + len - 1;
            brute += recent_ok && hist_ok;
        }
        CHECK(make_windows(grid, len, len).samples.size() == brute);
    }
}

TEST_CASE("period splitting") {
    const auto grid = make_grid(2, 28, [](std::size_t d, std::size_t, std::size_t) { return static_cast<double>(d); });
    const auto parts = split_periods(grid, {parse_period("train", "2024-01-01..2024-01-21"),
                                            parse_period("test", "2024-01-22..2024-01-28")},
                                     true);
    CHECK(parts[0].second.num_days() == 21);
    CHECK(parts[1].second.num_days() == 7);
    CHECK(parts[1].second.values(0, 0) == 21.0);

    const auto empty = split_periods(grid, {Period{"none", kMonday + 5, kMonday + 4}});
    CHECK(empty[0].second.num_rows() == 0);

    CHECK_THROWS_AS((void)split_periods(grid, {parse_period("a", "2024-01-01..2024-01-10"),
                                               parse_period("b", "2024-01-10..2024-01-12")}),
                    SpecError);
    CHECK_THROWS_AS((void)split_periods(grid, {parse_period("late", "2024-01-20..2024-01-21"),
                                               parse_period("early", "2024-01-01..2024-01-02")},
                                        true),
                    SpecError);

    const auto three = split_periods(grid, {parse_period("normal", "2024-01-15..2024-01-19"),
                                            parse_period("holiday", "2024-01-20..2024-01-21"),
                                            parse_period("strike", "2024-01-22..2024-01-28")});
    std::size_t rows = 0;
    for (const auto& [name, g] : three) rows += g.num_rows();
    CHECK(rows == 14 * grid.slots_per_day());
}

TEST_CASE("synthetic generator") {
    SynthConfig c;
    c.stations = 6;
    c.days = 15;
    c.seed = 9;
    const auto a = synth_generate(c), b = synth_generate(c);
    CHECK(a.records == b.records);
    c.seed = 10;
    CHECK(synth_generate(c).records != a.records);

    std::int64_t manifest_sum = 0, record_sum = 0;
    for (const auto& m : a.manifest) manifest_sum += m.total;
    for (const auto& r : a.records) record_sum += r.boardings;
    CHECK(manifest_sum == a.total);
    CHECK(record_sum == a.total);

    int maxima = 0;
    double prev2 = archetype_intensity(Archetype::TwoPeak, 6 * 60, false);
    double prev = archetype_intensity(Archetype::TwoPeak, 6 * 60 + 1, false);
    for (int m = 6 * 60 + 2; m < 24 * 60; ++m) {
        const double cur = archetype_intensity(Archetype::TwoPeak, m, false);
        if (prev > prev2 && prev > cur) ++maxima;
        prev2 = prev;
        prev = cur;
    }
    CHECK(maxima == 2);

    CHECK_THROWS_AS([] {
        SynthConfig bad;
        bad.days = 10;
        (void)synth_generate(bad);
    }(), ConfigError);
}

TEST_CASE("record and manifest files round-trip") {
    SynthConfig c;
    c.stations = 4;
    c.days = 15;
    const auto data = synth_generate(c);
    const auto dir = std::filesystem::temp_directory_path() / "dst_data_test";
    write_text_file(dir / "r.csv", records_csv(data.records, "# test"));
    write_text_file(dir / "m.json", manifest_json(data, c, "abc"));
    auto back = read_records(dir / "r.csv");
    auto orig = data.records;
    std::sort(back.begin(), back.end());
    std::sort(orig.begin(), orig.end());
    CHECK(back == orig);
    const auto m = read_manifest(dir / "m.json");
    REQUIRE(m.size() == 4);
    CHECK(m[2].id == data.manifest[2].id);
    CHECK(m[2].archetype == data.manifest[2].archetype);
    std::filesystem::remove_all(dir);
}
