#include "dst/error.hpp"
#include "dst/metrics.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

using namespace dst;

namespace {

Timestamp at(int hour, int minute) { return make_timestamp(testing::kMonday, hour * 60 + minute); }

}  // namespace

TEST_CASE("R squared") {
    const std::vector<double> y{1, 2, 3};
    CHECK(r_squared(y, y) == 1.0);
    CHECK(r_squared(y, std::vector<double>{2, 2, 2}) == 0.0);
    CHECK(r_squared(y, std::vector<double>{3, 2, 1}) == -3.0);
    CHECK_THROWS_AS((void)r_squared(std::vector<double>{4, 4}, std::vector<double>{4, 5}), UndefinedVarianceError);
    CHECK_THROWS_AS((void)r_squared(y, std::vector<double>{1, 2}), DimensionError);

    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> a(30), b(30);
        for (auto& v : a) v = rng.uniform(0, 100);
        for (auto& v : b) v = rng.uniform(0, 100);
        const double mean = std::accumulate(a.begin(), a.end(), 0.0) / 30;
        double res = 0, tot = 0;
        for (std::size_t i = 0; i < 30; ++i) {
            res += (a[i] - b[i]) * (a[i] - b[i]);
            tot += (a[i] - mean) * (a[i] - mean);
        }
        CHECK(r_squared(a, b) == doctest::Approx(1 - res / tot).epsilon(1e-12));
        CHECK(r_squared(a, b) <= 1.0);
    }
}

TEST_CASE("MAAPE") {
    CHECK(maape_term(0, 0) == 0.0);
    CHECK(maape_term(0, 3) == std::numbers::pi / 2);
    CHECK(maape_term(2, 4) == doctest::Approx(std::numbers::pi / 4).epsilon(1e-15));
    CHECK(maape_term(4, 4) == 0.0);
    CHECK(maape(std::vector<double>{2, 0}, std::vector<double>{4, 0}) == doctest::Approx(std::numbers::pi / 8).epsilon(1e-15));

    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const double y = std::floor(rng.uniform(0, 5)), p = rng.uniform(0, 5);
        const double t = maape_term(y, p);
        CHECK(t >= 0.0);
        CHECK(t <= std::numbers::pi / 2);
        if (y != 0) CHECK(t == doctest::Approx(std::atan(std::abs((y - p) / y))).epsilon(1e-15));
    }
}

TEST_CASE("peak hours") {
    CHECK(is_peak(at(6, 0)));
    CHECK(is_peak(at(9, 59)));
    CHECK_FALSE(is_peak(at(10, 0)));
    CHECK_FALSE(is_peak(at(16, 59)));
    CHECK(is_peak(at(17, 0)));
    CHECK(is_peak(at(20, 59)));
    CHECK_FALSE(is_peak(at(21, 0)));
    CHECK_FALSE(is_peak(at(5, 59)));
    const std::vector<Timestamp> ts{at(8, 0), at(12, 0)};
    CHECK(peak_mask(ts) == std::vector<bool>{true, false});
}

TEST_CASE("lag ratio") {
    std::vector<LagScore> lags(12);
    for (std::size_t k = 0; k < 12; ++k) {
        lags[k].lag = k + 1;
        lags[k].maape = 0.1 * (k + 1);
    }
    CHECK(maape_ratio(lags) == doctest::Approx(12.0).epsilon(1e-14));
    lags[0].maape = 0.0;
    CHECK_THROWS_AS((void)maape_ratio(lags), UndefinedRatioError);
    lags.resize(5);
    CHECK_THROWS_AS((void)maape_ratio(lags), ContractError);
}

TEST_CASE("percentiles and challenge stations") {
    CHECK(percentile({1, 2, 3, 4, 5}, 50) == 3.0);
    CHECK(percentile({1, 2}, 25) == 1.25);
    CHECK(percentile({1, std::nan(""), 3}, 100) == 3.0);

    std::vector<std::string> ids;
    std::vector<double> r2;
    for (int i = 1; i <= 10; ++i) {
        ids.push_back("s" + std::to_string(i));
        r2.push_back(0.1 * i);
    }
    CHECK(challenge_stations(ids, r2) == std::vector<std::string>{"s1", "s2"});
    CHECK(challenge_stations(ids, std::vector<double>(10, 0.7)).empty());
    r2[4] = std::nan("");
    for (const auto& s : challenge_stations(ids, r2)) CHECK(s != "s5");
    CHECK_THROWS_AS((void)challenge_stations(std::vector<std::string>{"a"}, std::vector<double>{0.5}), ContractError);
}

TEST_CASE("persistence baselines") {
    SampleWindow w;
    w.recent = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
    w.historical = Tensor::from_rows({{7, 8}, {9, 10}});
    const std::vector<SampleWindow> s{w, w};
    const Tensor p = persistence_baseline(s);
    CHECK(p.storage() == std::vector<double>{3, 6, 3, 6});
    CHECK(persistence_baseline(s, PersistenceVariant::Historical).storage() == std::vector<double>{8, 10, 8, 10});
}

TEST_CASE("scores pool stations and partition into peak and off-peak") {
    Rng rng(9);
    const std::size_t rows = 40;
    Tensor obs = Tensor::matrix(rows, 3), pred = Tensor::matrix(rows, 3);
    std::vector<Timestamp> times;
    for (std::size_t b = 0; b < rows; ++b) {
        times.push_back(make_timestamp(testing::kMonday, 6 * 60 + static_cast<int>(b) * 27));
        for (std::size_t s = 0; s < 3; ++s) {
            obs(b, s) = std::floor(rng.uniform(0, 50));
            pred(b, s) = rng.uniform(-5, 50);
        }
    }
    const std::vector<std::string> ids{"a", "b", "c"};
    const auto r = score("test", obs, pred, times, ids);
    CHECK(r.n == rows * 3);
    CHECK(r.n_peak + r.n_nonpeak == r.n);
    CHECK(r.n_peak > 0);
    CHECK(r.n_nonpeak > 0);
    const double combined = (r.peak_maape * r.n_peak + r.nonpeak_maape * r.n_nonpeak) / r.n;
    CHECK(r.maape == doctest::Approx(combined).epsilon(1e-12));

    std::vector<double> y, yh;
    for (std::size_t b = 0; b < rows; ++b) {
        for (std::size_t s = 0; s < 3; ++s) {
            y.push_back(obs(b, s));
            yh.push_back(std::max(0.0, pred(b, s)));
        }
    }
    CHECK(r.maape == doctest::Approx(maape(y, yh)).epsilon(1e-12));
    CHECK(r.r2 == doctest::Approx(r_squared(y, yh)).epsilon(1e-12));
    CHECK(r.station_r2.size() == 3);
    CHECK(r.maape <= std::numbers::pi / 2);

    const auto perfect = score("same", obs, obs, times, ids);
    CHECK(perfect.r2 == 1.0);
    CHECK(perfect.maape == 0.0);

    const std::vector<Timestamp> night(rows, at(12, 0));
    CHECK(std::isnan(score("midday", obs, pred, night, ids).peak_maape));
}

TEST_CASE("report files") {
    const std::vector<Timestamp> t{at(8, 0), at(12, 0), at(18, 0)};
    const Tensor obs = Tensor::from_rows({{1, 2}, {3, 4}, {5, 7}});
    const auto r = score("d", obs, obs, t, std::vector<std::string>{"x", "y"});
    const std::vector<ScoreReport> reports{r};
    const auto csv = report_csv(reports, "# p");
    CHECK(csv.rfind("# p\ndataset,metric,scope,station_id_or_ALL,value\n", 0) == 0);
    CHECK(csv.find("d,r2,") != std::string::npos);
    CHECK(quartiles_csv(reports, "# p").find("dataset,metric,min,q1,median,q3,max") != std::string::npos);
    CHECK(lag_csv(std::vector<LagScore>{{1, 0.1, 0.9, 0.1, 0.1, 3}}, "# p").find("lag,maape,r2,peak_maape,nonpeak_maape,n") !=
          std::string::npos);
}
