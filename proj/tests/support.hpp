#pragma once

#include "dst/data.hpp"
#include "dst/graph.hpp"
#include "dst/rng.hpp"
#include "dst/tensor.hpp"
#include "dst/time.hpp"

#include <functional>
#include <string>
#include <vector>

namespace testing {

inline dst::Tensor random_matrix(std::size_t rows, std::size_t cols, dst::Rng& rng, double lo = -2.0, double hi = 2.0) {
    dst::Tensor t = dst::Tensor::matrix(rows, cols);
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

inline std::vector<dst::Station> stations(std::size_t n) {
    std::vector<dst::Station> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({"s" + std::to_string(i), 4.6 + 0.01 * i, -74.1 + 0.01 * i});
    return out;
}

inline dst::TransitGraph triangle(bool self_loops = true) {
    return dst::build_graph(stations(3), {{"s0", "s1"}, {"s1", "s2"}, {"s0", "s2"}}, self_loops);
}

inline dst::TransitGraph path(std::size_t n, bool self_loops = true) {
    std::vector<dst::EdgeSpec> edges;
    for (std::size_t i = 0; i + 1 < n; ++i) edges.push_back({"s" + std::to_string(i), "s" + std::to_string(i + 1)});
    return dst::build_graph(stations(n), edges, self_loops);
}

/// Connected random graph: a path plus `extra` random chords.
inline dst::TransitGraph random_graph(std::size_t n, std::size_t extra, dst::Rng& rng) {
    std::vector<dst::EdgeSpec> edges;
    for (std::size_t i = 0; i + 1 < n; ++i) edges.push_back({"s" + std::to_string(i), "s" + std::to_string(i + 1)});
    for (std::size_t k = 0; k < extra; ++k) {
        const auto a = rng.below(n), b = rng.below(n);
        if (a != b) edges.push_back({"s" + std::to_string(a), "s" + std::to_string(b)});
    }
    return dst::build_graph(stations(n), edges, true);
}

/**
 * True when every receiver's raw attention scores include both signs. If all
 * scores of a neighbourhood sit on one side of the LeakyReLU kink, the
 * receiver half of `a` cancels inside that softmax and its exact gradient
 * is zero, which a relative finite-difference check cannot resolve.
 */
inline bool attention_scores_mixed(const dst::Tensor& hist, const dst::Tensor& w, const dst::Tensor& a,
                                   const dst::TransitGraph& g) {
    const std::size_t d = w.cols();
    std::vector<double> recv(g.size(), 0.0), send(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        for (std::size_t k = 0; k < d; ++k) {
            double z = 0.0;
            for (std::size_t m = 0; m < hist.cols(); ++m) z += hist(i, m) * w(m, k);
            recv[i] += a(k, 0) * z;
            send[i] += a(d + k, 0) * z;
        }
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
        bool pos = false, neg = false;
        for (auto j : g.neighbors(i)) {
            const double e = recv[i] + send[j];
            pos = pos || e > 1e-3;
            neg = neg || e < -1e-3;
        }
        if (!(pos && neg)) return false;
    }
    return true;
}

inline constexpr std::int64_t kMonday = 19723;  // 2024-01-01

/// Grid over the default 06:00-23:59 service window filled by f(day, slot, station).
inline dst::RidershipGrid make_grid(std::size_t n_stations, std::size_t days,
                                    const std::function<double(std::size_t, std::size_t, std::size_t)>& f,
                                    int interval = 15) {
    dst::RidershipGrid g;
    g.first_day = kMonday;
    g.interval_minutes = interval;
    for (std::size_t s = 0; s < n_stations; ++s) g.station_ids.push_back("s" + std::to_string(s));
    const std::size_t spd = g.slots_per_day();
    g.values = dst::Tensor::matrix(days * spd, n_stations);
    for (std::size_t d = 0; d < days; ++d) {
        for (std::size_t k = 0; k < spd; ++k) {
            for (std::size_t s = 0; s < n_stations; ++s) g.values(d * spd + k, s) = f(d, k, s);
        }
    }
    return g;
}

}  // namespace testing
