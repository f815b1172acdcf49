#include "dst/clustering.hpp"

#include "dst/csv.hpp"
#include "dst/error.hpp"
#include "dst/rng.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>

namespace dst {

std::vector<WeeklyProfile> weekly_profile(const RidershipGrid& grid) {
    const std::size_t spd = grid.slots_per_day();
    if (grid.num_days() < 7) {
        throw CoverageError("weekly profile needs at least 7 days of data, got " + std::to_string(grid.num_days()));
    }
    const std::size_t n = grid.num_stations(), slots = 7 * spd;
    std::vector<std::vector<double>> sum(n, std::vector<double>(slots, 0.0));
    std::vector<std::size_t> count(slots, 0);
    for (std::size_t r = 0; r < grid.num_rows(); ++r) {
        const Timestamp t = grid.time_of_row(r);
        const std::size_t slot = static_cast<std::size_t>(t.weekday()) * spd + r % spd;
        ++count[slot];
        for (std::size_t s = 0; s < n; ++s) sum[s][slot] += grid.values(r, s);
    }
    std::vector<WeeklyProfile> out(n);
    for (std::size_t s = 0; s < n; ++s) {
        out[s].station_id = grid.station_ids[s];
        auto& v = out[s].values;
        v.resize(slots);
        for (std::size_t k = 0; k < slots; ++k) v[k] = count[k] ? sum[s][k] / static_cast<double>(count[k]) : 0.0;
        const double peak = *std::max_element(v.begin(), v.end());
        if (peak > 0.0) {
            for (double& x : v) x /= peak;
        }
    }
    return out;
}

namespace {

using Point = std::vector<double>;

double sq_dist(const Point& a, const Point& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
    return d;
}

std::vector<Point> seed_plus_plus(const std::vector<const Point*>& pts, std::size_t k, Rng& rng) {
    const std::size_t n = pts.size();
    std::vector<Point> centers;
    std::vector<bool> chosen(n, false);
    std::size_t first = static_cast<std::size_t>(rng.below(n));
    centers.push_back(*pts[first]);
    chosen[first] = true;
    std::vector<double> d2(n);
    while (centers.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centers) best = std::min(best, sq_dist(*pts[i], c));
            d2[i] = chosen[i] ? 0.0 : best;
            total += d2[i];
        }
        std::size_t pick = n;
        if (total > 0.0) {
            double target = rng.uniform() * total;
            for (std::size_t i = 0; i < n; ++i) {
                if (d2[i] <= 0.0) continue;
                pick = i;
                target -= d2[i];
                if (target < 0.0) break;
            }
        } else {
            // Remaining points coincide with centres; take an unused one.
            std::vector<std::size_t> unused;
            for (std::size_t i = 0; i < n; ++i) {
                if (!chosen[i]) unused.push_back(i);
            }
            pick = unused[static_cast<std::size_t>(rng.below(unused.size()))];
        }
        chosen[pick] = true;
        centers.push_back(*pts[pick]);
    }
    return centers;
}

double assign(const std::vector<const Point*>& pts, const std::vector<Point>& centers, std::vector<std::size_t>& labels) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centers.size(); ++c) {
            const double d = sq_dist(*pts[i], centers[c]);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        labels[i] = best;
        inertia += best_d;
    }
    return inertia;
}

void update(const std::vector<const Point*>& pts, std::vector<Point>& centers, std::vector<std::size_t>& labels) {
    const std::size_t k = centers.size(), dim = centers.front().size();
    std::vector<std::size_t> sizes(k, 0);
    for (auto l : labels) ++sizes[l];
    for (std::size_t c = 0; c < k; ++c) {
        if (sizes[c] > 0) continue;
        std::size_t far = pts.size();
        double far_d = -1.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (sizes[labels[i]] < 2) continue;
            const double d = sq_dist(*pts[i], centers[labels[i]]);
            if (d > far_d) {
                far_d = d;
                far = i;
            }
        }
        if (far == pts.size()) continue;
        --sizes[labels[far]];
        labels[far] = c;
        sizes[c] = 1;
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (sizes[c] == 0) continue;
        std::fill(centers[c].begin(), centers[c].end(), 0.0);
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
        auto& ctr = centers[labels[i]];
        for (std::size_t d = 0; d < dim; ++d) ctr[d] += (*pts[i])[d];
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (sizes[c] == 0) continue;
        for (double& v : centers[c]) v /= static_cast<double>(sizes[c]);
    }
}

}  // namespace

KMeansResult kmeans(std::span<const WeeklyProfile> profiles, const KMeansConfig& config) {
    const std::size_t n = profiles.size();
    if (config.k == 0) throw ConfigError("kmeans: k must be at least 1");
    if (config.k > n) {
        throw ConfigError("kmeans: k = " + std::to_string(config.k) + " exceeds the " + std::to_string(n) + " profiles");
    }
    const std::size_t dim = profiles.front().values.size();
    for (const auto& p : profiles) {
        if (p.values.size() != dim) throw DimensionError("kmeans: profiles differ in length");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return profiles[a].station_id < profiles[b].station_id; });
    std::vector<const Point*> pts;
    for (auto i : order) pts.push_back(&profiles[i].values);

    Rng rng(config.seed);
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (std::size_t run = 0; run < std::max<std::size_t>(config.restarts, 1); ++run) {
        KMeansResult r;
        std::vector<Point> centers = seed_plus_plus(pts, config.k, rng);
        std::vector<std::size_t> labels(n);
        r.inertia_trace.push_back(assign(pts, centers, labels));
        for (std::size_t it = 0; it < config.max_iter; ++it) {
            update(pts, centers, labels);
            std::vector<std::size_t> next(n);
            r.inertia_trace.push_back(assign(pts, centers, next));
            ++r.iterations;
            const bool stable = next == labels;
            labels = std::move(next);
            if (stable) break;
        }
        r.inertia = r.inertia_trace.back();
        if (r.inertia < best.inertia) {
            r.assignments.assign(n, 0);
            for (std::size_t i = 0; i < n; ++i) r.assignments[order[i]] = labels[i];
            r.centroids = std::move(centers);
            best = std::move(r);
        }
    }
    return best;
}

double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b) {
    if (a.size() != b.size()) throw DimensionError("adjusted_rand_index: label vectors differ in length");
    const std::size_t n = a.size();
    if (n < 2) return 1.0;
    std::map<std::pair<std::size_t, std::size_t>, double> table;
    std::map<std::size_t, double> rows, cols;
    for (std::size_t i = 0; i < n; ++i) {
        table[{a[i], b[i]}] += 1.0;
        rows[a[i]] += 1.0;
        cols[b[i]] += 1.0;
    }
    auto pairs = [](double x) { return x * (x - 1.0) / 2.0; };
    double index = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& [key, v] : table) index += pairs(v);
    for (const auto& [key, v] : rows) sum_a += pairs(v);
    for (const auto& [key, v] : cols) sum_b += pairs(v);
    const double expected = sum_a * sum_b / pairs(static_cast<double>(n));
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return index == max_index ? 1.0 : 0.0;
    return (index - expected) / (max_index - expected);
}

std::string assignments_csv(std::span<const WeeklyProfile> profiles, const KMeansResult& result,
                            const std::string& provenance) {
    std::string s = provenance + "\n" + "station_id,cluster\n";
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        s += profiles[i].station_id + "," + std::to_string(result.assignments.at(i)) + "\n";
    }
    return s;
}

std::string centroids_csv(const KMeansResult& result, const std::string& provenance) {
    std::string s = provenance + "\n" + "cluster";
    const std::size_t dim = result.centroids.empty() ? 0 : result.centroids.front().size();
    for (std::size_t d = 0; d < dim; ++d) s += ",slot_" + std::to_string(d);
    s += "\n";
    for (std::size_t c = 0; c < result.centroids.size(); ++c) {
        s += std::to_string(c);
        for (double v : result.centroids[c]) s += "," + format_double(v);
        s += "\n";
    }
    return s;
}

}  // namespace dst
