#pragma once

#include "dst/data.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dst {

struct WeeklyProfile {
    std::string station_id;
    std::vector<double> values;  // 7 * slots_per_day, Monday first, max-scaled to [0, 1]
};

/**
 * Mean ridership per (weekday, slot) over the whole grid, scaled by each
 * station's maximum. Throws CoverageError for grids shorter than a week.
 */
[[nodiscard]] std::vector<WeeklyProfile> weekly_profile(const RidershipGrid& grid);

struct KMeansResult {
    std::vector<std::size_t> assignments;      // in input order
    std::vector<std::vector<double>> centroids;
    double inertia = 0.0;
    std::vector<double> inertia_trace;         // after every assignment step
    std::size_t iterations = 0;
};

struct KMeansConfig {
    std::size_t k = 5;
    std::uint64_t seed = 1;
    std::size_t max_iter = 100;
    /// Independent seedings; the lowest final inertia wins.
    std::size_t restarts = 1;
};

/**
 * k-means++ seeding followed by Lloyd iterations on squared Euclidean
 * distance. Points are first put in canonical order by station id, so the
 * result does not depend on input order. A cluster that empties out takes
 * the point farthest from its current centroid.
 */
[[nodiscard]] KMeansResult kmeans(std::span<const WeeklyProfile> profiles, const KMeansConfig& config);

[[nodiscard]] double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b);

/// "station_id,cluster"
[[nodiscard]] std::string assignments_csv(std::span<const WeeklyProfile> profiles, const KMeansResult& result,
                                          const std::string& provenance);
/// "cluster,slot_0,...,slot_{m-1}"
[[nodiscard]] std::string centroids_csv(const KMeansResult& result, const std::string& provenance);

}  // namespace dst
