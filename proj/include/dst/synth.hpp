#pragma once

#include "dst/data.hpp"
#include "dst/graph.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dst {

/// Daily ridership shapes used by the synthetic generator.
enum class Archetype {
    TwoPeak,      // commuter: morning and evening peaks
    MorningPeak,  // residential: single morning peak
    EveningPeak,  // employment: single evening peak
    Midday,       // commercial: broad midday plateau
    LateEvening,  // nightlife: single late peak
};

[[nodiscard]] std::string archetype_name(Archetype a);
[[nodiscard]] Archetype parse_archetype(const std::string& name);
[[nodiscard]] std::vector<Archetype> all_archetypes();

/// Noise-free relative intensity at a minute of the day; weekends are flat.
[[nodiscard]] double archetype_intensity(Archetype a, int minute_of_day, bool weekend);

struct SynthConfig {
    std::size_t stations = 20;
    std::size_t days = 28;
    std::int64_t start_day = 19723;  // 2024-01-01, a Monday
    std::vector<Archetype> archetypes = all_archetypes();
    double noise_sigma = 0.1;        // multiplicative, per bucket
    double min_scale = 80.0;         // peak boardings per bucket, per station
    double max_scale = 300.0;
    int interval_minutes = 15;
    ServiceWindow service;
    std::uint64_t seed = 1;
};

struct StationManifest {
    std::string id;
    Archetype archetype = Archetype::TwoPeak;
    double scale = 0.0;
    std::int64_t total = 0;
};

struct SynthDataset {
    TransitGraph graph;
    std::vector<RidershipRecord> records;
    std::vector<StationManifest> manifest;
    std::int64_t total = 0;
};

/// Deterministic for a given config (seed included). Requires days >= 15.
[[nodiscard]] SynthDataset synth_generate(const SynthConfig& config);

[[nodiscard]] std::string manifest_json(const SynthDataset& data, const SynthConfig& config, const std::string& config_hash);
[[nodiscard]] std::vector<StationManifest> read_manifest(const std::filesystem::path& path);

}  // namespace dst
