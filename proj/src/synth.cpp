#include "dst/synth.hpp"

#include "dst/csv.hpp"
#include "dst/error.hpp"
#include "dst/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace dst {

namespace {

double bump(double minute, double centre, double width) {
    const double z = (minute - centre) / width;
    return std::exp(-0.5 * z * z);
}

constexpr double kFloor = 0.06;

}  // namespace

std::string archetype_name(Archetype a) {
    switch (a) {
        case Archetype::TwoPeak: return "two-peak";
        case Archetype::MorningPeak: return "morning-peak";
        case Archetype::EveningPeak: return "evening-peak";
        case Archetype::Midday: return "midday";
        case Archetype::LateEvening: return "late-evening";
    }
    return "unknown";
}

Archetype parse_archetype(const std::string& name) {
    for (Archetype a : all_archetypes()) {
        if (archetype_name(a) == name) return a;
    }
    throw ConfigError("unknown archetype '" + name + "'");
}

std::vector<Archetype> all_archetypes() {
    return {Archetype::TwoPeak, Archetype::MorningPeak, Archetype::EveningPeak, Archetype::Midday,
            Archetype::LateEvening};
}

double archetype_intensity(Archetype a, int minute_of_day, bool weekend) {
    const auto m = static_cast<double>(minute_of_day);
    if (weekend) return kFloor + 0.2 * bump(m, 840.0, 200.0);
    switch (a) {
        case Archetype::TwoPeak: return kFloor + bump(m, 450.0, 45.0) + 0.85 * bump(m, 1080.0, 55.0);
        case Archetype::MorningPeak: return kFloor + bump(m, 420.0, 60.0);
        case Archetype::EveningPeak: return kFloor + bump(m, 1050.0, 60.0);
        case Archetype::Midday: return kFloor + 0.9 * bump(m, 780.0, 120.0);
        case Archetype::LateEvening: return kFloor + bump(m, 1230.0, 50.0);
    }
    return kFloor;
}

SynthDataset synth_generate(const SynthConfig& config) {
    if (config.days < 15) throw ConfigError("synth: at least 15 days are required");
    if (config.stations == 0) throw ConfigError("synth: at least one station is required");
    if (config.archetypes.empty()) throw ConfigError("synth: no archetypes configured");
    if (!(config.min_scale > 0.0) || config.max_scale < config.min_scale) throw ConfigError("synth: bad scale range");

    Rng rng(config.seed);
    const std::size_t n = config.stations;

    // Corridors radiate from a hub; neighbours along a corridor are linked,
    // corridor heads join the hub and every third position links sideways.
    const std::size_t per_line = 8;
    const std::size_t lines = (n + per_line - 1) / per_line;
    std::vector<Station> stations;
    std::vector<EdgeSpec> edges;
    std::vector<std::vector<std::size_t>> corridor(lines);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t line = i / per_line;
        const std::size_t pos = i % per_line;
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(line) / static_cast<double>(lines);
        const double radius = 0.01 * static_cast<double>(pos + 1);
        char id[16];
        std::snprintf(id, sizeof id, "ST%03zu", i);
        stations.push_back({id, 4.65 + radius * std::sin(angle) + rng.uniform(-1e-3, 1e-3),
                            -74.08 + radius * std::cos(angle) + rng.uniform(-1e-3, 1e-3)});
        corridor[line].push_back(i);
    }
    for (std::size_t l = 0; l < lines; ++l) {
        for (std::size_t k = 1; k < corridor[l].size(); ++k) {
            edges.emplace_back(stations[corridor[l][k - 1]].id, stations[corridor[l][k]].id);
        }
        if (l > 0) edges.emplace_back(stations[corridor[0][0]].id, stations[corridor[l][0]].id);
        if (lines > 1) {
            const auto& next = corridor[(l + 1) % lines];
            for (std::size_t k = 2; k < corridor[l].size() && k < next.size(); k += 3) {
                if (corridor[l][k] != next[k]) edges.emplace_back(stations[corridor[l][k]].id, stations[next[k]].id);
            }
        }
    }

    SynthDataset data;
    data.manifest.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        data.manifest[i].id = stations[i].id;
        data.manifest[i].archetype = config.archetypes[i % config.archetypes.size()];
        data.manifest[i].scale = std::round(rng.uniform(config.min_scale, config.max_scale));
    }
    data.graph = build_graph(stations, edges, true);

    RidershipGrid clock;
    clock.interval_minutes = config.interval_minutes;
    clock.service = config.service;
    clock.first_day = config.start_day;
    const std::size_t spd = clock.slots_per_day();

    std::vector<std::size_t> offsets(static_cast<std::size_t>(config.interval_minutes));
    for (std::size_t d = 0; d < config.days; ++d) {
        for (std::size_t slot = 0; slot < spd; ++slot) {
            const Timestamp t = clock.time_of_row(d * spd + slot);
            const bool weekend = t.weekday() >= 5;
            for (std::size_t i = 0; i < n; ++i) {
                StationManifest& st = data.manifest[i];
                double factor = 1.0;
                if (config.noise_sigma > 0.0) factor = std::max(0.0, 1.0 + config.noise_sigma * rng.normal());
                const auto count = static_cast<std::int64_t>(
                    std::llround(st.scale * archetype_intensity(st.archetype, t.minute_of_day(), weekend) * factor));
                if (count <= 0) continue;

                // Split the bucket total over up to three records at distinct minutes.
                const auto parts = static_cast<std::int64_t>(
                    std::min<std::uint64_t>(1 + rng.below(3), static_cast<std::uint64_t>(count)));
                for (std::size_t k = 0; k < offsets.size(); ++k) offsets[k] = k;
                rng.shuffle(std::span<std::size_t>(offsets));
                std::vector<std::size_t> chosen(offsets.begin(), offsets.begin() + parts);
                std::sort(chosen.begin(), chosen.end());
                std::int64_t left = count;
                for (std::int64_t p = 0; p < parts; ++p) {
                    const std::int64_t share = p + 1 == parts ? left : count / parts;
                    left -= share;
                    data.records.push_back({Timestamp{t.minutes + static_cast<std::int64_t>(chosen[static_cast<std::size_t>(p)])},
                                            st.id, share});
                }
                st.total += count;
                data.total += count;
            }
        }
    }
    return data;
}

std::string manifest_json(const SynthDataset& data, const SynthConfig& config, const std::string& config_hash) {
    nlohmann::ordered_json j;
    j["tool"] = std::string(kToolName) + " " + std::string(kToolVersion);
    j["config_hash"] = config_hash;
    j["seed"] = config.seed;
    j["start"] = format_date(config.start_day);
    j["days"] = config.days;
    j["noise_sigma"] = config.noise_sigma;
    j["total_boardings"] = data.total;
    auto& list = j["stations"] = nlohmann::ordered_json::array();
    for (const auto& s : data.manifest) {
        list.push_back({{"id", s.id}, {"archetype", archetype_name(s.archetype)}, {"scale", s.scale}, {"total", s.total}});
    }
    return j.dump(2) + "\n";
}

std::vector<StationManifest> read_manifest(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("manifest '" + path.string() + "': " + e.what());
    }
    std::vector<StationManifest> out;
    for (const auto& s : j.at("stations")) {
        out.push_back({s.at("id").get<std::string>(), parse_archetype(s.at("archetype").get<std::string>()),
                       s.at("scale").get<double>(), s.at("total").get<std::int64_t>()});
    }
    return out;
}

}  // namespace dst
