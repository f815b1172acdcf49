#pragma once

#include "dst/clustering.hpp"
#include "dst/data.hpp"
#include "dst/model.hpp"
#include "dst/synth.hpp"
#include "dst/training.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace dst {

/// One value of the flat key table: string, number, bool, or an array of strings/numbers.
struct ConfigValue {
    std::variant<std::string, double, bool, std::vector<std::string>, std::vector<double>> data;
    std::size_t line = 0;
};

/// `[section]` headers plus `key = value` lines, flattened to "section.key".
using ConfigTable = std::map<std::string, ConfigValue>;

[[nodiscard]] ConfigTable parse_config_text(std::string_view text, std::string_view source = "<memory>");

struct PathsConfig {
    std::filesystem::path ridership;
    std::filesystem::path stations;
    std::filesystem::path edges;
    std::filesystem::path manifest;
    std::filesystem::path checkpoint;
    std::filesystem::path output_dir = "out";
};

struct ForecastConfig {
    std::size_t horizon = 12;
    std::optional<Timestamp> start;  // default: first interval after the data
    std::size_t max_lag = 12;
};

struct RunConfig {
    PathsConfig paths;
    SynthConfig synth;
    ModelConfig model;
    TrainConfig train;
    std::vector<Period> periods;  // "train", optional "validation", the rest are evaluation sets
    ForecastConfig forecast;
    KMeansConfig cluster;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    std::string hash = "0000000000000000";  // FNV-1a 64 of the file text

    [[nodiscard]] const Period* period(std::string_view name) const;
    /// Periods other than train/validation, in file order.
    [[nodiscard]] std::vector<Period> evaluation_periods() const;
    /// Propagates `seed` into the synth, model, train and cluster sections.
    void set_seed(std::uint64_t s);
};

/**
 * Unknown keys are rejected. Relative paths resolve against `base_dir`.
 * Throws ConfigError or ParseError naming the offending line.
 */
[[nodiscard]] RunConfig run_config_from_text(std::string_view text, const std::filesystem::path& base_dir,
                                             std::string_view source = "<memory>");
[[nodiscard]] RunConfig load_run_config(const std::filesystem::path& path);

[[nodiscard]] std::string fnv1a_hex(std::string_view text);

}  // namespace dst
