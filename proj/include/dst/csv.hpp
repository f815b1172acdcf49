#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dst {

inline constexpr std::string_view kToolName = "ridecast";
inline constexpr std::string_view kToolVersion = "1.0.0";

/// Identifies the run that produced an output file.
struct Provenance {
    std::string config_hash = "0000000000000000";
    std::uint64_t seed = 0;
};

/// "# ridecast <version> config_hash=<hex> seed=<n>"
[[nodiscard]] std::string provenance_line(const Provenance& p);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column position by name; throws ParseError when absent.
    [[nodiscard]] std::size_t column(std::string_view name) const;
};

/// Reads a comma-separated file. Lines starting with '#' and blank lines are skipped;
/// the first remaining line is the header. Fields are not quoted.
[[nodiscard]] CsvTable read_csv(const std::filesystem::path& path);
[[nodiscard]] CsvTable parse_csv(std::string_view text, std::string_view source = "<memory>");

/// Checks the header names exactly `expected` (in order).
void require_header(const CsvTable& table, const std::vector<std::string>& expected, std::string_view source);

/// Shortest round-trip decimal representation.
[[nodiscard]] std::string format_double(double v);

[[nodiscard]] double parse_double(std::string_view text, std::string_view what);
[[nodiscard]] long long parse_int(std::string_view text, std::string_view what);

/// Writes `contents` atomically enough for our purposes (truncate + write), creating parent dirs.
void write_text_file(const std::filesystem::path& path, std::string_view contents);
[[nodiscard]] std::string read_text_file(const std::filesystem::path& path);

}  // namespace dst
