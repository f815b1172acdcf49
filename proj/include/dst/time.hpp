#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace dst {

/// Local civil time at minute resolution, counted from 1970-01-01T00:00.
struct Timestamp {
    std::int64_t minutes = 0;

    [[nodiscard]] std::int64_t day() const noexcept;            // days since epoch
    [[nodiscard]] int minute_of_day() const noexcept;
    [[nodiscard]] int weekday() const noexcept;                  // 0 = Monday .. 6 = Sunday

    friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

constexpr std::int64_t kMinutesPerDay = 24 * 60;

[[nodiscard]] Timestamp make_timestamp(std::int64_t day, int minute_of_day) noexcept;

/// Accepts YYYY-MM-DD, YYYY-MM-DDTHH:MM, YYYY-MM-DD HH:MM and an optional :SS suffix.
[[nodiscard]] Timestamp parse_timestamp(std::string_view text);
/// Parses YYYY-MM-DD into days since epoch.
[[nodiscard]] std::int64_t parse_date(std::string_view text);

[[nodiscard]] std::string format_timestamp(Timestamp t);   // YYYY-MM-DDTHH:MM
[[nodiscard]] std::string format_date(std::int64_t day);  // YYYY-MM-DD

/// "HH:MM" -> minutes after midnight.
[[nodiscard]] int parse_clock(std::string_view text);

}  // namespace dst
