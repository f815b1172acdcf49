#include "dst/time.hpp"

#include "dst/error.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>

namespace dst {

namespace {

int read_int(std::string_view text, std::size_t pos, std::size_t len, std::string_view whole) {
    int value = 0;
    if (pos + len > text.size()) throw ParseError("malformed timestamp '" + std::string(whole) + "'");
    const char* first = text.data() + pos;
    auto [ptr, ec] = std::from_chars(first, first + len, value);
    if (ec != std::errc{} || ptr != first + len) {
        throw ParseError("malformed timestamp '" + std::string(whole) + "'");
    }
    return value;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) noexcept {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

}  // namespace

std::int64_t Timestamp::day() const noexcept { return floor_div(minutes, kMinutesPerDay); }

int Timestamp::minute_of_day() const noexcept {
    return static_cast<int>(minutes - day() * kMinutesPerDay);
}

int Timestamp::weekday() const noexcept {
    const std::chrono::sys_days d{std::chrono::days{day()}};
    return static_cast<int>(std::chrono::weekday{d}.iso_encoding()) - 1;
}

Timestamp make_timestamp(std::int64_t day, int minute_of_day) noexcept {
    return Timestamp{day * kMinutesPerDay + minute_of_day};
}

std::int64_t parse_date(std::string_view text) {
    if (text.size() < 10 || text[4] != '-' || text[7] != '-') {
        throw ParseError("malformed date '" + std::string(text) + "'");
    }
    const int y = read_int(text, 0, 4, text);
    const int m = read_int(text, 5, 2, text);
    const int d = read_int(text, 8, 2, text);
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) throw ParseError("invalid calendar date '" + std::string(text) + "'");
    return std::chrono::sys_days{ymd}.time_since_epoch().count();
}

Timestamp parse_timestamp(std::string_view text) {
    while (!text.empty() && (text.back() == ' ' || text.back() == '\r')) text.remove_suffix(1);
    const std::int64_t day = parse_date(text.substr(0, std::min<std::size_t>(10, text.size())));
    if (text.size() == 10) return make_timestamp(day, 0);
    if (text.size() < 16 || (text[10] != 'T' && text[10] != ' ') || text[13] != ':') {
        throw ParseError("malformed timestamp '" + std::string(text) + "'");
    }
    const int hh = read_int(text, 11, 2, text);
    const int mm = read_int(text, 14, 2, text);
    if (text.size() > 16) {
        if (text.size() != 19 || text[16] != ':') throw ParseError("malformed timestamp '" + std::string(text) + "'");
        (void)read_int(text, 17, 2, text);
    }
    if (hh > 23 || mm > 59) throw ParseError("time of day out of range in '" + std::string(text) + "'");
    return make_timestamp(day, hh * 60 + mm);
}

std::string format_date(std::int64_t day) {
    const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{day}}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

std::string format_timestamp(Timestamp t) {
    const int mod = t.minute_of_day();
    char buf[24];
    std::snprintf(buf, sizeof buf, "%02d:%02d", mod / 60, mod % 60);
    return format_date(t.day()) + "T" + buf;
}

int parse_clock(std::string_view text) {
    if (text.size() != 5 || text[2] != ':') throw ParseError("malformed clock time '" + std::string(text) + "'");
    const int hh = read_int(text, 0, 2, text);
    const int mm = read_int(text, 3, 2, text);
    if (hh > 23 || mm > 59) throw ParseError("clock time out of range '" + std::string(text) + "'");
    return hh * 60 + mm;
}

}  // namespace dst
