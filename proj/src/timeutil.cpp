#include "relscan/timeutil.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <thread>

namespace relscan {

// Howard Hinnant's civil-date algorithms.
std::int64_t days_from_civil(int year, unsigned month, unsigned day) {
    const std::int64_t y = static_cast<std::int64_t>(year) - (month <= 2 ? 1 : 0);
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (month > 2 ? month - 3 : month + 9) + 2) / 5 + day - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

CivilDate civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const auto doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp < 10 ? mp + 3 : mp - 9;
    return CivilDate{static_cast<int>(y + (m <= 2 ? 1 : 0)), m, d};
}

namespace {

bool read_int(std::string_view text, std::size_t& pos, std::size_t width, int& out) {
    if (pos + width > text.size()) return false;
    for (std::size_t i = 0; i < width; ++i)
        if (!std::isdigit(static_cast<unsigned char>(text[pos + i]))) return false;
    std::from_chars(text.data() + pos, text.data() + pos + width, out);
    pos += width;
    return true;
}

bool expect(std::string_view text, std::size_t& pos, char c) {
    if (pos < text.size() && text[pos] == c) {
        ++pos;
        return true;
    }
    return false;
}

unsigned days_in_month(int year, unsigned month) {
    static constexpr unsigned kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    return month == 2 && leap ? 29 : kDays[month - 1];
}

} // namespace

std::optional<Timestamp> parse_iso8601(std::string_view text) {
    std::size_t pos = 0;
    int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
    if (!read_int(text, pos, 4, year) || !expect(text, pos, '-') || !read_int(text, pos, 2, month) ||
        !expect(text, pos, '-') || !read_int(text, pos, 2, day))
        return std::nullopt;
    if (month < 1 || month > 12 || day < 1 || static_cast<unsigned>(day) > days_in_month(year, month))
        return std::nullopt;
    std::int64_t offset_seconds = 0;
    if (pos < text.size()) {
        if (text[pos] != 'T' && text[pos] != ' ') return std::nullopt;
        ++pos;
        if (!read_int(text, pos, 2, hour) || !expect(text, pos, ':') || !read_int(text, pos, 2, minute))
            return std::nullopt;
        if (expect(text, pos, ':') && !read_int(text, pos, 2, second)) return std::nullopt;
        if (expect(text, pos, '.')) {
            while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
        }
        if (pos < text.size()) {
            const char c = text[pos];
            if (c == 'Z' || c == 'z') {
                ++pos;
            } else if (c == '+' || c == '-') {
                ++pos;
                int oh = 0, om = 0;
                if (!read_int(text, pos, 2, oh)) return std::nullopt;
                expect(text, pos, ':');
                if (!read_int(text, pos, 2, om)) return std::nullopt;
                offset_seconds = (oh * 3600 + om * 60) * (c == '+' ? 1 : -1);
            } else {
                return std::nullopt;
            }
        }
        if (pos != text.size()) return std::nullopt;
        if (hour > 23 || minute > 59 || second > 60) return std::nullopt;
    }
    const std::int64_t days = days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day));
    return from_unix(days * 86400 + hour * 3600 + minute * 60 + second - offset_seconds);
}

namespace {
std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    return a / b - ((a % b != 0) && ((a < 0) != (b < 0)) ? 1 : 0);
}
} // namespace

std::string format_iso8601(Timestamp t) {
    const std::int64_t secs = to_unix(t);
    const std::int64_t days = floor_div(secs, 86400);
    const std::int64_t rem = secs - days * 86400;
    const CivilDate d = civil_from_days(days);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", d.year, d.month, d.day,
                  static_cast<int>(rem / 3600), static_cast<int>(rem % 3600 / 60), static_cast<int>(rem % 60));
    return buf;
}

std::string format_date(Timestamp t) {
    const CivilDate d = civil_from_days(floor_div(to_unix(t), 86400));
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", d.year, d.month, d.day);
    return buf;
}

Date utc_date(Timestamp t) { return Date{std::chrono::days{floor_div(to_unix(t), 86400)}}; }

std::int64_t whole_days_between(Timestamp a, Timestamp b) {
    return floor_div(to_unix(b) - to_unix(a), 86400);
}

std::chrono::steady_clock::time_point SystemClock::now() const { return std::chrono::steady_clock::now(); }

Timestamp SystemClock::wall_now() const {
    return std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
}

void SystemClock::sleep_until(std::chrono::steady_clock::time_point t) { std::this_thread::sleep_until(t); }

SystemClock& SystemClock::instance() {
    static SystemClock clock;
    return clock;
}

ManualClock::ManualClock(Timestamp wall_start) : wall_start_(wall_start) {}

std::chrono::steady_clock::time_point ManualClock::now() const {
    return std::chrono::steady_clock::time_point{std::chrono::nanoseconds{offset_ns_.load()}};
}

Timestamp ManualClock::wall_now() const {
    return wall_start_ + std::chrono::duration_cast<std::chrono::seconds>(std::chrono::nanoseconds{offset_ns_.load()});
}

void ManualClock::sleep_until(std::chrono::steady_clock::time_point t) {
    const std::int64_t target = t.time_since_epoch().count();
    std::int64_t cur = offset_ns_.load();
    while (cur < target && !offset_ns_.compare_exchange_weak(cur, target)) {
    }
}

void ManualClock::advance(std::chrono::steady_clock::duration d) {
    offset_ns_.fetch_add(std::chrono::duration_cast<std::chrono::nanoseconds>(d).count());
}

} // namespace relscan
