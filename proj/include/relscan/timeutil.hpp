#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace relscan {

using Timestamp = std::chrono::sys_seconds;
using Date = std::chrono::sys_days;

struct CivilDate {
    int year;
    unsigned month;
    unsigned day;
};

CivilDate civil_from_days(std::int64_t days_since_epoch);
std::int64_t days_from_civil(int year, unsigned month, unsigned day);

inline Timestamp from_unix(std::int64_t seconds) { return Timestamp{std::chrono::seconds{seconds}}; }
inline std::int64_t to_unix(Timestamp t) { return t.time_since_epoch().count(); }

/// Accepts "YYYY-MM-DD", "YYYY-MM-DDTHH:MM[:SS][.fff][Z|±HH:MM|±HHMM]".
/// Returns nullopt on anything else.
std::optional<Timestamp> parse_iso8601(std::string_view text);

/// "YYYY-MM-DDTHH:MM:SSZ"
std::string format_iso8601(Timestamp t);
/// "YYYY-MM-DD"
std::string format_date(Timestamp t);

Date utc_date(Timestamp t);

/// Whole UTC calendar days from a to b (b - a), truncating partial days.
std::int64_t whole_days_between(Timestamp a, Timestamp b);

/// Injectable time source shared by rate limiters, caches and the daemon.
class Clock {
public:
    virtual ~Clock() = default;
    virtual std::chrono::steady_clock::time_point now() const = 0;
    virtual Timestamp wall_now() const = 0;
    virtual void sleep_until(std::chrono::steady_clock::time_point t) = 0;
};

class SystemClock final : public Clock {
public:
    std::chrono::steady_clock::time_point now() const override;
    Timestamp wall_now() const override;
    void sleep_until(std::chrono::steady_clock::time_point t) override;

    static SystemClock& instance();
};

/// Virtual clock: sleep_until advances time instantly. Thread-safe.
class ManualClock final : public Clock {
public:
    explicit ManualClock(Timestamp wall_start = from_unix(1'700'000'000));

    std::chrono::steady_clock::time_point now() const override;
    Timestamp wall_now() const override;
    void sleep_until(std::chrono::steady_clock::time_point t) override;
    void advance(std::chrono::steady_clock::duration d);

private:
    std::atomic<std::int64_t> offset_ns_{0};
    Timestamp wall_start_;
};

} // namespace relscan
