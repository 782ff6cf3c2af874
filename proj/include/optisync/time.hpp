#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace optisync {

/// Signed span of time in integer picoseconds.
class Duration {
 public:
  constexpr Duration() = default;
  constexpr explicit Duration(std::int64_t ps) : ps_(ps) {}

  constexpr std::int64_t ps() const { return ps_; }
  constexpr double seconds() const { return static_cast<double>(ps_) * 1e-12; }

  static constexpr Duration zero() { return Duration{0}; }

  constexpr Duration operator-() const { return Duration{-ps_}; }
  constexpr Duration& operator+=(Duration d) { ps_ += d.ps_; return *this; }
  constexpr Duration& operator-=(Duration d) { ps_ -= d.ps_; return *this; }

  friend constexpr Duration operator+(Duration a, Duration b) { return Duration{a.ps_ + b.ps_}; }
  friend constexpr Duration operator-(Duration a, Duration b) { return Duration{a.ps_ - b.ps_}; }
  friend constexpr Duration operator*(Duration a, std::int64_t k) { return Duration{a.ps_ * k}; }
  friend constexpr Duration operator*(std::int64_t k, Duration a) { return Duration{a.ps_ * k}; }
  friend constexpr auto operator<=>(Duration, Duration) = default;

 private:
  std::int64_t ps_ = 0;
};

/// A point on a picosecond time axis. The tag keeps simulation time and
/// node-local clock readings from mixing.
template <class Tag>
class TimePoint {
 public:
  constexpr TimePoint() = default;
  constexpr explicit TimePoint(std::int64_t ps) : ps_(ps) {}

  constexpr std::int64_t ps() const { return ps_; }

  constexpr TimePoint& operator+=(Duration d) { ps_ += d.ps(); return *this; }

  friend constexpr TimePoint operator+(TimePoint t, Duration d) { return TimePoint{t.ps_ + d.ps()}; }
  friend constexpr TimePoint operator+(Duration d, TimePoint t) { return TimePoint{t.ps_ + d.ps()}; }
  friend constexpr TimePoint operator-(TimePoint t, Duration d) { return TimePoint{t.ps_ - d.ps()}; }
  friend constexpr Duration operator-(TimePoint a, TimePoint b) { return Duration{a.ps_ - b.ps_}; }
  friend constexpr auto operator<=>(TimePoint, TimePoint) = default;

 private:
  std::int64_t ps_ = 0;
};

struct SimTag;
struct LocalTag;

/// Simulation time: picoseconds since the simulation epoch.
using SimTime = TimePoint<SimTag>;
/// A reading of some node's local clock, in picoseconds.
using LocalTime = TimePoint<LocalTag>;

constexpr Duration picoseconds(std::int64_t v) { return Duration{v}; }
constexpr Duration nanoseconds(std::int64_t v) { return Duration{v * 1'000}; }
constexpr Duration microseconds(std::int64_t v) { return Duration{v * 1'000'000}; }
constexpr Duration milliseconds(std::int64_t v) { return Duration{v * 1'000'000'000}; }
constexpr Duration seconds(std::int64_t v) { return Duration{v * 1'000'000'000'000}; }

constexpr SimTime sim_at(Duration since_epoch) { return SimTime{since_epoch.ps()}; }
constexpr LocalTime local_at(Duration since_epoch) { return LocalTime{since_epoch.ps()}; }

namespace literals {
constexpr Duration operator""_ps(unsigned long long v) { return picoseconds(static_cast<std::int64_t>(v)); }
constexpr Duration operator""_ns(unsigned long long v) { return nanoseconds(static_cast<std::int64_t>(v)); }
constexpr Duration operator""_us(unsigned long long v) { return microseconds(static_cast<std::int64_t>(v)); }
constexpr Duration operator""_ms(unsigned long long v) { return milliseconds(static_cast<std::int64_t>(v)); }
constexpr Duration operator""_s(unsigned long long v) { return seconds(static_cast<std::int64_t>(v)); }
}  // namespace literals

/// num / den rounded to nearest, ties away from zero. den must be positive.
std::int64_t div_round_half_away(__int128 num, std::int64_t den);

/// Rounds a real picosecond value to the nearest integer, ties away from zero.
std::int64_t round_half_away(double v);

/// Floor division for a positive divisor.
constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && (a < 0)) --q;
  return q;
}

/// Parses "150ns", "2.7ms", "-30ns", "1s", "0". The value must land on a
/// whole picosecond. Throws Error(ParseError) otherwise.
Duration parse_duration(std::string_view text);

/// Shortest exact rendering in the largest unit that keeps it readable,
/// e.g. 2700000000 ps -> "2.7ms".
std::string format_duration(Duration d);

}  // namespace optisync
