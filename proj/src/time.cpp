#include "optisync/time.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <string>

#include "optisync/error.hpp"

namespace optisync {

std::int64_t div_round_half_away(__int128 num, std::int64_t den) {
  const __int128 d = den;
  __int128 q = num / d;
  const __int128 r = num % d;
  const __int128 twice = (r < 0 ? -r : r) * 2;
  if (twice >= d) q += (num < 0) ? -1 : 1;
  return static_cast<std::int64_t>(q);
}

std::int64_t round_half_away(double v) {
  return static_cast<std::int64_t>(std::round(v));
}

namespace {

struct Unit {
  std::string_view suffix;
  std::int64_t ps;
};

constexpr Unit kUnits[] = {
    {"ps", 1},
    {"ns", 1'000},
    {"us", 1'000'000},
    {"ms", 1'000'000'000},
    {"s", 1'000'000'000'000},
};

[[noreturn]] void bad_duration(std::string_view text, const char* why) {
  throw Error(Errc::ParseError,
              "invalid duration '" + std::string(text) + "': " + why);
}

}  // namespace

Duration parse_duration(std::string_view text) {
  std::string_view s = text;
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  if (s.empty()) bad_duration(text, "empty");

  bool negative = false;
  if (s.front() == '-' || s.front() == '+') {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }

  __int128 mantissa = 0;
  int frac_digits = 0;
  bool seen_dot = false;
  bool seen_digit = false;
  std::size_t i = 0;
  for (; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '.') {
      if (seen_dot) bad_duration(text, "two decimal points");
      seen_dot = true;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      seen_digit = true;
      mantissa = mantissa * 10 + (c - '0');
      if (seen_dot) ++frac_digits;
      if (mantissa > (static_cast<__int128>(1) << 100)) bad_duration(text, "out of range");
    } else {
      break;
    }
  }
  if (!seen_digit) bad_duration(text, "no digits");

  const std::string_view suffix = s.substr(i);
  std::int64_t unit_ps = 0;
  if (suffix.empty()) {
    if (mantissa != 0) bad_duration(text, "missing unit (ps, ns, us, ms, s)");
    return Duration::zero();
  }
  for (const auto& u : kUnits) {
    if (suffix == u.suffix) unit_ps = u.ps;
  }
  if (unit_ps == 0) bad_duration(text, "unknown unit");

  __int128 scale = 1;
  for (int k = 0; k < frac_digits; ++k) scale *= 10;
  const __int128 total = mantissa * unit_ps;
  if (total % scale != 0) bad_duration(text, "not a whole number of picoseconds");
  const __int128 ps = total / scale;
  if (ps > static_cast<__int128>(INT64_MAX)) bad_duration(text, "out of range");
  return Duration{static_cast<std::int64_t>(negative ? -ps : ps)};
}

std::string format_duration(Duration d) {
  const std::int64_t v = d.ps();
  if (v == 0) return "0s";
  const std::uint64_t mag = v < 0 ? static_cast<std::uint64_t>(-(v + 1)) + 1 : static_cast<std::uint64_t>(v);

  const Unit* unit = &kUnits[0];
  for (const auto& u : kUnits) {
    if (mag >= static_cast<std::uint64_t>(u.ps)) unit = &u;
  }
  const auto per = static_cast<std::uint64_t>(unit->ps);
  std::string out = v < 0 ? "-" : "";
  out += std::to_string(mag / per);
  std::uint64_t rem = mag % per;
  if (rem != 0) {
    std::string frac;
    for (std::uint64_t p = per / 10; p > 0; p /= 10) {
      frac += static_cast<char>('0' + rem / p);
      rem %= p;
    }
    while (!frac.empty() && frac.back() == '0') frac.pop_back();
    out += "." + frac;
  }
  out += unit->suffix;
  return out;
}

}  // namespace optisync
