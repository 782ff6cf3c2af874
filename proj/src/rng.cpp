#include "optisync/rng.hpp"

#include <cmath>
#include <numbers>

#include "optisync/error.hpp"

namespace optisync {

namespace {

constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RngStream::RngStream(std::uint64_t root_seed, std::string label)
    : root_seed_(root_seed), label_(std::move(label)) {
  if (label_.empty()) throw Error(Errc::EmptyLabel, "random stream label must be nonempty");
  key_ = mix64(mix64(root_seed_ + kGoldenGamma) ^ fnv1a64(label_));
}

std::uint64_t RngStream::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGoldenGamma);
}

double RngStream::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
  const double u1 = 1.0 - next_unit();  // (0, 1]
  const double u2 = next_unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RngStream::next_gamma(double shape) {
  if (!(shape > 0.0)) throw Error(Errc::InvalidArgument, "gamma shape must be positive");
  if (shape < 1.0) {
    // Boost to shape+1 and scale back with U^(1/shape).
    const double g = next_gamma(shape + 1.0);
    const double u = 1.0 - next_unit();
    return g * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = next_gaussian();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = 1.0 - next_unit();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

RngStream RngStream::fork(std::string_view child) const {
  return RngStream(root_seed_, label_ + "." + std::string(child));
}

RngStream fork_rng(std::uint64_t root_seed, std::string_view label) {
  return RngStream(root_seed, std::string(label));
}

}  // namespace optisync
