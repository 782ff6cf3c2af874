#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace optisync {

/// Counter-based random stream keyed by (root_seed, label).
///
/// Output i is a SplitMix64 finalizer applied to key + i * golden-gamma, so a
/// stream is fully described by its key and position. Keys are derived by
/// hashing the label into the root seed; two components that draw from
/// differently-labelled streams never perturb each other, and a component can
/// be re-simulated alone with identical noise.
///
/// The distributions below are implemented here rather than taken from
/// <random>, whose normal/gamma algorithms differ between standard libraries.
class RngStream {
 public:
  RngStream(std::uint64_t root_seed, std::string label);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double next_unit();
  /// Standard normal via Box-Muller (cosine branch only, no cached pair).
  double next_gaussian();
  /// Gamma(shape, 1) via Marsaglia-Tsang.
  double next_gamma(double shape);

  /// Child stream with label "<label>.<child>".
  RngStream fork(std::string_view child) const;

  const std::string& label() const { return label_; }
  std::uint64_t root_seed() const { return root_seed_; }
  std::uint64_t position() const { return counter_; }

 private:
  std::uint64_t root_seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::string label_;
};

/// Throws Error(EmptyLabel) for an empty label.
RngStream fork_rng(std::uint64_t root_seed, std::string_view label);

/// 64-bit FNV-1a, used for label hashing and scenario fingerprints.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace optisync
