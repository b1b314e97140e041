#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>

namespace mhng {

/// Seeded random stream. Every draw is derived from the 64-bit engine output
/// through fixed arithmetic, so an identical seed and call sequence gives
/// identical values on any platform.
class RngStream {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64+splitmix64";

  explicit RngStream(std::uint64_t seed = 0);

  /// Independent stream for a (master seed, stream id) pair.
  static RngStream derive(std::uint64_t master_seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::string algorithm() const { return kAlgorithm; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1).
  double uniform();
  /// Uniform integer on [0, n).
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();
  /// Gamma(shape, 1) via Marsaglia-Tsang.
  double gamma(double shape);
  double chi_squared(double dof) { return 2.0 * gamma(0.5 * dof); }

  void save_state(std::ostream& os) const;
  void load_state(std::istream& is);

  bool operator==(const RngStream& other) const { return engine_ == other.engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace mhng
