#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace clustloc {

// Counter-based random stream (Philox4x32-10). The 64-bit seed is the key;
// the counter is (draw index, stream id), so every (seed, stream_id) pair is
// an independent substream with no shared state. Satisfies the standard
// UniformRandomBitGenerator requirements so <random> distributions apply.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  static constexpr const char* generator_name = "philox4x32-10";

  RandomStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  /// Chi-square with nu degrees of freedom.
  double chi_squared(double nu);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Substream sharing this stream's seed.
  RandomStream substream(std::uint64_t stream_id) const { return {seed_, stream_id}; }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  /// Raw Philox4x32-10 block function, exposed for known-answer tests.
  static std::array<std::uint32_t, 4> philox(std::array<std::uint32_t, 4> counter,
                                             std::array<std::uint32_t, 2> key);

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 2;  // 64-bit words consumed from buffer_ (two per block)
  bool have_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace clustloc
