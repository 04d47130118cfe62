#ifndef ADASTAB_RNG_HPP
#define ADASTAB_RNG_HPP

#include <cstdint>

#include "adastab/vector.hpp"

namespace adastab {

/// Identifies one reproducible random stream.
///
/// (master_seed, stream_id, substream_id) triples map to statistically
/// independent streams; the same triple always produces the same sequence,
/// regardless of how many other streams are drawn from in parallel.
struct SeedSpec {
  std::uint64_t master_seed = 0;
  std::uint64_t stream_id = 0;    // run index
  std::uint64_t substream_id = 0; // purpose tag (oracle, resampling, probes)
};

/// Counter-based generator: output i is a fixed avalanche mix of
/// key + i*gamma, so seeking is O(1) and state is two 64-bit words.
/// The key is derived from the SeedSpec by hashing all three fields.
class RandomStream {
 public:
  explicit RandomStream(SeedSpec spec);

  std::uint64_t next_u64();

  /// Uniform on [0, 1) with 53 random bits.
  double next_double();

  /// Standard normal via the polar (Marsaglia) method; pairs are cached.
  double next_normal();

  /// Uniform on the unit sphere in dimension d (d >= 1).
  Vector next_unit_vector(std::size_t d);

  /// Uniform integer in [0, bound) by rejection; bound >= 1.
  std::uint64_t next_below(std::uint64_t bound);

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

/// Deterministic stream handle for a seed triple (same spec, same sequence).
inline RandomStream split_stream(SeedSpec spec) { return RandomStream(spec); }

/// d independent standard-normal draws from the stream.
Vector draw_standard_normal(RandomStream& stream, std::size_t d);

}  // namespace adastab

#endif  // ADASTAB_RNG_HPP
