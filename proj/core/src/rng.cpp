#include "adastab/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace adastab {

namespace {

constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

// Stafford variant 13 of the 64-bit finalizer.
std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_key(const SeedSpec& s) {
  // Three avalanche rounds so that any single-field change reshuffles the key.
  std::uint64_t k = mix64(s.master_seed + kGoldenGamma);
  k = mix64(k ^ (s.stream_id + 0xD1B54A32D192ED03ULL));
  k = mix64(k ^ (s.substream_id + 0x8BB84B93962EACC9ULL));
  return k;
}

}  // namespace

RandomStream::RandomStream(SeedSpec spec) : key_(derive_key(spec)) {}

std::uint64_t RandomStream::next_u64() {
  counter_ += 1;
  return mix64(key_ + counter_ * kGoldenGamma);
}

double RandomStream::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::next_normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  double u, v, s;
  do {
    u = 2.0 * next_double() - 1.0;
    v = 2.0 * next_double() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double m = std::sqrt(-2.0 * std::log(s) / s);
  cached_normal_ = v * m;
  has_cached_normal_ = true;
  return u * m;
}

Vector RandomStream::next_unit_vector(std::size_t d) {
  if (d == 0) throw std::invalid_argument("next_unit_vector: d must be >= 1");
  for (;;) {
    Vector g = draw_standard_normal(*this, d);
    const double r = norm(g);
    if (r > 1e-12) return scale(g, 1.0 / r);
  }
}

std::uint64_t RandomStream::next_below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("next_below: bound must be >= 1");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  for (;;) {
    const std::uint64_t x = next_u64();
    if (x < limit) return x % bound;
  }
}

Vector draw_standard_normal(RandomStream& stream, std::size_t d) {
  if (d == 0) {
    throw std::invalid_argument("draw_standard_normal: d must be >= 1");
  }
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = stream.next_normal();
  return Vector(std::move(out));
}

}  // namespace adastab
