#ifndef TEMPO_COMMON_HPP
#define TEMPO_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tempo {

struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// FNV-1a over raw bytes; used for parameter content hashes.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t hash_doubles(const std::vector<double>& v,
                                  std::uint64_t h = 1469598103934665603ull) {
  return v.empty() ? h : fnv1a64(v.data(), v.size() * sizeof(double), h);
}

// Correctly rounded sum of doubles via Shewchuk partials; the result depends
// only on the multiset of addends, never on their order.
inline double exact_sum(const double* x, std::size_t n) {
  std::vector<double> partials;
  for (std::size_t i = 0; i < n; ++i) {
    double v = x[i];
    std::size_t used = 0;
    for (double p : partials) {
      if (std::abs(v) < std::abs(p)) std::swap(v, p);
      const double hi = v + p;
      const double lo = p - (hi - v);
      if (lo != 0.0) partials[used++] = lo;
      v = hi;
    }
    partials.resize(used);
    partials.push_back(v);
  }
  double total = 0.0;
  for (double p : partials) total += p;
  return total;
}

// splitmix64, used to derive independent RNG streams from (seed, stream id).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic RNG. xoshiro-style output via splitmix stepping keeps the
// stream independent of libstdc++ distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0x1234567890abcdefull)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return splitmix64(state_);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  std::int64_t uniform_int(std::int64_t n) {
    return static_cast<std::int64_t>(uniform() * static_cast<double>(n));
  }

  bool bernoulli(double p) { return uniform() < p; }

  double normal(double mean = 0.0, double stddev = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = 0.0, u2 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 1e-300);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mean + stddev * r * std::cos(theta);
  }

  // independent child stream
  Rng split(std::uint64_t stream_id) const {
    return Rng(splitmix64(state_ ^ splitmix64(stream_id ^ 0xa5a5a5a5deadbeefull)));
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tempo

#endif  // TEMPO_COMMON_HPP
