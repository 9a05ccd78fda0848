#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace masksearch {

uint64_t fnv1a64(std::string_view s);
uint64_t splitmix64(uint64_t x);

/// Seeded random stream. All distributions are hand-rolled on top of
/// std::mt19937_64 so that sequences are identical across standard libraries
/// and platforms (std:: distribution objects are implementation-defined).
///
/// Every run uses a single master seed; components derive named substreams
/// via substream()/fork() so that adding draws in one component never shifts
/// the sequence seen by another.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(splitmix64(seed ^ 0x9e3779b97f4a7c15ull)) {}

  /// Derives the stream for `tag` under `master_seed`.
  static Rng substream(uint64_t master_seed, std::string_view tag) {
    return Rng(splitmix64(master_seed) ^ fnv1a64(tag));
  }

  /// Child stream named relative to this one.
  Rng fork(std::string_view tag) { return Rng(next_u64() ^ fnv1a64(tag)); }

  uint64_t next_u64() { return eng_(); }

  /// Uniform on the open interval (0, 1); never returns an exact 0 or 1,
  /// so logs of the result are finite.
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). Unbiased via rejection.
  int64_t uniform_int(int64_t n);

  double normal();
  double gumbel() { return -std::log(-std::log(uniform01())); }
  double logistic() {
    double u = uniform01();
    return std::log(u / (1.0 - u));
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(uniform_int(i + 1))]);
    }
  }

  /// Uniform k-subset of [0, n), returned sorted ascending.
  std::vector<int> sample_indices(int n, int k);

 private:
  std::mt19937_64 eng_;
  bool have_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace masksearch
