#include "masksearch/rng.hpp"

#include <algorithm>
#include <cmath>

#include "masksearch/errors.hpp"

namespace masksearch {

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

int64_t Rng::uniform_int(int64_t n) {
  if (n <= 0) fail(Errc::kInvalidInput, "uniform_int requires n > 0");
  const uint64_t un = static_cast<uint64_t>(n);
  const uint64_t reject_below = (0 - un) % un;  // 2^64 mod n
  for (;;) {
    uint64_t x = next_u64();
    if (x >= reject_below) return static_cast<int64_t>(x % un);
  }
}

double Rng::normal() {
  if (have_spare_normal_) {
    have_spare_normal_ = false;
    return spare_normal_;
  }
  const double u1 = uniform01();
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  spare_normal_ = r * std::sin(a);
  have_spare_normal_ = true;
  return r * std::cos(a);
}

std::vector<int> Rng::sample_indices(int n, int k) {
  if (k < 0 || k > n) fail(Errc::kInvalidInput, "sample_indices requires 0 <= k <= n");
  std::vector<int> pool(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
  for (int i = 0; i < k; ++i) {
    const int64_t j = i + uniform_int(n - i);
    std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
  }
  pool.resize(static_cast<size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace masksearch
