#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace uwsplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

// Per-Gaussian semantic feature width. Fixed by the training pipeline; the
// embedding projector maps raw region embeddings down to this many values.
inline constexpr int kSemanticDim = 32;

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Deterministic scalar RNG. mt19937_64's bit stream is pinned by the standard;
// the uniform/normal conversions below replace the implementation-defined
// std::*_distribution adaptors so seeded runs replay identically everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // size must be > 0
  std::size_t index(std::size_t size) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(size)) %
           size;
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 6.283185307179586476925286766559;
    spare_ = mag * std::sin(two_pi * u2);
    have_spare_ = true;
    return mag * std::cos(two_pi * u2);
  }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_ << ' ' << (have_spare_ ? 1 : 0) << ' ' << std::hexfloat
       << spare_;
    return os.str();
  }

  void deserialize(const std::string& text) {
    std::istringstream is(text);
    int spare_flag = 0;
    std::string spare_hex;
    is >> engine_ >> spare_flag >> spare_hex;
    require(!is.fail(), "Rng::deserialize: malformed state string");
    have_spare_ = spare_flag != 0;
    spare_ = std::strtod(spare_hex.c_str(), nullptr);
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Worker count: UWSPLAT_THREADS overrides, otherwise hardware concurrency.
inline int default_thread_count() {
  static const int n = [] {
    if (const char* env = std::getenv("UWSPLAT_THREADS")) {
      const int v = std::atoi(env);
      if (v > 0) return v;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
  }();
  return n;
}

// Runs fn(i) for i in [0, n). Work items must write disjoint state; callers
// that reduce must do so in fixed order afterwards.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                         int threads = 0) {
  if (threads <= 0) threads = default_thread_count();
  if (threads == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  const int spawn = static_cast<int>(
      std::min<std::size_t>(static_cast<std::size_t>(threads), n));
  pool.reserve(static_cast<std::size_t>(spawn - 1));
  for (int t = 1; t < spawn; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

}  // namespace uwsplat
