#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ricl {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatF = Mat<float>;
using MatD = Mat<double>;
using VecF = Vec<float>;
using VecD = Vec<double>;

// Error with a stable, machine-checkable kind string ("placement-infeasible",
// "shape-mismatch", ...). Tests match on kind(), not on the full message.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

[[noreturn]] inline void fail(const std::string& kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, const std::string& kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

// splitmix64: fixed across platforms, no library distribution objects involved.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed + 0x9e3779b97f4a7c15ULL) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int uniform_int(int n) { return int(next_u64() % uint64_t(n)); }

  // Box-Muller, two fresh uniforms per draw.
  double normal() {
    double u1 = uniform(), u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Derived stream: deterministic function of (seed state, tag).
  static uint64_t substream(uint64_t seed, uint64_t tag) {
    Rng r(seed ^ (0x9e3779b97f4a7c15ULL * (tag + 1)));
    return r.next_u64();
  }

 private:
  uint64_t state_;
};

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64(s.data(), s.size(), h);
}

// string literals must never bind to the (void*, size_t) overload
inline uint64_t fnv1a64(const char* s, uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64(std::string(s), h);
}

inline std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[size_t(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

// H x W x 3 intensities in [0, 1], row-major (y, x, c).
struct Image {
  int height = 0;
  int width = 0;
  Eigen::VectorXf data;

  Image() = default;
  Image(int h, int w) : height(h), width(w), data(Eigen::VectorXf::Zero(h * w * 3)) {}

  float& at(int y, int x, int c) { return data[(size_t(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const { return data[(size_t(y) * width + x) * 3 + c]; }
  bool same_shape(const Image& o) const { return height == o.height && width == o.width; }
};

}  // namespace ricl
