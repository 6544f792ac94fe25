#pragma once
// Periodic grids on the unit torus (R/Z)^d and small shared utilities.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace eulerext {

inline constexpr double kTau = 6.283185307179586476925286766559;  // 2*pi

inline bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

// Uniform nodes j/n_a per axis; row-major storage, last axis fastest.
struct PeriodicGrid {
  int d = 0;
  std::vector<int> n;

  PeriodicGrid() = default;
  PeriodicGrid(std::initializer_list<int> dims) : PeriodicGrid(std::vector<int>(dims)) {}
  explicit PeriodicGrid(std::vector<int> dims) : d(int(dims.size())), n(std::move(dims)) {
    if (d < 1) throw std::invalid_argument("PeriodicGrid: need at least one axis");
    for (int v : n) {
      if (v < 4)
        throw std::invalid_argument("PeriodicGrid: axis size " + std::to_string(v) + " below minimum 4");
      if (!is_power_of_two(v))
        throw std::invalid_argument("PeriodicGrid: axis size " + std::to_string(v) + " is not a power of two");
    }
  }

  std::int64_t size() const {
    std::int64_t s = 1;
    for (int v : n) s *= v;
    return s;
  }
  bool operator==(const PeriodicGrid& o) const { return n == o.n; }
  bool operator!=(const PeriodicGrid& o) const { return n != o.n; }

  std::int64_t flatten(const int* idx) const {
    std::int64_t f = 0;
    for (int a = 0; a < d; ++a) f = f * n[a] + idx[a];
    return f;
  }
  void unflatten(std::int64_t f, int* idx) const {
    for (int a = d - 1; a >= 0; --a) {
      idx[a] = int(f % n[a]);
      f /= n[a];
    }
  }
  double coord(int axis, int i) const { return double(i) / double(n[axis]); }
  void node(std::int64_t f, double* x) const {
    int idx[8];
    unflatten(f, idx);
    for (int a = 0; a < d; ++a) x[a] = coord(a, idx[a]);
  }
};

// Signed frequency of FFT bin m on an axis of size n: 0,...,n/2-1,-n/2,...,-1.
inline int signed_freq(int m, int n) { return m < n / 2 ? m : m - n; }

// Map x to [0,1).
inline double wrap_unit(double x) {
  double y = x - std::floor(x);
  return y < 1.0 ? y : y - 1.0;
}

// Signed periodic difference a-b folded into [-1/2, 1/2).
inline double wrap_signed(double t) { return t - std::floor(t + 0.5); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace eulerext
