#pragma once
// FFTW3 wrapper with a per-shape plan cache.
//
// Spectra are stored as full complex arrays in FFT bin order, normalized so that
//   f(x) = sum_k c_k exp(+2*pi*i k.x),   c_k = (1/N) sum_j f_j exp(-2*pi*i k.x_j).
// The cache owns aligned buffers per shape; all transforms run on the calling
// thread (the cache is not thread-safe by design — callers keep FFTs off workers).

#include <complex>
#include <cstring>
#include <map>
#include <utility>
#include <vector>

#include <fftw3.h>

#include "core.hpp"

namespace eulerext {

using cplx = std::complex<double>;

class FftEngine {
 public:
  static FftEngine& instance() {
    static FftEngine e;
    return e;
  }

  // out = DFT(in) with sign -1 (forward) or +1 (backward); unnormalized.
  void execute(const std::vector<int>& dims, int sign, const cplx* in, cplx* out) {
    Entry& e = entry(dims, sign);
    std::memcpy(e.in, in, sizeof(cplx) * std::size_t(e.count));
    fftw_execute(e.plan);
    std::memcpy(out, e.out, sizeof(cplx) * std::size_t(e.count));
  }

  FftEngine(const FftEngine&) = delete;
  FftEngine& operator=(const FftEngine&) = delete;

 private:
  struct Entry {
    fftw_plan plan = nullptr;
    fftw_complex* in = nullptr;
    fftw_complex* out = nullptr;
    std::int64_t count = 0;
  };

  FftEngine() = default;
  ~FftEngine() {
    for (auto& kv : cache_) {
      fftw_destroy_plan(kv.second.plan);
      fftw_free(kv.second.in);
      fftw_free(kv.second.out);
    }
  }

  Entry& entry(const std::vector<int>& dims, int sign) {
    auto key = std::make_pair(dims, sign);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    Entry e;
    e.count = 1;
    for (int v : dims) e.count *= v;
    e.in = fftw_alloc_complex(std::size_t(e.count));
    e.out = fftw_alloc_complex(std::size_t(e.count));
    e.plan = fftw_plan_dft(int(dims.size()), dims.data(), e.in, e.out,
                           lt0(sign), FFTW_ESTIMATE);
    return cache_.emplace(std::move(key), e).first->second;
  }

  static int lt0(int sign) { return sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD; }

  std::map<std::pair<std::vector<int>, int>, Entry> cache_;
};

// Normalized forward transform of real samples.
inline std::vector<cplx> fft_forward(const PeriodicGrid& g, const double* samples) {
  std::size_t N = std::size_t(g.size());
  std::vector<cplx> in(N), out(N);
  for (std::size_t i = 0; i < N; ++i) in[i] = samples[i];
  FftEngine::instance().execute(g.n, -1, in.data(), out.data());
  double inv = 1.0 / double(N);
  for (auto& c : out) c *= inv;
  return out;
}

inline std::vector<cplx> fft_forward_complex(const PeriodicGrid& g, const std::vector<cplx>& samples) {
  std::vector<cplx> out(samples.size());
  FftEngine::instance().execute(g.n, -1, samples.data(), out.data());
  double inv = 1.0 / double(g.size());
  for (auto& c : out) c *= inv;
  return out;
}

// Unnormalized backward transform (synthesis): f_j = sum_k c_k e^{+2 pi i k.x_j}.
inline std::vector<cplx> fft_inverse_complex(const PeriodicGrid& g, const std::vector<cplx>& spec) {
  std::vector<cplx> out(spec.size());
  FftEngine::instance().execute(g.n, +1, spec.data(), out.data());
  return out;
}

// Synthesis of a real field: real parts of the backward transform.
inline std::vector<double> fft_inverse_real(const PeriodicGrid& g, const std::vector<cplx>& spec) {
  std::vector<cplx> out = fft_inverse_complex(g, spec);
  std::vector<double> r(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) r[i] = out[i].real();
  return r;
}

}  // namespace eulerext
