#pragma once
// Exact degrees-of-freedom accounting for polynomial jets of incompressible
// flows. Counts the space of scalar space-time jets, the subspace of
// divergence-free vector jets (exact integer rank of the divergence matrix,
// no floating point anywhere), and the number of free parameters available to
// a warped-product extension; scans for the first jet order where the
// divergence-free count exceeds the parameter supply. Also realizes any
// exactly divergence-free polynomial tuple as the row divergence of an
// antisymmetric polynomial potential, which certifies that jet-space
// dimension counts are attained by genuine incompressible fields.
//
// Arithmetic policy: dimensions and ranks are integers and are computed as
// such. Rank comes from fraction-free (Bareiss) elimination over arbitrary-
// precision integers, cross-checked by Gaussian elimination modulo two
// pseudo-randomly drawn 31-bit primes and by a structural certificate; the
// certificate alone covers sizes past the elimination guard. Polynomial
// coefficients are exact rationals.

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"

namespace eulerext {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

// ---------------------------------------------------------------------------
// Exact binomial coefficient, guarded against int64 overflow on conversion.
inline std::int64_t binomial(std::int64_t n, std::int64_t k) {
  if (k < 0 || n < 0 || k > n) return 0;
  if (k > n - k) k = n - k;
  BigInt r = 1;
  for (std::int64_t i = 1; i <= k; ++i) {
    r *= (n - k + i);
    r /= i;  // exact: r is C(n-k+i, i) after this step
  }
  require(r <= BigInt(std::numeric_limits<std::int64_t>::max()),
          "binomial: result does not fit in 64 bits");
  return r.convert_to<std::int64_t>();
}

// ---------------------------------------------------------------------------
// Monomial basis for polynomials of total degree <= N in the d+1 variables
// (t, x^1, .., x^d). Order: ascending total degree, ties broken by ascending
// lexicographic comparison of the exponent vector read as (t, x^1, .., x^d).
// The order is part of the contract: coefficient vectors, matrix layouts and
// kernel bases all refer to it.
struct JetSpace {
  int N = 0;
  int d = 0;
  std::vector<std::vector<int>> mono;        // exponent vectors, ordered
  std::map<std::vector<int>, std::int64_t> index;

  std::int64_t dim() const { return std::int64_t(mono.size()); }

  static bool graded_lex_less(const std::vector<int>& a, const std::vector<int>& b) {
    int da = 0, db = 0;
    for (int e : a) da += e;
    for (int e : b) db += e;
    if (da != db) return da < db;
    return a < b;
  }

  static JetSpace make(int N, int d) {
    require(d >= 1, "JetSpace: need at least one spatial variable");
    require(N >= -1, "JetSpace: order must be >= -1");
    require(binomial(N + d + 1, d + 1) <= 5000000, "JetSpace: too large to materialize");
    JetSpace js;
    js.N = N;
    js.d = d;
    if (N >= 0) {
      std::vector<int> e(std::size_t(d + 1), 0);
      // enumerate all exponent vectors with sum <= N by odometer walk
      for (;;) {
        js.mono.push_back(e);
        int v = d;
        for (;;) {
          int sum = 0;
          for (int q : e) sum += q;
          if (sum < N) {
            e[std::size_t(v)] += 1;
            break;
          }
          if (v == 0) goto done;
          e[std::size_t(v)] = 0;
          --v;
        }
      }
    done:;
      std::sort(js.mono.begin(), js.mono.end(), graded_lex_less);
    }
    for (std::int64_t i = 0; i < std::int64_t(js.mono.size()); ++i)
      js.index.emplace(js.mono[std::size_t(i)], i);
    return js;
  }
};

// Dimension of scalar jets of order <= N in (t, x^1..x^d).
inline std::int64_t scalar_jet_dim(std::int64_t N, std::int64_t d) {
  require(d >= 1, "scalar_jet_dim: d >= 1");
  if (N < 0) return 0;
  return binomial(N + d + 1, d + 1);
}

// ---------------------------------------------------------------------------
// Divergence matrix: linear map from d-tuples of order-<=N jets to order-
// <=N-1 jets, (c_{i,alpha}) -> sum_i alpha_i c_{i,alpha} x^{alpha - e_i}.
// Column layout is component-major: column i*dimV + a corresponds to
// component i and monomial in.mono[a]. Each column holds at most one nonzero
// entry, because a single monomial differentiates to a single monomial.

enum class RankMethod { Auto, Eliminate, Certificate };

namespace detail {

constexpr std::int64_t kEliminationGuard = 1000000;  // max rows*cols for exact elimination

inline std::uint64_t splitmix64(std::uint64_t& s) {
  s += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = s;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t mulmod_u64(std::uint64_t a, std::uint64_t b, std::uint64_t m) {
  return (unsigned __int128)(a) * b % m;
}

inline std::uint64_t powmod_u64(std::uint64_t a, std::uint64_t e, std::uint64_t m) {
  std::uint64_t r = 1 % m;
  a %= m;
  while (e) {
    if (e & 1) r = mulmod_u64(r, a, m);
    a = mulmod_u64(a, a, m);
    e >>= 1;
  }
  return r;
}

// Deterministic Miller-Rabin; the fixed base set is exact for all n < 3.3e24.
inline bool is_prime_u64(std::uint64_t n) {
  if (n < 2) return false;
  for (std::uint64_t p : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
    if (n % p == 0) return n == p;
  }
  std::uint64_t d = n - 1;
  int s = 0;
  while ((d & 1) == 0) { d >>= 1; ++s; }
  for (std::uint64_t a : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
    std::uint64_t x = powmod_u64(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool witness = true;
    for (int r = 1; r < s; ++r) {
      x = mulmod_u64(x, x, n);
      if (x == n - 1) { witness = false; break; }
    }
    if (witness) return false;
  }
  return true;
}

// Two distinct 31-bit primes drawn from a stream seeded by (N, d):
// reproducible runs, but the primes vary across problem sizes so the modular
// cross-check is not tied to any fixed pair.
inline std::vector<std::int64_t> crosscheck_primes(std::int64_t N, std::int64_t d) {
  std::uint64_t s = 0x652e4cf1a2b3d4e5ull ^ (std::uint64_t(N) << 32) ^ std::uint64_t(d);
  std::vector<std::int64_t> out;
  while (out.size() < 2) {
    std::uint64_t c = (splitmix64(s) >> 33) | 0x40000001ull;  // odd, >= 2^30
    while (!is_prime_u64(c)) c += 2;
    std::int64_t p = std::int64_t(c);
    if (out.empty() || out[0] != p) out.push_back(p);
  }
  return out;
}

// Dense divergence matrix as machine integers (entries are exponents <= N).
inline std::vector<std::vector<std::int64_t>> divergence_matrix(const JetSpace& in,
                                                                const JetSpace& out) {
  int d = in.d;
  std::int64_t dimV = in.dim();
  std::vector<std::vector<std::int64_t>> M;
  M.resize(std::size_t(out.dim()));
  for (auto& row : M) row.assign(std::size_t(d) * std::size_t(dimV), 0);
  std::vector<int> beta;
  for (std::int64_t a = 0; a < dimV; ++a) {
    const std::vector<int>& alpha = in.mono[std::size_t(a)];
    for (int i = 0; i < d; ++i) {
      int e = alpha[std::size_t(1 + i)];
      if (e == 0) continue;
      beta = alpha;
      beta[std::size_t(1 + i)] -= 1;
      auto it = out.index.find(beta);
      require(it != out.index.end(), "divergence_matrix: derivative left the target space");
      M[std::size_t(it->second)][std::size_t(i) * std::size_t(dimV) + std::size_t(a)] = e;
    }
  }
  return M;
}

// Fraction-free Bareiss elimination over exact integers; returns the rank.
inline std::int64_t bareiss_rank(const std::vector<std::vector<std::int64_t>>& M0) {
  std::int64_t m = std::int64_t(M0.size());
  if (m == 0) return 0;
  std::int64_t n = std::int64_t(M0[0].size());
  std::vector<std::vector<BigInt>> M;
  M.resize(std::size_t(m));
  for (std::int64_t r = 0; r < m; ++r)
    M[std::size_t(r)].assign(M0[std::size_t(r)].begin(), M0[std::size_t(r)].end());
  BigInt prev = 1;
  std::int64_t rank = 0;
  for (std::int64_t c = 0; c < n && rank < m; ++c) {
    std::int64_t piv = -1;
    for (std::int64_t r = rank; r < m; ++r)
      if (M[std::size_t(r)][std::size_t(c)] != 0) { piv = r; break; }
    if (piv < 0) continue;
    std::swap(M[std::size_t(piv)], M[std::size_t(rank)]);
    const BigInt& p = M[std::size_t(rank)][std::size_t(c)];
    for (std::int64_t r = rank + 1; r < m; ++r) {
      BigInt& lead = M[std::size_t(r)][std::size_t(c)];
      for (std::int64_t k = c + 1; k < n; ++k) {
        BigInt v = M[std::size_t(r)][std::size_t(k)] * p - lead * M[std::size_t(rank)][std::size_t(k)];
        v /= prev;  // exact by the Bareiss identity
        M[std::size_t(r)][std::size_t(k)] = std::move(v);
      }
      lead = 0;
    }
    prev = p;
    ++rank;
  }
  return rank;
}

// Gaussian elimination over Z/p; returns the rank mod p.
inline std::int64_t modular_rank(const std::vector<std::vector<std::int64_t>>& M0,
                                 std::int64_t p) {
  std::int64_t m = std::int64_t(M0.size());
  if (m == 0) return 0;
  std::int64_t n = std::int64_t(M0[0].size());
  std::vector<std::vector<std::int64_t>> M;
  M.resize(std::size_t(m));
  for (std::int64_t r = 0; r < m; ++r) {
    M[std::size_t(r)].resize(std::size_t(n));
    for (std::int64_t k = 0; k < n; ++k) {
      std::int64_t v = M0[std::size_t(r)][std::size_t(k)] % p;
      M[std::size_t(r)][std::size_t(k)] = v < 0 ? v + p : v;
    }
  }
  std::int64_t rank = 0;
  for (std::int64_t c = 0; c < n && rank < m; ++c) {
    std::int64_t piv = -1;
    for (std::int64_t r = rank; r < m; ++r)
      if (M[std::size_t(r)][std::size_t(c)] != 0) { piv = r; break; }
    if (piv < 0) continue;
    std::swap(M[std::size_t(piv)], M[std::size_t(rank)]);
    std::int64_t inv = std::int64_t(powmod_u64(std::uint64_t(M[std::size_t(rank)][std::size_t(c)]),
                                               std::uint64_t(p - 2), std::uint64_t(p)));
    for (std::int64_t r = rank + 1; r < m; ++r) {
      std::int64_t lead = M[std::size_t(r)][std::size_t(c)];
      if (lead == 0) continue;
      std::int64_t f = std::int64_t(mulmod_u64(std::uint64_t(lead), std::uint64_t(inv), std::uint64_t(p)));
      for (std::int64_t k = c; k < n; ++k) {
        std::int64_t v = M[std::size_t(r)][std::size_t(k)] -
                         std::int64_t(mulmod_u64(std::uint64_t(f),
                                                 std::uint64_t(M[std::size_t(rank)][std::size_t(k)]),
                                                 std::uint64_t(p)));
        M[std::size_t(r)][std::size_t(k)] = v < 0 ? v + p : v;
      }
    }
    ++rank;
  }
  return rank;
}

// Structural rank certificate. Every column of the divergence matrix has at
// most one nonzero entry (one monomial differentiates to one monomial), and
// for each target monomial beta the column (component 1, alpha = beta + e_{x^1})
// puts its unique nonzero, beta_{x^1} + 1 >= 1, in row beta. The map
// beta -> beta + e_{x^1} is injective (subtracting e_{x^1} recovers beta), so
// the witness columns form a permuted nonsingular diagonal block:
// rank >= #targets, and rank <= #rows = #targets. The enumeration below walks
// the targets without materializing either jet space (sizes past the
// elimination guard stay cheap), checks the witness degree bound on each, and
// cross-checks the final count against the closed-form dimension.
inline std::int64_t certificate_rank(int N, int d) {
  if (N <= 0) return 0;
  const int limit = N - 1;  // max total degree of a target monomial
  std::vector<int> e(std::size_t(d + 1), 0);
  int sum = 0;
  std::int64_t count = 0;
  for (;;) {
    require(sum + 1 <= N, "certificate_rank: witness degree bound violated");
    ++count;
    int v = d;
    for (;;) {
      if (sum < limit) {
        e[std::size_t(v)] += 1;
        ++sum;
        break;
      }
      if (v == 0) goto done;
      sum -= e[std::size_t(v)];
      e[std::size_t(v)] = 0;
      --v;
    }
  }
done:
  require(count == scalar_jet_dim(limit, d), "certificate_rank: witness count mismatch");
  return count;
}

}  // namespace detail

// Exact rank of the divergence map on order-<=N jets in d spatial variables.
// Eliminate: Bareiss over exact integers plus two modular cross-checks;
// refuses matrices above the size guard. Certificate: structural witness,
// any size. Auto: both (with mandatory agreement) when the guard allows,
// certificate alone otherwise.
inline std::int64_t divergence_rank(std::int64_t N, std::int64_t d,
                                    RankMethod method = RankMethod::Auto) {
  require(d >= 1 && d <= 8, "divergence_rank: d in [1, 8]");
  require(N >= 0, "divergence_rank: N >= 0");
  if (N == 0) return 0;
  std::int64_t rows = scalar_jet_dim(N - 1, d);
  std::int64_t cols = d * scalar_jet_dim(N, d);
  bool fits = rows <= detail::kEliminationGuard / std::max<std::int64_t>(cols, 1);
  if (method == RankMethod::Eliminate) {
    require(fits, "divergence_rank: matrix size guard exceeded (10^6 entries)");
  }
  if (method == RankMethod::Certificate || (method == RankMethod::Auto && !fits)) {
    return detail::certificate_rank(int(N), int(d));
  }
  JetSpace in = JetSpace::make(int(N), int(d));
  JetSpace out = JetSpace::make(int(N) - 1, int(d));
  auto M = detail::divergence_matrix(in, out);
  std::int64_t r = detail::bareiss_rank(M);
  for (std::int64_t p : detail::crosscheck_primes(N, d)) {
    std::int64_t rp = detail::modular_rank(M, p);
    if (rp != r)
      throw std::logic_error("divergence_rank: modular cross-check (p=" + std::to_string(p) +
                             ") disagrees with exact elimination");
  }
  std::int64_t rc = detail::certificate_rank(int(N), int(d));
  if (rc != r)
    throw std::logic_error("divergence_rank: structural certificate disagrees with elimination");
  return r;
}

// Dimension of the space of divergence-free d-tuples of order-<=N jets.
inline std::int64_t divfree_jet_dim(std::int64_t N, std::int64_t d,
                                    RankMethod method = RankMethod::Auto) {
  if (N < 0) return 0;
  return d * scalar_jet_dim(N, d) - divergence_rank(N, d, method);
}

// Number of free derivative parameters an extension with m swirl directions
// supplies at jet order N: spatial jets of order <= N+1 for the d velocity
// components, the m transported densities and the m warping coefficients,
// plus one space-time jet of order <= N+1 for the pressure.
inline std::int64_t param_count(std::int64_t N, std::int64_t d, std::int64_t m) {
  require(d >= 1, "param_count: d >= 1");
  require(m >= 0, "param_count: m >= 0");
  require(N >= 0, "param_count: N >= 0");
  return (d + 2 * m) * binomial(N + 1 + d, d) + binomial(N + d + 2, d + 1);
}

// ---------------------------------------------------------------------------
// Threshold scan: first jet order where the divergence-free dimension
// strictly exceeds the parameter supply.

struct ThresholdRow {
  std::int64_t N = 0;
  std::int64_t dim_V = 0;
  std::int64_t dim_W = 0;
  std::int64_t params = 0;
  std::int64_t gap = 0;  // dim_W - params
};

struct ThresholdReport {
  std::int64_t d = 0;
  std::int64_t m = 0;
  std::vector<ThresholdRow> rows;              // N = 0 .. N_max
  std::optional<std::int64_t> threshold;       // least N with gap > 0, if any
};

inline ThresholdReport find_threshold(std::int64_t d, std::int64_t m, std::int64_t N_max,
                                      RankMethod method = RankMethod::Auto) {
  require(N_max >= 0, "find_threshold: N_max >= 0");
  ThresholdReport rep;
  rep.d = d;
  rep.m = m;
  for (std::int64_t N = 0; N <= N_max; ++N) {
    ThresholdRow row;
    row.N = N;
    row.dim_V = scalar_jet_dim(N, d);
    row.dim_W = divfree_jet_dim(N, d, method);
    row.params = param_count(N, d, m);
    row.gap = row.dim_W - row.params;
    rep.rows.push_back(row);
    if (!rep.threshold && row.gap > 0) rep.threshold = N;
  }
  return rep;
}

inline void write_threshold_csv(std::ostream& os, const ThresholdReport& rep) {
  os << "N,dim_VN,dim_WN,M,gap\n";
  for (const ThresholdRow& r : rep.rows)
    os << r.N << ',' << r.dim_V << ',' << r.dim_W << ',' << r.params << ',' << r.gap << '\n';
}

// ---------------------------------------------------------------------------
// Sparse polynomials over exact rationals in the variables (t, x^1..x^d).

struct JetPoly {
  int nvars = 0;                                 // d + 1 including t
  std::map<std::vector<int>, Rational> c;        // exponent -> coefficient, no zeros stored

  bool zero() const { return c.empty(); }

  void add(const std::vector<int>& e, const Rational& v) {
    if (v == 0) return;
    auto it = c.find(e);
    if (it == c.end()) {
      c.emplace(e, v);
    } else {
      it->second += v;
      if (it->second == 0) c.erase(it);
    }
  }

  int total_degree() const {
    int deg = 0;
    for (const auto& [e, v] : c) {
      int s = 0;
      for (int q : e) s += q;
      deg = std::max(deg, s);
    }
    return deg;
  }

  // derivative with respect to variable v (0 = t, 1..d = x^1..x^d)
  JetPoly derivative(int v) const {
    JetPoly out;
    out.nvars = nvars;
    for (const auto& [e, coef] : c) {
      int q = e[std::size_t(v)];
      if (q == 0) continue;
      std::vector<int> f = e;
      f[std::size_t(v)] -= 1;
      out.add(f, coef * q);
    }
    return out;
  }

  // multiply by variable v
  JetPoly mul_var(int v) const {
    JetPoly out;
    out.nvars = nvars;
    for (const auto& [e, coef] : c) {
      std::vector<int> f = e;
      f[std::size_t(v)] += 1;
      out.add(f, coef);
    }
    return out;
  }

  JetPoly scaled(const Rational& s) const {
    JetPoly out;
    out.nvars = nvars;
    if (s == 0) return out;
    for (const auto& [e, coef] : c) out.c.emplace(e, coef * s);
    return out;
  }

  void accumulate(const JetPoly& other, const Rational& s) {
    for (const auto& [e, coef] : other.c) add(e, coef * s);
  }

  friend bool operator==(const JetPoly& a, const JetPoly& b) { return a.c == b.c; }
};

// Spatial divergence of a d-tuple (the t variable is untouched).
inline JetPoly jet_divergence(const std::vector<JetPoly>& u) {
  require(!u.empty(), "jet_divergence: empty tuple");
  JetPoly out;
  out.nvars = u[0].nvars;
  for (std::size_t i = 0; i < u.size(); ++i) {
    require(u[i].nvars == out.nvars, "jet_divergence: mixed variable counts");
    out.accumulate(u[i].derivative(int(1 + i)), 1);
  }
  return out;
}

// Coefficient vector (component-major over js.mono) -> polynomial tuple.
inline std::vector<JetPoly> tuple_from_coeffs(const JetSpace& js,
                                              const std::vector<Rational>& coef) {
  std::int64_t dimV = js.dim();
  require(std::int64_t(coef.size()) == js.d * dimV, "tuple_from_coeffs: length mismatch");
  std::vector<JetPoly> u(std::size_t(js.d));
  for (int i = 0; i < js.d; ++i) {
    u[std::size_t(i)].nvars = js.d + 1;
    for (std::int64_t a = 0; a < dimV; ++a)
      u[std::size_t(i)].add(js.mono[std::size_t(a)],
                            coef[std::size_t(i) * std::size_t(dimV) + std::size_t(a)]);
  }
  return u;
}

// ---------------------------------------------------------------------------
// Exact rational kernel basis of the divergence matrix (the divergence-free
// jet tuples themselves, not just their count). Subject to the same size
// guard as exact elimination. Every returned tuple is verified to have
// identically zero divergence before the basis is handed out.
inline std::vector<std::vector<Rational>> divfree_jet_basis(std::int64_t N, std::int64_t d) {
  require(d >= 1 && d <= 8, "divfree_jet_basis: d in [1, 8]");
  require(N >= 0, "divfree_jet_basis: N >= 0");
  JetSpace in = JetSpace::make(int(N), int(d));
  JetSpace out = JetSpace::make(int(N) - 1, int(d));
  std::int64_t rows = out.dim(), cols = d * in.dim();
  require(rows <= detail::kEliminationGuard / std::max<std::int64_t>(cols, 1),
          "divfree_jet_basis: matrix size guard exceeded (10^6 entries)");

  auto M0 = detail::divergence_matrix(in, out);
  std::vector<std::vector<Rational>> M;
  M.resize(std::size_t(rows));
  for (std::int64_t r = 0; r < rows; ++r)
    M[std::size_t(r)].assign(M0[std::size_t(r)].begin(), M0[std::size_t(r)].end());

  // reduced row echelon form, recording pivot columns
  std::vector<std::int64_t> pivot_col;
  std::int64_t rank = 0;
  for (std::int64_t c = 0; c < cols && rank < rows; ++c) {
    std::int64_t piv = -1;
    for (std::int64_t r = rank; r < rows; ++r)
      if (M[std::size_t(r)][std::size_t(c)] != 0) { piv = r; break; }
    if (piv < 0) continue;
    std::swap(M[std::size_t(piv)], M[std::size_t(rank)]);
    Rational inv = Rational(1) / M[std::size_t(rank)][std::size_t(c)];
    for (std::int64_t k = c; k < cols; ++k) M[std::size_t(rank)][std::size_t(k)] *= inv;
    for (std::int64_t r = 0; r < rows; ++r) {
      if (r == rank) continue;
      Rational f = M[std::size_t(r)][std::size_t(c)];
      if (f == 0) continue;
      for (std::int64_t k = c; k < cols; ++k)
        M[std::size_t(r)][std::size_t(k)] -= f * M[std::size_t(rank)][std::size_t(k)];
    }
    pivot_col.push_back(c);
    ++rank;
  }

  std::vector<bool> is_pivot(std::size_t(cols), false);
  for (std::int64_t c : pivot_col) is_pivot[std::size_t(c)] = true;
  std::vector<std::vector<Rational>> basis;
  for (std::int64_t f = 0; f < cols; ++f) {
    if (is_pivot[std::size_t(f)]) continue;
    std::vector<Rational> v(std::size_t(cols), Rational(0));
    v[std::size_t(f)] = 1;
    for (std::int64_t r = 0; r < rank; ++r)
      v[std::size_t(pivot_col[std::size_t(r)])] = -M[std::size_t(r)][std::size_t(f)];
    basis.push_back(std::move(v));
  }

  for (const auto& v : basis)
    require(jet_divergence(tuple_from_coeffs(in, v)).zero(),
            "divfree_jet_basis: kernel vector fails the divergence identity");
  return basis;
}

// ---------------------------------------------------------------------------
// Jet realization. Any exactly divergence-free polynomial tuple P is the row
// divergence of an antisymmetric potential: split P into pieces of spatial
// degree k and set
//     q_ij += (x^j P^i_k - x^i P^j_k) / (k + d - 1).
// The Euler identity sum_j d_j (x^j P^i_k) = (d + k) P^i_k together with
// div P_k = 0 gives sum_j d_j q_ij = P^i exactly, while div u = 0 follows
// from antisymmetry alone. Denominators never vanish for d >= 2, and
// deg q <= deg P + 1.
struct JetRealization {
  int d = 0;
  std::vector<JetPoly> q;  // d*d, row-major, q[i*d+j] = -q[j*d+i]
  std::vector<JetPoly> u;  // u^i = sum_j d_j q[i*d+j]; equals the input tuple
};

inline JetRealization realize_jet(const std::vector<JetPoly>& P) {
  int d = int(P.size());
  require(d >= 2, "realize_jet: need d >= 2");
  int nvars = P[0].nvars;
  require(nvars == d + 1, "realize_jet: tuple must use d+1 variables");
  for (const JetPoly& p : P) require(p.nvars == nvars, "realize_jet: mixed variable counts");
  require(jet_divergence(P).zero(), "realize_jet: input tuple is not divergence-free");

  // split into spatial-degree pieces (t exponents ride along as parameters)
  int kmax = 0;
  for (const JetPoly& p : P) {
    for (const auto& [e, v] : p.c) {
      int k = 0;
      for (int q = 1; q <= d; ++q) k += e[std::size_t(q)];
      kmax = std::max(kmax, k);
    }
  }
  std::vector<std::vector<JetPoly>> piece;
  piece.resize(std::size_t(d));
  for (auto& pl : piece) pl.resize(std::size_t(kmax + 1));
  for (int i = 0; i < d; ++i) {
    for (auto& pl : piece[std::size_t(i)]) pl.nvars = nvars;
    for (const auto& [e, v] : P[std::size_t(i)].c) {
      int k = 0;
      for (int q = 1; q <= d; ++q) k += e[std::size_t(q)];
      piece[std::size_t(i)][std::size_t(k)].add(e, v);
    }
  }

  JetRealization out;
  out.d = d;
  out.q.assign(std::size_t(d) * std::size_t(d), JetPoly{});
  for (auto& qp : out.q) qp.nvars = nvars;
  for (int k = 0; k <= kmax; ++k) {
    Rational w = Rational(1) / (k + d - 1);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        if (i == j) continue;
        out.q[std::size_t(i * d + j)].accumulate(piece[std::size_t(i)][std::size_t(k)].mul_var(1 + j), w);
        out.q[std::size_t(i * d + j)].accumulate(piece[std::size_t(j)][std::size_t(k)].mul_var(1 + i), -w);
      }
    }
  }

  out.u.assign(std::size_t(d), JetPoly{});
  for (int i = 0; i < d; ++i) {
    out.u[std::size_t(i)].nvars = nvars;
    for (int j = 0; j < d; ++j)
      out.u[std::size_t(i)].accumulate(out.q[std::size_t(i * d + j)].derivative(1 + j), 1);
  }

  // construction guarantees; checked, not assumed
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (!(out.q[std::size_t(i * d + j)] == out.q[std::size_t(j * d + i)].scaled(-1)))
        throw std::logic_error("realize_jet: potential lost antisymmetry");
  if (!jet_divergence(out.u).zero())
    throw std::logic_error("realize_jet: output tuple is not divergence-free");
  for (int i = 0; i < d; ++i)
    if (!(out.u[std::size_t(i)] == P[std::size_t(i)]))
      throw std::logic_error("realize_jet: jet mismatch against the input tuple");
  return out;
}

}  // namespace eulerext
