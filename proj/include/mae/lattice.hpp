#pragma once

// Annulus-times-w-square lattice for one chart, with the discrete machinery
// the flow needs: radix-2 FFT in theta, 4th-order stencils in r and w,
// the 2/3-rule spectral filter, tensor-cubic interpolation, and the
// condition-(C) power-series core extension.

#include <array>
#include <atomic>
#include <functional>
#include <thread>

#include "mae/types.hpp"

namespace mae {

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

/// In-place iterative radix-2 FFT (inverse includes the 1/N scale).
inline void fft_pow2(cplx* x, int N, bool inverse) {
  for (int i = 1, j = 0; i < N; ++i) {
    int bit = N >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (int len = 2; len <= N; len <<= 1) {
    const double ang = 2.0 * M_PI / len * (inverse ? 1.0 : -1.0);
    const cplx wl(std::cos(ang), std::sin(ang));
    for (int i = 0; i < N; i += len) {
      cplx w(1.0);
      for (int k = 0; k < len / 2; ++k) {
        const cplx u = x[i + k];
        const cplx v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (int i = 0; i < N; ++i) x[i] /= double(N);
}

/// Signed Fourier mode of bin k for an N-point transform.
inline int fft_mode(int k, int N) { return k <= N / 2 ? k : k - N; }

inline void parallel_for(int n, int nthreads, const std::function<void(int)>& fn) {
  if (nthreads <= 1 || n < 2) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> ts;
  const int k = std::min(nthreads, n);
  ts.reserve(k);
  for (int t = 0; t < k; ++t) ts.emplace_back(worker);
  for (auto& t : ts) t.join();
}

struct LatticeGeom {
  int Nw = 33;       // per w-axis; the w-grid is Nw x Nw over |Re w|,|Im w| <= W
  int Nr = 24;       // radial nodes, r in [rmin, 1]
  int Nt = 32;       // theta nodes (power of two)
  double W = 4.0;
  double rmin = 0.1;

  void validate() const {
    if (Nw < 17) throw InvalidInput("N_w must be >= 17");
    if (Nr < 9) throw InvalidInput("N_r must be >= 9");
    if (Nt < 16 || !is_pow2(Nt)) throw InvalidInput("N_theta must be a power of two >= 16");
    if (!(rmin > 0.0 && rmin < 1.0)) throw InvalidInput("r_min must lie in (0,1)");
    if (W <= 1.0) throw InvalidInput("W must exceed 1");
  }

  double hu() const { return 2.0 * W / (Nw - 1); }
  double hr() const { return (1.0 - rmin) / (Nr - 1); }
  double ht() const { return 2.0 * M_PI / Nt; }

  double uval(int iu) const { return -W + iu * hu(); }
  double rval(int ir) const { return rmin + ir * hr(); }
  double tval(int it) const { return it * ht(); }
  cplx wval(int iu, int iv) const { return {uval(iu), uval(iv)}; }
  cplx zval(int ir, int it) const { return std::polar(rval(ir), tval(it)); }

  size_t npoints() const { return size_t(Nw) * Nw * Nr * Nt; }
  size_t nw() const { return size_t(Nw) * Nw; }
  // theta innermost, then r, then u (Re w), then v (Im w)
  size_t idx(int iu, int iv, int ir, int it) const {
    return ((size_t(iv) * Nw + iu) * Nr + ir) * Nt + it;
  }
};

/// Complex scalar field over one chart's lattice.
struct ChartField {
  LatticeGeom geom;
  std::vector<cplx> a;

  void resize() { a.assign(geom.npoints(), cplx(0.0)); }
  cplx& at(int iu, int iv, int ir, int it) { return a[geom.idx(iu, iv, ir, it)]; }
  const cplx& at(int iu, int iv, int ir, int it) const { return a[geom.idx(iu, iv, ir, it)]; }
  double max_abs() const {
    double m = 0.0;
    for (const auto& v : a) m = std::max(m, std::abs(v));
    return m;
  }
};

// 4th-order first-derivative stencils (interior centered, one-sided at edges).
inline void stencil_deriv_line(const cplx* f, cplx* df, int n, double h, int stride) {
  auto F = [&](int i) { return f[i * stride]; };
  const double s = 1.0 / (12.0 * h);
  df[0] = s * (-25.0 * F(0) + 48.0 * F(1) - 36.0 * F(2) + 16.0 * F(3) - 3.0 * F(4));
  df[1 * stride] = s * (-3.0 * F(0) - 10.0 * F(1) + 18.0 * F(2) - 6.0 * F(3) + F(4));
  for (int i = 2; i < n - 2; ++i)
    df[i * stride] = s * (F(i - 2) - 8.0 * F(i - 1) + 8.0 * F(i + 1) - F(i + 2));
  df[(n - 2) * stride] = s * (3.0 * F(n - 1) + 10.0 * F(n - 2) - 18.0 * F(n - 3) + 6.0 * F(n - 4) - F(n - 5));
  df[(n - 1) * stride] = s * (25.0 * F(n - 1) - 48.0 * F(n - 2) + 36.0 * F(n - 3) - 16.0 * F(n - 4) + 3.0 * F(n - 5));
}

/// Same stencils applied block-wise along a middle axis: layout
/// in[(o * naxis + i) * B + j], derivative in the i index. Cache-friendly:
/// every tap is a contiguous block of B elements.
inline void stencil_deriv_blocked(const cplx* in, cplx* out, int nouter, int naxis, size_t B,
                                  double h, int nthreads) {
  const double s = 1.0 / (12.0 * h);
  auto line = [&](const cplx* f, cplx* df, size_t b0, size_t b1) {
    auto blk = [&](int i) { return f + size_t(i) * B; };
    const int n = naxis;
    for (size_t j = b0; j < b1; ++j) {
      df[j] = s * (-25.0 * blk(0)[j] + 48.0 * blk(1)[j] - 36.0 * blk(2)[j] + 16.0 * blk(3)[j] - 3.0 * blk(4)[j]);
      df[B + j] = s * (-3.0 * blk(0)[j] - 10.0 * blk(1)[j] + 18.0 * blk(2)[j] - 6.0 * blk(3)[j] + blk(4)[j]);
      df[size_t(n - 2) * B + j] =
          s * (3.0 * blk(n - 1)[j] + 10.0 * blk(n - 2)[j] - 18.0 * blk(n - 3)[j] + 6.0 * blk(n - 4)[j] - blk(n - 5)[j]);
      df[size_t(n - 1) * B + j] =
          s * (25.0 * blk(n - 1)[j] - 48.0 * blk(n - 2)[j] + 36.0 * blk(n - 3)[j] - 16.0 * blk(n - 4)[j] + 3.0 * blk(n - 5)[j]);
    }
    for (int i = 2; i < n - 2; ++i) {
      const cplx *m2 = blk(i - 2), *m1 = blk(i - 1), *p1 = blk(i + 1), *p2 = blk(i + 2);
      cplx* d = df + size_t(i) * B;
      for (size_t j = b0; j < b1; ++j) d[j] = s * (m2[j] - 8.0 * m1[j] + 8.0 * p1[j] - p2[j]);
    }
  };
  if (nouter >= nthreads || nouter > 1) {
    parallel_for(nouter, nthreads, [&](int o) {
      line(in + size_t(o) * naxis * B, out + size_t(o) * naxis * B, 0, B);
    });
  } else {
    // single outer slab: split the block range across threads
    const int chunks = std::max(1, nthreads);
    const size_t step = (B + chunks - 1) / chunks;
    parallel_for(chunks, nthreads, [&](int c) {
      const size_t b0 = c * step, b1 = std::min(B, b0 + step);
      if (b0 < b1) line(in, out, b0, b1);
    });
  }
}

/// Spectral theta derivative of every ring (in place into out).
inline void theta_derivative(const ChartField& f, ChartField& out, int nthreads) {
  const auto& g = f.geom;
  out.geom = g;
  out.a.resize(f.a.size());
  const int rings = g.Nw * g.Nw * g.Nr;
  parallel_for(rings, nthreads, [&](int ring) {
    std::vector<cplx> buf(g.Nt);
    const size_t base = size_t(ring) * g.Nt;
    std::copy(f.a.begin() + base, f.a.begin() + base + g.Nt, buf.begin());
    fft_pow2(buf.data(), g.Nt, false);
    for (int k = 0; k < g.Nt; ++k) {
      const int m = fft_mode(k, g.Nt);
      buf[k] *= (m == -g.Nt / 2) ? cplx(0.0) : cplx(0.0, double(m));
    }
    fft_pow2(buf.data(), g.Nt, true);
    std::copy(buf.begin(), buf.end(), out.a.begin() + base);
  });
}

/// 2/3-rule spectral filter in theta (idempotent on band-limited data).
inline void spectral_filter(ChartField& f, int nthreads) {
  const auto& g = f.geom;
  const int mmax = g.Nt / 3;
  const int rings = g.Nw * g.Nw * g.Nr;
  parallel_for(rings, nthreads, [&](int ring) {
    std::vector<cplx> buf(g.Nt);
    const size_t base = size_t(ring) * g.Nt;
    std::copy(f.a.begin() + base, f.a.begin() + base + g.Nt, buf.begin());
    fft_pow2(buf.data(), g.Nt, false);
    for (int k = 0; k < g.Nt; ++k)
      if (std::abs(fft_mode(k, g.Nt)) > mmax) buf[k] = 0.0;
    fft_pow2(buf.data(), g.Nt, true);
    std::copy(buf.begin(), buf.end(), f.a.begin() + base);
  });
}

/// r-derivative of every radial line.
inline void r_derivative(const ChartField& f, ChartField& out, int nthreads) {
  const auto& g = f.geom;
  out.geom = g;
  out.a.resize(f.a.size());
  stencil_deriv_blocked(f.a.data(), out.a.data(), g.Nw * g.Nw, g.Nr, g.Nt, g.hr(), nthreads);
}

/// u- or v-derivative (axis 0 = Re w, 1 = Im w) of the whole lattice.
inline void w_derivative(const ChartField& f, ChartField& out, int axis, int nthreads) {
  const auto& g = f.geom;
  out.geom = g;
  out.a.resize(f.a.size());
  if (axis == 0)
    stencil_deriv_blocked(f.a.data(), out.a.data(), g.Nw, g.Nw, size_t(g.Nr) * g.Nt, g.hu(), nthreads);
  else
    stencil_deriv_blocked(f.a.data(), out.a.data(), 1, g.Nw, size_t(g.Nw) * g.Nr * g.Nt, g.hu(), nthreads);
}

// --- interpolation --------------------------------------------------------

struct CubicAxis {
  int i0;                      // first of the 4 nodes
  std::array<double, 4> w;
};

inline CubicAxis cubic_axis(double x, double x0, double h, int n) {
  double s = (x - x0) / h;
  int cell = int(std::floor(s));
  cell = std::max(0, std::min(n - 2, cell));
  int i0 = std::max(0, std::min(n - 4, cell - 1));
  // weights from a plain Lagrange basis on the 4 actual nodes
  CubicAxis ax;
  ax.i0 = i0;
  const double xi = s - i0;  // position in node units relative to node i0
  for (int j = 0; j < 4; ++j) {
    double w = 1.0;
    for (int k = 0; k < 4; ++k) {
      if (k == j) continue;
      w *= (xi - k) / double(j - k);
    }
    ax.w[j] = w;
  }
  return ax;
}

/// Periodic cubic axis for theta.
inline CubicAxis cubic_axis_periodic(double x, double h, int n) {
  double s = x / h;
  s -= std::floor(s / n) * n;
  const int cell = int(std::floor(s)) % n;
  CubicAxis ax;
  ax.i0 = cell - 1;  // may be negative; callers wrap
  const double xi = s - (cell - 1);
  for (int j = 0; j < 4; ++j) {
    double w = 1.0;
    for (int k = 0; k < 4; ++k) {
      if (k == j) continue;
      w *= (xi - k) / double(j - k);
    }
    ax.w[j] = w;
  }
  return ax;
}

/// Tensor-cubic sample of a chart field at (w, zeta), |zeta| within the annulus.
inline cplx sample_field(const ChartField& f, cplx w, cplx zeta) {
  const auto& g = f.geom;
  const CubicAxis au = cubic_axis(w.real(), -g.W, g.hu(), g.Nw);
  const CubicAxis av = cubic_axis(w.imag(), -g.W, g.hu(), g.Nw);
  const CubicAxis ar = cubic_axis(std::abs(zeta), g.rmin, g.hr(), g.Nr);
  const CubicAxis at = cubic_axis_periodic(std::arg(zeta), g.ht(), g.Nt);
  cplx acc = 0.0;
  for (int jv = 0; jv < 4; ++jv)
    for (int ju = 0; ju < 4; ++ju)
      for (int jr = 0; jr < 4; ++jr)
        for (int jt = 0; jt < 4; ++jt) {
          const int it = ((at.i0 + jt) % g.Nt + g.Nt) % g.Nt;
          acc += av.w[jv] * au.w[ju] * ar.w[jr] * at.w[jt] *
                 f.at(au.i0 + ju, av.i0 + jv, ar.i0 + jr, it);
        }
  return acc;
}

// --- condition-(C) core extension ----------------------------------------

/// Per-w-node coefficients c_m with phi(w, zeta) ~ sum_m c_m zeta^m, fitted by
/// least squares over the radial rings of each nonnegative Fourier mode.
struct CoreFit {
  LatticeGeom geom;
  int degree = 6;
  std::vector<cplx> c;  // (Nw*Nw) x (degree+1), node-major

  cplx eval(cplx w, cplx zeta) const {
    const CubicAxis au = cubic_axis(w.real(), -geom.W, geom.hu(), geom.Nw);
    const CubicAxis av = cubic_axis(w.imag(), -geom.W, geom.hu(), geom.Nw);
    cplx acc = 0.0;
    cplx zp = 1.0;
    for (int m = 0; m <= degree; ++m) {
      cplx cm = 0.0;
      for (int jv = 0; jv < 4; ++jv)
        for (int ju = 0; ju < 4; ++ju)
          cm += av.w[jv] * au.w[ju] * c[(size_t(av.i0 + jv) * geom.Nw + (au.i0 + ju)) * (degree + 1) + m];
      acc += cm * zp;
      zp *= zeta;
    }
    return acc;
  }
};

inline CoreFit core_fit(const ChartField& f, int degree, int nthreads) {
  const auto& g = f.geom;
  CoreFit fit;
  fit.geom = g;
  fit.degree = std::min(degree, g.Nt / 2 - 1);
  fit.c.assign(g.nw() * (fit.degree + 1), cplx(0.0));
  parallel_for(int(g.nw()), nthreads, [&](int wi) {
    const int iu = wi % g.Nw, iv = wi / g.Nw;
    std::vector<cplx> buf(g.Nt);
    std::vector<cplx> num(fit.degree + 1, cplx(0.0));
    std::vector<double> den(fit.degree + 1, 0.0);
    for (int ir = 0; ir < g.Nr; ++ir) {
      for (int it = 0; it < g.Nt; ++it) buf[it] = f.at(iu, iv, ir, it);
      fft_pow2(buf.data(), g.Nt, false);
      const double r = g.rval(ir);
      double rp = 1.0;
      for (int m = 0; m <= fit.degree; ++m) {
        num[m] += (buf[m] / double(g.Nt)) * rp;  // mode-m spectral coefficient
        den[m] += rp * rp;
        rp *= r;
      }
    }
    for (int m = 0; m <= fit.degree; ++m)
      fit.c[size_t(wi) * (fit.degree + 1) + m] = den[m] > 0.0 ? num[m] / den[m] : cplx(0.0);
  });
  return fit;
}

}  // namespace mae
