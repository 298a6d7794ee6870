#pragma once

// Deformation-tensor evolution: d(phi)/dt = -X'(phi) + E(b) - E(d) phi on a
// two-chart (w-square x zeta-annulus) lattice, with RK4 time stepping,
// 2/3-rule filtering, cross-chart transfer/blending, nondegeneracy and
// integrability monitors, degeneracy-event bisection, and the outer frontier
// continuation in the segment parameter s.

#include <functional>
#include <optional>

#include "mae/fields.hpp"
#include "mae/lattice.hpp"

namespace mae {

struct FlowConfig {
  LatticeGeom geom;
  double eps_deg = 1e-3;
  double cfl = 0.5;
  double fixed_dt = 0.0;      // > 0 overrides the CFL choice
  double ckpt_dt = 0.05;
  double t_bisect_tol = 1e-3;
  double s_bisect_tol = 1e-2;
  int fit_degree = 6;
  int nthreads = 1;
  double blend_inner = 2.6;   // |w| where cross-chart blending begins
  double blend_outer = 3.0;   // |w| beyond which values are pure transfers
  bool keep_history = true;

  void validate() const {
    geom.validate();
    if (eps_deg <= 0.0 || t_bisect_tol <= 0.0 || s_bisect_tol <= 0.0 || cfl <= 0.0 || ckpt_dt <= 0.0)
      throw InvalidInput("all flow tolerances must be positive");
    if (blend_outer >= geom.W || blend_inner >= blend_outer)
      throw InvalidInput("blend band must satisfy inner < outer < W");
  }
};

struct DeformationField {
  std::array<ChartField, 2> c;  // index a: chart axis a+1

  void init(const LatticeGeom& g) {
    for (auto& f : c) {
      f.geom = g;
      f.resize();
    }
  }
};

struct Monitors {
  double margin = 1.0;        // min |det(I - conj(phi) phi)| = min |1 - |phi|^2|
  double b_margin = 1.0;      // min g (1 - |phi|^2)
  double c_res = 0.0;         // max |zetabar d_zetabar phi|
  double d_res_f0 = 0.0;      // |f^0| from [E_abar, E_bbar]; identically 0 at n = 2
  double d_res_fgamma = 0.0;  // max(|f^gamma| family, |f_{0bar}| = |Zbar(phi) g|)
  double max_phi = 0.0;
  double overlap_mismatch = 0.0;
};

enum class Terminating { reached_one, degenerate, unstable };

struct DegeneracyReport {
  double s_o = 1.0;
  std::vector<std::pair<double, double>> margin_curve;  // (t, margin)
  Terminating terminating = Terminating::reached_one;
};

// --- per-chart static data -------------------------------------------------

namespace detail {

struct ChartStatic {
  int axis = 1;
  LatticeGeom geom;
  std::vector<ProfileJet3> jets;   // per w-node
  std::vector<double> absw;        // |w| per node
  std::vector<uint8_t> evolve;     // rhs evaluated here
  std::vector<uint8_t> kept;       // |w| <= blend_outer: monitors + CFL
  std::vector<double> chi;         // own-value blend weight
  // transfer plan for nodes with chi < 1
  struct Transfer {
    int node;            // flat w-node index (iv * Nw + iu)
    CubicAxis au, av;    // source-chart cubic axes
    int tshift;          // integer part of the theta shift (in nodes)
    std::array<double, 4> tw;  // cubic weights for the fractional shift
    cplx factor;         // tensor transform (w_t / conj(w_t))^2
  };
  std::vector<Transfer> transfers;
  // Laurent basis per (r, theta): 1/zeta and zeta
  std::vector<cplx> zinv, zval;
};

inline double blend_chi(double x, double inner, double outer) {
  if (x <= inner) return 1.0;
  if (x >= outer) return 0.0;
  const double s = (x - inner) / (outer - inner);
  return 1.0 - s * s * (3.0 - 2.0 * s);
}

inline ChartStatic build_chart_static(const ProfileRho& rho, int axis, const FlowConfig& cfg) {
  ChartStatic cs;
  cs.axis = axis;
  cs.geom = cfg.geom;
  const auto& g = cs.geom;
  cs.jets.resize(g.nw());
  cs.absw.resize(g.nw());
  cs.evolve.resize(g.nw());
  cs.kept.resize(g.nw());
  cs.chi.resize(g.nw());
  const double r_evolve = cfg.blend_outer + 3.0 * g.hu();
  for (int iv = 0; iv < g.Nw; ++iv)
    for (int iu = 0; iu < g.Nw; ++iu) {
      const int node = iv * g.Nw + iu;
      const cplx w = g.wval(iu, iv);
      cs.jets[node] = rho.jet3(axis, w);
      cs.absw[node] = std::abs(w);
      cs.evolve[node] = cs.absw[node] <= r_evolve;
      cs.kept[node] = cs.absw[node] <= cfg.blend_outer;
      cs.chi[node] = blend_chi(cs.absw[node], cfg.blend_inner, cfg.blend_outer);
      if (cs.chi[node] < 1.0) {
        ChartStatic::Transfer tr;
        tr.node = node;
        const cplx ws = 1.0 / w;  // source-chart coordinate
        tr.au = cubic_axis(ws.real(), -g.W, g.hu(), g.Nw);
        tr.av = cubic_axis(ws.imag(), -g.W, g.hu(), g.Nw);
        const double dth = std::arg(w);
        const CubicAxis at = cubic_axis_periodic(dth, g.ht(), g.Nt);
        tr.tshift = at.i0;
        tr.tw = at.w;
        const cplx ph = w / std::conj(w);
        tr.factor = ph * ph;
        cs.transfers.push_back(tr);
      }
    }
  cs.zinv.resize(size_t(g.Nr) * g.Nt);
  cs.zval.resize(size_t(g.Nr) * g.Nt);
  for (int ir = 0; ir < g.Nr; ++ir)
    for (int it = 0; it < g.Nt; ++it) {
      const cplx z = g.zval(ir, it);
      cs.zval[size_t(ir) * g.Nt + it] = z;
      cs.zinv[size_t(ir) * g.Nt + it] = 1.0 / z;
    }
  return cs;
}

/// Stage coefficients of the advection/force fields at one w-node.
struct NodeCoeffs {
  cplx Y, Y0, tauT, wa, wb, wc;
  cplx Ez, Ezb, Fz, Fzb;
  cplx eb1, ebz;          // e(b):   eb1/zeta + ebz zeta
  cplx bbz;               // ebar(b):          bbz zeta   (1/zeta part is identically 0)
  cplx ed_zi, ed_zbi, ed_z;    // e(d):    ed_zi/zeta + ed_zbi/zetabar + ed_z zeta
  cplx bd_zi, bd_zbi, bd_z;    // ebar(d): same basis
};

inline NodeCoeffs node_coeffs(const ScalarFieldJets& j) {
  NodeCoeffs nc;
  nc.Y = j.Y;
  nc.Y0 = j.Y0;
  nc.tauT = j.tauT;
  nc.wa = j.wa;
  nc.wb = j.wb;
  nc.wc = j.wc;
  nc.Ez = j.Ez;
  nc.Ezb = j.Ezb;
  nc.Fz = j.Fz;
  nc.Fzb = j.Fzb;
  nc.eb1 = j.dY_w - j.Y * j.Ez;
  nc.ebz = j.dtauT_w + j.tauT * j.Ez;
  nc.bbz = j.dtauT_wb + j.tauT * j.Fz;
  nc.ed_zi = j.dwa_w - j.wa * j.Ez;
  nc.ed_zbi = (std::conj(j.dY_wb) - std::conj(j.Y) * j.Ezb) + (j.dwb_w - j.wb * j.Ezb);
  nc.ed_z = j.dwc_w + j.wc * j.Ez;
  nc.bd_zi = j.dwa_wb - j.wa * j.Fz;
  nc.bd_zbi = (std::conj(j.dY_w) - std::conj(j.Y) * j.Fzb) + (j.dwb_wb - j.wb * j.Fzb);
  nc.bd_z = j.dwc_wb + j.wc * j.Fz;
  return nc;
}

}  // namespace detail

// --- the flow engine --------------------------------------------------------

class Flow {
 public:
  using RhsOverride = std::function<void(double t, const DeformationField&, DeformationField&)>;

  Flow(const ProfileRho& rho, const FlowConfig& cfg) : rho_(rho), cfg_(cfg) {
    cfg_.validate();
    if (rho.n() != 2) throw InvalidInput("the deformation flow lattice engine requires n = 2");
    for (int a = 0; a < 2; ++a) {
      try {
        charts_[a] = detail::build_chart_static(rho, a + 1, cfg_);
      } catch (const ChartSingular&) {
        throw InvalidInput("profile is not defined on the full chart atlas; flow runs need a global profile");
      }
    }
  }

  const FlowConfig& config() const { return cfg_; }

  /// Physical right-hand side d(phi)/dt on both charts.
  void rhs(double t, const Direction& v_t, const DeformationField& phi, DeformationField& out) const {
    for (int a = 0; a < 2; ++a) rhs_chart(a, v_t, phi.c[a], out.c[a]);
    (void)t;
  }

  /// One RK4 step with per-stage filtering and end-of-step transfer/blend.
  /// v_of(t) supplies the guiding center velocity.
  void step(DeformationField& y, double t, double dt, const std::function<Direction(double)>& v_of,
            const RhsOverride& ovr = nullptr) {
    static constexpr double cs[4] = {0.0, 0.5, 0.5, 1.0};
    static constexpr double bs[4] = {1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0};
    ensure_buffers(y);
    DeformationField& stage = buf_[0];
    DeformationField& k = buf_[1];
    DeformationField& acc = buf_[2];
    for (int a = 0; a < 2; ++a) std::fill(acc.c[a].a.begin(), acc.c[a].a.end(), cplx(0.0));
    for (int s = 0; s < 4; ++s) {
      for (int a = 0; a < 2; ++a) {
        if (s == 0) {
          stage.c[a].a = y.c[a].a;
        } else {
          const double h = cs[s] * dt;
          auto& sa = stage.c[a].a;
          const auto& ya = y.c[a].a;
          const auto& ka = k.c[a].a;
          parallel_for(int((sa.size() + 65535) / 65536), cfg_.nthreads, [&](int cidx) {
            const size_t b0 = size_t(cidx) * 65536, b1 = std::min(sa.size(), b0 + 65536);
            for (size_t i = b0; i < b1; ++i) sa[i] = ya[i] + h * ka[i];
          });
        }
        spectral_filter(stage.c[a], cfg_.nthreads);
      }
      if (ovr) {
        ovr(t + cs[s] * dt, stage, k);
      } else {
        const Direction vt = v_of(t + cs[s] * dt);
        rhs(t + cs[s] * dt, vt, stage, k);
      }
      for (int a = 0; a < 2; ++a) {
        auto& aa = acc.c[a].a;
        const auto& ka = k.c[a].a;
        const double bw = bs[s];
        parallel_for(int((aa.size() + 65535) / 65536), cfg_.nthreads, [&](int cidx) {
          const size_t b0 = size_t(cidx) * 65536, b1 = std::min(aa.size(), b0 + 65536);
          for (size_t i = b0; i < b1; ++i) aa[i] += bw * ka[i];
        });
      }
    }
    for (int a = 0; a < 2; ++a) {
      auto& ya = y.c[a].a;
      const auto& aa = acc.c[a].a;
      parallel_for(int((ya.size() + 65535) / 65536), cfg_.nthreads, [&](int cidx) {
        const size_t b0 = size_t(cidx) * 65536, b1 = std::min(ya.size(), b0 + 65536);
        for (size_t i = b0; i < b1; ++i) ya[i] += dt * aa[i];
      });
      spectral_filter(y.c[a], cfg_.nthreads);
    }
    last_mismatch_ = transfer_blend(y);
  }

  /// CFL time step from per-direction advection speeds over the kept region.
  double cfl_dt(const Direction& v_t) const {
    if (cfg_.fixed_dt > 0.0) return cfg_.fixed_dt;
    const auto& g = cfg_.geom;
    double dt = 1e30;
    for (int a = 0; a < 2; ++a) {
      const auto& cs = charts_[a];
      const CVec u = chart_order(v_t.v, cs.axis);
      for (size_t node = 0; node < g.nw(); ++node) {
        if (!cs.kept[node]) continue;
        const int iu = int(node) % g.Nw, iv = int(node) / g.Nw;
        const auto J = scalar_field_jets(cs.jets[node], g.wval(iu, iv), u[0], u[1]);
        const auto nc = detail::node_coeffs(J);
        // extreme |zeta| values bound the Laurent coefficients
        for (double r : {g.rmin, 1.0}) {
          const double bmax = std::abs(nc.Y) / r + std::abs(nc.tauT) * r;
          const double dmax = std::abs(nc.Y) / r + std::abs(nc.wa) / r + std::abs(nc.wb) / r + std::abs(nc.wc) * r;
          const double amax = std::abs(nc.Y0) * (1.0 / r + r);
          const double pz = amax + bmax * std::abs(nc.Ez) + dmax * std::abs(nc.Fz);
          const double pzb = amax + bmax * std::abs(nc.Ezb) + dmax * std::abs(nc.Fzb);
          const double sw = bmax + dmax;                 // d|w|/dt bound
          const double sr = 0.5 * (pz + pzb);            // |r d_r| coefficient
          const double st = 0.5 * (pz + pzb);            // |d_theta| coefficient
          dt = std::min(dt, g.hu() / std::max(1e-12, sw));
          dt = std::min(dt, g.hr() / std::max(1e-12, sr));
          dt = std::min(dt, g.ht() / std::max(1e-12, st));
        }
      }
    }
    return cfg_.cfl * dt;
  }

  Monitors monitors(const DeformationField& phi, bool with_residuals) const {
    Monitors m;
    m.margin = 1e30;
    m.b_margin = 1e30;
    const auto& g = cfg_.geom;
    for (int a = 0; a < 2; ++a) {
      const auto& cs = charts_[a];
      for (size_t node = 0; node < g.nw(); ++node) {
        if (!cs.kept[node]) continue;
        const double gmet = cs.jets[node].Lwwb.real() + 1.0 / sq(1.0 + sq(cs.absw[node]));
        const cplx* p = phi.c[a].a.data() + node * size_t(g.Nr) * g.Nt;
        for (int i = 0; i < g.Nr * g.Nt; ++i) {
          const double m2 = std::norm(p[i]);
          m.margin = std::min(m.margin, std::abs(1.0 - m2));
          m.b_margin = std::min(m.b_margin, gmet * (1.0 - m2));
          m.max_phi = std::max(m.max_phi, std::sqrt(m2));
        }
      }
    }
    m.overlap_mismatch = last_mismatch_;
    if (with_residuals) {
      // condition (C): Zbar(phi) = (r d_r + i d_theta)/2 phi; condition-(D)
      // f^0/f^gamma from [E_abar, E_bbar] vanish identically at n = 2, and the
      // companion [Zbar, E_bbar] family is Zbar(phi) g.
      for (int a = 0; a < 2; ++a) {
        ChartField dr, dth;
        r_derivative(phi.c[a], dr, cfg_.nthreads);
        theta_derivative(phi.c[a], dth, cfg_.nthreads);
        const auto& cs = charts_[a];
        for (size_t node = 0; node < g.nw(); ++node) {
          if (!cs.kept[node]) continue;
          const double gmet = cs.jets[node].Lwwb.real() + 1.0 / sq(1.0 + sq(cs.absw[node]));
          for (int ir = 0; ir < g.Nr; ++ir)
            for (int it = 0; it < g.Nt; ++it) {
              const size_t i = (node * g.Nr + ir) * g.Nt + it;
              const cplx zb = 0.5 * (g.rval(ir) * dr.a[i] + I * dth.a[i]);
              m.c_res = std::max(m.c_res, std::abs(zb));
              m.d_res_fgamma = std::max(m.d_res_fgamma, std::abs(zb) * gmet);
            }
        }
      }
      m.d_res_f0 = 0.0;
    }
    return m;
  }

  double transfer_blend(DeformationField& y) const {
    double mism = 0.0;
    const auto& g = cfg_.geom;
    std::array<std::vector<cplx>, 2> fresh;
    for (int a = 0; a < 2; ++a) {
      const auto& cs = charts_[a];
      const ChartField& src = y.c[1 - a];
      fresh[a].assign(cs.transfers.size() * size_t(g.Nr) * g.Nt, cplx(0.0));
      parallel_for(int(cs.transfers.size()), cfg_.nthreads, [&](int ti) {
        const auto& tr = cs.transfers[ti];
        cplx* out = fresh[a].data() + size_t(ti) * g.Nr * g.Nt;
        std::vector<cplx> S(g.Nt);
        for (int ir = 0; ir < g.Nr; ++ir) {
          std::fill(S.begin(), S.end(), cplx(0.0));
          for (int jv = 0; jv < 4; ++jv)
            for (int ju = 0; ju < 4; ++ju) {
              const double wgt = tr.av.w[jv] * tr.au.w[ju];
              const cplx* ring = src.a.data() + ((size_t(tr.av.i0 + jv) * g.Nw + (tr.au.i0 + ju)) * g.Nr + ir) * g.Nt;
              for (int it = 0; it < g.Nt; ++it) S[it] += wgt * ring[it];
            }
          for (int it = 0; it < g.Nt; ++it) {
            cplx v = 0.0;
            for (int j = 0; j < 4; ++j) {
              const int its = ((it + tr.tshift + j) % g.Nt + g.Nt) % g.Nt;
              v += tr.tw[j] * S[its];
            }
            out[size_t(ir) * g.Nt + it] = tr.factor * v;
          }
        }
      });
    }
    for (int a = 0; a < 2; ++a) {
      const auto& cs = charts_[a];
      for (size_t ti = 0; ti < cs.transfers.size(); ++ti) {
        const auto& tr = cs.transfers[ti];
        const double chi = cs.chi[tr.node];
        cplx* own = y.c[a].a.data() + size_t(tr.node) * g.Nr * g.Nt;
        const cplx* f = fresh[a].data() + ti * size_t(g.Nr) * g.Nt;
        for (int i = 0; i < g.Nr * g.Nt; ++i) {
          if (chi > 0.0) mism = std::max(mism, std::abs(own[i] - f[i]));
          own[i] = chi * own[i] + (1.0 - chi) * f[i];
        }
      }
    }
    return mism;
  }

  const detail::ChartStatic& chart_static(int a) const { return charts_[a]; }

 private:
  void ensure_buffers(const DeformationField& like) {
    for (auto& b : buf_)
      if (b.c[0].a.size() != like.c[0].a.size()) {
        b = like;
        for (auto& f : b.c) std::fill(f.a.begin(), f.a.end(), cplx(0.0));
      }
  }

  void rhs_chart(int a, const Direction& v_t, const ChartField& phi, ChartField& out) const {
    const auto& cs = charts_[a];
    const auto& g = cs.geom;
    out.geom = g;
    out.a.resize(phi.a.size());
    // derivative fields (scratch reused across calls)
    ChartField &du = scratch_[0], &dv = scratch_[1], &dr = scratch_[2], &dth = scratch_[3];
    w_derivative(phi, du, 0, cfg_.nthreads);
    w_derivative(phi, dv, 1, cfg_.nthreads);
    r_derivative(phi, dr, cfg_.nthreads);
    theta_derivative(phi, dth, cfg_.nthreads);
    const CVec u = chart_order(v_t.v, cs.axis);
    const cplx vw = u[0], vax = u[1];
    parallel_for(int(g.nw()), cfg_.nthreads, [&](int node) {
      cplx* o = out.a.data() + size_t(node) * g.Nr * g.Nt;
      if (!cs.evolve[node]) {
        std::fill(o, o + size_t(g.Nr) * g.Nt, cplx(0.0));
        return;
      }
      const int iu = node % g.Nw, iv = node / g.Nw;
      const auto J = scalar_field_jets(cs.jets[node], g.wval(iu, iv), vw, vax);
      const auto nc = detail::node_coeffs(J);
      const size_t base = size_t(node) * g.Nr * g.Nt;
      const cplx* pphi = phi.a.data() + base;
      const cplx* pdu = du.a.data() + base;
      const cplx* pdv = dv.a.data() + base;
      const cplx* pdr = dr.a.data() + base;
      const cplx* pdt = dth.a.data() + base;
      for (int ir = 0; ir < g.Nr; ++ir) {
        const double r = g.rval(ir);
        for (int it = 0; it < g.Nt; ++it) {
          const size_t i = size_t(ir) * g.Nt + it;
          const cplx zi = cs.zinv[i], z = cs.zval[i];
          const cplx zbi = std::conj(zi), zb = std::conj(z);
          const cplx ph = pphi[i];
          const cplx b = nc.Y * zi + nc.tauT * z;
          const cplx d = std::conj(nc.Y) * zbi + nc.wa * zi + nc.wb * zbi + nc.wc * z;
          const cplx av = nc.Y0 * zi - std::conj(nc.Y0) * z;
          const cplx cv = std::conj(av);
          const cplx PZ = av + b * nc.Ez + d * nc.Fz;
          const cplx PZb = cv + b * nc.Ezb + d * nc.Fzb;
          const cplx Dw = 0.5 * (pdu[i] - I * pdv[i]);
          const cplx Dwb = 0.5 * (pdu[i] + I * pdv[i]);
          const cplx adv = b * Dw + d * Dwb + 0.5 * (PZ + PZb) * (r * pdr[i]) + 0.5 * I * (PZb - PZ) * pdt[i];
          const cplx e_b = nc.eb1 * zi + nc.ebz * z;
          const cplx eb_b = nc.bbz * z;
          const cplx e_d = nc.ed_zi * zi + nc.ed_zbi * zbi + nc.ed_z * z;
          const cplx eb_d = nc.bd_zi * zi + nc.bd_zbi * zbi + nc.bd_z * z;
          const cplx force = eb_b + ph * e_b - (eb_d + ph * e_d) * ph;
          o[i] = force - adv;
        }
      }
    });
  }

  ProfileRho rho_;
  FlowConfig cfg_;
  std::array<detail::ChartStatic, 2> charts_;
  mutable std::array<DeformationField, 3> buf_;
  mutable std::array<ChartField, 4> scratch_;
  double last_mismatch_ = 0.0;
};

/// min over the whole lattice of |det(I - conj(phi) phi)| = |1 - |phi|^2|.
inline double degeneracy_margin(const DeformationField& f) {
  double m = 1e30;
  for (const auto& ch : f.c)
    for (const auto& v : ch.a) m = std::min(m, std::abs(1.0 - std::norm(v)));
  return m == 1e30 ? 1.0 : m;
}

// --- run-level driver -------------------------------------------------------

struct Snapshot {
  double t = 0.0;
  DeformationField phi;
  std::array<CoreFit, 2> fits;
};

/// Checkpointed deformation path with cubic interpolation in t and the
/// condition-(C) power-series core extension below r_min.
struct PhiPath {
  LatticeGeom geom;
  std::vector<Snapshot> snaps;
  double min_margin = 1.0;

  bool empty() const { return snaps.empty(); }

  cplx eval(int chart_axis, cplx w, cplx zeta, double t) const {
    if (snaps.empty()) return 0.0;
    if (snaps.size() == 1) return sample_snap(0, chart_axis, w, zeta);
    // window of up to 4 surrounding snapshots
    int hi = 0;
    while (hi < int(snaps.size()) && snaps[hi].t < t) ++hi;
    int i0 = std::max(0, std::min(int(snaps.size()) - 4, hi - 2));
    const int count = std::min<int>(4, int(snaps.size()) - i0);
    cplx acc = 0.0;
    for (int j = 0; j < count; ++j) {
      double wgt = 1.0;
      for (int k = 0; k < count; ++k) {
        if (k == j) continue;
        wgt *= (t - snaps[i0 + k].t) / (snaps[i0 + j].t - snaps[i0 + k].t);
      }
      acc += wgt * sample_snap(i0 + j, chart_axis, w, zeta);
    }
    return acc;
  }

  cplx sample_snap(int si, int chart_axis, cplx w, cplx zeta) const {
    const auto& s = snaps[si];
    const int a = chart_axis - 1;
    if (std::abs(zeta) >= geom.rmin + 0.5 * geom.hr()) return sample_field(s.phi.c[a], w, zeta);
    return s.fits[a].eval(w, zeta);
  }
};

struct RunResult {
  bool completed = false;
  double t_end = 0.0;
  Monitors final_monitors;
  Monitors worst;              // extrema over the run
  DegeneracyReport report;
  PhiPath path;
  int steps = 0;
  double dt_min = 1e30;
};

/// Integrate the deformation flow to t = 1 for the segment s * v0 (the center
/// curve is x_t = t s v0; the guiding velocities come from the Moebius family).
/// Stops at the first monitor breach with a bisected event time.
inline RunResult run_to(const ProfileRho& rho, const CVec& v0, double s, const FlowConfig& cfg,
                        const Flow::RhsOverride& ovr = nullptr,
                        const DeformationField* phi0 = nullptr) {
  Flow flow(rho, cfg);
  RunResult res;
  DeformationField y;
  y.init(cfg.geom);
  if (phi0) y = *phi0;

  auto v_of = [&](double t) {
    Direction base{s * v0};
    if (base.v.norm() == 0.0) return base;
    return mobius_center_velocity(base, t);
  };

  auto record = [&](double t, const Monitors& m) {
    res.report.margin_curve.emplace_back(t, m.margin);
    res.worst.margin = std::min(res.worst.margin, m.margin);
    res.worst.b_margin = std::min(res.worst.b_margin, m.b_margin);
    res.worst.max_phi = std::max(res.worst.max_phi, m.max_phi);
    res.worst.overlap_mismatch = std::max(res.worst.overlap_mismatch, m.overlap_mismatch);
    res.worst.c_res = std::max(res.worst.c_res, m.c_res);
    res.worst.d_res_f0 = std::max(res.worst.d_res_f0, m.d_res_f0);
    res.worst.d_res_fgamma = std::max(res.worst.d_res_fgamma, m.d_res_fgamma);
  };

  Monitors m0 = flow.monitors(y, true);
  if (m0.margin <= cfg.eps_deg)
    throw Degenerate("initial deformation tensor violates condition (A)");
  record(0.0, m0);

  auto snapshot = [&](double t, const DeformationField& f) {
    if (!cfg.keep_history) return;
    Snapshot sn;
    sn.t = t;
    sn.phi = f;
    for (int a = 0; a < 2; ++a) sn.fits[a] = core_fit(f.c[a], cfg.fit_degree, cfg.nthreads);
    res.path.snaps.push_back(std::move(sn));
  };
  res.path.geom = cfg.geom;
  snapshot(0.0, y);

  double t = 0.0;
  double next_ckpt = cfg.ckpt_dt;
  double prev_max = m0.max_phi;
  while (t < 1.0 - 1e-12) {
    double dt = ovr ? (cfg.fixed_dt > 0.0 ? cfg.fixed_dt : 1e-2) : flow.cfl_dt(v_of(t));
    dt = std::min(dt, 1.0 - t);
    DeformationField saved = y;
    flow.step(y, t, dt, v_of, ovr);
    const bool at_ckpt = (t + dt >= next_ckpt - 1e-12) || (t + dt >= 1.0 - 1e-12);
    Monitors m = flow.monitors(y, at_ckpt);
    ++res.steps;
    res.dt_min = std::min(res.dt_min, dt);

    // CFL-violation signal: exponential growth of an already-significant field.
    // An absolute allowance keeps the legitimate growth out of zero initial data
    // from tripping the alarm; a true blowup doubles past it within a few steps.
    if (!std::isfinite(m.max_phi) || m.max_phi > 2.0 * prev_max + 0.1)
      throw Unstable("phi grew by more than 2x in one step (CFL violation signal)");
    prev_max = std::max(prev_max, m.max_phi);

    if (m.margin <= cfg.eps_deg) {
      // bisect the event time within the last step
      double lo = 0.0, hi = dt;
      while (hi - lo > cfg.t_bisect_tol) {
        const double mid = 0.5 * (lo + hi);
        DeformationField probe = saved;
        flow.step(probe, t, mid, v_of, ovr);
        if (flow.monitors(probe, false).margin > cfg.eps_deg)
          lo = mid;
        else
          hi = mid;
      }
      record(t + hi, m);
      res.completed = false;
      res.t_end = t + 0.5 * (lo + hi);
      res.report.s_o = res.t_end;
      res.report.terminating = Terminating::degenerate;
      res.final_monitors = m;
      return res;
    }

    t += dt;
    record(t, m);
    if (at_ckpt && t < 1.0 - 1e-12) {
      snapshot(t, y);
      while (next_ckpt <= t + 1e-12) next_ckpt += cfg.ckpt_dt;
    }
    res.final_monitors = m;
  }
  snapshot(1.0, y);
  res.completed = true;
  res.t_end = 1.0;
  res.report.s_o = 1.0;
  res.report.terminating = Terminating::reached_one;
  res.path.min_margin = res.worst.margin;
  return res;
}

/// Outer bisection over the segment parameter: s_o = sup { s : run_to(s v0)
/// completes }. Membership is monotone by assumption; a success above an
/// earlier failure flags Unstable.
inline DegeneracyReport find_frontier(const ProfileRho& rho, const CVec& v0, const FlowConfig& cfg) {
  if (v0.norm() >= 1.0) throw InvalidInput("frontier direction requires |v0| < 1");
  DegeneracyReport rep;
  double fail_min = 2.0, success_max = 0.0;
  auto member = [&](double s) {
    try {
      RunResult r = run_to(rho, v0, s, cfg);
      if (r.completed) {
        success_max = std::max(success_max, s);
        rep.margin_curve = r.report.margin_curve;
        return true;
      }
    } catch (const Degenerate&) {
    }
    fail_min = std::min(fail_min, s);
    return false;
  };
  if (member(1.0)) {
    rep.s_o = 1.0;
    rep.terminating = Terminating::reached_one;
    return rep;
  }
  double lo = 0.0, hi = 1.0;
  while (hi - lo > cfg.s_bisect_tol) {
    const double mid = 0.5 * (lo + hi);
    if (member(mid))
      lo = mid;
    else
      hi = mid;
    if (success_max > fail_min) throw Unstable("non-monotone frontier membership (discretization artifact)");
  }
  rep.s_o = lo;
  rep.terminating = Terminating::degenerate;
  return rep;
}

}  // namespace mae
