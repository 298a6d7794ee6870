#pragma once

// Closed-form vector-field ingredients of the deformation machinery:
// the radial components Y^0, Y^a, the H-terms, special-field assembly,
// the phi-dependent correction Ytilde, the phi-independent complex
// advection field X', and the Moebius center-velocity family.
//
// Index conventions: G(i,j) = d_{w^i} d_{wbar^j} P with P = log rho^2 +
// log(1+|w|^2); g^{a bbar} = G^{-1}(a,b). All contractions reduce to the
// scalar formulas at n = 2, which is what the tests pin down.

#include <cmath>

#include "mae/frames.hpp"

namespace mae {

struct Direction {
  CVec v;  // tangent vector at the center, ball-model units

  int n() const { return static_cast<int>(v.size()); }
};

/// v permuted into chart order: components for the w-slots first, axis last.
inline CVec chart_order(const CVec& v, int axis) {
  const int n = static_cast<int>(v.size());
  CVec u(n);
  int k = 0;
  for (int i = 0; i < n; ++i)
    if (i != axis - 1) u[k++] = v[i];
  u[n - 1] = v[axis - 1];
  return u;
}

/// Y^a = (v^a - v^ax w^a) sqrt(1+|w|^2),
/// Y^0 = v^ax sqrt(1+|w|^2) + Y^a d_a P.
struct RadialComponents {
  CVec Y;
  cplx Y0;
};

inline RadialComponents radial_components(const Direction& v, int axis, const CVec& w, const FrameData& f) {
  const int m = static_cast<int>(w.size());
  const CVec u = chart_order(v.v, axis);
  const double SQ = std::sqrt(w.squaredNorm() + 1.0);
  RadialComponents rc;
  rc.Y.resize(m);
  for (int a = 0; a < m; ++a) rc.Y[a] = (u[a] - u[m] * w[a]) * SQ;
  rc.Y0 = u[m] * SQ;
  for (int a = 0; a < m; ++a) rc.Y0 += rc.Y[a] * f.dP[a];
  return rc;
}

/// H_b = Y^a (h_{ab} + d_a P d_b P),  H_bbar = Y^a g_{a bbar}.
struct HTerms {
  CVec H;   // H_b
  CVec K;   // H_bbar
};

inline HTerms h_terms(const RadialComponents& rc, const FrameData& f) {
  const int m = static_cast<int>(rc.Y.size());
  HTerms t;
  t.H.resize(m);
  t.K.resize(m);
  for (int b = 0; b < m; ++b) {
    cplx h = 0.0, k = 0.0;
    for (int a = 0; a < m; ++a) {
      h += rc.Y[a] * (f.h(a, b) + f.dP[a] * f.dP[b]);
      k += rc.Y[a] * f.g(a, b);
    }
    t.H[b] = h;
    t.K[b] = k;
  }
  return t;
}

/// Expansion of a field in the adapted frame (Z, e_a) (conjugate parts implied
/// for real fields, stored explicitly for complex ones).
struct FrameVector {
  cplx a0;        // coefficient of Z
  CVec aw;        // coefficients of e_a
  cplx a0b = 0.0; // coefficient of Zbar (complex fields)
  CVec awb;       // coefficients of ebar_a (complex fields)
  bool real_field = true;  // conjugate parts are the conjugates of (a0, aw)
};

struct SpecialFieldParams {
  Direction v;
  double sigma = 0.0;                  // real function value (kept constant here)
  std::optional<CVec> ytilde;          // override; default from ytilde_from_phi
};

/// Solve the reality-constrained system pinning Ytilde given phi:
///   sum_b x^b g_{b abar} - sum_{b,g} phi^b_abar g_{b gbar} conj(x^g) = R_abar,
///   R_abar = -conj(H_a - Y0 d_a L) zeta
///            + phi^b_abar (H_b/zeta + conj(K_b)/zetabar
///                          - conj(K_b - Y0 conj(d_b L)) zeta).
/// phi = 0 gives the pure radial correction -g^{a bbar} conj(H_b - Y0 d_b L) zeta.
inline CVec ytilde_from_phi(const CMat& phi, const RadialComponents& rc, const HTerms& ht,
                            const FrameData& f, const cplx& zeta) {
  const int m = static_cast<int>(rc.Y.size());
  // degeneracy guard: det(I - conj(phi) phi)
  const CMat dm = CMat::Identity(m, m) - phi.conjugate() * phi;
  if (std::abs(dm.determinant()) < 1e-14) throw Degenerate("det(I - conj(phi) phi) = 0 in ytilde_from_phi");
  const cplx zb = std::conj(zeta);
  CVec R(m);
  for (int a = 0; a < m; ++a) {
    cplx r = -std::conj(ht.H[a] - rc.Y0 * f.dlogrho2[a]) * zeta;
    for (int b = 0; b < m; ++b) {
      const cplx Db = ht.H[b] / zeta + std::conj(ht.K[b]) / zb -
                      std::conj(ht.K[b] - rc.Y0 * std::conj(f.dlogrho2[b])) * zeta;
      r += phi(b, a) * Db;
    }
    R[a] = r;
  }
  // A x + B conj(x) = R with A = G^T, B = -phi^T G; solve the doubled real system.
  const CMat A = f.g.transpose();
  const CMat B = -(phi.transpose() * f.g);
  Eigen::MatrixXd M(2 * m, 2 * m);
  Eigen::VectorXd rhs(2 * m);
  M.block(0, 0, m, m) = A.real() + B.real();
  M.block(0, m, m, m) = -A.imag() + B.imag();
  M.block(m, 0, m, m) = A.imag() + B.imag();
  M.block(m, m, m, m) = A.real() - B.real();
  rhs.head(m) = R.real();
  rhs.tail(m) = R.imag();
  const Eigen::VectorXd x = M.partialPivLu().solve(rhs);
  CVec y(m);
  for (int a = 0; a < m; ++a) y[a] = cplx(x[a], x[m + a]);
  return y;
}

/// The real special field X = (Y0/zeta + i sigma - conj(Y0) zeta) Z
///   + (Y^a/zeta + Ytilde^a) e_a + conjugates.
inline FrameVector assemble_special(const SpecialFieldParams& params, const PolarPoint& p,
                                    const ProfileRho& rho, const CMat* phi = nullptr) {
  if (p.zeta == cplx(0.0, 0.0)) throw CoreSingular("special field expansion is singular at zeta = 0");
  const FrameData f = metric_coeffs(rho, p.chart.axis, p.w);
  const RadialComponents rc = radial_components(params.v, p.chart.axis, p.w, f);
  const HTerms ht = h_terms(rc, f);
  CVec yt;
  if (params.ytilde) {
    yt = *params.ytilde;
  } else if (phi) {
    yt = ytilde_from_phi(*phi, rc, ht, f, p.zeta);
  } else {
    yt = ytilde_from_phi(CMat::Zero(f.g.rows(), f.g.cols()), rc, ht, f, p.zeta);
  }
  FrameVector X;
  X.real_field = true;
  X.a0 = rc.Y0 / p.zeta + I * params.sigma - std::conj(rc.Y0) * p.zeta;
  X.aw = rc.Y / p.zeta + yt;
  return X;
}

/// Phi-independent complex advection field X' = XX_t + YY'_t:
///   Z:    Y0/zeta - conj(Y0) zeta          Zbar: conjugate
///   e_a:  Y^a/zeta + T^a zeta,             T = -g^{-T} conj(H - Y0 dL)
///   ebar_a: conj(Y^a)/zetabar + W_a,       W_a = -sum_b g^{abar b}(H_b/zeta
///            + conj(K_b)/zetabar - conj(K_b - Y0 conj(d_b L)) zeta)
inline FrameVector xprime(const Direction& v, const PolarPoint& p, const ProfileRho& rho) {
  if (p.zeta == cplx(0.0, 0.0)) throw CoreSingular("X' is singular at zeta = 0");
  const FrameData f = metric_coeffs(rho, p.chart.axis, p.w);
  const RadialComponents rc = radial_components(v, p.chart.axis, p.w, f);
  const HTerms ht = h_terms(rc, f);
  const int m = static_cast<int>(rc.Y.size());
  const cplx zeta = p.zeta, zb = std::conj(zeta);

  CVec hmyl(m), S(m);
  for (int b = 0; b < m; ++b) {
    hmyl[b] = std::conj(ht.H[b] - rc.Y0 * f.dlogrho2[b]);
    S[b] = ht.H[b] / zeta + std::conj(ht.K[b]) / zb -
           std::conj(ht.K[b] - rc.Y0 * std::conj(f.dlogrho2[b])) * zeta;
  }
  const CVec T = f.g.transpose().partialPivLu().solve(CVec(-hmyl));
  CVec W(m);
  {
    // W_a = -sum_b Ginv(b, a)-conjugate contraction; scalar case: -S/g.
    const CMat Ginvc = f.g_inv.conjugate();
    W = -(Ginvc.transpose() * S);
  }
  FrameVector X;
  X.real_field = false;
  X.a0 = rc.Y0 / zeta - std::conj(rc.Y0) * zeta;
  X.a0b = std::conj(X.a0);
  X.aw = rc.Y / zeta + T * zeta;
  X.awb = rc.Y.conjugate() / zb + W;
  return X;
}

// --- scalar (n = 2) coefficient jets for the flow core --------------------

/// All w-dependent coefficient functions of the advection field X' and of the
/// real special field, with exact first derivatives. The zeta-dependence of
/// every field is an explicit Laurent monomial, so e- and ebar-derivatives
/// follow from e(zeta)/zeta = Ez, e(zetabar)/zetabar = Ezb, ebar(zeta)/zeta =
/// Fz, ebar(zetabar)/zetabar = Fzb.
struct ScalarFieldJets {
  // potential data
  double g = 0.0;
  cplx Lw, Qw, Pw, h, gw, gwb, hw;
  double SQ = 1.0;
  cplx Ez, Ezb, Fz, Fzb;
  // v-linear values and first derivatives
  cplx Y, Y0, H, K;
  cplx dY_w, dY_wb, dY0_w, dY0_wb, dH_w, dH_wb, dK_w, dK_wb;
  cplx HmYL, KmYL;
  cplx tauT, dtauT_w, dtauT_wb;
  cplx wa, wb, wc, dwa_w, dwa_wb, dwb_w, dwb_wb, dwc_w, dwc_wb;
};

inline ScalarFieldJets scalar_field_jets(const ProfileJet3& L, cplx w, cplx v_w, cplx v_ax) {
  ScalarFieldJets j;
  const double D = 1.0 + std::norm(w);
  const cplx wb = std::conj(w);
  const cplx Qw = wb / D;
  const cplx Qww = -wb * wb / (D * D);
  const double Qwwb = 1.0 / (D * D);
  const cplx Qwww = 2.0 * wb * wb * wb / (D * D * D);
  const cplx Qwwwb = -2.0 * wb / (D * D * D);
  const cplx Qwwbwb = -2.0 * w / (D * D * D);
  j.SQ = std::sqrt(D);
  j.Lw = L.Lw;
  j.Qw = Qw;
  j.Pw = L.Lw + Qw;
  j.h = L.Lww + Qww;
  j.g = L.Lwwb.real() + Qwwb;
  j.gw = L.Lwwwb + Qwwwb;
  j.gwb = L.Lwwbwb + Qwwbwb;
  j.hw = L.Lwww + Qwww;
  const cplx Qwb = std::conj(Qw), Lwb = std::conj(L.Lw);
  j.Ez = -(L.Lw + 0.5 * Qw);
  j.Ezb = 0.5 * Qw;
  j.Fz = 0.5 * Qwb;
  j.Fzb = -(Lwb + 0.5 * Qwb);

  j.Y = (v_w - v_ax * w) * j.SQ;
  j.Y0 = v_ax * j.SQ + j.Y * j.Pw;
  j.dY_w = -v_ax * j.SQ + 0.5 * Qw * j.Y;
  j.dY_wb = 0.5 * Qwb * j.Y;
  j.dY0_w = 0.5 * Qw * j.Y0 - v_ax * j.SQ * j.Pw + j.Y * j.h;
  j.dY0_wb = 0.5 * Qwb * j.Y0 + j.Y * j.g;
  j.H = j.Y * (j.h + j.Pw * j.Pw);
  j.K = j.Y * j.g;
  j.dH_w = j.dY_w * (j.h + j.Pw * j.Pw) + j.Y * (j.hw + 2.0 * j.Pw * j.h);
  j.dH_wb = j.dY_wb * (j.h + j.Pw * j.Pw) + j.Y * (j.gw + 2.0 * j.Pw * j.g);
  j.dK_w = j.dY_w * j.g + j.Y * j.gw;
  j.dK_wb = j.dY_wb * j.g + j.Y * j.gwb;

  j.HmYL = j.H - j.Y0 * L.Lw;
  j.KmYL = j.K - j.Y0 * Lwb;
  const cplx dHmYL_w = j.dH_w - j.dY0_w * L.Lw - j.Y0 * L.Lww;
  const cplx dHmYL_wb = j.dH_wb - j.dY0_wb * L.Lw - j.Y0 * L.Lwwb;
  const cplx dKmYL_w = j.dK_w - j.dY0_w * Lwb - j.Y0 * L.Lwwb;
  const cplx dKmYL_wb = j.dK_wb - j.dY0_wb * Lwb - j.Y0 * std::conj(L.Lww);

  const double g2 = j.g * j.g;
  j.tauT = -std::conj(j.HmYL) / j.g;
  j.dtauT_w = -std::conj(dHmYL_wb) / j.g + std::conj(j.HmYL) * j.gw / g2;
  j.dtauT_wb = -std::conj(dHmYL_w) / j.g + std::conj(j.HmYL) * j.gwb / g2;
  j.wa = -j.H / j.g;
  j.dwa_w = -j.dH_w / j.g + j.H * j.gw / g2;
  j.dwa_wb = -j.dH_wb / j.g + j.H * j.gwb / g2;
  j.wb = -std::conj(j.K) / j.g;
  j.dwb_w = -std::conj(j.dK_wb) / j.g + std::conj(j.K) * j.gw / g2;
  j.dwb_wb = -std::conj(j.dK_w) / j.g + std::conj(j.K) * j.gwb / g2;
  j.wc = std::conj(j.KmYL) / j.g;
  j.dwc_w = std::conj(dKmYL_wb) / j.g - std::conj(j.KmYL) * j.gw / g2;
  j.dwc_wb = std::conj(dKmYL_w) / j.g - std::conj(j.KmYL) * j.gwb / g2;
  return j;
}

// --- Moebius family ------------------------------------------------------

/// Standard ball automorphism sending a to 0 (T_0 = -Id).
inline CVec ball_automorphism(const CVec& a, const CVec& z) {
  const double na2 = a.squaredNorm();
  if (na2 >= 1.0) throw InvalidInput("ball automorphism requires |a| < 1");
  if (na2 == 0.0) return -z;
  const cplx ip = a.dot(z);  // <z, a> = sum z_i conj(a_i)
  const double s = std::sqrt(1.0 - na2);
  const CVec Pz = (ip / na2) * a;
  const CVec Qz = z - Pz;
  return (a - Pz - s * Qz) / (1.0 - ip);
}

/// Distinguished family F_x = -T_x: F_0 = Id, F_x(x) = 0, smooth in x.
inline CVec mobius_map(const CVec& x, const CVec& z) { return -ball_automorphism(x, z); }

/// v_t = d/ds F_{(t+s)v}(tv)|_{s=0} by central finite difference (step 1e-6).
/// For the radial family this equals -v/(1 - t^2 |v|^2).
inline Direction mobius_center_velocity(const Direction& v, double t, double step = 1e-6) {
  const double nv = v.v.norm();
  if (t * nv >= 1.0) throw InvalidInput("mobius_center_velocity requires t |v| < 1");
  const CVec xt = t * v.v;
  auto at = [&](double s) { return CVec(mobius_map(CVec((t + s) * v.v), xt)); };
  const CVec d1 = (at(step) - at(-step)) / (2.0 * step);
  const CVec d2 = (at(2.0 * step) - at(-2.0 * step)) / (4.0 * step);
  // Richardson check: central differences agree to O(step^2)
  if ((d1 - d2).norm() > 1e-4 * std::max(1.0, d1.norm()))
    throw NoConvergence("mobius_center_velocity finite difference did not converge");
  return Direction{(4.0 * d1 - d2) / 3.0};
}

}  // namespace mae
