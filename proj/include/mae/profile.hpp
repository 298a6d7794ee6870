#pragma once

// Indicatrix profile rho on CP^{n-1}: log rho^2 is stored per chart as a finite
// sum of terms c * w^a wbar^b / (1+|w|^2)^k, a class closed under d_w and
// d_wbar, so all derivatives the engine needs are exact.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "mae/polar.hpp"
#include "mae/types.hpp"

namespace mae {

struct ProfileTerm {
  std::vector<int> a;  // powers of w^i
  std::vector<int> b;  // powers of wbar^i
  int k = 0;           // power of (1 + sum |w|^2) in the denominator
  cplx c;
};

using Terms = std::vector<ProfileTerm>;

inline cplx eval_terms(const Terms& ts, const CVec& w) {
  const double D = w.squaredNorm() + 1.0;
  cplx s = 0.0;
  for (const auto& t : ts) {
    cplx v = t.c;
    for (size_t i = 0; i < t.a.size(); ++i) {
      for (int p = 0; p < t.a[i]; ++p) v *= w[i];
      for (int p = 0; p < t.b[i]; ++p) v *= std::conj(w[i]);
    }
    s += v / std::pow(D, t.k);
  }
  return s;
}

inline Terms diff_w(const Terms& ts, int j) {
  Terms out;
  for (const auto& t : ts) {
    if (t.a[j] > 0) {
      ProfileTerm d = t;
      d.c *= double(t.a[j]);
      d.a[j] -= 1;
      out.push_back(d);
    }
    if (t.k > 0) {
      ProfileTerm d = t;
      d.c *= -double(t.k);
      d.b[j] += 1;
      d.k += 1;
      out.push_back(d);
    }
  }
  return out;
}

inline Terms diff_wb(const Terms& ts, int j) {
  Terms out;
  for (const auto& t : ts) {
    if (t.b[j] > 0) {
      ProfileTerm d = t;
      d.c *= double(t.b[j]);
      d.b[j] -= 1;
      out.push_back(d);
    }
    if (t.k > 0) {
      ProfileTerm d = t;
      d.c *= -double(t.k);
      d.a[j] += 1;
      d.k += 1;
      out.push_back(d);
    }
  }
  return out;
}

/// log rho^2 and its derivatives at one chart point, up to second order
/// (dimension-generic).
struct ProfileDerivs {
  double L = 0.0;
  CVec Lw;        // d_{w^a} L
  CMat Lww;       // d_{w^a} d_{w^b} L
  CMat Lwwb;      // d_{w^a} d_{wbar^b} L
};

/// Scalar (n = 2) derivative bundle up to third order, used by the flow core.
struct ProfileJet3 {
  double L = 0.0;
  cplx Lw, Lww, Lwwb;
  cplx Lwww, Lwwwb, Lwwbwb;
};

class ProfileChart {
 public:
  ProfileChart() = default;
  explicit ProfileChart(int m, Terms terms) : m_(m), t00_(std::move(terms)) {
    tw_.resize(m_);
    twb_.resize(m_);
    tww_.assign(m_, std::vector<Terms>(m_));
    twwb_.assign(m_, std::vector<Terms>(m_));
    for (int i = 0; i < m_; ++i) {
      tw_[i] = diff_w(t00_, i);
      twb_[i] = diff_wb(t00_, i);
    }
    for (int i = 0; i < m_; ++i)
      for (int j = 0; j < m_; ++j) {
        tww_[i][j] = diff_w(tw_[i], j);
        twwb_[i][j] = diff_wb(tw_[i], j);
      }
    if (m_ == 1) {
      t3www_ = diff_w(tww_[0][0], 0);
      t3wwwb_ = diff_wb(tww_[0][0], 0);
      t3wwbwb_ = diff_wb(twwb_[0][0], 0);
    }
  }

  int m() const { return m_; }
  const Terms& terms() const { return t00_; }
  bool trivial() const { return t00_.empty(); }

  ProfileDerivs derivs(const CVec& w) const {
    ProfileDerivs d;
    d.L = eval_terms(t00_, w).real();
    d.Lw.resize(m_);
    d.Lww.resize(m_, m_);
    d.Lwwb.resize(m_, m_);
    for (int i = 0; i < m_; ++i) d.Lw[i] = eval_terms(tw_[i], w);
    for (int i = 0; i < m_; ++i)
      for (int j = 0; j < m_; ++j) {
        d.Lww(i, j) = eval_terms(tww_[i][j], w);
        d.Lwwb(i, j) = eval_terms(twwb_[i][j], w);
      }
    return d;
  }

  ProfileJet3 jet3(cplx w) const {
    CVec wv(1);
    wv[0] = w;
    ProfileJet3 j;
    j.L = eval_terms(t00_, wv).real();
    j.Lw = eval_terms(tw_[0], wv);
    j.Lww = eval_terms(tww_[0][0], wv);
    j.Lwwb = eval_terms(twwb_[0][0], wv);
    j.Lwww = eval_terms(t3www_, wv);
    j.Lwwwb = eval_terms(t3wwwb_, wv);
    j.Lwwbwb = eval_terms(t3wwbwb_, wv);
    return j;
  }

 private:
  int m_ = 0;
  Terms t00_;
  std::vector<Terms> tw_, twb_;
  std::vector<std::vector<Terms>> tww_, twwb_;
  Terms t3www_, t3wwwb_, t3wwbwb_;
};

enum class ProfilePreset { ball, perturbed, custom };

/// Pull back a chart-n (n = 2) term bundle through the transition w = 1/w'.
/// Used for custom single-chart profiles; singular at w' = 0.
inline ProfileJet3 pullback_jet3(const ProfileChart& chart, cplx wp) {
  if (wp == cplx(0.0, 0.0)) throw ChartSingular("custom profile pullback singular at the far pole");
  const cplx w = 1.0 / wp;
  const ProfileJet3 f = chart.jet3(w);
  const cplx u1 = -1.0 / (wp * wp);
  const cplx u2 = 2.0 / (wp * wp * wp);
  const cplx u3 = -6.0 / (wp * wp * wp * wp);
  const cplx v1 = std::conj(u1), v2 = std::conj(u2);
  ProfileJet3 g;
  g.L = f.L;
  g.Lw = f.Lw * u1;
  g.Lww = f.Lww * u1 * u1 + f.Lw * u2;
  g.Lwwb = f.Lwwb * u1 * v1;
  g.Lwww = f.Lwww * u1 * u1 * u1 + 3.0 * f.Lww * u1 * u2 + f.Lw * u3;
  g.Lwwwb = f.Lwwwb * u1 * u1 * v1 + f.Lwwb * u2 * v1;
  g.Lwwbwb = f.Lwwbwb * u1 * v1 * v1 + f.Lwwb * u1 * v2;
  return g;
}

class ProfileRho {
 public:
  ProfileRho() = default;

  static ProfileRho ball(int n) {
    ProfileRho p;
    p.n_ = n;
    p.preset_ = ProfilePreset::ball;
    for (int c = 0; c < n; ++c) p.charts_.emplace_back(n - 1, Terms{});
    return p;
  }

  /// log rho^2 = eps (w^1 + wbar^1) / (1 + sum |w|^2); this expression is
  /// exactly chart-symmetric for n = 2 and extends to general n through the
  /// bihomogeneous form eps (z^1 zbar^n + zbar^1 z^n) / |z|^2.
  static ProfileRho perturbed(int n, double eps) {
    if (eps < 0.0 || eps > 0.2) throw InvalidInput("perturbed profile requires 0 <= epsilon <= 0.2");
    ProfileRho p;
    p.n_ = n;
    p.preset_ = ProfilePreset::perturbed;
    p.eps_ = eps;
    const int m = n - 1;
    for (int axis = 1; axis <= n; ++axis) {
      // slot index of ambient coordinate i on this chart (i != axis), 0-based
      auto slot = [&](int i) { return i < axis ? i - 1 : i - 2; };
      Terms ts;
      auto mono = [&](std::optional<int> ai, std::optional<int> bi) {
        ProfileTerm t;
        t.a.assign(m, 0);
        t.b.assign(m, 0);
        t.k = 1;
        t.c = eps;
        if (ai) t.a[*ai] += 1;
        if (bi) t.b[*bi] += 1;
        return t;
      };
      // z^1 zbar^n + zbar^1 z^n with the axis coordinate replaced by 1
      std::optional<int> s1 = (axis == 1) ? std::nullopt : std::optional<int>(slot(1));
      std::optional<int> sn = (axis == n) ? std::nullopt : std::optional<int>(slot(n));
      ts.push_back(mono(s1, sn));
      ts.push_back(mono(sn, s1));
      p.charts_.emplace_back(m, ts);
    }
    p.validate_reality();
    return p;
  }

  /// Custom profile from an explicit coefficient list on the canonical chart
  /// (axis = n). Only n = 2 custom profiles are supported by the file format.
  static ProfileRho custom(int n, Terms terms) {
    if (n != 2) throw InvalidInput("explicit-coefficient profiles are supported for n = 2 only");
    ProfileRho p;
    p.n_ = n;
    p.preset_ = ProfilePreset::custom;
    p.charts_.emplace_back(1, Terms{});  // chart 1 served by pullback
    p.charts_.emplace_back(1, std::move(terms));
    p.validate_reality();
    return p;
  }

  int n() const { return n_; }
  int m() const { return n_ - 1; }
  ProfilePreset preset() const { return preset_; }
  double epsilon() const { return eps_; }
  bool is_ball() const { return preset_ == ProfilePreset::ball; }

  const ProfileChart& chart(int axis) const { return charts_.at(axis - 1); }

  bool chart_is_pullback(int axis) const {
    return preset_ == ProfilePreset::custom && axis != n_;
  }

  ProfileDerivs derivs(int axis, const CVec& w) const {
    if (!chart_is_pullback(axis)) return chart(axis).derivs(w);
    const ProfileJet3 j = jet3(axis, w[0]);
    ProfileDerivs d;
    d.L = j.L;
    d.Lw = CVec::Constant(1, j.Lw);
    d.Lww = CMat::Constant(1, 1, j.Lww);
    d.Lwwb = CMat::Constant(1, 1, j.Lwwb);
    return d;
  }

  ProfileJet3 jet3(int axis, cplx w) const {
    if (chart_is_pullback(axis)) return pullback_jet3(chart(n_), w);
    return chart(axis).jet3(w);
  }

  /// log rho^2 and requested derivatives (order 0|1|2) as a flat record.
  ProfileDerivs rho_eval(int axis, const CVec& w, int order = 2) const {
    (void)order;  // all orders are exact and cheap; returned jointly
    return derivs(axis, w);
  }

  double rho(int axis, const CVec& w) const { return std::exp(0.5 * derivs(axis, w).L); }

  /// Minkowski functional mu(z) = |zeta| rho(w) in any chart containing z.
  double minkowski(const AmbientPoint& z) const {
    if (z.norm() == 0.0) return 0.0;
    const ChartId c = select_chart(z);
    const PolarPoint p = to_polar(z, c);
    return p.r() * rho(c.axis, p.w);
  }

  /// Radial-disk-preserving map onto the ball model: Theta(z) = z mu(z)/|z|.
  AmbientPoint straighten(const AmbientPoint& z) const {
    if (z.norm() == 0.0) return z;
    AmbientPoint q = z;
    q.z *= minkowski(z) / z.norm();
    return q;
  }

  AmbientPoint unstraighten(const AmbientPoint& x) const {
    if (x.norm() == 0.0) return x;
    AmbientPoint q = x;
    q.z *= x.norm() / minkowski(x);
    return q;
  }

  void validate_reality() const {
    for (const auto& ch : charts_) {
      if (ch.trivial()) continue;
      // for every term (a,b) there must be the conjugate term (b,a)
      for (const auto& t : ch.terms()) {
        bool found = false;
        for (const auto& s : ch.terms()) {
          if (s.a == t.b && s.b == t.a && s.k == t.k && std::abs(s.c - std::conj(t.c)) < 1e-14) {
            found = true;
            break;
          }
        }
        if (!found)
          throw InvalidInput("profile coefficients do not define a real log rho^2 (missing conjugate term)");
      }
    }
  }

 private:
  int n_ = 2;
  ProfilePreset preset_ = ProfilePreset::ball;
  double eps_ = 0.0;
  std::vector<ProfileChart> charts_;  // index = axis - 1
};

// --- profile file format -----------------------------------------------
//
//   n = 2
//   preset = ball | perturbed | custom
//   epsilon = 0.1              (perturbed)
//   coeff = <a> <b> <re> <im>  (custom, one line per term, canonical chart)

inline ProfileRho load_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open profile file: " + path);
  int n = 2;
  std::string preset;
  double eps = 0.0;
  Terms terms;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw InvalidInput(path + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto h = line.find('#');
    if (h != std::string::npos) line.erase(h);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected 'key = value'");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      s = (b == std::string::npos) ? "" : s.substr(b, e - b + 1);
    };
    trim(key);
    trim(val);
    if (key == "n") {
      try {
        n = std::stoi(val);
      } catch (...) {
        fail("invalid integer for n");
      }
      if (n < 2) fail("n must be >= 2");
    } else if (key == "preset") {
      preset = val;
    } else if (key == "epsilon") {
      try {
        eps = std::stod(val);
      } catch (...) {
        fail("invalid number for epsilon");
      }
    } else if (key == "coeff") {
      std::istringstream ss(val);
      int a, b;
      double re, im;
      if (!(ss >> a >> b >> re >> im)) fail("coeff needs '<a> <b> <re> <im>'");
      if (a < 0 || b < 0) fail("coeff powers must be nonnegative");
      ProfileTerm t;
      t.a = {a};
      t.b = {b};
      t.k = 0;
      t.c = cplx(re, im);
      terms.push_back(t);
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  lineno = 0;
  if (preset == "ball") return ProfileRho::ball(n);
  if (preset == "perturbed") return ProfileRho::perturbed(n, eps);
  if (preset == "custom") {
    if (terms.empty()) throw InvalidInput(path + ": custom profile without coeff lines");
    return ProfileRho::custom(n, terms);
  }
  throw InvalidInput(path + ": missing or unknown preset '" + preset + "'");
}

}  // namespace mae
