#pragma once

// Generalized polar coordinates on C^n minus a hyperplane:
//   w^a = z^a / z^axis (axis slot last), zeta = |z| z^axis / |z^axis|,
// their inverse, the coordinate vector fields, and chart transitions.

#include <cmath>

#include "mae/types.hpp"

namespace mae {

struct AmbientPoint {
  CVec z;

  int n() const { return static_cast<int>(z.size()); }
  double norm() const { return z.norm(); }
};

struct ChartId {
  int axis = 0;  // 1-based, selects the deleted hyperplane {z^axis = 0}

  bool operator==(const ChartId&) const = default;
};

struct PolarPoint {
  ChartId chart;
  CVec w;    // n-1 components, chart-axis slot removed
  cplx zeta;

  int n() const { return static_cast<int>(w.size()) + 1; }
  double r() const { return std::abs(zeta); }
};

inline void check_chart(const ChartId& c, int n) {
  if (c.axis < 1 || c.axis > n)
    throw InvalidInput("chart axis " + std::to_string(c.axis) + " out of range 1.." + std::to_string(n));
}

/// Chart whose axis maximizes |z^i|; keeps |w^a| <= 1 on the active chart.
inline ChartId select_chart(const AmbientPoint& p) {
  int best = 0;
  double m = -1.0;
  for (int i = 0; i < p.n(); ++i) {
    double a = std::abs(p.z[i]);
    if (a > m) {
      m = a;
      best = i;
    }
  }
  return ChartId{best + 1};
}

inline PolarPoint to_polar(const AmbientPoint& p, ChartId chart) {
  const int n = p.n();
  check_chart(chart, n);
  const cplx za = p.z[chart.axis - 1];
  if (za == cplx(0.0, 0.0)) throw ChartSingular("z^axis = 0 on chart " + std::to_string(chart.axis));
  PolarPoint q;
  q.chart = chart;
  q.w.resize(n - 1);
  int k = 0;
  for (int i = 0; i < n; ++i) {
    if (i == chart.axis - 1) continue;
    q.w[k++] = p.z[i] / za;
  }
  q.zeta = p.norm() * za / std::abs(za);
  return q;
}

inline AmbientPoint from_polar(const PolarPoint& p) {
  const int n = p.n();
  check_chart(p.chart, n);
  const double s = std::sqrt(p.w.squaredNorm() + 1.0);
  AmbientPoint q;
  q.z.resize(n);
  int k = 0;
  for (int i = 0; i < n; ++i) {
    if (i == p.chart.axis - 1) {
      q.z[i] = p.zeta / s;
    } else {
      q.z[i] = p.w[k++] * p.zeta / s;
    }
  }
  return q;
}

/// Linear map from polar frame components to ambient components.
/// Columns: image of zeta*d_zeta, then images of d_{w^a}, a = 1..n-1.
/// Rows 0..n-1 are d_{z^i} components, rows n..2n-1 are d_{zbar^i} components.
struct CoordinateFields {
  CMat map;  // 2n x n

  CVec apply(const cplx& a0, const CVec& aw) const {
    CVec c(map.cols());
    c[0] = a0;
    c.tail(aw.size()) = aw;
    return map * c;
  }
};

inline CoordinateFields coordinate_fields(const PolarPoint& p) {
  const int n = p.n();
  if (p.zeta == cplx(0.0, 0.0)) throw CoreSingular("coordinate fields are singular at zeta = 0");
  const AmbientPoint z = from_polar(p);
  CoordinateFields f;
  f.map = CMat::Zero(2 * n, n);
  // zeta d_zeta = z^i d_{z^i}
  for (int i = 0; i < n; ++i) f.map(i, 0) = z.z[i];
  // d_{w^a} = z^axis d_{z^a} - (wbar^a / (2(1+|w|^2))) (z^i d_{z^i} + zbar^i d_{zbar^i})
  const cplx za = z.z[p.chart.axis - 1];
  const double den = p.w.squaredNorm() + 1.0;
  int k = 0;
  for (int i = 0; i < n; ++i) {
    if (i == p.chart.axis - 1) continue;
    const int col = 1 + k;
    f.map(i, col) += za;
    const cplx corr = std::conj(p.w[k]) / (2.0 * den);
    for (int j = 0; j < n; ++j) {
      f.map(j, col) -= corr * z.z[j];
      f.map(n + j, col) -= corr * std::conj(z.z[j]);
    }
    ++k;
  }
  return f;
}

inline PolarPoint transition(const PolarPoint& p, ChartId chart) {
  if (chart == p.chart) return p;
  return to_polar(from_polar(p), chart);
}

}  // namespace mae
