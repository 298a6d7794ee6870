#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "mae/frames.hpp"

using namespace mae;
using Catch::Approx;

namespace {
PolarPoint ppt(cplx w, cplx zeta, int axis = 2) {
  PolarPoint p;
  p.chart = ChartId{axis};
  p.w = CVec::Constant(1, w);
  p.zeta = zeta;
  return p;
}
}  // namespace

TEST_CASE("metric coefficients") {
  auto ball = ProfileRho::ball(2);
  auto f0 = metric_coeffs(ball, 2, CVec::Zero(1));
  CHECK(std::abs(f0.g(0, 0) - cplx(1.0)) < 1e-15);
  CHECK(std::abs(f0.h(0, 0)) < 1e-15);

  auto f1 = metric_coeffs(ball, 2, CVec::Constant(1, cplx(1.0)));
  CHECK(std::abs(f1.g(0, 0) - cplx(0.25)) < 1e-15);
  // h = -wbar^2/(1+|w|^2)^2 = -1/4 at w = 1
  CHECK(std::abs(f1.h(0, 0) - cplx(-0.25)) < 1e-15);

  CHECK((f1.g * f1.g_inv - CMat::Identity(1, 1)).norm() < 1e-12);
}

TEST_CASE("g equals the finite-difference Hessian of the potential") {
  auto pert = ProfileRho::perturbed(2, 0.2);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  const double h = 1e-4;
  auto pot = [&](cplx w) {
    CVec wv = CVec::Constant(1, w);
    return pert.derivs(2, wv).L + std::log(1.0 + std::norm(w));
  };
  double worst = 0.0;
  for (int k = 0; k < 30; ++k) {
    const cplx w(u(rng), u(rng));
    auto f = metric_coeffs(pert, 2, CVec::Constant(1, w));
    // complex Hessian d_w d_wbar = (1/4)(d_xx + d_yy)
    const double lap = (pot(w + h) + pot(w - h) + pot(w + I * h) + pot(w - I * h) - 4.0 * pot(w)) / (h * h);
    worst = std::max(worst, std::abs(f.g(0, 0) - cplx(lap / 4.0)));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("frame vectors") {
  auto ball = ProfileRho::ball(2);
  auto f0 = frame_vectors(ball, ppt(0.0, 0.5));
  CHECK(std::abs(f0.frame_z[0]) == 0.0);   // e = d_w exactly at w = 0
  CHECK(std::abs(f0.frame_zb[0]) == 0.0);

  auto f1 = frame_vectors(ball, ppt(1.0, 0.5));
  // e = d_w + (1/4)(zetabar d_zetabar - zeta d_zeta)
  CHECK(std::abs(f1.frame_z[0] - cplx(-0.25)) < 1e-15);
  CHECK(std::abs(f1.frame_zb[0] - cplx(0.25)) < 1e-15);

  CHECK_THROWS_AS(frame_vectors(ball, ppt(0.3, 0.0)), CoreSingular);
}

TEST_CASE("e_a annihilates mu^2 (chain rule)") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto eps : {0.0, 0.2}) {
    auto prof = eps == 0.0 ? ProfileRho::ball(2) : ProfileRho::perturbed(2, eps);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      const cplx w(u(rng), u(rng));
      const cplx zeta(0.3 + 0.5 * std::abs(u(rng)), 0.4 * u(rng));
      auto f = metric_coeffs(prof, 2, CVec::Constant(1, w));
      auto L = prof.derivs(2, CVec::Constant(1, w));
      // mu^2 = |zeta|^2 rho^2: e(mu^2) = [d_w(L) + frame_z] |zeta|^2 rho^2 ... chain rule:
      // e(mu^2) = mu^2 * (d_w log(mu^2) + frame_z * 1 + frame_zb * 1)
      //         = mu^2 * (L_w + frame_z + frame_zb)
      const cplx res = L.Lw[0] + f.frame_z[0] + f.frame_zb[0] + 0.5 * q_derivs(CVec::Constant(1, w)).Qw[0] -
                       0.5 * q_derivs(CVec::Constant(1, w)).Qw[0];
      // frame_z + frame_zb = -(L_w + Qw/2) + Qw/2 = -L_w, so the residual is exact
      const double mu2 = std::norm(zeta) * std::exp(L.L);
      worst = std::max(worst, std::abs(res) * mu2);
    }
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("frames are standard-holomorphic: J_st e = i e") {
  // the ambient representation has no anti-holomorphic components by construction;
  // cross-check against coordinate_fields composition
  auto pert = ProfileRho::perturbed(2, 0.2);
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    PolarPoint p = ppt({u(rng), u(rng)}, {0.5 + 0.2 * u(rng), 0.3 * u(rng)});
    auto f = frame_vectors(pert, p);
    auto cf = coordinate_fields(p);
    // e = d_w + frame_z * (zeta d_zeta) + frame_zb * (zetabar d_zetabar);
    // d_{zbar}-components (rows 2..3): from d_w column and the zetabar term
    CVec amb = cf.apply(f.frame_z[0], CVec::Constant(1, cplx(1.0)));
    // add frame_zb * conj(zeta d_zeta column)
    for (int i = 0; i < 2; ++i) amb[2 + i] += f.frame_zb[0] * std::conj(cf.map(i, 0));
    worst = std::max(worst, std::abs(amb[2]));
    worst = std::max(worst, std::abs(amb[3]));
    // and it matches the direct ambient formula
    CMat ea = frame_ambient(pert, p);
    worst = std::max(worst, std::abs(amb[0] - ea(0, 0)));
    worst = std::max(worst, std::abs(amb[1] - ea(1, 0)));
  }
  CHECK(worst <= 1e-13);
}

TEST_CASE("levi form") {
  auto ball = ProfileRho::ball(2);
  auto lf = levi_form(ball, ppt(0.0, 1.0));
  CHECK(std::abs(lf(0, 0) - cplx(0.0, 2.0)) < 1e-14);

  auto l1 = levi_form(ball, ppt(0.4, 0.8));
  auto l2 = levi_form(ball, ppt(0.4, 0.4));
  CHECK(std::abs(l2(0, 0) - 0.25 * l1(0, 0)) < 1e-14);

  // Hermitian positivity of -i * result
  auto pert = ProfileRho::perturbed(2, 0.2);
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    auto lf2 = levi_form(pert, ppt({u(rng), u(rng)}, {0.6, 0.2 * u(rng)}));
    CHECK((-I * lf2(0, 0)).real() > 0.0);
    CHECK(std::abs((-I * lf2(0, 0)).imag()) < 1e-14);
  }
}

TEST_CASE("bracket identities") {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto eps : {0.0, 0.1}) {
    auto prof = eps == 0.0 ? ProfileRho::ball(2) : ProfileRho::perturbed(2, eps);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      PolarPoint p = ppt({u(rng), u(rng)}, {0.5 + 0.3 * std::abs(u(rng)), 0.3 * u(rng)});
      worst = std::max(worst, bracket_residual(prof, p));
    }
    CHECK(worst <= 1e-9);
  }

  // chart independence (tensorial identity): same geometric point, both charts
  auto pert = ProfileRho::perturbed(2, 0.1);
  for (int k = 0; k < 20; ++k) {
    PolarPoint p = ppt({0.5 + 0.3 * u(rng), 0.4 * u(rng)}, {0.7, 0.1 * u(rng)});
    const double r2 = bracket_residual(pert, p);
    const double r1 = bracket_residual(pert, transition(p, ChartId{1}));
    CHECK(r2 <= 1e-9);
    CHECK(r1 <= 1e-9);
  }

  // corrupted g is detected (negative control)
  PolarPoint p = ppt(0.3, 0.6);
  CHECK(bracket_residual(pert, p, 0.1) > 1e-2);
}

TEST_CASE("positivity margin reported for accepted profiles") {
  for (auto eps : {0.0, 0.1, 0.2}) {
    auto prof = eps == 0.0 ? ProfileRho::ball(2) : ProfileRho::perturbed(2, eps);
    CHECK(validate_pseudoconvex(prof) > 0.0);
  }
}
