#include <catch2/catch_amalgamated.hpp>

#include "mae/flow.hpp"

using namespace mae;
using Catch::Approx;

namespace {
FlowConfig coarse_config(int threads = 2) {
  FlowConfig cfg;
  cfg.geom.Nw = 17;
  cfg.geom.Nr = 12;
  cfg.geom.Nt = 16;
  cfg.nthreads = threads;
  return cfg;
}

CVec v2(cplx a, cplx b) {
  CVec v(2);
  v << a, b;
  return v;
}
}  // namespace

TEST_CASE("degeneracy margin") {
  DeformationField f;
  LatticeGeom g = coarse_config().geom;
  f.init(g);
  CHECK(degeneracy_margin(f) == Approx(1.0));
  for (auto& ch : f.c)
    for (auto& v : ch.a) v = 0.6;
  CHECK(degeneracy_margin(f) == Approx(0.64));
  // invariant under a global phase
  for (auto& ch : f.c)
    for (auto& v : ch.a) v = std::polar(0.6, 1.234);
  CHECK(degeneracy_margin(f) == Approx(0.64));
}

TEST_CASE("rhs vanishes identically at phi = 0 for the ball") {
  auto ball = ProfileRho::ball(2);
  FlowConfig cfg = coarse_config();
  Flow flow(ball, cfg);
  DeformationField phi, out;
  phi.init(cfg.geom);
  out.init(cfg.geom);
  flow.rhs(0.3, Direction{v2(0.4, 0.2)}, phi, out);
  double worst = 0.0;
  for (const auto& ch : out.c)
    for (const auto& v : ch.a) worst = std::max(worst, std::abs(v));
  CHECK(worst <= 1e-12);
}

TEST_CASE("rhs at reference lattice stays below 1e-6 for the ball") {
  auto ball = ProfileRho::ball(2);
  FlowConfig cfg;
  cfg.geom.Nw = 33;
  cfg.geom.Nr = 24;
  cfg.geom.Nt = 32;
  cfg.nthreads = 4;
  Flow flow(ball, cfg);
  DeformationField phi, out;
  phi.init(cfg.geom);
  out.init(cfg.geom);
  flow.rhs(0.0, Direction{v2(0.5, 0.0)}, phi, out);
  double worst = 0.0;
  for (const auto& ch : out.c)
    for (const auto& v : ch.a) worst = std::max(worst, std::abs(v));
  CHECK(worst <= 1e-6);
}

TEST_CASE("rhs is nontrivial at phi = 0 for the perturbed profile") {
  auto pert = ProfileRho::perturbed(2, 0.1);
  FlowConfig cfg = coarse_config();
  Flow flow(pert, cfg);
  DeformationField phi, out;
  phi.init(cfg.geom);
  out.init(cfg.geom);
  flow.rhs(0.0, Direction{v2(0.0, 0.5)}, phi, out);
  double worst = 0.0;
  for (const auto& ch : out.c)
    for (const auto& v : ch.a) worst = std::max(worst, std::abs(v));
  CHECK(worst > 1e-4);   // the restored phi-independent source term
  CHECK(worst < 10.0);   // but bounded
}

TEST_CASE("rhs preserves zeta-holomorphy") {
  // for a condition-(C) state (phi polynomial in zeta) the right-hand side
  // must carry no zetabar content; catches Laurent bookkeeping bugs
  auto pert = ProfileRho::perturbed(2, 0.2);
  FlowConfig cfg = coarse_config();
  Flow flow(pert, cfg);
  DeformationField phi, out;
  phi.init(cfg.geom);
  out.init(cfg.geom);
  const auto& g = cfg.geom;
  for (int a = 0; a < 2; ++a)
    for (int iv = 0; iv < g.Nw; ++iv)
      for (int iu = 0; iu < g.Nw; ++iu) {
        const cplx w = g.wval(iu, iv);
        const cplx c1 = 0.1 / (1.0 + 0.2 * std::norm(w));
        const cplx c2 = cplx(0.0, 0.05) / (1.0 + 0.5 * std::norm(w));
        for (int ir = 0; ir < g.Nr; ++ir)
          for (int it = 0; it < g.Nt; ++it) {
            const cplx z = g.zval(ir, it);
            phi.c[a].at(iu, iv, ir, it) = c1 * z + c2 * z * z;
          }
      }
  flow.rhs(0.2, Direction{v2(0.3, 0.2)}, phi, out);
  // measure negative-theta-mode content of the rhs on evolved nodes
  double neg = 0.0, scale = 0.0;
  for (int a = 0; a < 2; ++a) {
    const auto& cs = flow.chart_static(a);
    for (size_t node = 0; node < g.nw(); ++node) {
      if (!cs.evolve[node]) continue;
      for (int ir = 0; ir < g.Nr; ++ir) {
        std::vector<cplx> buf(g.Nt);
        for (int it = 0; it < g.Nt; ++it) buf[it] = out.c[a].a[(node * g.Nr + ir) * g.Nt + it];
        fft_pow2(buf.data(), g.Nt, false);
        for (int k = 0; k < g.Nt; ++k) {
          const double mag = std::abs(buf[k]) / g.Nt;
          scale = std::max(scale, mag);
          if (fft_mode(k, g.Nt) < 0) neg = std::max(neg, mag);
        }
      }
    }
  }
  CHECK(neg <= 1e-10 * std::max(1.0, scale));
}

TEST_CASE("rhs linearization is first order (Richardson)") {
  auto pert = ProfileRho::perturbed(2, 0.1);
  FlowConfig cfg = coarse_config();
  Flow flow(pert, cfg);
  const auto& g = cfg.geom;
  DeformationField base, bump, state, r0, rp, rm, lin;
  base.init(g);
  bump.init(g);
  state.init(g);
  r0.init(g);
  rp.init(g);
  rm.init(g);
  lin.init(g);
  for (int a = 0; a < 2; ++a)
    for (int iv = 0; iv < g.Nw; ++iv)
      for (int iu = 0; iu < g.Nw; ++iu) {
        const cplx w = g.wval(iu, iv);
        for (int ir = 0; ir < g.Nr; ++ir)
          for (int it = 0; it < g.Nt; ++it)
            bump.c[a].at(iu, iv, ir, it) = std::exp(-0.5 * std::norm(w)) * g.zval(ir, it);
      }
  const Direction v{v2(0.2, 0.4)};
  flow.rhs(0.1, v, base, r0);
  auto resid = [&](double e) {
    for (int a = 0; a < 2; ++a)
      for (size_t i = 0; i < state.c[a].a.size(); ++i) state.c[a].a[i] = e * bump.c[a].a[i];
    flow.rhs(0.1, v, state, rp);
    for (int a = 0; a < 2; ++a)
      for (size_t i = 0; i < state.c[a].a.size(); ++i) state.c[a].a[i] = -e * bump.c[a].a[i];
    flow.rhs(0.1, v, state, rm);
    // symmetric-difference linear part
    double worst = 0.0;
    for (int a = 0; a < 2; ++a) {
      const auto& cs = flow.chart_static(a);
      for (size_t node = 0; node < g.nw(); ++node) {
        if (!cs.kept[node]) continue;
        for (int i = 0; i < g.Nr * g.Nt; ++i) {
          const size_t idx = node * size_t(g.Nr) * g.Nt + i;
          const cplx L = 0.5 * (rp.c[a].a[idx] - rm.c[a].a[idx]);
          const cplx res = rp.c[a].a[idx] - r0.c[a].a[idx] - L;
          worst = std::max(worst, std::abs(res));
        }
      }
    }
    return worst;  // = |quadratic remainder| at +e
  };
  const double q1 = resid(1e-3);
  const double q2 = resid(5e-4);
  CHECK(q1 / std::max(q2, 1e-30) > 2.5);
  CHECK(q1 / std::max(q2, 1e-30) < 6.5);
}

TEST_CASE("rhs is chart independent on the overlap") {
  auto pert = ProfileRho::perturbed(2, 0.2);
  double errs[2];
  for (int lvl = 0; lvl < 2; ++lvl) {
    FlowConfig cfg = coarse_config();
    cfg.geom.Nw = 17 * (lvl + 1);
    cfg.geom.Nr = 12 * (lvl + 1);
    cfg.geom.Nt = 16 * (lvl + 1);
    const auto& g = cfg.geom;
    Flow flow(pert, cfg);
    DeformationField phi, out;
    phi.init(g);
    out.init(g);
    // chart-consistent smooth test state: phi_2 = s(w_2) zeta_2 with the
    // tensor transform built in on chart 1
    auto sfun = [](cplx w) { return 0.1 * w / sq(1.0 + std::norm(w)); };
    for (int a = 0; a < 2; ++a)
      for (int iv = 0; iv < g.Nw; ++iv)
        for (int iu = 0; iu < g.Nw; ++iu) {
          const cplx w = g.wval(iu, iv);
          for (int ir = 0; ir < g.Nr; ++ir)
            for (int it = 0; it < g.Nt; ++it) {
              const cplx z = g.zval(ir, it);
              if (a == 1) {
                phi.c[a].at(iu, iv, ir, it) = sfun(w) * z;
              } else {
                // chart 1 value at (w1, z1): map to chart 2 and transform
                if (std::abs(w) < 1e-9) {
                  phi.c[a].at(iu, iv, ir, it) = 0.0;
                } else {
                  const cplx w2 = 1.0 / w;
                  const cplx z2 = z * w / std::abs(w);
                  const cplx ph = w / std::conj(w);
                  phi.c[a].at(iu, iv, ir, it) = ph * ph * sfun(w2) * z2;
                }
              }
            }
        }
    flow.rhs(0.2, Direction{v2(0.3, -0.2)}, phi, out);
    // compare chart-1 rhs against the transformed chart-2 rhs on the overlap
    double worst = 0.0;
    for (int iv = 0; iv < g.Nw; ++iv)
      for (int iu = 0; iu < g.Nw; ++iu) {
        const cplx w1 = g.wval(iu, iv);
        if (std::abs(w1) < 0.8 || std::abs(w1) > 1.25) continue;
        for (int ir = 2; ir < g.Nr - 2; ++ir)
          for (int it = 0; it < g.Nt; it += 3) {
            const cplx z1 = g.zval(ir, it);
            const cplx w2 = 1.0 / w1;
            const cplx z2 = z1 * w1 / std::abs(w1);
            const cplx ph = w1 / std::conj(w1);
            const cplx mapped = ph * ph * sample_field(out.c[1], w2, z2);
            worst = std::max(worst, std::abs(out.c[0].at(iu, iv, ir, it) - mapped));
          }
      }
    errs[lvl] = worst;
  }
  CHECK(errs[0] < 0.05);
  CHECK(errs[1] < errs[0] / 3.0);
}

TEST_CASE("ball run is stationary and healthy") {
  auto ball = ProfileRho::ball(2);
  FlowConfig cfg = coarse_config(4);
  cfg.keep_history = false;
  RunResult r = run_to(ball, v2(0.5, 0.0), 1.0, cfg);
  CHECK(r.completed);
  CHECK(r.worst.margin >= 0.999);
  CHECK(r.worst.max_phi <= 1e-5);
  CHECK(r.worst.c_res <= 1e-5);
  CHECK(r.worst.d_res_f0 == 0.0);
  CHECK(r.worst.d_res_fgamma <= 1e-5);
}

TEST_CASE("time stepping is 4th order") {
  auto pert = ProfileRho::perturbed(2, 0.2);
  FlowConfig cfg = coarse_config(4);
  cfg.keep_history = false;
  // fixed-dt comparison runs over a short horizon
  auto run_dt = [&](double dt) {
    Flow flow(pert, cfg);
    DeformationField y;
    y.init(cfg.geom);
    auto v_of = [&](double t) { return mobius_center_velocity(Direction{v2(0.0, 0.4)}, t); };
    double t = 0.0;
    const double T = 0.2;
    while (t < T - 1e-12) {
      const double h = std::min(dt, T - t);
      flow.step(y, t, h, v_of);
      t += h;
    }
    return y;
  };
  const auto y1 = run_dt(0.02);
  const auto y2 = run_dt(0.01);
  const auto y3 = run_dt(0.005);
  double e1 = 0.0, e2 = 0.0;
  for (int a = 0; a < 2; ++a)
    for (size_t i = 0; i < y1.c[a].a.size(); ++i) {
      e1 = std::max(e1, std::abs(y1.c[a].a[i] - y2.c[a].a[i]));
      e2 = std::max(e2, std::abs(y2.c[a].a[i] - y3.c[a].a[i]));
    }
  const double ratio = e1 / std::max(e2, 1e-30);
  CHECK(ratio > 8.0);
  CHECK(ratio < 32.0);
}

TEST_CASE("synthetic degeneracy fixture is located to 1e-3") {
  auto ball = ProfileRho::ball(2);
  FlowConfig cfg = coarse_config(2);
  cfg.keep_history = false;
  const double gamma = 1.0 / 0.6;
  Flow::RhsOverride ramp = [&](double, const DeformationField&, DeformationField& out) {
    for (auto& ch : out.c) std::fill(ch.a.begin(), ch.a.end(), cplx(gamma));
  };
  RunResult r = run_to(ball, v2(0.5, 0.0), 1.0, cfg, ramp);
  CHECK_FALSE(r.completed);
  CHECK(r.report.terminating == Terminating::degenerate);
  // margin 1 - (gamma t)^2 crosses eps_deg = 1e-3 at t = 0.6 sqrt(1 - 1e-3)
  CHECK(r.report.s_o >= 0.599);
  CHECK(r.report.s_o <= 0.601);
  // margin curve decreases monotonically toward the event
  for (size_t i = 1; i < r.report.margin_curve.size(); ++i)
    CHECK(r.report.margin_curve[i].second <= r.report.margin_curve[i - 1].second + 1e-12);
}

TEST_CASE("initial condition violating condition (A) fails immediately") {
  auto ball = ProfileRho::ball(2);
  FlowConfig cfg = coarse_config(2);
  DeformationField bad;
  bad.init(cfg.geom);
  for (auto& ch : bad.c)
    for (auto& v : ch.a) v = 1.0;
  CHECK_THROWS_AS(run_to(ball, v2(0.5, 0.0), 1.0, cfg, nullptr, &bad), Degenerate);
}

TEST_CASE("frontier: ball reports s_o = 1") {
  auto ball = ProfileRho::ball(2);
  FlowConfig cfg = coarse_config(4);
  cfg.keep_history = false;
  auto rep = find_frontier(ball, v2(0.5, 0.0), cfg);
  CHECK(rep.s_o == Approx(1.0));
  CHECK(rep.terminating == Terminating::reached_one);

  CHECK_THROWS_AS(find_frontier(ball, v2(1.2, 0.0), cfg), InvalidInput);
}

TEST_CASE("perturbed run completes with healthy monitors at desk scale") {
  auto pert = ProfileRho::perturbed(2, 0.1);
  FlowConfig cfg = coarse_config(4);
  cfg.keep_history = false;
  RunResult r = run_to(pert, v2(0.0, 0.4), 1.0, cfg);
  CHECK(r.completed);
  CHECK(r.worst.margin > 0.5);
  CHECK(r.worst.max_phi > 1e-6);  // genuinely nontrivial dynamics
  CHECK(r.worst.max_phi < 0.5);
}
