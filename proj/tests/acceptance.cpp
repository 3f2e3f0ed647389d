// Acceptance run: one PASS/FAIL line per criterion. Exit status is 0 unless
// --strict is given and some criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "knudsen/analysis.hpp"
#include "knudsen/flight.hpp"
#include "knudsen/spectral.hpp"
#include "knudsen/validate.hpp"

using namespace knudsen;

namespace {

const SurfaceMeasure kNu = SurfaceMeasure::cosine(2, 1.0);

std::string fmt(double x, int prec = 5) {
  std::ostringstream os;
  os << std::setprecision(prec) << x;
  return os.str();
}

double rel(double x, double target) { return std::abs(x - target) / std::abs(target); }

struct Outcome {
  bool pass = true;
  std::string detail;

  void add(bool ok, const std::string& msg) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "[x] ") + msg;
  }
};

struct Ctx {
  std::uint64_t seed = 1;
  Execution exec;
};

CollisionKernel semicircle() { return microstructure_kernel(CellGeometry::semicircle(), kNu); }

SpectralResult spectral(const CollisionKernel& k, std::size_t grid, const Ctx& ctx) {
  SpectralOptions so;
  so.grid_size = grid;
  so.discretize.seed = ctx.seed;
  so.discretize.parallel = ctx.exec.parallel;
  so.discretize.workers = ctx.exec.workers;
  return run_spectral(k, so);
}

struct McEta {
  double eta = 0.0, se = 0.0;
  int lags = 0;
};

// lag_sum estimate over a in {1e2, ..., 1e5}, lags long enough for correlations to fall below 1e-4
McEta mc_eta(const CollisionKernel& k, double gap, long samples, std::uint64_t seed, const Ctx& ctx) {
  ChannelConfig cfg;
  cfg.measure = kNu;
  DiffusivityOptions o;
  o.reps = 64;
  o.samples_per_rep = samples;
  o.lags = std::clamp(static_cast<int>(std::ceil(std::log(1e-4) / std::log(1.0 - gap))), 10, 400);
  o.seed = seed;
  o.exec = ctx.exec;
  DiffusivityResult r = diffusivity_mc(k, cfg, ScalingSchedule{}, TruncationSpec{}, o);
  return {r.fit.eta, r.fit.uncertainty, o.lags};
}

Outcome c1(const Ctx& ctx) {
  Outcome out;
  const double eta = closed_form_eta(ClosedFamily::Semicircle).eta;
  SpectralResult sp = spectral(semicircle(), 2048, ctx);
  out.add(rel(sp.fit.eta, eta) <= 0.02, "spectral (grid 2048, a to 1e6) " + fmt(sp.fit.eta) + " vs " + fmt(eta) +
                                            ", rel " + fmt(rel(sp.fit.eta, eta), 3));
  McEta mc = mc_eta(semicircle(), sp.gap, 100000, ctx.seed + 11, ctx);
  out.add(rel(mc.eta, eta) <= 0.05, "MC (64 reps, a to 1e5) " + fmt(mc.eta) + " +- " + fmt(mc.se, 2) + ", rel " +
                                        fmt(rel(mc.eta, eta), 3));
  return out;
}

Outcome c2(const Ctx& ctx) {
  Outcome out;
  const double z = static_cast<double>(semicircle_zeta());
  ChannelConfig cfg;
  cfg.measure = kNu;
  CorrelationOptions o;
  o.samples = 1000000;
  o.seed = ctx.seed + 21;
  o.exec = ctx.exec;
  CorrelationProfile p = correlation_profile(semicircle(), cfg, 1e5, TruncationSpec{TruncationKind::J}, o);
  out.add(std::abs(p.zeta - z) <= 0.01, "correlation ratio at a=1e5 " + fmt(p.zeta) + " +- " + fmt(p.zeta_se, 2) +
                                            " vs " + fmt(z));
  QExpectation q = shallow_q_expectation(CellGeometry::semicircle(), 1e-3, 1);
  out.add(std::abs(q.value - z) <= 1e-4, "E[q_1 | phi=1e-3] " + fmt(q.value, 8) + ", |diff| " +
                                             fmt(std::abs(q.value - z), 2));
  return out;
}

Outcome c3(const Ctx& ctx) {
  Outcome out;
  CollisionKernel semi = semicircle();
  DiscretizeOptions d;
  d.seed = ctx.seed;
  d.parallel = ctx.exec.parallel;
  d.workers = ctx.exec.workers;
  Decomposition base = spectrum(discretize_kernel(semi, 1024, d));
  for (double h : {0.25, 0.5, 0.75}) {
    const double target = closed_form_eta(ClosedFamily::FlatTop, h).eta;
    CollisionKernel k = flat_top_kernel(h, semi);
    SpectralResult sp = spectral(k, 2048, ctx);
    out.add(rel(sp.fit.eta, target) <= 0.02,
            "h=" + fmt(h, 2) + " spectral " + fmt(sp.fit.eta) + " vs " + fmt(target) + " (rel " +
                fmt(rel(sp.fit.eta, target), 2) + ")");
    McEta mc = mc_eta(k, sp.gap, 100000, ctx.seed + 31 + static_cast<std::uint64_t>(100 * h), ctx);
    out.add(rel(mc.eta, target) <= 0.05, "MC " + fmt(mc.eta) + " +- " + fmt(mc.se, 2) + " (rel " +
                                             fmt(rel(mc.eta, target), 2) + ")");
    Decomposition top = spectrum(discretize_kernel(k, 1024, d));
    Eigen::VectorXd mapped = (1.0 - h) * base.eigenvalues.array() + h;
    std::sort(mapped.data(), mapped.data() + mapped.size());
    Eigen::VectorXd got = top.eigenvalues;
    std::sort(got.data(), got.data() + got.size());
    double worst = (mapped - got).cwiseAbs().maxCoeff();
    out.add(worst <= 1e-10, "affine map deviation " + fmt(worst, 2));
  }
  return out;
}

Outcome c4(const Ctx& ctx) {
  Outcome out;
  const std::vector<double> hs = {0.25, 0.5, 0.75};
  std::vector<double> mc_etas, exact;
  for (double h : hs) {
    const double target = closed_form_eta(ClosedFamily::FlatBottom, h).eta;
    CollisionKernel k = microstructure_kernel(CellGeometry::flat_bottom(h), kNu);
    SpectralResult sp = spectral(k, 2048, ctx);
    McEta mc = mc_eta(k, sp.gap, 100000, ctx.seed + 41 + static_cast<std::uint64_t>(100 * h), ctx);
    mc_etas.push_back(mc.eta);
    exact.push_back(target);
    out.add(rel(mc.eta, target) <= 0.05, "h=" + fmt(h, 2) + " MC " + fmt(mc.eta) + " +- " + fmt(mc.se, 2) + " vs " +
                                             fmt(target) + " (rel " + fmt(rel(mc.eta, target), 2) + "), spectral " +
                                             fmt(sp.fit.eta));
  }
  // The closed form dips to a minimum near h = 0.43 before rising to 1, so the
  // ordering over the grid must follow it and the trend to 1 is checked past the
  // minimum, extended by a spectral point at h = 0.9.
  bool same_order = true;
  for (std::size_t i = 1; i < hs.size(); ++i)
    same_order = same_order && (mc_etas[i] > mc_etas[i - 1]) == (exact[i] > exact[i - 1]);
  double e90 = spectral(microstructure_kernel(CellGeometry::flat_bottom(0.9), kNu), 2048, ctx).fit.eta;
  bool rising = mc_etas[1] < mc_etas[2] && mc_etas[2] < e90 && e90 < 1.0;
  out.add(same_order && rising, "trend {0.25:" + fmt(mc_etas[0], 4) + ", 0.5:" + fmt(mc_etas[1], 4) + ", 0.75:" +
                                    fmt(mc_etas[2], 4) + ", 0.9 (spectral):" + fmt(e90, 4) + "}");
  return out;
}

Outcome c5(const Ctx& ctx) {
  Outcome out;
  const double eta0 = closed_form_eta(ClosedFamily::Semicircle).eta;
  const double eta_half = closed_form_eta(ClosedFamily::MiddleWall, 0.5).eta;
  McEta m[2];
  int i = 0;
  for (double h : {0.3, 0.5}) {
    CollisionKernel k = microstructure_kernel(CellGeometry::middle_wall(h), kNu);
    SpectralResult sp = spectral(k, 1024, ctx);
    m[i++] = mc_eta(k, sp.gap, 100000, ctx.seed + 51 + static_cast<std::uint64_t>(10 * h), ctx);
  }
  out.add(std::abs(m[0].eta - eta0) <= 2.0 * m[0].se,
          "h=0.3 MC " + fmt(m[0].eta) + " +- " + fmt(m[0].se, 2) + " vs semicircle " + fmt(eta0));
  out.add(rel(m[1].eta, eta_half) <= 0.05, "h=0.5 MC " + fmt(m[1].eta) + " +- " + fmt(m[1].se, 2) + " vs " +
                                               fmt(eta_half) + " (rel " + fmt(rel(m[1].eta, eta_half), 2) + ")");
  bool apart = m[0].eta + 1.96 * m[0].se < m[1].eta - 1.96 * m[1].se;
  out.add(apart, "95% intervals [" + fmt(m[0].eta - 1.96 * m[0].se, 4) + ", " + fmt(m[0].eta + 1.96 * m[0].se, 4) +
                     "] and [" + fmt(m[1].eta - 1.96 * m[1].se, 4) + ", " + fmt(m[1].eta + 1.96 * m[1].se, 4) + "]");
  return out;
}

bool close_enough(double est, double se, double exact) {
  return std::abs(est - exact) <= std::max(0.01 * std::abs(exact), 3.0 * se);
}

Outcome c6(const Ctx& ctx) {
  Outcome out;
  std::uint64_t sid = 0;
  for (auto [n, k] : {std::pair{2, 1}, std::pair{3, 1}, std::pair{3, 2}}) {
    for (bool maxw : {false, true}) {
      ChannelConfig cfg;
      cfg.n = n;
      cfg.k = k;
      cfg.r = 0.7;
      cfg.measure = maxw ? SurfaceMeasure::maxwellian(n, 1.3, 2.0) : SurfaceMeasure::cosine(n, 1.5);
      std::string tag = "(" + std::to_string(n) + "," + std::to_string(k) + (maxw ? ") maxwellian" : ") cosine");
      MomentForms mf = closed_form_moments(cfg);
      MomentEstimate e = estimate_moments(cfg, {1e3, 1e4, 1e5, 1e6}, 10000000, ctx.seed + 61 + ++sid, ctx.exec);
      out.add(close_enough(e.E_tau, e.E_tau_se, mf.E_tau),
              tag + " E[tau] " + fmt(e.E_tau, 6) + " vs " + fmt(mf.E_tau, 6));
      if (cfg.codim() >= 2) {
        out.add(close_enough(*e.EZ2, *e.EZ2_se, *mf.EZ2), tag + " E[(Z^u)^2] " + fmt(*e.EZ2, 6) + " vs closed form " +
                                                              fmt(*mf.EZ2, 6) + " (chord geometry " +
                                                              fmt(displacement_second_moment(n, k, cfg.r), 6) + ")");
      } else {
        double four_r2 = 4.0 * cfg.r * cfg.r;
        out.add(close_enough(*e.log_slope, *e.log_slope_se, four_r2),
                tag + " ln a slope " + fmt(*e.log_slope, 6) + " vs 4r^2 " + fmt(four_r2, 6));
      }
      out.add(close_enough(e.D0, e.D0_se, mf.D0), tag + " D0 " + fmt(e.D0, 6) + " vs " + fmt(mf.D0, 6));
    }
  }
  return out;
}

Outcome c7(const Ctx& ctx) {
  Outcome out;
  CollisionKernel k = semicircle();
  ChannelConfig cfg;
  cfg.measure = kNu;
  const double D = spectral(k, 2048, ctx).fit.eta * closed_form_moments(cfg).D0;
  std::vector<ExitTimeResult> runs;
  std::string per;
  for (double ratio : {1e2, 1e3, 1e4}) {
    ChannelConfig c = cfg;
    c.L = ratio * c.r;
    ExitTimeOptions o;
    o.reps = 1000;
    o.seed = ctx.seed + 71;
    o.exec = ctx.exec;
    runs.push_back(mean_exit_time(k, c, o, D));
    const ExitTimeResult& r = runs.back();
    per += (per.empty() ? "" : ", ") + fmt(ratio, 1) + ":" + fmt(r.mean / *r.tau_pred, 4);
    if (r.censored > 0) out.add(false, "L/r=" + fmt(ratio, 1) + " censored " + std::to_string(r.censored));
  }
  ExitFit f = fit_exit_times(runs, 1);
  out.add(rel(f.D, D) <= 0.10, "regression D " + fmt(f.D) + " vs spectral D " + fmt(D) + " (rel " +
                                   fmt(rel(f.D, D), 3) + "); tau/prediction {" + per + "}");

  ChannelConfig b = cfg;
  b.L = 100.0;
  ExitTimeOptions o;
  o.reps = 4000;
  o.brownian = true;
  o.brownian_D = 1.0;
  o.seed = ctx.seed + 72;
  o.exec = ctx.exec;
  ExitTimeResult br = mean_exit_time(CollisionKernel{}, b, o, 1.0);
  out.add(rel(br.mean, *br.tau_pred) <= 0.05, "Brownian control " + fmt(br.mean) + " +- " + fmt(br.se, 2) + " vs " +
                                                  fmt(*br.tau_pred) + " (rel " + fmt(rel(br.mean, *br.tau_pred), 2) +
                                                  ")");
  return out;
}

Outcome c8(const Ctx& ctx) {
  Outcome out;
  const CollisionKernel semi = semicircle();
  const std::vector<CollisionKernel> kernels = {
      semi,
      flat_top_kernel(0.5, semi),
      microstructure_kernel(CellGeometry::middle_wall(0.3), kNu),
      microstructure_kernel(CellGeometry::flat_bottom(0.5), kNu),
      ms_kernel(0.5, kNu),
      mh_kernel(uniform_angle_kernel(), kNu),
  };
  ChannelConfig cfg;
  cfg.measure = kNu;
  DiscretizeOptions d;
  d.seed = ctx.seed;
  d.parallel = ctx.exec.parallel;
  d.workers = ctx.exec.workers;
  std::uint64_t sid = 0;
  for (const CollisionKernel& k : kernels) {
    CltOptions o;
    o.seed = ctx.seed + 81 + ++sid;
    o.exec = ctx.exec;
    Decomposition dec = spectrum(discretize_kernel(k, 1024, d));
    double eta = eta_truncated(dec, o.a, [&](double aa) { return truncated_observable(dec.grid, o.trunc, aa, 1.0); });
    CltReport r = clt_check(k, cfg, eta, o);
    bool ok = r.ks.p_value > 0.01 && std::abs(r.window_corr) <= 3.0 * r.window_corr_se;
    out.add(ok, k.label() + " KS p " + fmt(r.ks.p_value, 3) + ", window corr " + fmt(r.window_corr, 2) + " +- " +
                    fmt(r.window_corr_se, 2));
  }
  return out;
}

Outcome c9(const Ctx& ctx) {
  Outcome out;
  ValidationReport rep = run_validation(Profile::Standard, ctx.seed, ctx.exec);
  std::string fails;
  for (const auto& c : rep.checks)
    if (c.status == CheckStatus::Fail) fails += " [" + c.suite + "] " + c.name + ";";
  out.add(rep.passed(), "validate standard: " + std::to_string(rep.count(CheckStatus::Pass)) + " pass, " +
                            std::to_string(rep.count(CheckStatus::Fail)) + " fail, " +
                            std::to_string(rep.count(CheckStatus::Skip)) + " skip" + fails);
  out.add(rep.seconds < 900.0, "wall time " + fmt(rep.seconds, 4) + " s");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria 1-9"};
  Ctx ctx;
  bool strict = false;
  int workers = 0;
  std::vector<int> only;
  app.add_option("--seed", ctx.seed, "base seed");
  app.add_option("--workers", workers, "worker threads (1: serial)");
  app.add_option("--only", only, "criteria to run")->delimiter(',')->check(CLI::Range(1, 9));
  std::string report;
  app.add_flag("--strict", strict, "exit 1 when a criterion fails");
  app.add_option("--report", report, "also write the result lines to this file");
  CLI11_PARSE(app, argc, argv);
  std::ofstream rep_file;
  if (!report.empty()) rep_file.open(report);
  auto emit = [&](const std::string& line) {
    std::cout << line << std::endl;
    if (rep_file) rep_file << line << std::endl;
  };
  if (workers == 1) ctx.exec = Execution::serial();
  else ctx.exec = Execution{true, workers};

  const std::vector<std::pair<std::string, std::function<Outcome(const Ctx&)>>> criteria = {
      {"semicircle eta", c1},       {"zeta recovery", c2},        {"flat-top law", c3},
      {"flat-bottom law", c4},      {"middle-wall jump", c5},     {"moment oracles", c6},
      {"exit-time asymptotics", c7}, {"CLT statistics", c8},       {"structural invariants", c9},
  };
  std::set<int> chosen(only.begin(), only.end());
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    int id = static_cast<int>(i) + 1;
    if (!chosen.empty() && !chosen.count(id)) continue;
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failed;
    emit("C" + std::to_string(id) + ' ' + (o.pass ? "PASS" : "FAIL") + "  " + criteria[i].first + " (" + fmt(s, 4) +
         " s): " + o.detail);
  }
  emit(failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed"));
  return strict && failed ? 1 : 0;
}
