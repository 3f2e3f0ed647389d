// knudsen: command-line front end for the spectral and Monte Carlo pipelines.

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "knudsen/analysis.hpp"
#include "knudsen/config.hpp"
#include "knudsen/error.hpp"
#include "knudsen/flight.hpp"
#include "knudsen/report.hpp"
#include "knudsen/spectral.hpp"
#include "knudsen/validate.hpp"

using namespace knudsen;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kValidationFail = 1, kConfigError = 2, kNumericError = 3 };

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out_dir;
  std::string profile = "quick";
  std::vector<double> h_grid;
};

ExperimentConfig load(const Flags& f) {
  if (f.config.empty()) throw ConfigError("--config is required for this subcommand");
  ExperimentConfig cfg = load_config(f.config);
  if (f.seed) override_seed(cfg, *f.seed);
  if (f.workers) cfg.workers = *f.workers;
  if (f.out_dir) cfg.out_dir = *f.out_dir;
  return cfg;
}

std::string out_path(const ExperimentConfig& cfg, const std::string& name) { return cfg.out_dir + "/" + name; }

std::string csv_string(const std::function<void(std::ostream&)>& f) {
  std::ostringstream os;
  f(os);
  return os.str();
}

// Spectral eta of the kernel for the observable kept by `trunc` at a.
double spectral_eta_at(const CollisionKernel& k, const ExperimentConfig& cfg, const TruncationSpec& trunc, double a) {
  DiscretizeOptions d = cfg.spectral.discretize;
  d.parallel = cfg.exec().parallel;
  d.workers = cfg.exec().workers;
  Decomposition dec = spectrum(discretize_kernel(k, cfg.spectral.grid_size, d));
  return eta_truncated(dec, a, [&](double aa) { return truncated_observable(dec.grid, trunc, aa, 1.0); });
}

int cmd_spectrum(const Flags& f) {
  ExperimentConfig cfg = load(f);
  CollisionKernel k = build_kernel(cfg.kernel);
  SpectralOptions so = cfg.spectral;
  so.discretize.parallel = cfg.exec().parallel;
  so.discretize.workers = cfg.exec().workers;
  SpectralResult r = run_spectral(k, so);
  json j = spectral_json(r);
  j["provenance"] = provenance(cfg, "spectrum");
  write_json_file(out_path(cfg, "spectrum.json"), j);
  std::cout << r.label << ": eta = " << r.fit.eta << " +- " << r.fit.uncertainty << ", gap = " << r.gap << '\n';
  return kOk;
}

int cmd_simulate(const Flags& f) {
  ExperimentConfig cfg = load(f);
  CollisionKernel k = build_kernel(cfg.kernel);
  DiffusivityOptions opt;
  opt.estimator = cfg.simulate.estimator;
  opt.reps = cfg.reps;
  opt.samples_per_rep = cfg.simulate.samples_per_rep;
  opt.lags = cfg.simulate.lags;
  opt.seed = cfg.seed;
  opt.exec = cfg.exec();
  DiffusivityResult r = diffusivity_mc(k, cfg.channel, cfg.schedule, cfg.trunc, opt);
  write_text_file(out_path(cfg, "simulate.csv"), csv_string([&](std::ostream& os) { write_simulate_csv(os, r); }));
  json j = simulate_json(r);
  j["provenance"] = provenance(cfg, "simulate");
  write_json_file(out_path(cfg, "simulate.json"), j);
  std::cout << r.label << ": eta = " << r.fit.eta << " +- " << r.fit.uncertainty << '\n';
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  return kOk;
}

int cmd_exit_time(const Flags& f) {
  ExperimentConfig cfg = load(f);
  CollisionKernel k = build_kernel(cfg.kernel);
  ExitTimeOptions opt;
  opt.reps = cfg.exit.reps;
  opt.max_collisions = cfg.exit.max_collisions;
  opt.seed = cfg.seed;
  opt.exec = cfg.exec();
  opt.brownian = cfg.exit.brownian;
  opt.brownian_D = cfg.exit.brownian_D;
  opt.brownian_step = cfg.exit.brownian_step;

  std::optional<double> D;
  if (opt.brownian) {
    D = opt.brownian_D;
  } else if (cfg.channel.n == 2) {
    SpectralOptions so = cfg.spectral;
    so.discretize.parallel = opt.exec.parallel;
    so.discretize.workers = opt.exec.workers;
    D = run_spectral(k, so).fit.eta * closed_form_moments(cfg.channel).D0;
  }
  std::vector<ExitTimeResult> runs;
  for (double ratio : cfg.exit.L_over_r) {
    ChannelConfig ch = cfg.channel;
    ch.L = ratio * ch.r;
    runs.push_back(mean_exit_time(k, ch, opt, D));
    const auto& r = runs.back();
    std::cout << "L/r = " << ratio << ": mean exit time " << r.mean << " +- " << r.se << ", censored "
              << r.censored_fraction << '\n';
  }
  std::optional<ExitFit> fit;
  if (runs.size() >= 2) {
    // the Brownian control scales as L^2 with no logarithm
    fit = fit_exit_times(runs, opt.brownian ? 2 : cfg.channel.codim());
    std::cout << "fitted D = " << fit->D;
    if (D) std::cout << " (reference " << *D << ")";
    std::cout << '\n';
  }
  const std::string label = opt.brownian ? "brownian" : k.label();
  write_text_file(out_path(cfg, "exit_time.csv"), csv_string([&](std::ostream& os) { write_exit_csv(os, label, runs); }));
  json j = exit_json(label, runs, fit, D);
  j["provenance"] = provenance(cfg, "exit-time");
  write_json_file(out_path(cfg, "exit_time.json"), j);
  return kOk;
}

int cmd_correlations(const Flags& f) {
  ExperimentConfig cfg = load(f);
  CollisionKernel k = build_kernel(cfg.kernel);
  CorrelationOptions opt;
  opt.j_max = cfg.correlations.j_max;
  opt.samples = cfg.correlations.samples;
  opt.seed = cfg.seed;
  opt.exec = cfg.exec();
  TruncationSpec trunc = cfg.trunc;
  trunc.kind = TruncationKind::J;
  CorrelationProfile p = correlation_profile(k, cfg.channel, cfg.correlations.a, trunc, opt);
  write_text_file(out_path(cfg, "correlations.csv"), csv_string([&](std::ostream& os) { write_correlation_csv(os, p); }));
  json j = correlation_json(p);
  j["kernel"] = k.label();
  const std::string& t = cfg.kernel.type;
  if (t == "semicircle" || t == "flat_bottom" || t == "middle_wall") {
    CellGeometry cell = t == "semicircle"    ? CellGeometry::semicircle()
                        : t == "flat_bottom" ? CellGeometry::flat_bottom(cfg.kernel.h)
                                             : CellGeometry::middle_wall(cfg.kernel.h);
    QExpectation q = shallow_q_expectation(cell, 1e-3, 1, 1000000, cfg.seed);
    j["q1_at_phi_1e-3"] = {{"value", q.value}, {"se", q.se}};
  }
  j["provenance"] = provenance(cfg, "correlations");
  write_json_file(out_path(cfg, "correlations.json"), j);
  std::cout << k.label() << ": zeta = " << p.zeta << " +- " << p.zeta_se << '\n';
  return kOk;
}

int cmd_clt(const Flags& f) {
  ExperimentConfig cfg = load(f);
  CollisionKernel k = build_kernel(cfg.kernel);
  CltOptions opt;
  opt.a = cfg.clt.a;
  opt.t = cfg.clt.t;
  opt.reps = cfg.clt.reps;
  opt.trunc = cfg.clt.trunc;
  opt.seed = cfg.seed;
  opt.exec = cfg.exec();
  double eta = spectral_eta_at(k, cfg, opt.trunc, opt.a);
  CltReport r = clt_check(k, cfg.channel, eta, opt);
  write_text_file(out_path(cfg, "clt.csv"), csv_string([&](std::ostream& os) { write_clt_csv(os, k.label(), r); }));
  json j = clt_json(r);
  j["kernel"] = k.label();
  j["eta_truncated"] = eta;
  j["provenance"] = provenance(cfg, "clt");
  write_json_file(out_path(cfg, "clt.json"), j);
  std::cout << k.label() << ": KS p = " << r.ks.p_value << ", window correlation " << r.window_corr << " +- "
            << r.window_corr_se << '\n';
  return kOk;
}

int cmd_validate(const Flags& f) {
  std::uint64_t seed = 1;
  Execution exec;
  std::string out_dir = "out";
  if (!f.config.empty()) {
    ExperimentConfig cfg = load(f);
    seed = cfg.seed;
    exec = cfg.exec();
    out_dir = cfg.out_dir;
  } else {
    if (f.seed) seed = *f.seed;
    if (f.workers) exec = *f.workers == 1 ? Execution::serial() : Execution{true, *f.workers};
    if (f.out_dir) out_dir = *f.out_dir;
  }
  Profile profile = profile_from_string(f.profile);
  ValidationReport rep = run_validation(profile, seed, exec, [](const CheckResult& c) {
    const char* tag = c.status == CheckStatus::Pass ? "PASS" : c.status == CheckStatus::Fail ? "FAIL" : "SKIP";
    std::cerr << tag << "  [" << c.suite << "] " << c.name << '\n';
  });
  std::ostringstream xml;
  write_junit(xml, rep);
  write_text_file(out_dir + "/validate-" + to_string(profile) + ".xml", xml.str());
  std::string summary = human_summary(rep);
  write_text_file(out_dir + "/validate-" + to_string(profile) + ".txt", summary);
  std::cout << summary;
  return rep.passed() ? kOk : kValidationFail;
}

int cmd_tables(const Flags& f) {
  std::vector<double> h = f.h_grid;
  if (h.empty())
    for (int i = 0; i <= 19; ++i) h.push_back(0.05 * i);
  std::string dir = f.out_dir.value_or("out");
  if (!f.config.empty()) dir = load(f).out_dir;
  auto rows = closed_form_table(h);
  std::ostringstream os;
  write_table_csv(os, rows);
  write_text_file(dir + "/tables.csv", os.str());
  std::cout << os.str();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random billiard and Knudsen diffusion experiments"};
  app.require_subcommand(1);
  Flags flags;

  auto common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", flags.config, "experiment config (YAML or JSON)");
    if (config_required) c->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "override the config seed");
    sub->add_option("--workers", flags.workers, "worker threads (1: serial reference path)")->check(CLI::NonNegativeNumber);
    sub->add_option("--out-dir", flags.out_dir, "output directory");
  };

  std::function<int(const Flags&)> handler;
  auto bind = [&](CLI::App* sub, int (*fn)(const Flags&)) { sub->callback([&handler, fn] { handler = fn; }); };

  auto* spectrum = app.add_subcommand("spectrum", "discretize the kernel and report its spectral diffusivity");
  common(spectrum, true);
  bind(spectrum, cmd_spectrum);
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo diffusivity estimates over the a schedule");
  common(simulate, true);
  bind(simulate, cmd_simulate);
  auto* exit_time = app.add_subcommand("exit-time", "mean exit times from a finite channel");
  common(exit_time, true);
  bind(exit_time, cmd_exit_time);
  auto* corr = app.add_subcommand("correlations", "shallow-cone displacement correlations");
  common(corr, true);
  bind(corr, cmd_correlations);
  auto* clt = app.add_subcommand("clt", "standardized sums and window statistics");
  common(clt, true);
  bind(clt, cmd_clt);
  auto* validate = app.add_subcommand("validate", "run the invariant suite");
  common(validate, false);
  validate->add_option("--profile", flags.profile, "quick, standard or full")
      ->check(CLI::IsMember({"quick", "standard", "full"}));
  bind(validate, cmd_validate);
  auto* tables = app.add_subcommand("tables", "closed-form (family, h, zeta, eta, D/D0) table");
  common(tables, false);
  tables->add_option("--h-grid", flags.h_grid, "h values")->delimiter(',');
  bind(tables, cmd_tables);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    return handler(flags);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DomainError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumericError;
  }
}
