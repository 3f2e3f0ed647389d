#include "knudsen/report.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <Eigen/Core>

#include "knudsen/error.hpp"

namespace knudsen {

using nlohmann::json;

namespace {

// NaN and infinities become null so the JSON stays standard.
json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json nums(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

json extrapolation_json(const Extrapolation& f) {
  return {{"eta", num(f.eta)},
          {"uncertainty", num(f.uncertainty)},
          {"slope", num(f.slope)},
          {"residual_rms", num(f.residual_rms)},
          {"warning", f.warning}};
}

}  // namespace

std::string format_number(double x) {
  if (std::isnan(x)) return "";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

json provenance(const ExperimentConfig& cfg, const std::string& command) {
  return {{"command", command},
          {"config_hash", cfg.hash},
          {"seed", cfg.seed},
          {"version", kVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"compiler", __VERSION__}};
}

json spectral_json(const SpectralResult& r) {
  json table = json::array();
  for (std::size_t i = 0; i < r.a_values.size(); ++i) table.push_back({{"a", r.a_values[i]}, {"eta_a", num(r.eta_a[i])}});
  return {{"kernel", r.label},
          {"grid_size", r.grid_size},
          {"eigenvalues", {{"top", nums(r.top_eigenvalues)}, {"min", num(r.min_eigenvalue)}}},
          {"gap", num(r.gap)},
          {"asymmetry", num(r.asymmetry)},
          {"eta_a", table},
          {"eta", num(r.fit.eta)},
          {"uncertainty", num(r.fit.uncertainty)},
          {"fit", extrapolation_json(r.fit)}};
}

void write_simulate_csv(std::ostream& out, const DiffusivityResult& r) {
  out << "kernel,a,rep,sum_Z,sum_Z_trunc,N_collisions,exit_time,seed,estimator,eta_rep\n";
  const std::string label = csv_field(r.label), est = to_string(r.estimator);
  for (const RepRow& row : r.rows) {
    out << label << ',' << format_number(row.a) << ',' << row.rep << ',' << format_number(row.sum_z) << ','
        << format_number(row.sum_z_trunc) << ',' << row.collisions << ",," << row.seed << ',' << est << ','
        << format_number(row.eta) << '\n';
  }
}

json simulate_json(const DiffusivityResult& r) {
  json per_a = json::array();
  for (std::size_t m = 0; m < r.a_values.size(); ++m) {
    per_a.push_back({{"a", r.a_values[m]},
                     {"n_collisions", r.steps[m]},
                     {"D", num(r.D[m])},
                     {"D_se", num(r.D_se[m])},
                     {"D_ci95", {num(r.D[m] - 1.96 * r.D_se[m]), num(r.D[m] + 1.96 * r.D_se[m])}},
                     {"eta", num(r.eta[m])},
                     {"eta_se", num(r.eta_se[m])},
                     {"eta_ci95", {num(r.eta[m] - 1.96 * r.eta_se[m]), num(r.eta[m] + 1.96 * r.eta_se[m])}},
                     {"eta_raw", num(r.eta_raw[m])}});
  }
  return {{"kernel", r.label},
          {"estimator", to_string(r.estimator)},
          {"t", r.t},
          {"D0", num(r.D0)},
          {"mean_tau", num(r.mean_tau)},
          {"estimates", per_a},
          {"extrapolation", extrapolation_json(r.fit)},
          {"eta", num(r.fit.eta)},
          {"eta_uncertainty", num(r.fit.uncertainty)},
          {"D", num(r.fit.eta * r.D0)},
          {"warnings", r.warnings}};
}

void write_exit_csv(std::ostream& out, const std::string& label, const std::vector<ExitTimeResult>& runs) {
  out << "kernel,L,r,rep,exit_time,N_collisions,censored\n";
  const std::string lab = csv_field(label);
  for (const auto& run : runs) {
    for (std::size_t i = 0; i < run.times.size(); ++i) {
      bool censored = std::isnan(run.times[i]);
      out << lab << ',' << format_number(run.L) << ',' << format_number(run.r) << ',' << i << ','
          << format_number(run.times[i]) << ',' << (i < run.collisions.size() ? run.collisions[i] : 0) << ','
          << (censored ? 1 : 0) << '\n';
    }
  }
}

json exit_json(const std::string& label, const std::vector<ExitTimeResult>& runs, const std::optional<ExitFit>& fit,
               std::optional<double> D_reference) {
  json rows = json::array();
  for (const auto& run : runs) {
    json row = {{"L", run.L},
                {"r", run.r},
                {"L_over_r", run.L / run.r},
                {"mean", num(run.mean)},
                {"se", num(run.se)},
                {"ci95", {num(run.ci_lo), num(run.ci_hi)}},
                {"reps", run.reps},
                {"censored", run.censored},
                {"censored_fraction", run.censored_fraction}};
    row["tau_pred"] = run.tau_pred ? num(*run.tau_pred) : json(nullptr);
    rows.push_back(row);
  }
  json j = {{"kernel", label}, {"runs", rows}};
  if (fit) {
    j["fit"] = {{"slope", num(fit->line.slope)},
                {"slope_se", num(fit->line.se_slope)},
                {"intercept", num(fit->line.intercept)},
                {"intercept_se", num(fit->line.se_intercept)},
                {"D", num(fit->D)}};
    if (D_reference) {
      j["fit"]["D_reference"] = num(*D_reference);
      j["fit"]["relative_error"] = num(std::abs(fit->D / *D_reference - 1.0));
    }
  }
  return j;
}

void write_correlation_csv(std::ostream& out, const CorrelationProfile& p) {
  out << "a,j,rho,rho_se,product\n";
  for (std::size_t j = 0; j < p.rho.size(); ++j) {
    out << format_number(p.a) << ',' << j << ',' << format_number(p.rho[j]) << ',' << format_number(p.rho_se[j])
        << ',' << format_number(j < p.products.size() ? p.products[j] : std::nan("")) << '\n';
  }
}

json correlation_json(const CorrelationProfile& p) {
  return {{"a", p.a},
          {"rho", nums(p.rho)},
          {"rho_se", nums(p.rho_se)},
          {"products", nums(p.products)},
          {"zeta", num(p.zeta)},
          {"zeta_se", num(p.zeta_se)},
          {"eta_from_zeta", num((1.0 + p.zeta) / (1.0 - p.zeta))}};
}

void write_clt_csv(std::ostream& out, const std::string& label, const CltReport& r) {
  out << "kernel,a,t,rep,standardized\n";
  const std::string lab = csv_field(label);
  for (std::size_t i = 0; i < r.standardized.size(); ++i)
    out << lab << ',' << format_number(r.a) << ',' << format_number(r.t) << ',' << i << ','
        << format_number(r.standardized[i]) << '\n';
}

json clt_json(const CltReport& r) {
  return {{"a", r.a},
          {"t", r.t},
          {"n_collisions", r.steps},
          {"reps", r.reps},
          {"variance", num(r.variance)},
          {"ks_statistic", num(r.ks.statistic)},
          {"ks_p_value", num(r.ks.p_value)},
          {"empirical_sd", num(r.empirical_sd)},
          {"window_corr", num(r.window_corr)},
          {"window_corr_se", num(r.window_corr_se)},
          {"small_block_fraction", num(r.small_block_fraction)}};
}

void write_text_file(const std::string& path, const std::string& text) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open for writing");
  out << text;
  if (!out) throw Error(path + ": write failed");
}

void write_json_file(const std::string& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

}  // namespace knudsen
