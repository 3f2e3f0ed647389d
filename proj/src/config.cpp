#include "knudsen/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include "knudsen/error.hpp"

namespace knudsen {

namespace {

using nlohmann::json;

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& at, const std::string& msg) const {
    std::ostringstream os;
    os << source_;
    if (at.IsDefined() && !at.Mark().is_null()) os << ':' << at.Mark().line + 1 << ':' << at.Mark().column + 1;
    os << ": " << msg;
    throw ConfigError(os.str());
  }

  [[noreturn]] void fail(const YAML::Mark& mark, const std::string& msg) const {
    std::ostringstream os;
    os << source_;
    if (!mark.is_null()) os << ':' << mark.line + 1 << ':' << mark.column + 1;
    os << ": " << msg;
    throw ConfigError(os.str());
  }

  void require_map(const YAML::Node& n, const std::string& path) const {
    if (!n.IsMap()) fail(n, path + ": expected a mapping");
  }

  void check_keys(const YAML::Node& n, const std::string& path, const std::set<std::string>& allowed) const {
    require_map(n, path);
    for (const auto& kv : n) {
      std::string key = kv.first.as<std::string>();
      if (!allowed.count(key)) fail(kv.first, "unknown key '" + (path.empty() ? key : path + "." + key) + "'");
    }
  }

  template <class T>
  T scalar(const YAML::Node& n, const std::string& path) const {
    if (!n.IsScalar()) fail(n, path + ": expected a scalar");
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      fail(n, path + ": cannot convert '" + n.Scalar() + "'");
    }
  }

  template <class T>
  void get(const YAML::Node& parent, const char* key, const std::string& path, T& out) const {
    YAML::Node n = parent[key];
    if (n) out = scalar<T>(n, path + "." + key);
  }

  template <class T>
  void get(const YAML::Node& parent, const char* key, const std::string& path, std::optional<T>& out) const {
    YAML::Node n = parent[key];
    if (n && !n.IsNull()) out = scalar<T>(n, path + "." + key);
  }

  std::vector<double> list(const YAML::Node& n, const std::string& path) const {
    if (n.IsScalar()) return {scalar<double>(n, path)};
    if (!n.IsSequence() || n.size() == 0) fail(n, path + ": expected a non-empty list of numbers");
    std::vector<double> v;
    for (std::size_t i = 0; i < n.size(); ++i) v.push_back(scalar<double>(n[i], path + "[" + std::to_string(i) + "]"));
    return v;
  }

  // Runs f; domain errors raised inside are re-tagged with the node position.
  template <class F>
  void checked(const YAML::Node& at, F&& f) const {
    try {
      f();
    } catch (const ConfigError&) {
      throw;
    } catch (const DomainError& e) {
      fail(at, e.what());
    }
  }

 private:
  std::string source_;
};

SurfaceMeasure read_measure(const Reader& rd, const YAML::Node& n, const std::string& path, int dim) {
  rd.check_keys(n, path, {"type", "s", "beta", "M"});
  std::string type = "cosine";
  rd.get(n, "type", path, type);
  SurfaceMeasure m;
  if (type == "cosine") {
    if (n["beta"] || n["M"]) rd.fail(n, path + ": beta/M belong to the maxwellian measure");
    double s = 1.0;
    rd.get(n, "s", path, s);
    rd.checked(n, [&] { m = SurfaceMeasure::cosine(dim, s); });
  } else if (type == "maxwellian") {
    if (n["s"]) rd.fail(n["s"], path + ".s: speed belongs to the cosine measure");
    double beta = 1.0, M = 1.0;
    rd.get(n, "beta", path, beta);
    rd.get(n, "M", path, M);
    rd.checked(n, [&] { m = SurfaceMeasure::maxwellian(dim, beta, M); });
  } else {
    rd.fail(n["type"], path + ".type: expected cosine or maxwellian, got '" + type + "'");
  }
  return m;
}

const std::set<std::string> kKernelTypes = {"semicircle", "flat_top", "middle_wall", "flat_bottom",
                                            "ms",         "mh",       "identity",    "uniform"};

KernelSpec read_kernel(const Reader& rd, const YAML::Node& n, const std::string& path,
                       const std::optional<SurfaceMeasure>& inherited, int dim) {
  rd.check_keys(n, path, {"type", "h", "alpha", "measure", "proposal", "acceptance", "base"});
  KernelSpec k;
  if (!n["type"]) rd.fail(n, path + ": missing 'type'");
  k.type = rd.scalar<std::string>(n["type"], path + ".type");
  if (!kKernelTypes.count(k.type)) rd.fail(n["type"], path + ".type: unknown kernel type '" + k.type + "'");

  bool wants_h = k.type == "flat_top" || k.type == "middle_wall" || k.type == "flat_bottom";
  if (wants_h && !n["h"]) rd.fail(n, path + ": kernel '" + k.type + "' needs h");
  if (!wants_h && n["h"]) rd.fail(n["h"], path + ".h: not a parameter of '" + k.type + "'");
  if (k.type == "ms" && !n["alpha"]) rd.fail(n, path + ": kernel 'ms' needs alpha");
  if (k.type != "ms" && n["alpha"]) rd.fail(n["alpha"], path + ".alpha: not a parameter of '" + k.type + "'");
  if (k.type != "mh" && (n["proposal"] || n["acceptance"]))
    rd.fail(n, path + ": proposal/acceptance belong to 'mh'");
  if (k.type != "flat_top" && n["base"]) rd.fail(n["base"], path + ".base: only 'flat_top' takes a base kernel");

  rd.get(n, "h", path, k.h);
  rd.get(n, "alpha", path, k.alpha);
  rd.get(n, "acceptance", path, k.acceptance);
  if (k.acceptance && !(*k.acceptance >= 0.0 && *k.acceptance <= 1.0))
    rd.fail(n["acceptance"], path + ".acceptance: must lie in [0,1]");

  if (n["measure"])
    k.measure = read_measure(rd, n["measure"], path + ".measure", dim);
  else if (inherited)
    k.measure = *inherited;
  else
    k.measure = SurfaceMeasure::cosine(dim, 1.0);

  if (k.type == "mh") {
    if (n["proposal"]) {
      k.proposal = std::make_shared<KernelSpec>(read_kernel(rd, n["proposal"], path + ".proposal", k.measure, 2));
    } else {
      k.proposal = std::make_shared<KernelSpec>();
      k.proposal->type = "uniform";
    }
  }
  if (k.type == "flat_top") {
    k.proposal = std::make_shared<KernelSpec>();
    if (n["base"])
      *k.proposal = read_kernel(rd, n["base"], path + ".base", k.measure, dim);
    else
      k.proposal->measure = k.measure;
  }
  rd.checked(n, [&] { build_kernel(k); });
  return k;
}

json measure_json(const SurfaceMeasure& m) {
  if (m.kind == MeasureKind::CosineLaw) return {{"type", "cosine"}, {"n", m.n}, {"s", m.s}};
  return {{"type", "maxwellian"}, {"n", m.n}, {"beta", m.beta}, {"M", m.M}};
}

}  // namespace

CollisionKernel build_kernel(const KernelSpec& spec) {
  const SurfaceMeasure& nu = spec.measure;
  const std::string& t = spec.type;
  auto two_d = [&] {
    if (nu.n != 2) throw DomainError("kernel '" + t + "' is 2D only; 3D channels take ms, mh or identity");
  };
  if (t == "semicircle") {
    two_d();
    return microstructure_kernel(CellGeometry::semicircle(), nu);
  }
  if (t == "middle_wall") {
    two_d();
    return microstructure_kernel(CellGeometry::middle_wall(spec.h), nu);
  }
  if (t == "flat_bottom") {
    two_d();
    return microstructure_kernel(CellGeometry::flat_bottom(spec.h), nu);
  }
  if (t == "flat_top") {
    KernelSpec base;
    if (spec.proposal) base = *spec.proposal;
    base.measure = nu;
    return flat_top_kernel(spec.h, build_kernel(base));
  }
  if (t == "ms") return ms_kernel(spec.alpha, nu);
  if (t == "identity") return identity_kernel(nu);
  if (t == "uniform") return uniform_angle_kernel();
  if (t == "mh") {
    CollisionKernel proposal = spec.proposal ? build_kernel(*spec.proposal) : uniform_angle_kernel();
    std::optional<Acceptance> acc;
    if (spec.acceptance) {
      double p = *spec.acceptance;
      acc = [p](double, double) { return p; };
    }
    return mh_kernel(proposal, nu, acc);
  }
  throw DomainError("unknown kernel type '" + t + "'");
}

json to_json(const KernelSpec& spec) {
  json j = {{"type", spec.type}, {"measure", measure_json(spec.measure)}};
  if (spec.type == "flat_top" || spec.type == "middle_wall" || spec.type == "flat_bottom") j["h"] = spec.h;
  if (spec.type == "ms") j["alpha"] = spec.alpha;
  if (spec.type == "mh") {
    j["proposal"] = spec.proposal ? to_json(*spec.proposal) : json{{"type", "uniform"}};
    if (spec.acceptance) j["acceptance"] = *spec.acceptance;
  }
  if (spec.type == "flat_top" && spec.proposal) j["base"] = to_json(*spec.proposal);
  return j;
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  Reader rd(source);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    rd.fail(e.mark, "syntax error: " + e.msg);
  }
  if (!root.IsMap()) rd.fail(root, "top level must be a mapping");
  rd.check_keys(root, "",
                {"seed", "kernel", "channel", "schedule", "truncation", "reps", "spectral", "simulate", "exit_time",
                 "correlations", "clt", "output", "workers"});

  ExperimentConfig c;
  if (!root["seed"]) rd.fail(root, "missing required key 'seed'");
  c.seed = rd.scalar<std::uint64_t>(root["seed"], "seed");

  // channel first: it fixes the dimension and may carry the speed law
  std::optional<SurfaceMeasure> channel_measure;
  if (auto ch = root["channel"]) {
    rd.check_keys(ch, "channel", {"n", "k", "r", "L", "measure"});
    rd.get(ch, "n", "channel", c.channel.n);
    rd.get(ch, "k", "channel", c.channel.k);
    rd.get(ch, "r", "channel", c.channel.r);
    rd.get(ch, "L", "channel", c.channel.L);
    if (c.channel.n < 2 || c.channel.n > 3) rd.fail(ch, "channel.n: simulation supports n in {2, 3}");
    if (ch["measure"]) channel_measure = read_measure(rd, ch["measure"], "channel.measure", c.channel.n);
  }
  if (!root["kernel"]) rd.fail(root, "missing required key 'kernel'");
  c.kernel = read_kernel(rd, root["kernel"], "kernel", channel_measure, c.channel.n);
  if (channel_measure && root["kernel"]["measure"] &&
      measure_json(*channel_measure) != measure_json(c.kernel.measure))
    rd.fail(root["kernel"]["measure"], "kernel.measure disagrees with channel.measure");
  c.channel.measure = c.kernel.measure;
  rd.checked(root["channel"] ? root["channel"] : root, [&] { c.channel.validate(); });
  if (!c.channel.simulable()) rd.fail(root["channel"], "channel: (n, k) must be (2,1), (3,1) or (3,2)");

  if (auto s = root["schedule"]) {
    rd.check_keys(s, "schedule", {"a", "t"});
    if (s["a"]) c.schedule.a_values = rd.list(s["a"], "schedule.a");
    rd.get(s, "t", "schedule", c.schedule.t);
    rd.checked(s, [&] { c.schedule.validate(); });
  }

  auto read_trunc = [&](const YAML::Node& n, const std::string& path, TruncationSpec& tr) {
    rd.check_keys(n, path, {"kind", "eta_exp", "gamma_exp", "c1"});
    if (n["kind"]) {
      std::string kind = rd.scalar<std::string>(n["kind"], path + ".kind");
      rd.checked(n["kind"], [&] { tr.kind = truncation_from_string(kind); });
    }
    rd.get(n, "eta_exp", path, tr.eta_exp);
    rd.get(n, "gamma_exp", path, tr.gamma_exp);
    rd.get(n, "c1", path, tr.c1);
    rd.checked(n, [&] { tr.validate(); });
  };
  if (auto t = root["truncation"]) read_trunc(t, "truncation", c.trunc);

  if (root["reps"]) c.reps = rd.scalar<int>(root["reps"], "reps");
  if (c.reps < 32) rd.fail(root["reps"], "reps: must be >= 32");

  if (auto s = root["spectral"]) {
    rd.check_keys(s, "spectral", {"grid_size", "mode", "grid", "a", "histogram_samples"});
    rd.get(s, "grid_size", "spectral", c.spectral.grid_size);
    if (c.spectral.grid_size < 64) rd.fail(s["grid_size"], "spectral.grid_size: must be >= 64");
    if (s["mode"]) {
      std::string m = rd.scalar<std::string>(s["mode"], "spectral.mode");
      if (m == "density") c.spectral.discretize.mode = DiscretizeMode::Density;
      else if (m == "histogram") c.spectral.discretize.mode = DiscretizeMode::Histogram;
      else rd.fail(s["mode"], "spectral.mode: expected density or histogram");
    }
    if (s["grid"]) {
      std::string g = rd.scalar<std::string>(s["grid"], "spectral.grid");
      if (g == "graded") c.spectral.discretize.grid = GridKind::Graded;
      else if (g == "quantile") c.spectral.discretize.grid = GridKind::Quantile;
      else rd.fail(s["grid"], "spectral.grid: expected graded or quantile");
    }
    rd.get(s, "histogram_samples", "spectral", c.spectral.discretize.histogram_samples);
    if (s["a"]) c.spectral.a_values = rd.list(s["a"], "spectral.a");
    for (double a : c.spectral.a_values)
      if (!(a > 1.0)) rd.fail(s["a"], "spectral.a: values must exceed 1");
  }

  if (auto s = root["simulate"]) {
    rd.check_keys(s, "simulate", {"estimator", "samples_per_rep", "lags"});
    if (s["estimator"]) {
      std::string e = rd.scalar<std::string>(s["estimator"], "simulate.estimator");
      rd.checked(s["estimator"], [&] { c.simulate.estimator = estimator_from_string(e); });
    }
    rd.get(s, "samples_per_rep", "simulate", c.simulate.samples_per_rep);
    rd.get(s, "lags", "simulate", c.simulate.lags);
    if (c.simulate.samples_per_rep < 1) rd.fail(s, "simulate.samples_per_rep: must be >= 1");
    if (c.simulate.lags < 1) rd.fail(s, "simulate.lags: must be >= 1");
  }

  if (auto s = root["exit_time"]) {
    rd.check_keys(s, "exit_time", {"L_over_r", "reps", "max_collisions", "brownian", "brownian_D", "brownian_step"});
    if (s["L_over_r"]) c.exit.L_over_r = rd.list(s["L_over_r"], "exit_time.L_over_r");
    for (double x : c.exit.L_over_r)
      if (!(x >= 10.0)) rd.fail(s["L_over_r"], "exit_time.L_over_r: values must be >= 10");
    rd.get(s, "reps", "exit_time", c.exit.reps);
    rd.get(s, "max_collisions", "exit_time", c.exit.max_collisions);
    rd.get(s, "brownian", "exit_time", c.exit.brownian);
    rd.get(s, "brownian_D", "exit_time", c.exit.brownian_D);
    rd.get(s, "brownian_step", "exit_time", c.exit.brownian_step);
    if (c.exit.reps < 1000) rd.fail(s["reps"], "exit_time.reps: must be >= 1000");
    if (c.exit.max_collisions < 1) rd.fail(s["max_collisions"], "exit_time.max_collisions: must be >= 1");
  }

  if (auto s = root["correlations"]) {
    rd.check_keys(s, "correlations", {"a", "j_max", "samples"});
    rd.get(s, "a", "correlations", c.correlations.a);
    rd.get(s, "j_max", "correlations", c.correlations.j_max);
    rd.get(s, "samples", "correlations", c.correlations.samples);
    if (!(c.correlations.a > 10.0)) rd.fail(s["a"], "correlations.a: must exceed 10");
  }

  if (auto s = root["clt"]) {
    rd.check_keys(s, "clt", {"a", "t", "reps", "truncation"});
    rd.get(s, "a", "clt", c.clt.a);
    rd.get(s, "t", "clt", c.clt.t);
    rd.get(s, "reps", "clt", c.clt.reps);
    if (s["truncation"]) read_trunc(s["truncation"], "clt.truncation", c.clt.trunc);
    if (c.clt.reps < 1000) rd.fail(s["reps"], "clt.reps: must be >= 1000");
  }

  if (auto o = root["output"]) {
    rd.check_keys(o, "output", {"dir"});
    rd.get(o, "dir", "output", c.out_dir);
  }
  if (root["workers"]) c.workers = rd.scalar<int>(root["workers"], "workers");
  if (c.workers < 0) rd.fail(root["workers"], "workers: must be >= 0");

  // worker count and output location never change results, so they stay out of the hash
  auto trunc_json = [](const TruncationSpec& t) {
    return json{{"kind", to_string(t.kind)}, {"eta_exp", t.eta_exp}, {"gamma_exp", t.gamma_exp}, {"c1", t.c1}};
  };
  json chan = {{"n", c.channel.n}, {"k", c.channel.k}, {"r", c.channel.r}};
  if (c.channel.L) chan["L"] = *c.channel.L;
  c.canonical = {
      {"seed", c.seed},
      {"kernel", to_json(c.kernel)},
      {"channel", chan},
      {"schedule", {{"a", c.schedule.a_values}, {"t", c.schedule.t}}},
      {"truncation", trunc_json(c.trunc)},
      {"reps", c.reps},
      {"spectral",
       {{"grid_size", c.spectral.grid_size},
        {"mode", c.spectral.discretize.mode == DiscretizeMode::Density ? "density" : "histogram"},
        {"grid", c.spectral.discretize.grid_kind() == GridKind::Graded ? "graded" : "quantile"},
        {"histogram_samples", c.spectral.discretize.histogram_samples},
        {"a", c.spectral.a_values}}},
      {"simulate",
       {{"estimator", to_string(c.simulate.estimator)},
        {"samples_per_rep", c.simulate.samples_per_rep},
        {"lags", c.simulate.lags}}},
      {"exit_time",
       {{"L_over_r", c.exit.L_over_r},
        {"reps", c.exit.reps},
        {"max_collisions", c.exit.max_collisions},
        {"brownian", c.exit.brownian},
        {"brownian_D", c.exit.brownian_D},
        {"brownian_step", c.exit.brownian_step}}},
      {"correlations", {{"a", c.correlations.a}, {"j_max", c.correlations.j_max}, {"samples", c.correlations.samples}}},
      {"clt", {{"a", c.clt.a}, {"t", c.clt.t}, {"reps", c.clt.reps}, {"truncation", trunc_json(c.clt.trunc)}}},
  };
  c.hash = sha256_hex(c.canonical.dump());
  c.spectral.discretize.seed = c.seed;
  return c;
}

void override_seed(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.spectral.discretize.seed = seed;
  cfg.canonical["seed"] = seed;
  cfg.hash = sha256_hex(cfg.canonical.dump());
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

}  // namespace knudsen
