#include "ancestral/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <type_traits>
#include <variant>

#include "ancestral/error.hpp"

namespace ancestral {

using nlohmann::json;

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Simulate: return "simulate";
    case ExperimentKind::Stationary: return "stationary";
    case ExperimentKind::Spine: return "spine";
    case ExperimentKind::Validate: return "validate";
    case ExperimentKind::Duality: return "duality";
  }
  return "unknown";
}

ExperimentKind parse_kind(const std::string& name) {
  for (auto k : {ExperimentKind::Simulate, ExperimentKind::Stationary, ExperimentKind::Spine,
                 ExperimentKind::Validate, ExperimentKind::Duality})
    if (to_string(k) == name) return k;
  fail(ErrorCode::ConfigInvalid, "kind: unknown experiment kind '" + name + "'");
}

namespace {

[[noreturn]] void invalid(const std::string& field, const std::string& what) {
  fail(ErrorCode::ConfigInvalid, field + ": " + what);
}

void only_keys(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) invalid(path.empty() ? "<root>" : path, "expected an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : obj.items())
    if (!allowed.count(k)) invalid(path.empty() ? k : path + "." + k, "unknown field");
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

double number(const json& obj, const std::string& path, const std::string& key, std::optional<double> fallback = {}) {
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    invalid(join(path, key), "missing");
  }
  const json& v = obj.at(key);
  if (!v.is_number()) invalid(join(path, key), "expected a number");
  double d = v.get<double>();
  if (!std::isfinite(d)) invalid(join(path, key), "must be finite");
  return d;
}

long long integer(const json& obj, const std::string& path, const std::string& key,
                  std::optional<long long> fallback = {}) {
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    invalid(join(path, key), "missing");
  }
  const json& v = obj.at(key);
  if (!v.is_number_integer()) invalid(join(path, key), "expected an integer");
  return v.get<long long>();
}

std::size_t count(const json& obj, const std::string& path, const std::string& key, std::size_t fallback,
                  std::size_t min = 1) {
  long long v = integer(obj, path, key, static_cast<long long>(fallback));
  if (v < static_cast<long long>(min)) invalid(join(path, key), "must be >= " + std::to_string(min));
  return static_cast<std::size_t>(v);
}

double positive(const json& obj, const std::string& path, const std::string& key, std::optional<double> fallback = {}) {
  double v = number(obj, path, key, fallback);
  if (!(v > 0.0)) invalid(join(path, key), "must be > 0");
  return v;
}

std::vector<double> number_list(const json& obj, const std::string& path, const std::string& key,
                                std::vector<double> fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_array()) invalid(join(path, key), "expected an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) invalid(join(path, key), "expected an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

Mode parse_mode(const json& obj, const std::string& path, Mode fallback) {
  if (!obj.contains("mode")) return fallback;
  const json& v = obj.at("mode");
  if (v == "nonlinear") return Mode::Nonlinear;
  if (v == "frozen") return Mode::Frozen;
  invalid(join(path, "mode"), "expected \"nonlinear\" or \"frozen\"");
}

std::optional<MinorizationCertificate> parse_certificate(const json& k, const std::string& path) {
  if (!k.contains("certificate")) return std::nullopt;
  const json& c = k.at("certificate");
  std::string p = join(path, "certificate");
  only_keys(c, p, {"kappa0", "epsilon"});
  return MinorizationCertificate{positive(c, p, "kappa0"), positive(c, p, "epsilon")};
}

MutationKernel parse_kernel(json& k, const std::filesystem::path& base_dir) {
  const std::string path = "model.kernel";
  if (!k.is_object() || !k.contains("type") || !k.at("type").is_string()) invalid(join(path, "type"), "missing");
  const std::string type = k.at("type").get<std::string>();
  if (type == "uniform") {
    only_keys(k, path, {"type", "epsilon"});
    return MutationKernel::uniform(positive(k, path, "epsilon"));
  }
  if (type == "gaussian") {
    only_keys(k, path, {"type", "sigma", "certificate"});
    return MutationKernel::gaussian(positive(k, path, "sigma"), parse_certificate(k, path));
  }
  if (type == "tabulated") {
    only_keys(k, path, {"type", "path", "certificate"});
    if (!k.contains("path") || !k.at("path").is_string()) invalid(join(path, "path"), "missing");
    std::filesystem::path file = k.at("path").get<std::string>();
    if (file.is_relative()) file = base_dir / file;
    if (!std::filesystem::exists(file)) invalid(join(path, "path"), "file not found: " + file.string());
    k["path"] = std::filesystem::absolute(file).lexically_normal().string();
    try {
      return MutationKernel::from_csv(file.string(), parse_certificate(k, path));
    } catch (const Error& e) {
      invalid(join(path, "path"), e.what());
    }
  }
  invalid(join(path, "type"), "expected uniform, gaussian or tabulated");
}

std::vector<double> coefficients(const json& m, const std::string& key) {
  auto v = number_list(m, "model", key, {});
  if (v.empty()) invalid("model." + key, "expected a nonempty array of coefficients");
  return v;
}

}  // namespace

json ExperimentConfig::resolved() const {
  json j;
  j["kind"] = std::string(to_string(kind));
  j["seed"] = seed;
  j["out"] = out_dir.string();
  j["jobs"] = jobs;
  json m;
  m["birth"] = model.birth.coefficients();
  m["death"] = model.death.coefficients();
  m["gamma"] = model.gamma;
  m["rho"] = model.rho;
  m["kernel"] = kernel_json;
  m["K"] = model.K;
  m["q"] = model.q;
  m["c"] = model.growth_bound();
  j["model"] = m;
  j["grid"] = {{"x_min", grid.x_min()}, {"x_max", grid.x_max()}, {"n", grid.size()}};
  json init = simulate.init.stationary
                  ? json("stationary")
                  : json{{"type", "gaussian"}, {"mean", simulate.init.mean}, {"sd", simulate.init.sd},
                         {"mass", simulate.init.mass}};
  j["simulate"] = {{"T", simulate.T},
                   {"mode", simulate.mode == Mode::Nonlinear ? "nonlinear" : "frozen"},
                   {"init", init},
                   {"lineages", simulate.lineages},
                   {"svg", simulate.svg},
                   {"lookahead", simulate.lookahead}};
  j["stationary"] = {{"tol", stationary.solver.tol},
                     {"dt", stationary.solver.dt},
                     {"macro_interval", stationary.solver.macro_interval},
                     {"max_iterations", stationary.solver.max_iterations},
                     {"dense_check", stationary.dense_check}};
  j["spine"] = {{"direction", spine.reversed ? "reversed" : "forward"},
                {"T", spine.T},
                {"n_paths", spine.n_paths},
                {"start", spine.start ? json(*spine.start) : json("biased")},
                {"mt_dt", spine.mt_dt}};
  j["validate"] = {{"T", validate.T},
                   {"replicates", validate.replicates},
                   {"checkpoints", validate.checkpoints},
                   {"n_spine", validate.n_spine},
                   {"tolerance", validate.tolerance},
                   {"min_survivors", validate.min_survivors},
                   {"calibration_reps", validate.calibration_reps},
                   {"mode", validate.mode == Mode::Nonlinear ? "nonlinear" : "frozen"},
                   {"trend_K", validate.trend_K}};
  j["duality"] = {{"pairs", duality.pairs}, {"t", duality.t}, {"dt", duality.dt}};
  return j;
}

namespace {

double kernel_sd(const MutationKernel& kernel) {
  return std::visit(
      [](const auto& k) -> double {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, GaussianConvolution>) {
          return k.sigma;
        } else if constexpr (std::is_same_v<T, UniformWindow>) {
          return k.epsilon / std::sqrt(3.0);
        } else {
          // Spread of the jump law from the middle of the lattice.
          const std::size_t n = k.grid.size(), i = n / 2;
          double w = 0.0, m1 = 0.0, m2 = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            double d = k.values[i * n + j], y = k.grid.x(j) - k.grid.x(i);
            w += d;
            m1 += d * y;
            m2 += d * y * y;
          }
          return std::sqrt(std::max(m2 / w - (m1 / w) * (m1 / w), 0.0));
        }
      },
      kernel.variant());
}

}  // namespace

Grid default_grid(const ModelParams& params) {
  auto roots = params.growth().real_roots();
  if (roots.size() < 2) invalid("grid", "missing, and h has no bounded zero set to derive it from");
  const double pad = 6.0 * kernel_sd(params.kernel);
  return Grid(roots.front() - pad, roots.back() + pad, 401);
}

ExperimentConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  only_keys(doc, "", {"kind", "seed", "out", "jobs", "model", "grid", "simulate", "stationary", "spine", "validate",
                      "duality"});
  ExperimentConfig cfg;
  if (doc.contains("kind")) {
    if (!doc.at("kind").is_string()) invalid("kind", "expected a string");
    cfg.kind = parse_kind(doc.at("kind").get<std::string>());
  }
  if (!doc.contains("seed")) invalid("seed", "missing (a seed is mandatory)");
  if (!doc.at("seed").is_number_unsigned()) invalid("seed", "expected a nonnegative integer");
  cfg.seed = doc.at("seed").get<std::uint64_t>();
  if (doc.contains("out")) {
    if (!doc.at("out").is_string()) invalid("out", "expected a string");
    cfg.out_dir = doc.at("out").get<std::string>();
  } else {
    cfg.out_dir = "out";
  }
  cfg.jobs = count(doc, "", "jobs", 1);

  if (!doc.contains("model")) invalid("model", "missing");
  json m = doc.at("model");
  only_keys(m, "model", {"birth", "death", "gamma", "rho", "kernel", "K", "q", "c"});
  cfg.model.birth = Polynomial(coefficients(m, "birth"));
  cfg.model.death = Polynomial(coefficients(m, "death"));
  cfg.model.gamma = number(m, "model", "gamma");
  if (cfg.model.gamma < 0.0) invalid("model.gamma", "must be >= 0");
  cfg.model.rho = number(m, "model", "rho", 0.0);
  long long K = integer(m, "model", "K");
  if (K < 1 || K > 100000000) invalid("model.K", "must be a positive integer");
  cfg.model.K = static_cast<int>(K);
  long long q = integer(m, "model", "q", 1);
  if (q < 1 || q > 16) invalid("model.q", "must be between 1 and 16");
  cfg.model.q = static_cast<int>(q);
  if (m.contains("c")) cfg.model.c = number(m, "model", "c");
  if (!m.contains("kernel")) invalid("model.kernel", "missing");
  cfg.kernel_json = m.at("kernel");
  cfg.model.kernel = parse_kernel(cfg.kernel_json, base_dir);

  if (doc.contains("grid")) {
    const json& g = doc.at("grid");
    only_keys(g, "grid", {"x_min", "x_max", "n"});
    try {
      cfg.grid = Grid(number(g, "grid", "x_min"), number(g, "grid", "x_max"), count(g, "grid", "n", 0, 3));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ConfigInvalid) throw;
      invalid("grid", e.what());
    }
  } else {
    cfg.grid = default_grid(cfg.model);
  }

  try {
    validate_growth(cfg.model, cfg.grid);
  } catch (const Error& e) {
    invalid("model.death", e.what());
  }
  if (cfg.model.c && *cfg.model.c < cfg.model.growth().max_on(cfg.grid.x_min(), cfg.grid.x_max()))
    invalid("model.c", "must bound the growth rate from above");
  try {
    validate_kernel(cfg.model.kernel, cfg.grid, cfg.model.q);
  } catch (const Error& e) {
    invalid("model.kernel", e.what());
  }

  if (doc.contains("simulate")) {
    const json& s = doc.at("simulate");
    only_keys(s, "simulate", {"T", "mode", "init", "lineages", "svg", "lookahead"});
    cfg.simulate.T = positive(s, "simulate", "T", cfg.simulate.T);
    cfg.simulate.mode = parse_mode(s, "simulate", cfg.simulate.mode);
    cfg.simulate.lineages = count(s, "simulate", "lineages", cfg.simulate.lineages, 0);
    cfg.simulate.lookahead = positive(s, "simulate", "lookahead", cfg.simulate.lookahead);
    if (s.contains("svg")) {
      if (!s.at("svg").is_boolean()) invalid("simulate.svg", "expected a boolean");
      cfg.simulate.svg = s.at("svg").get<bool>();
    }
    if (s.contains("init")) {
      const json& i = s.at("init");
      if (i == "stationary") {
        cfg.simulate.init.stationary = true;
      } else {
        only_keys(i, "simulate.init", {"type", "mean", "sd", "mass"});
        if (!i.contains("type") || i.at("type") != "gaussian")
          invalid("simulate.init.type", "expected \"gaussian\" (or init = \"stationary\")");
        cfg.simulate.init.stationary = false;
        cfg.simulate.init.mean = number(i, "simulate.init", "mean", 0.0);
        cfg.simulate.init.sd = positive(i, "simulate.init", "sd", 0.5);
        cfg.simulate.init.mass = positive(i, "simulate.init", "mass", 1.0);
      }
    }
  }

  if (doc.contains("stationary")) {
    const json& s = doc.at("stationary");
    only_keys(s, "stationary", {"tol", "dt", "macro_interval", "max_iterations", "dense_check"});
    auto& o = cfg.stationary.solver;
    o.tol = positive(s, "stationary", "tol", o.tol);
    o.dt = number(s, "stationary", "dt", o.dt);
    if (o.dt < 0.0) invalid("stationary.dt", "must be >= 0");
    o.macro_interval = positive(s, "stationary", "macro_interval", o.macro_interval);
    o.max_iterations = count(s, "stationary", "max_iterations", o.max_iterations);
    if (s.contains("dense_check")) {
      if (!s.at("dense_check").is_boolean()) invalid("stationary.dense_check", "expected a boolean");
      cfg.stationary.dense_check = s.at("dense_check").get<bool>();
    }
  }

  if (doc.contains("spine")) {
    const json& s = doc.at("spine");
    only_keys(s, "spine", {"direction", "T", "n_paths", "start", "mt_dt"});
    if (s.contains("direction")) {
      if (s.at("direction") == "forward") cfg.spine.reversed = false;
      else if (s.at("direction") == "reversed") cfg.spine.reversed = true;
      else invalid("spine.direction", "expected \"forward\" or \"reversed\"");
    }
    cfg.spine.T = positive(s, "spine", "T", cfg.spine.T);
    cfg.spine.n_paths = count(s, "spine", "n_paths", cfg.spine.n_paths);
    cfg.spine.mt_dt = positive(s, "spine", "mt_dt", cfg.spine.mt_dt);
    if (s.contains("start")) {
      if (s.at("start") == "biased") cfg.spine.start.reset();
      else cfg.spine.start = number(s, "spine", "start");
    }
    // Rejection acceptance decays like exp(-C T); longer horizons belong to the grid checks.
    if (!cfg.spine.reversed && cfg.spine.T > 5.0) invalid("spine.T", "forward rejection sampling is capped at T <= 5");
  }

  if (doc.contains("validate")) {
    const json& s = doc.at("validate");
    only_keys(s, "validate", {"T", "replicates", "checkpoints", "n_spine", "tolerance", "min_survivors",
                              "calibration_reps", "mode", "trend_K"});
    auto& v = cfg.validate;
    v.T = positive(s, "validate", "T", v.T);
    v.replicates = count(s, "validate", "replicates", v.replicates);
    v.checkpoints = number_list(s, "validate", "checkpoints", v.checkpoints);
    for (double c : v.checkpoints)
      if (c < 0.0 || c > v.T) invalid("validate.checkpoints", "must lie in [0, T]");
    v.n_spine = count(s, "validate", "n_spine", v.n_spine);
    v.tolerance = positive(s, "validate", "tolerance", v.tolerance);
    v.min_survivors = count(s, "validate", "min_survivors", v.min_survivors);
    v.calibration_reps = count(s, "validate", "calibration_reps", v.calibration_reps, 0);
    v.mode = parse_mode(s, "validate", v.mode);
    if (s.contains("trend_K")) {
      v.trend_K.clear();
      for (double k : number_list(s, "validate", "trend_K", {})) {
        if (k < 1 || k != std::floor(k)) invalid("validate.trend_K", "entries must be positive integers");
        v.trend_K.push_back(static_cast<int>(k));
      }
    }
  }

  if (doc.contains("duality")) {
    const json& s = doc.at("duality");
    only_keys(s, "duality", {"pairs", "t", "dt"});
    cfg.duality.pairs = count(s, "duality", "pairs", cfg.duality.pairs);
    cfg.duality.t = number(s, "duality", "t", cfg.duality.t);
    if (cfg.duality.t < 0.0) invalid("duality.t", "must be >= 0");
    cfg.duality.dt = number(s, "duality", "dt", cfg.duality.dt);
    if (cfg.duality.dt < 0.0) invalid("duality.dt", "must be >= 0");
  }
  return cfg;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ConfigInvalid, "config: cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ConfigInvalid, "config: " + std::string(e.what()));
  }
}

}  // namespace ancestral
