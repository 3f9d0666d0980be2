#include "ancestral/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "ancestral/ibm.hpp"
#include "ancestral/operators.hpp"
#include "ancestral/pde.hpp"
#include "ancestral/spine.hpp"
#include "ancestral/stats.hpp"

namespace ancestral {

using nlohmann::json;

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    fail(ErrorCode::InvalidArgument, "SHA-256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string label_string(const std::vector<std::uint32_t>& label) {
  std::string out;
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (i) out.push_back('.');
    out += std::to_string(label[i]);
  }
  return out;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigInvalid:
    case ErrorCode::InvalidArgument:
    case ErrorCode::MissingCertificate:
    case ErrorCode::DoubleStochasticityViolation:
    case ErrorCode::MassLeak:
    case ErrorCode::EmptyInitial:
    case ErrorCode::UnknownId:
    case ErrorCode::NotAlive:
      return 2;
    case ErrorCode::StabilityViolation:
    case ErrorCode::Divergence:
    case ErrorCode::NonPositiveLambda:
    case ErrorCode::NoConvergence:
    case ErrorCode::ComplexDominant:
    case ErrorCode::Explosion:
      return 3;
    case ErrorCode::Extinct:
    case ErrorCode::AcceptanceTooLow:
    case ErrorCode::FloorExit:
    case ErrorCode::TooFewSurvivors:
      return 4;
  }
  return 3;
}

int exit_code_for(const Manifest& manifest) {
  if (manifest.error_code) return exit_code_for(*manifest.error_code);
  return manifest.passed ? 0 : 4;
}

json Manifest::to_json() const {
  json files_json = json::array();
  for (const auto& f : files) files_json.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  json j{{"kind", std::string(to_string(kind))}, {"files", files_json}, {"passed", passed}, {"summary", summary}};
  if (error_code) j["error"] = {{"code", std::string(to_string(*error_code))}, {"message", error}};
  return j;
}

namespace {

std::string fmt(double v) { return format_double(v); }

class Outputs {
 public:
  Outputs(std::filesystem::path dir, Manifest& manifest) : dir_(std::move(dir)), manifest_(manifest) {
    std::filesystem::create_directories(dir_);
  }

  void write(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::ConfigInvalid, "out: cannot write " + (dir_ / name).string());
    out << content;
    out.close();
    manifest_.files.push_back({name, sha256_hex(content), content.size()});
  }

  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  Manifest& manifest_;
};

// Runs body(i) for i in [0, n) on up to `jobs` threads. Results must be stored
// by index so that the output does not depend on scheduling.
template <class Body>
void parallel_for(std::size_t n, std::size_t jobs, Body&& body) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

StationaryResult stationary_pair(const ExperimentConfig& cfg) {
  return solve_stationary(cfg.model, cfg.grid, cfg.stationary.solver);
}

DensityField initial_density(const ExperimentConfig& cfg, const std::optional<StationaryResult>& stat) {
  const InitSpec& init = cfg.simulate.init;
  if (init.stationary) return stat->eigen.F;
  std::vector<double> v(cfg.grid.size());
  const double norm = init.mass / (init.sd * std::sqrt(2.0 * M_PI));
  for (std::size_t i = 0; i < v.size(); ++i) {
    double z = (cfg.grid.x(i) - init.mean) / init.sd;
    v[i] = norm * std::exp(-0.5 * z * z);
  }
  return DensityField(cfg.grid, std::move(v));
}

// Corner points of a path: start, both sides of every jump, end.
std::vector<std::pair<double, double>> path_points(const TraitPath& p) {
  std::vector<std::pair<double, double>> pts{{p.t0(), p.initial()}};
  for (const Jump& j : p.jumps()) {
    pts.emplace_back(j.time, p.left_limit(j.time));
    pts.emplace_back(j.time, j.value);
  }
  pts.emplace_back(p.t1(), p.value_at(p.t1()));
  return pts;
}

void append_path_rows(std::ostringstream& out, const std::string& id, const TraitPath& p) {
  for (const auto& [t, v] : path_points(p)) out << id << ',' << fmt(t) << ',' << fmt(v) << '\n';
}

// Uniform choice of k distinct entries, in order of selection.
std::vector<std::size_t> choose(std::vector<std::size_t> pool, std::size_t k, MasterRng& rng) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    auto j = i + std::min(pool.size() - i - 1,
                          static_cast<std::size_t>(next_uniform(rng) * static_cast<double>(pool.size() - i)));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

// Lineage fan: every individual ancestral to someone alive at T, drawn from
// birth to death (or T), with a connector to the parent at birth.
std::string lineage_svg(const PopulationHistory& h, double T) {
  const double W = 800, H = 500, pad = 50;
  std::vector<char> keep(h.individuals.size(), 0);
  for (std::size_t i : alive_at(h, T)) {
    std::optional<std::size_t> k = i;
    while (k && !keep[*k]) {
      keep[*k] = 1;
      k = h.individuals[*k].parent;
    }
  }
  std::vector<std::vector<std::pair<double, double>>> lines;
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (!keep[i]) continue;
    const IndividualRecord& r = h.individuals[i];
    double end = r.death_time ? std::min(*r.death_time, T) : T;
    std::vector<Jump> jumps;
    for (const Jump& j : r.jump_log)
      if (j.time > r.birth_time && j.time <= end) jumps.push_back(j);
    auto pts = path_points(TraitPath(r.birth_time, end, r.birth_trait, h.params.rho, jumps));
    if (r.parent) pts.insert(pts.begin(), {r.birth_time, h.individuals[*r.parent].trait_at(r.birth_time, h.params.rho)});
    for (const auto& p : pts) lo = std::min(lo, p.second), hi = std::max(hi, p.second);
    lines.push_back(std::move(pts));
  }
  if (!(hi > lo)) lo -= 1.0, hi += 1.0;
  auto sx = [&](double t) { return pad + (W - 2 * pad) * t / T; };
  auto sy = [&](double v) { return H - pad - (H - 2 * pad) * (v - lo) / (hi - lo); };
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << ' ' << H << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << pad << "\" y1=\"" << H - pad << "\" x2=\"" << W - pad << "\" y2=\"" << H - pad
      << "\" stroke=\"black\"/>\n<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\""
      << H - pad << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"14\">time</text>\n";
  out << "<text x=\"16\" y=\"" << H / 2 << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 16 "
      << H / 2 << ")\">trait</text>\n";
  out << "<text x=\"" << pad << "\" y=\"" << H - pad + 16 << "\" font-size=\"11\">0</text>\n";
  out << "<text x=\"" << W - pad << "\" y=\"" << H - pad + 16 << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(T)
      << "</text>\n";
  out << "<text x=\"" << pad - 4 << "\" y=\"" << pad << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(hi)
      << "</text>\n<text x=\"" << pad - 4 << "\" y=\"" << H - pad << "\" text-anchor=\"end\" font-size=\"11\">"
      << fmt(lo) << "</text>\n";
  out << "<g fill=\"none\" stroke=\"steelblue\" stroke-width=\"0.6\" stroke-opacity=\"0.7\">\n";
  char buf[64];
  for (const auto& line : lines) {
    out << "<polyline points=\"";
    for (std::size_t k = 0; k < line.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", k ? " " : "", sx(line[k].first), sy(line[k].second));
      out << buf;
    }
    out << "\"/>\n";
  }
  out << "</g>\n</svg>\n";
  return out.str();
}

json sample_summary(const EmpiricalSample& s) {
  std::vector<double> v = s.values;
  if (v.empty()) return json{{"n", 0}};
  std::sort(v.begin(), v.end());
  double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  auto q = [&](double p) { return v[std::min(v.size() - 1, static_cast<std::size_t>(p * static_cast<double>(v.size())))]; };
  return json{{"n", v.size()}, {"mean", mean}, {"sd", std::sqrt(var)}, {"q05", q(0.05)}, {"median", q(0.5)},
              {"q95", q(0.95)}};
}

SimulationOptions simulation_options(Mode mode, double lambda, double lookahead) {
  SimulationOptions o;
  o.mode = mode;
  o.frozen_lambda = mode == Mode::Frozen ? lambda : 0.0;
  o.lookahead = lookahead;
  return o;
}

void run_simulate(const ExperimentConfig& cfg, Outputs& out, Manifest& manifest) {
  const auto& s = cfg.simulate;
  std::optional<StationaryResult> stat;
  if (s.init.stationary || s.mode == Mode::Frozen) stat = stationary_pair(cfg);
  DensityField init = initial_density(cfg, stat);
  PopulationState state = init_population(cfg.model, init, cfg.seed);
  PopulationHistory h =
      simulate(cfg.model, state, s.T, cfg.seed, simulation_options(s.mode, stat ? stat->eigen.lambda : 0.0, s.lookahead));

  std::ostringstream ev;
  ev << "time,kind,id,parent,trait\n";
  std::size_t births = 0, deaths = 0, mutations = 0;
  for (const Event& e : h.events) {
    const IndividualRecord& r = h.individuals[e.individual];
    double trait = r.trait_at(e.time, cfg.model.rho);
    std::string parent;
    if (e.kind == EventKind::Birth) {
      ++births;
      trait = r.birth_trait;
      if (r.parent) parent = label_string(h.individuals[*r.parent].label);
    } else if (e.kind == EventKind::Death) {
      ++deaths;
    } else {
      ++mutations;
    }
    ev << fmt(e.time) << ',' << to_string(e.kind) << ',' << label_string(r.label) << ',' << parent << ','
       << fmt(trait) << '\n';
  }
  out.write("events.csv", ev.str());

  EmpiricalSample snap = snapshot(h, s.T);
  std::ostringstream sn;
  sn << "x,weight\n";
  for (std::size_t i = 0; i < snap.values.size(); ++i) sn << fmt(snap.values[i]) << ',' << fmt(snap.weights[i]) << '\n';
  out.write("snapshot_T.csv", sn.str());

  MasterRng rng(hash_words(cfg.seed, {0x6c696e65ULL}));
  auto alive = alive_at(h, s.T);
  std::ostringstream li;
  li << "lineage_id,t,value\n";
  for (std::size_t i : choose(alive, s.lineages, rng))
    append_path_rows(li, label_string(h.individuals[i].label), extract_lineage(h, i, s.T));
  out.write("lineages.csv", li.str());
  if (s.svg) out.write("lineages.svg", lineage_svg(h, s.T));

  json summary{{"T", s.T},
               {"mode", s.mode == Mode::Nonlinear ? "nonlinear" : "frozen"},
               {"initial_count", h.initial_count},
               {"final_count", alive.size()},
               {"extinct", alive.empty()},
               {"individuals", h.individuals.size()},
               {"births", births},
               {"deaths", deaths},
               {"mutations", mutations},
               {"phantom_points", h.phantom_count},
               {"final_mass", snap.total_weight()},
               {"trait", sample_summary(snap)}};
  if (stat) summary["lambda"] = stat->eigen.lambda;
  out.write_json("run.json", summary);
  manifest.summary = summary;
}

void run_stationary(const ExperimentConfig& cfg, Outputs& out, Manifest& manifest) {
  StationaryResult r = stationary_pair(cfg);
  std::ostringstream f;
  f << "x,F\n";
  for (std::size_t i = 0; i < cfg.grid.size(); ++i) f << fmt(cfg.grid.x(i)) << ',' << fmt(r.eigen.F[i]) << '\n';
  out.write("F.csv", f.str());
  MomentReport mom = moment_2q(r.eigen.F, cfg.model.q);
  json summary{{"lambda", r.eigen.lambda},
               {"residual", r.residual},
               {"iterations", r.iterations},
               {"outer_mass_fraction", mom.outer_fraction},
               {"moment_2q", mom.value},
               {"mass", r.eigen.F.mass()}};
  if (cfg.stationary.dense_check) {
    EigenPair dense = dense_eigen_oracle(cfg.model, cfg.grid);
    std::vector<double> diff(cfg.grid.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = r.eigen.F[i] - dense.F[i];
    summary["dense_lambda"] = dense.lambda;
    summary["dense_l1_difference"] = cfg.grid.l1(diff);
  }
  out.write_json("summary.json", summary);
  manifest.summary = summary;
}

void run_spine(const ExperimentConfig& cfg, Outputs& out, Manifest& manifest) {
  const auto& s = cfg.spine;
  StationaryResult stat = stationary_pair(cfg);
  SpineOptions opts;
  opts.mt_dt = s.mt_dt;
  SpineContext ctx(cfg.model, stat.eigen, s.T, opts);
  MasterRng rng(hash_words(cfg.seed, {0x7370696eULL}));
  std::vector<TraitPath> paths;
  json summary{{"direction", s.reversed ? "reversed" : "forward"}, {"T", s.T}, {"lambda", ctx.lambda()}};
  if (s.reversed) {
    ReversedBatch b = sample_reversed(s.T, ctx, rng, s.n_paths);
    summary["attempts"] = b.attempts;
    summary["floor_exits"] = b.floor_exits;
    paths = std::move(b.paths);
  } else {
    SpineInit init = s.start ? SpineInit::at(*s.start) : SpineInit::biased();
    ForwardBatch b = sample_spine_forward(init, s.T, ctx, rng, 0, s.n_paths);
    const Grid& g = ctx.grid();
    double predicted = 0.0;
    if (s.start) {
      predicted = ctx.m(s.T, *s.start);
    } else {
      auto m = ctx.m_grid(s.T);
      for (std::size_t i = 0; i < g.size(); ++i) predicted += g.dx() * m[i] * stat.eigen.F[i];
      predicted /= stat.eigen.F.mass();
    }
    predicted *= std::exp(-ctx.killing_constant() * s.T);
    summary["trials"] = b.trials;
    summary["accepted"] = b.accepted;
    summary["acceptance_rate"] = b.acceptance_rate();
    summary["acceptance_se"] = b.acceptance_se();
    summary["predicted_acceptance"] = predicted;
    summary["killing_constant"] = ctx.killing_constant();
    paths = std::move(b.paths);
  }
  json marginals = json::array();
  // Law of the biased spine at forward time u: m_{T-u} F / lambda.
  auto spine_law = [&](double s_elapsed) {
    auto m = ctx.m_grid(s_elapsed);
    std::vector<double> v(m.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = m[i] * stat.eigen.F[i];
    DensityField d(ctx.grid(), std::move(v));
    return d.scaled(1.0 / d.mass());
  };
  for (double frac : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    double t = frac * s.T;
    EmpiricalSample m = marginal(paths, t);
    json row = sample_summary(m);
    row["t"] = t;
    if (s.reversed) {
      row["w1_vs_grid"] = wasserstein1(m, spine_law(t));
    } else if (!s.start) {
      row["w1_vs_grid"] = wasserstein1(m, spine_law(s.T - t));
    } else {
      row["w1_vs_grid"] = wasserstein1(m, forward_spine_marginal(ctx, *s.start, s.T, t));
    }
    marginals.push_back(row);
  }
  summary["marginals"] = marginals;
  std::ostringstream p;
  p << "path_id,t,value\n";
  for (std::size_t i = 0; i < paths.size(); ++i) append_path_rows(p, std::to_string(i), paths[i]);
  out.write("paths.csv", p.str());
  out.write_json("stats.json", summary);
  manifest.summary = summary;
}

struct ReplicateOutcome {
  std::optional<TraitPath> reversed;
  double snapshot_w1 = NAN;
  double mass = 0.0;  // N_T / K
};

struct StudyDiagnostics {
  std::vector<double> snapshot_w1;  // surviving replicates only
  std::vector<double> masses;       // every replicate
};

LineageReport lineage_study(const ExperimentConfig& cfg, const ModelParams& params, const EigenPair& eigen,
                            const SpineContext& ctx, std::uint64_t seed, StudyDiagnostics& diag) {
  const auto& v = cfg.validate;
  MasterRng rng(hash_words(seed, {0x76616c69ULL}));
  const std::uint64_t pick_key = rng();
  std::vector<ReplicateOutcome> outcomes(v.replicates);
  DensityField Fn = eigen.F.scaled(1.0 / eigen.F.mass());
  parallel_for(v.replicates, cfg.jobs, [&](std::size_t r) {
    std::uint64_t s = replicate_seed(seed, r);
    PopulationState state = init_population(params, eigen.F, s);
    PopulationHistory h =
        simulate(params, state, v.T, s, simulation_options(v.mode, eigen.lambda, cfg.simulate.lookahead));
    const std::size_t alive = alive_at(h, v.T).size();
    outcomes[r].mass = static_cast<double>(alive) / params.K;
    if (alive == 0) return;
    outcomes[r].reversed = reverse_path(pick_lineage(h, v.T, pick_key), v.T);
    outcomes[r].snapshot_w1 = wasserstein1(snapshot(h, v.T), Fn);
  });
  std::vector<TraitPath> reversed;
  std::size_t extinct = 0;
  for (auto& o : outcomes) {
    diag.masses.push_back(o.mass);
    if (o.reversed) {
      reversed.push_back(std::move(*o.reversed));
      diag.snapshot_w1.push_back(o.snapshot_w1);
    } else {
      ++extinct;
    }
  }
  return compare_reversed_lineages(reversed, extinct, ctx, v.T, v.checkpoints, v.n_spine, rng,
                                   {v.min_survivors, v.calibration_reps});
}

double median(std::vector<double> v) {
  if (v.empty()) return NAN;
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double sample_variance(const std::vector<double>& v) {
  if (v.size() < 2) return NAN;
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    double d = v[i] - mean;
    mean += d / static_cast<double>(i + 1);
    m2 += d * (v[i] - mean);
  }
  return m2 / static_cast<double>(v.size() - 1);
}

void run_validate(const ExperimentConfig& cfg, Outputs& out, Manifest& manifest) {
  const auto& v = cfg.validate;
  StationaryResult stat = stationary_pair(cfg);
  SpineOptions opts;
  opts.mt_dt = cfg.spine.mt_dt;
  SpineContext ctx(cfg.model, stat.eigen, v.T, opts);

  StudyDiagnostics main_diag;
  LineageReport main = lineage_study(cfg, cfg.model, stat.eigen, ctx, cfg.seed, main_diag);
  bool passed = true;
  std::ostringstream cmp;
  cmp << "checkpoint,w1,ks,tolerance,self_distance\n";
  json checkpoints = json::array();
  for (const CheckpointReport& c : main.checkpoints) {
    bool ok = c.w1 <= v.tolerance && c.w1 <= c.tolerance;
    passed = passed && ok;
    cmp << fmt(c.time) << ',' << fmt(c.w1) << ',' << fmt(c.ks) << ',' << fmt(std::min(v.tolerance, c.tolerance))
        << ',' << fmt(c.self_distance) << '\n';
    checkpoints.push_back({{"time", c.time},
                           {"w1", c.w1},
                           {"ks", c.ks},
                           {"self_distance", c.self_distance},
                           {"calibrated_tolerance", c.tolerance},
                           {"absolute_tolerance", v.tolerance},
                           {"passed", ok}});
  }
  out.write("comparison.csv", cmp.str());

  std::ostringstream trend;
  // K * Var(N_T / K) across replicates should be roughly flat in K.
  trend << "K,checkpoint,w1,ks,self_distance,lineages,snapshot_w1_median,mass_variance,scaled_mass_variance\n";
  json trend_json = json::array();
  auto trend_rows = [&](int K, const LineageReport& rep, const StudyDiagnostics& d) {
    const double var = sample_variance(d.masses);
    for (const CheckpointReport& c : rep.checkpoints)
      trend << K << ',' << fmt(c.time) << ',' << fmt(c.w1) << ',' << fmt(c.ks) << ',' << fmt(c.self_distance) << ','
            << rep.lineages << ',' << fmt(median(d.snapshot_w1)) << ',' << fmt(var) << ',' << fmt(K * var) << '\n';
    trend_json.push_back({{"K", K},
                          {"lineages", rep.lineages},
                          {"snapshot_w1_median", median(d.snapshot_w1)},
                          {"mass_variance", var},
                          {"scaled_mass_variance", K * var}});
  };
  for (int K : v.trend_K) {
    if (K == cfg.model.K) {
      trend_rows(K, main, main_diag);
      continue;
    }
    ModelParams p = cfg.model;
    p.K = K;
    StudyDiagnostics d;
    LineageReport rep = lineage_study(cfg, p, stat.eigen, ctx, hash_words(cfg.seed, {static_cast<std::uint64_t>(K)}), d);
    trend_rows(K, rep, d);
  }
  out.write("trend.csv", trend.str());

  json report{{"passed", passed},
              {"K", cfg.model.K},
              {"T", v.T},
              {"replicates", v.replicates},
              {"lineages", main.lineages},
              {"extinct", main.extinct},
              {"spine_paths", main.spine_paths},
              {"floor_exits", main.floor_exits},
              {"lambda", stat.eigen.lambda},
              {"snapshot_w1_median", median(main_diag.snapshot_w1)},
              {"checkpoints", checkpoints},
              {"trend", trend_json}};
  out.write_json("report.json", report);
  manifest.summary = report;
  manifest.passed = passed;
}

// Smooth bump supported on a random sub-interval of the grid, scaled to sup 1.
std::vector<double> random_bump(const Grid& g, MasterRng& rng) {
  double a = g.x_min() + next_uniform(rng) * (g.x_max() - g.x_min());
  double b = g.x_min() + next_uniform(rng) * (g.x_max() - g.x_min());
  if (a > b) std::swap(a, b);
  double width = std::max(b - a, 4.0 * g.dx());
  double centre = 0.5 * (a + b);
  std::vector<double> f(g.size(), 0.0);
  for (std::size_t i = 0; i < f.size(); ++i) {
    double z = 2.0 * (g.x(i) - centre) / width;
    if (std::abs(z) < 1.0) f[i] = (1.0 - z * z) * (1.0 - z * z) * (0.5 + next_uniform(rng));
  }
  double mx = *std::max_element(f.begin(), f.end());
  if (mx > 0.0)
    for (double& v : f) v /= mx;
  return f;
}

void run_duality(const ExperimentConfig& cfg, Outputs& out, Manifest& manifest) {
  const auto& d = cfg.duality;
  const Grid& g = cfg.grid;
  StationaryResult stat = stationary_pair(cfg);
  const double lambda = stat.eigen.lambda;
  const double dt = d.dt > 0.0 ? d.dt : 0.5 * stability_bound(cfg.model, g, lambda);
  GeneratorMatrix L = generator_matrix(cfg.model, g, Which::L);
  GeneratorMatrix Ls = generator_matrix(cfg.model, g, Which::Lstar);
  const double c = cfg.model.growth_bound();
  MasterRng rng(hash_words(cfg.seed, {0x6475616cULL}));
  std::vector<std::vector<double>> fs, gs;
  for (std::size_t k = 0; k < d.pairs; ++k) {
    fs.push_back(random_bump(g, rng));
    gs.push_back(random_bump(g, rng));
  }
  std::vector<std::array<double, 4>> rows(d.pairs);
  parallel_for(d.pairs, cfg.jobs, [&](std::size_t k) {
    double finf = *std::max_element(fs[k].begin(), fs[k].end());
    double g1 = g.l1(gs[k]);
    rows[k][0] = std::abs(duality_residual(L, Ls, fs[k], gs[k]));
    rows[k][1] = 1e-8 * finf * g1;
    rows[k][2] = std::abs(fk_duality_residual(fs[k], gs[k], d.t, cfg.model, g, lambda, dt));
    rows[k][3] = 1e-6 * (std::exp(c * d.t) + 1.0) * finf * g1;
  });
  std::ostringstream csv;
  csv << "pair,generator_residual,generator_bound,semigroup_residual,semigroup_bound\n";
  double worst_gen = 0.0, worst_sg = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    csv << k << ',' << fmt(rows[k][0]) << ',' << fmt(rows[k][1]) << ',' << fmt(rows[k][2]) << ',' << fmt(rows[k][3])
        << '\n';
    worst_gen = std::max(worst_gen, rows[k][0] / rows[k][1]);
    worst_sg = std::max(worst_sg, rows[k][2] / rows[k][3]);
  }
  out.write("duality.csv", csv.str());
  json summary{{"pairs", d.pairs},
               {"t", d.t},
               {"dt", dt},
               {"lambda", lambda},
               {"max_generator_ratio", worst_gen},
               {"max_semigroup_ratio", worst_sg},
               {"passed", worst_gen <= 1.0 && worst_sg <= 1.0}};
  out.write_json("summary.json", summary);
  manifest.summary = summary;
  manifest.passed = worst_gen <= 1.0 && worst_sg <= 1.0;
}

}  // namespace

Manifest run_experiment(const ExperimentConfig& config) {
  Manifest manifest;
  manifest.kind = config.kind;
  Outputs out(config.out_dir, manifest);
  out.write_json("resolved_config.json", config.resolved());
  auto finish = [&] {
    std::ofstream m(out.dir() / "manifest.json", std::ios::trunc);
    m << manifest.to_json().dump(2) << "\n";
  };
  try {
    switch (config.kind) {
      case ExperimentKind::Simulate: run_simulate(config, out, manifest); break;
      case ExperimentKind::Stationary: run_stationary(config, out, manifest); break;
      case ExperimentKind::Spine: run_spine(config, out, manifest); break;
      case ExperimentKind::Validate: run_validate(config, out, manifest); break;
      case ExperimentKind::Duality: run_duality(config, out, manifest); break;
    }
  } catch (const Error& e) {
    manifest.error_code = e.code();
    manifest.error = std::string(to_string(config.kind)) + ": " + e.what();
    manifest.passed = false;
    finish();
    throw;
  }
  finish();
  return manifest;
}

}  // namespace ancestral
