#include "ancestral/ibm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "ancestral/error.hpp"

namespace ancestral {

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::Birth: return "birth";
    case EventKind::Death: return "death";
    case EventKind::Mutation: return "mutation";
  }
  return "unknown";
}

double IndividualRecord::trait_at(double t, double rho) const {
  auto it = std::upper_bound(jump_log.begin(), jump_log.end(), t,
                             [](double v, const Jump& j) { return v < j.time; });
  if (it == jump_log.begin()) return birth_trait + rho * (t - birth_time);
  --it;
  return it->value + rho * (t - it->time);
}

double next_uniform(MasterRng& rng) { return to_open_unit(rng()); }

PopulationState init_population(const ModelParams& params, const DensityField& init, std::uint64_t seed) {
  if (params.K < 1) fail(ErrorCode::InvalidArgument, "K must be >= 1");
  const double mass = init.mass();
  const auto n = static_cast<long long>(std::llround(static_cast<double>(params.K) * mass));
  if (n <= 0) fail(ErrorCode::EmptyInitial, "initial condition yields no individuals");
  CounterStream stream(hash_words(seed, {0x696e6974ULL}));
  PopulationState state{{}, seed};
  state.traits.reserve(static_cast<std::size_t>(n));
  for (long long i = 0; i < n; ++i)
    state.traits.push_back(init.inverse_cdf(stream.uniform(static_cast<std::uint64_t>(i), 0)));
  return state;
}

namespace {

// Each individual carries a Poisson point measure on time x [0, inf) with unit
// intensity. Its restriction to theta in [k M, (k + 1) M) is "band k", realised
// in fixed time blocks from a counter stream keyed by the individual, so the
// same points exist whatever bound the simulator happens to use.
struct Point {
  double time;
  double theta;  // position within the band, in (0, 1)
  double aux;    // uniform reserved for the mutation target
};

struct Band {
  std::int64_t block = -1;
  std::vector<Point> points;
  std::size_t pos = 0;
};

struct Live {
  std::size_t record;
  std::uint64_t key;
  std::uint64_t label_hash;
  double anchor_time;
  double anchor_trait;
  double window_end;
  double trait_bound;  // gamma + sup b + sup d over the window
  std::vector<Band> bands;
  std::uint64_t version = 0;
  bool alive = true;
};

struct Wake {
  double time;
  std::uint32_t slot;
  std::uint64_t version;
  bool operator>(const Wake& o) const { return time > o.time || (time == o.time && slot > o.slot); }
};

constexpr double kPointsPerBlock = 4.0;

std::size_t poisson_inverse(double mean, double u) {
  double p = std::exp(-mean), cdf = p;
  std::size_t n = 0;
  while (u > cdf && n < 10000) {
    ++n;
    p *= mean / static_cast<double>(n);
    cdf += p;
  }
  return n;
}

class Simulator {
 public:
  Simulator(const ModelParams& params, const PopulationState& init, double T, std::uint64_t seed,
            const SimulationOptions& options)
      : params_(params), opt_(options), T_(T), M_(options.band_rate), block_len_(kPointsPerBlock / options.band_rate) {
    if (!(T > 0.0)) fail(ErrorCode::InvalidArgument, "simulation horizon must be positive");
    if (params.K < 1) fail(ErrorCode::InvalidArgument, "K must be >= 1");
    if (!(options.band_rate > 0.0) || !(options.lookahead > 0.0))
      fail(ErrorCode::InvalidArgument, "band rate and lookahead must be positive");
    if (init.traits.empty()) fail(ErrorCode::EmptyInitial, "initial population is empty");
    K_ = static_cast<double>(params.K);
    key_ = options.shared_randomness.value_or(seed);
    cap_ = options.max_population;
    if (cap_ == 0) {
      double c = 1.0;
      try {
        c = params.growth_bound();
      } catch (const Error&) {
      }
      cap_ = static_cast<std::size_t>(10.0 * K_ * std::max({c, options.frozen_lambda, 1.0}));
    }
    history_ = PopulationHistory{params, options.mode, options.frozen_lambda, seed, key_, T, init.traits.size(),
                                 {}, {}, 0};
    history_.individuals.reserve(init.traits.size() * 4);
    N_ = init.traits.size();
    if (options.mode == Mode::Frozen) {
      comp_bound_ = options.frozen_lambda;
    } else {
      comp_bound_ = static_cast<double>(N_) / K_ * (1.0 + opt_.competition_margin);
    }
    for (std::size_t i = 0; i < init.traits.size(); ++i) {
      IndividualRecord rec{{static_cast<std::uint32_t>(i + 1)}, std::nullopt, 0.0, std::nullopt, init.traits[i], {}, 0};
      history_.individuals.push_back(std::move(rec));
      add_live(history_.individuals.size() - 1, hash_words(0, {i + 1}), 0.0, init.traits[i]);
    }
  }

  PopulationHistory run() {
    while (!heap_.empty()) {
      Wake w = heap_.top();
      if (w.time > T_) break;
      heap_.pop();
      Live& L = lives_[w.slot];
      if (!L.alive || L.version != w.version) continue;
      handle(w.slot, w.time);
    }
    return std::move(history_);
  }

 private:
  double competition() const {
    return opt_.mode == Mode::Frozen ? opt_.frozen_lambda : static_cast<double>(N_) / K_;
  }

  double trait(const Live& L, double t) const { return L.anchor_trait + params_.rho * (t - L.anchor_time); }

  void load(Band& band, std::uint64_t key, std::size_t k, std::int64_t block) const {
    CounterStream stream(key);
    const std::uint64_t idx = hash_combine(static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(block));
    std::size_t count = poisson_inverse(kPointsPerBlock, stream.uniform(idx, 0));
    band.points.resize(count);
    for (std::size_t j = 0; j < count; ++j) {
      band.points[j].time = (static_cast<double>(block) + stream.uniform(idx, 1 + 3 * j)) * block_len_;
      band.points[j].theta = stream.uniform(idx, 2 + 3 * j);
      band.points[j].aux = stream.uniform(idx, 3 + 3 * j);
    }
    std::sort(band.points.begin(), band.points.end(), [](const Point& a, const Point& b) { return a.time < b.time; });
    band.block = block;
    band.pos = 0;
  }

  // Position the band at its first point strictly after t.
  void seek(Band& band, std::uint64_t key, std::size_t k, double t) const {
    auto block = static_cast<std::int64_t>(std::floor(t / block_len_));
    load(band, key, k, block);
    while (band.pos < band.points.size() && band.points[band.pos].time <= t) ++band.pos;
    while (band.pos == band.points.size()) load(band, key, k, band.block + 1);
  }

  void advance(Band& band, std::uint64_t key, std::size_t k) const {
    ++band.pos;
    while (band.pos == band.points.size()) load(band, key, k, band.block + 1);
  }

  void set_bands(Live& L, double t) {
    double total = (L.trait_bound + comp_bound_) * (1.0 + 1e-12);
    auto need = static_cast<std::size_t>(std::ceil(total / M_));
    std::size_t have = L.bands.size();
    L.bands.resize(need);
    for (std::size_t k = have; k < need; ++k) seek(L.bands[k], L.key, k, t);
  }

  void renew(Live& L, double t) {
    double x = trait(L, t);
    double lo = std::min(x, x + params_.rho * opt_.lookahead), hi = std::max(x, x + params_.rho * opt_.lookahead);
    double b = std::max(0.0, params_.birth.upper_bound(lo, hi));
    double d = std::max(0.0, params_.death.upper_bound(lo, hi));
    L.trait_bound = params_.gamma + b + d;
    L.window_end = t + opt_.lookahead;
    set_bands(L, t);
  }

  void schedule(std::uint32_t slot) {
    Live& L = lives_[slot];
    double next = L.window_end;
    for (const Band& b : L.bands) next = std::min(next, b.points[b.pos].time);
    ++L.version;
    heap_.push({next, slot, L.version});
  }

  std::uint32_t add_live(std::size_t record, std::uint64_t label_hash, double t, double x) {
    std::uint32_t slot;
    if (!free_.empty()) {
      slot = free_.back();
      free_.pop_back();
      lives_[slot] = Live{};
    } else {
      slot = static_cast<std::uint32_t>(lives_.size());
      lives_.emplace_back();
    }
    Live& L = lives_[slot];
    L.record = record;
    L.label_hash = label_hash;
    L.key = hash_combine(key_, label_hash);
    L.anchor_time = t;
    L.anchor_trait = x;
    L.alive = true;
    renew(L, t);
    schedule(slot);
    return slot;
  }

  void raise_competition_bound(double t) {
    comp_bound_ = static_cast<double>(N_) / K_ * (1.0 + opt_.competition_margin);
    for (std::uint32_t s = 0; s < lives_.size(); ++s) {
      if (!lives_[s].alive) continue;
      set_bands(lives_[s], t);
      schedule(s);
    }
  }

  void handle(std::uint32_t slot, double t) {
    Live& L = lives_[slot];
    std::size_t k_min = L.bands.size();
    double t_min = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < L.bands.size(); ++k) {
      double tk = L.bands[k].points[L.bands[k].pos].time;
      if (tk < t_min) {
        t_min = tk;
        k_min = k;
      }
    }
    if (k_min == L.bands.size() || t_min > L.window_end) {
      renew(L, t);
      schedule(slot);
      return;
    }
    const Point p = L.bands[k_min].points[L.bands[k_min].pos];
    advance(L.bands[k_min], L.key, k_min);
    const double theta = (static_cast<double>(k_min) + p.theta) * M_;
    const double x = trait(L, t);
    const double g = params_.gamma, b = params_.birth(x), d = params_.death(x), c = competition();
    if (g + b + d + c > static_cast<double>(L.bands.size()) * M_ * (1.0 + 1e-9))
      fail(ErrorCode::InvalidArgument, "internal rate bound violated");
    const std::size_t rec = L.record;
    if (theta < g) {
      double y = params_.kernel.sample_target(x, p.aux);
      history_.individuals[rec].jump_log.push_back({t, y});
      history_.events.push_back({t, EventKind::Mutation, rec});
      L.anchor_time = t;
      L.anchor_trait = y;
      renew(L, t);
      schedule(slot);
    } else if (theta < g + b) {
      IndividualRecord& parent = history_.individuals[rec];
      std::uint32_t rank = ++parent.children;
      IndividualRecord child{parent.label, rec, t, std::nullopt, x, {}, 0};
      child.label.push_back(rank);
      std::uint64_t label_hash = hash_combine(L.label_hash, rank);
      history_.individuals.push_back(std::move(child));
      std::size_t child_rec = history_.individuals.size() - 1;
      history_.events.push_back({t, EventKind::Birth, child_rec});
      ++N_;
      if (N_ > cap_) fail(ErrorCode::Explosion, "population exceeded " + std::to_string(cap_));
      schedule(slot);
      add_live(child_rec, label_hash, t, x);  // may reallocate lives_
      if (opt_.mode == Mode::Nonlinear && static_cast<double>(N_) / K_ > comp_bound_) raise_competition_bound(t);
    } else if (theta < g + b + d + c) {
      history_.individuals[rec].death_time = t;
      history_.events.push_back({t, EventKind::Death, rec});
      L.alive = false;
      L.bands.clear();
      free_.push_back(slot);
      --N_;
    } else {
      ++history_.phantom_count;
      schedule(slot);
    }
  }

  const ModelParams& params_;
  SimulationOptions opt_;
  double T_;
  double M_;
  double block_len_;
  double K_ = 1.0;
  std::uint64_t key_ = 0;
  std::size_t cap_ = 0;
  std::size_t N_ = 0;
  double comp_bound_ = 0.0;
  PopulationHistory history_;
  std::vector<Live> lives_;
  std::vector<std::uint32_t> free_;
  std::priority_queue<Wake, std::vector<Wake>, std::greater<>> heap_;
};

}  // namespace

PopulationHistory simulate(const ModelParams& params, const PopulationState& init, double T, std::uint64_t seed,
                           SimulationOptions options) {
  return Simulator(params, init, T, seed, options).run();
}

std::size_t ledger_count(const PopulationHistory& history, double t) {
  long long n = static_cast<long long>(history.initial_count);
  for (const Event& e : history.events) {
    if (e.time > t) break;
    if (e.kind == EventKind::Birth) ++n;
    if (e.kind == EventKind::Death) --n;
  }
  return static_cast<std::size_t>(n);
}

std::vector<std::size_t> alive_at(const PopulationHistory& history, double t) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < history.individuals.size(); ++i)
    if (history.individuals[i].alive_at(t)) out.push_back(i);
  return out;
}

EmpiricalSample snapshot(const PopulationHistory& history, double t) {
  if (t < 0.0 || t > history.final_time) fail(ErrorCode::InvalidArgument, "snapshot time outside the run");
  EmpiricalSample s;
  const double w = 1.0 / static_cast<double>(history.params.K);
  for (std::size_t i : alive_at(history, t)) {
    s.values.push_back(history.individuals[i].trait_at(t, history.params.rho));
    s.weights.push_back(w);
  }
  return s;
}

std::optional<std::size_t> find_individual(const PopulationHistory& history,
                                           const std::vector<std::uint32_t>& label) {
  for (std::size_t i = 0; i < history.individuals.size(); ++i)
    if (history.individuals[i].label == label) return i;
  return std::nullopt;
}

TraitPath extract_lineage(const PopulationHistory& history, std::size_t index, double t) {
  if (index >= history.individuals.size()) fail(ErrorCode::UnknownId, "no individual with index " + std::to_string(index));
  if (!history.individuals[index].alive_at(t)) fail(ErrorCode::NotAlive, "individual is not alive at the requested time");
  std::vector<std::size_t> chain{index};
  while (auto p = history.individuals[chain.back()].parent) chain.push_back(*p);
  std::reverse(chain.begin(), chain.end());
  std::vector<Jump> jumps;
  for (std::size_t k = 0; k < chain.size(); ++k) {
    double until = k + 1 < chain.size() ? history.individuals[chain[k + 1]].birth_time : t;
    for (const Jump& j : history.individuals[chain[k]].jump_log) {
      if (k + 1 < chain.size() ? j.time >= until : j.time > until) break;
      jumps.push_back(j);
    }
  }
  const IndividualRecord& root = history.individuals[chain.front()];
  return TraitPath(root.birth_time, t, root.birth_trait, history.params.rho, std::move(jumps));
}

std::pair<std::size_t, TraitPath> sample_uniform_lineage_indexed(const PopulationHistory& history, double T,
                                                                 MasterRng& rng) {
  auto alive = alive_at(history, T);
  if (alive.empty()) fail(ErrorCode::Extinct, "no individual alive at the sampling time");
  auto k = static_cast<std::size_t>(next_uniform(rng) * static_cast<double>(alive.size()));
  k = std::min(k, alive.size() - 1);
  return {alive[k], extract_lineage(history, alive[k], T)};
}

TraitPath sample_uniform_lineage(const PopulationHistory& history, double T, MasterRng& rng) {
  return sample_uniform_lineage_indexed(history, T, rng).second;
}

}  // namespace ancestral
