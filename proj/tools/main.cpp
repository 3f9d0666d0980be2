#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ancestral/config.hpp"
#include "ancestral/experiment.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> jobs;
  std::optional<double> T;
  std::optional<std::string> mode;
  std::optional<std::string> direction;
  std::optional<std::size_t> n_paths;
  std::optional<std::size_t> replicates;
  std::optional<std::size_t> pairs;
};

void add_global(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "Experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "Master seed (overrides the config)");
  sub->add_option("--out", o.out, "Output directory (overrides the config)");
  sub->add_option("--jobs", o.jobs, "Worker threads for replicate-level work")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  using ancestral::ErrorCode;
  CLI::App app{"Ancestral lineages in a structured population with logistic competition"};
  app.require_subcommand(1);
  Overrides o;

  auto* simulate = app.add_subcommand("simulate", "Individual-based simulation with genealogy");
  add_global(simulate, o);
  simulate->add_option("--T", o.T, "Final time");
  simulate->add_option("--mode", o.mode, "Competition mode")->check(CLI::IsMember({"nonlinear", "frozen"}));

  auto* stationary = app.add_subcommand("stationary", "Principal eigenpair (F, lambda)");
  add_global(stationary, o);

  auto* spine = app.add_subcommand("spine", "Forward spine or reversed lineage process samples");
  add_global(spine, o);
  spine->add_option("--direction", o.direction, "Sampler")->check(CLI::IsMember({"forward", "reversed"}));
  spine->add_option("--n-paths", o.n_paths, "Number of paths")->check(CLI::PositiveNumber);
  spine->add_option("--T", o.T, "Horizon");

  auto* validate = app.add_subcommand("validate", "Sampled lineages against the reversed process");
  add_global(validate, o);
  validate->add_option("--T", o.T, "Sampling time");
  validate->add_option("--replicates", o.replicates, "Number of simulations")->check(CLI::PositiveNumber);

  auto* duality = app.add_subcommand("duality", "Generator and semigroup duality residuals");
  add_global(duality, o);
  duality->add_option("--pairs", o.pairs, "Number of random test pairs")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const std::string kind = app.get_subcommands().front()->get_name();
  try {
    nlohmann::json doc = ancestral::read_json_file(o.config);
    if (!doc.is_object()) ancestral::fail(ErrorCode::ConfigInvalid, "<root>: expected an object");
    doc["kind"] = kind;
    if (o.seed) doc["seed"] = *o.seed;
    if (o.out) doc["out"] = *o.out;
    if (o.jobs) doc["jobs"] = *o.jobs;
    auto section = [&](const char* name) -> nlohmann::json& {
      if (!doc.contains(name)) doc[name] = nlohmann::json::object();
      return doc[name];
    };
    if (o.T) section(kind.c_str())["T"] = *o.T;
    if (o.mode) section("simulate")["mode"] = *o.mode;
    if (o.direction) section("spine")["direction"] = *o.direction;
    if (o.n_paths) section("spine")["n_paths"] = *o.n_paths;
    if (o.replicates) section("validate")["replicates"] = *o.replicates;
    if (o.pairs) section("duality")["pairs"] = *o.pairs;

    auto base = std::filesystem::path(o.config).parent_path();
    auto cfg = ancestral::parse_config(doc, base);
    auto manifest = ancestral::run_experiment(cfg);
    std::cout << manifest.summary.dump(2) << "\n";
    for (const auto& f : manifest.files) std::cout << f.sha256 << "  " << (cfg.out_dir / f.path).string() << "\n";
    int code = ancestral::exit_code_for(manifest);
    if (code != 0) std::cerr << kind << ": tolerances exceeded\n";
    return code;
  } catch (const ancestral::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ancestral::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
