// noisyor command-line front end: gen, sample, learn, study, replay.

#include <chrono>
#include <cstdint>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "noisyor/io.hpp"
#include "noisyor/noisyor.hpp"

#ifndef NOISYOR_VERSION
#define NOISYOR_VERSION "dev"
#endif

using namespace noisyor;

namespace {

enum Exit : int { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument: return kUsage;
    case ErrorKind::Numerical: return kNumerical;
    default: return kData;
  }
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Collects outputs as they are written, for the run manifest.
struct Outputs {
  std::vector<std::pair<std::string, std::string>> files;  // path, hash

  void write(const std::string& path, const std::string& text) {
    write_file(path, text);
    files.emplace_back(path, hex64(fnv1a(text)));
  }
};

// Turns a JSON config object into command-line tokens, skipping keys the user
// already gave as flags so that flags win.
std::vector<std::string> config_tokens(const json& cfg, const std::set<std::string>& given) {
  require(cfg.is_object(), "config file must hold a JSON object");
  std::vector<std::string> out;
  for (const auto& [key, value] : cfg.items()) {
    if (given.count(key)) continue;
    const std::string flag = "--" + key;
    if (value.is_boolean()) {
      if (value.get<bool>()) out.push_back(flag);
    } else if (value.is_array()) {
      out.push_back(flag);
      for (const auto& v : value) out.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    } else if (value.is_string()) {
      out.push_back(flag);
      out.push_back(value.get<std::string>());
    } else if (!value.is_null()) {
      out.push_back(flag);
      out.push_back(value.dump());
    }
  }
  return out;
}

// Expands `--config FILE` (anywhere after the subcommand) into flags.
// Returns the effective argument list and the config path, if any.
std::pair<std::vector<std::string>, std::string> expand_config(std::vector<std::string> args) {
  std::string path;
  std::vector<std::string> rest;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--config" && k + 1 < args.size()) {
      path = args[++k];
    } else if (args[k].rfind("--config=", 0) == 0) {
      path = args[k].substr(9);
    } else {
      rest.push_back(args[k]);
    }
  }
  if (path.empty()) return {rest, path};
  static const std::set<std::string> commands{"gen", "sample", "learn", "study"};
  auto sub = std::find_if(rest.begin(), rest.end(), [](const auto& a) { return commands.count(a); });
  require(sub != rest.end(), "--config needs one of the gen, sample, learn or study commands");
  std::set<std::string> given;
  for (const auto& a : rest) {
    if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') - 2));
  }
  auto tokens = config_tokens(parse_json(read_file(path), "config '" + path + "'"), given);
  // file values go right after the subcommand, ahead of the user's own flags
  rest.insert(sub + 1, tokens.begin(), tokens.end());
  return {rest, path};
}

std::string default_manifest_path(const std::string& primary) {
  return primary + ".run.json";
}

void write_run_manifest(const std::string& path, const std::string& command,
                        const std::vector<std::string>& args, const std::string& config_path,
                        std::uint64_t seed, const Outputs& outs, double seconds) {
  json outputs = json::array();
  for (const auto& [p, h] : outs.files) outputs.push_back({{"path", p}, {"fnv1a64", h}});
  json m{{"command", command},
         {"arguments", args},
         {"config_file", config_path.empty() ? json(nullptr) : json(config_path)},
         {"seed", seed},
         {"tool_version", NOISYOR_VERSION},
         {"outputs", outputs},
         {"wall_clock_seconds", seconds}};
  write_file(path, m.dump(2) + "\n");
}

// ------------------------------------------------------------------- gen

struct GenArgs {
  GenConfig cfg;
  std::optional<double> interaction_y;
  std::string out = "model.json";
  std::string interactive_out;
};

void add_gen(CLI::App& app, GenArgs& a) {
  app.add_option("--n", a.cfg.n_observed, "observed variables")->check(CLI::PositiveNumber);
  app.add_option("--latent", a.cfg.n_latent, "latent variables placed first in causal order");
  app.add_option("--max-parents", a.cfg.max_parents, "cap on incoming edges");
  app.add_option("--link-min", a.cfg.link_min, "smallest link magnitude");
  app.add_option("--link-max", a.cfg.link_max, "largest link magnitude");
  app.add_option("--negative-fraction", a.cfg.negative_fraction, "share of negative links");
  app.add_option("--alpha", a.cfg.dirichlet_alpha, "Dirichlet concentration for P(E)");
  app.add_option("--confounding", a.cfg.confounding,
                 "mix x in [0,1] between P(E) and the product of its marginals");
  app.add_option("--interaction-y", a.interaction_y,
                 "also write an interactive model with interaction bound y");
  app.add_option("--seed", a.cfg.seed, "random seed");
  app.add_option("--out", a.out, "model JSON path");
  app.add_option("--interactive-out", a.interactive_out,
                 "interactive model JSON path (default <out>.interactive.json)");
}

std::uint64_t run_gen(const GenArgs& a, Outputs& outs) {
  const Model m = random_model(a.cfg);
  outs.write(a.out, model_to_json(m).dump(2) + "\n");
  if (a.interaction_y) {
    const auto im = make_interactive(m, *a.interaction_y, a.cfg.seed);
    const std::string path =
        a.interactive_out.empty() ? a.out + ".interactive.json" : a.interactive_out;
    outs.write(path, interactive_to_json(im).dump(2) + "\n");
  }
  return a.cfg.seed;
}

// ---------------------------------------------------------------- sample

struct SampleArgs {
  std::string model;
  std::string experiments;
  std::size_t samples = 9000;
  std::optional<std::size_t> per_experiment;
  double intervention_prob = 0.5;
  std::size_t hide = 0;
  std::uint64_t seed = 1;
  std::string out = "data.csv";
  std::string experiments_out;
};

void add_sample(CLI::App& app, SampleArgs& a) {
  app.add_option("--model", a.model, "model JSON (plain or interactive)")->required();
  app.add_option("--experiments", a.experiments,
                 "experiment manifest JSON (default: passive + every single intervention)");
  app.add_option("--samples", a.samples, "total samples, split evenly over experiments");
  app.add_option("--per-experiment", a.per_experiment, "samples per experiment");
  app.add_option("--intervention-prob", a.intervention_prob,
                 "P(X_i = 1) for the default battery");
  app.add_option("--hide", a.hide, "hide this many leading variables of the causal order");
  app.add_option("--seed", a.seed, "random seed");
  app.add_option("--out", a.out, "dataset CSV path");
  app.add_option("--experiments-out", a.experiments_out, "write the experiment manifest used");
}

std::uint64_t run_sample(const SampleArgs& a, Outputs& outs) {
  const json mj = parse_json(read_file(a.model), "model '" + a.model + "'");
  const InteractiveModel im = interactive_from_json(mj);
  require(a.hide < im.base.size(), "--hide must leave at least one variable");
  require(a.hide == 0 || im.interactions.empty(),
          "hiding variables is only supported for plain models");
  const LatentView view(im.base, a.hide);
  const auto names = view.names();

  std::vector<PlannedExperiment> plan;
  if (!a.experiments.empty()) {
    plan = manifest_from_json(parse_json(read_file(a.experiments), "experiments"), names);
  } else {
    for (const auto& e : single_intervention_battery(names.size(), a.intervention_prob)) {
      plan.push_back({experiment_label(e, names), e, std::nullopt});
    }
  }
  std::vector<std::size_t> counts(plan.size());
  std::size_t unset = 0;
  for (const auto& p : plan) unset += p.samples ? 0 : 1;
  const auto even = split_evenly(a.samples, std::max<std::size_t>(unset, 1));
  for (std::size_t k = 0, u = 0; k < plan.size(); ++k) {
    if (plan[k].samples) {
      counts[k] = *plan[k].samples;
    } else {
      counts[k] = a.per_experiment ? *a.per_experiment : even[u++];
    }
  }
  std::vector<ExperimentSpec> exps;
  for (const auto& p : plan) exps.push_back(p.spec);
  Dataset d = a.hide ? sample_dataset(view, names, exps, counts, a.seed)
                     : sample_dataset(im, names, exps, counts, a.seed);
  for (std::size_t k = 0; k < plan.size(); ++k) d.entries[k].id = plan[k].id;
  outs.write(a.out, dataset_to_csv(d));
  if (!a.experiments_out.empty()) {
    for (std::size_t k = 0; k < plan.size(); ++k) plan[k].samples = counts[k];
    outs.write(a.experiments_out, manifest_to_json(plan, names).dump(2) + "\n");
  }
  return a.seed;
}

// ----------------------------------------------------------------- learn

struct LearnArgs {
  std::string data;
  std::string algo;
  bool map = false;
  bool resolve = false;
  double alpha = 0.01;
  double order_alpha = 0.01;
  double min_expected = 5.0;
  std::size_t restarts = 3;
  std::size_t max_iterations = 500;
  std::optional<double> pseudo_count;
  double prune = 0.05;
  std::uint64_t seed = 1;
  std::string out = "learned.json";
  std::string diagnostics;
  std::string trace;
};

void add_learn(CLI::App& app, LearnArgs& a) {
  app.add_option("--data", a.data, "dataset CSV")->required();
  app.add_option("--algo", a.algo, "learner")
      ->required()
      ->check(CLI::IsMember({"id", "ec", "em"}));
  app.add_flag("--map", a.map, "EM: maximum a posteriori instead of maximum likelihood");
  app.add_flag("--resolve-order-conflicts", a.resolve,
               "drop contradicting ordering evidence instead of failing");
  app.add_option("--alpha", a.alpha, "EC edge test level");
  app.add_option("--order-alpha", a.order_alpha, "causal-order test level");
  app.add_option("--min-expected", a.min_expected, "smallest expected cell count for a test");
  app.add_option("--restarts", a.restarts, "EM starts");
  app.add_option("--max-iterations", a.max_iterations, "EM iteration cap");
  app.add_option("--pseudo-count", a.pseudo_count, "EM MAP pseudo-count per P(E) cell");
  app.add_option("--prune-threshold", a.prune, "EM: |b| below this is no edge in the pruned model");
  app.add_option("--seed", a.seed, "random seed (EM restarts)");
  app.add_option("--out", a.out, "learned model JSON path");
  app.add_option("--diagnostics", a.diagnostics, "diagnostics JSON path (default <out>.diag.json)");
  app.add_option("--trace", a.trace, "EM log-likelihood trace CSV path (default <out>.trace.csv)");
}

std::uint64_t run_learn(const LearnArgs& a, Outputs& outs) {
  const Dataset data = dataset_from_csv(read_file(a.data));
  OrderOptions order;
  order.alpha = a.order_alpha;
  order.min_expected = a.min_expected;
  order.resolve_conflicts = a.resolve;
  EcOptions ec;
  ec.order = order;
  ec.alpha = a.alpha;
  ec.min_expected = a.min_expected;

  auto learn = [&]() -> LearnedModel {
    if (a.algo == "id") {
      IdOptions o;
      o.order = order;
      return run_id(data, o);
    }
    if (a.algo == "ec") return run_ec(data, ec);
    EmOptions o;
    o.order = order;
    o.ec = ec;
    o.map = a.map;
    o.pseudo_count = a.pseudo_count;
    o.restarts = a.restarts;
    o.max_iterations = a.max_iterations;
    o.prune_threshold = a.prune;
    o.seed = a.seed;
    return run_em(data, o);
  };
  const LearnedModel lm = learn();
  outs.write(a.out, model_to_json(lm.model).dump(2) + "\n");
  const std::string diag = a.diagnostics.empty() ? a.out + ".diag.json" : a.diagnostics;
  outs.write(diag, diagnostics_to_json(lm, data.names).dump(2) + "\n");
  if (!lm.trace.empty()) {
    outs.write(a.trace.empty() ? a.out + ".trace.csv" : a.trace, trace_to_csv(lm.trace));
  }
  return a.seed;
}

// ----------------------------------------------------------------- study

struct StudyArgs {
  std::string preset = "accuracy";
  std::string settings;
  std::optional<std::size_t> replicates;
  std::optional<std::uint64_t> seed;
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> samples;
  std::vector<std::string> algos;
  std::vector<double> x_levels;
  std::vector<double> y_levels;
  bool per_experiment = false;
  bool map = false;
  std::size_t parallel = 1;
  std::string out = "study.csv";
  std::string summary;
};

void add_study(CLI::App& app, StudyArgs& a) {
  app.add_option("--preset", a.preset, "accuracy | scalability | robustness");
  app.add_option("--settings", a.settings, "JSON file with StudyConfig keys applied on the preset");
  app.add_option("--replicates", a.replicates, "replicates per condition");
  app.add_option("--seed", a.seed, "master seed");
  app.add_option("--sizes", a.sizes, "model sizes");
  app.add_option("--samples", a.samples, "sample sizes");
  app.add_option("--algos", a.algos, "learners to run")->check(CLI::IsMember({"id", "ec", "em"}));
  app.add_option("--x", a.x_levels, "robustness confounding levels");
  app.add_option("--y", a.y_levels, "robustness interaction levels");
  app.add_flag("--per-experiment", a.per_experiment, "sample sizes are per experiment");
  app.add_flag("--map", a.map, "score EM-MAP instead of EM-ML");
  app.add_option("--parallel", a.parallel, "worker threads for replicates")
      ->check(CLI::PositiveNumber);
  app.add_option("--out", a.out, "per-replicate results CSV");
  app.add_option("--summary", a.summary, "summary JSON (default <out>.summary.json)");
}

std::uint64_t run_study_cmd(const StudyArgs& a, Outputs& outs) {
  StudyConfig cfg = study_preset(a.preset);
  if (!a.settings.empty()) {
    cfg = study_config_from_json(parse_json(read_file(a.settings), "settings"), cfg);
  }
  if (a.replicates) cfg.replicates = *a.replicates;
  if (a.seed) cfg.seed = *a.seed;
  if (!a.sizes.empty()) cfg.model_sizes = a.sizes;
  if (!a.samples.empty()) cfg.sample_sizes = a.samples;
  if (!a.algos.empty()) cfg.algorithms = a.algos;
  if (!a.x_levels.empty()) cfg.confounding_levels = a.x_levels;
  if (!a.y_levels.empty()) cfg.interaction_levels = a.y_levels;
  if (a.per_experiment) cfg.per_experiment = true;
  if (a.map) cfg.map = true;
  cfg.parallel = a.parallel;
  const StudyResults res = run_study(cfg);
  outs.write(a.out, study_rows_to_csv(res));
  outs.write(a.summary.empty() ? a.out + ".summary.json" : a.summary,
             study_summary_to_json(res).dump(2) + "\n");
  return cfg.seed;
}

int dispatch(const std::vector<std::string>& raw_args, const std::string& run_manifest_override);

// ---------------------------------------------------------------- replay

int run_replay(const std::string& path, bool verify) {
  const json m = parse_json(read_file(path), "run manifest '" + path + "'");
  std::vector<std::string> args;
  std::map<std::string, std::string> expected;
  try {
    args = m.at("arguments").get<std::vector<std::string>>();
    for (const auto& o : m.at("outputs")) {
      expected[o.at("path").get<std::string>()] = o.at("fnv1a64").get<std::string>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, std::string("malformed run manifest: ") + e.what());
  }
  require(!args.empty() && args.front() != "replay", "run manifest has no command to replay",
          ErrorKind::Io);
  // The replay writes its own manifest next to the original.
  const int code = dispatch(args, path + ".replay.json");
  if (code != kOk || !verify) return code;
  bool same = true;
  for (const auto& [p, h] : expected) {
    const std::string got = hex64(fnv1a(read_file(p)));
    if (got != h) {
      std::cerr << "replay mismatch: " << p << " (" << got << " != " << h << ")\n";
      same = false;
    }
  }
  if (same) std::cout << "replay reproduced " << expected.size() << " output(s) bit for bit\n";
  return same ? kOk : kData;
}

int dispatch(const std::vector<std::string>& raw_args, const std::string& run_manifest_override) {
  auto [args, config_path] = expand_config(raw_args);

  CLI::App app{"Noisy-OR causal models with latent confounding: generate, sample, learn, evaluate"};
  app.require_subcommand(1);
  app.set_version_flag("--version", NOISYOR_VERSION);
  std::string run_manifest;
  app.add_option("--run-manifest", run_manifest, "where to write the run manifest");

  GenArgs gen;
  SampleArgs sample;
  LearnArgs learn;
  StudyArgs study;
  std::string replay_path;
  bool verify = false;
  auto* gen_cmd = app.add_subcommand("gen", "generate a random model");
  auto* sample_cmd = app.add_subcommand("sample", "sample a dataset from a model");
  auto* learn_cmd = app.add_subcommand("learn", "learn a model from a dataset");
  auto* study_cmd = app.add_subcommand("study", "run a simulation study");
  auto* replay_cmd = app.add_subcommand("replay", "re-run the command recorded in a run manifest");
  add_gen(*gen_cmd, gen);
  add_sample(*sample_cmd, sample);
  add_learn(*learn_cmd, learn);
  add_study(*study_cmd, study);
  replay_cmd->add_option("manifest", replay_path, "run manifest JSON")->required();
  replay_cmd->add_flag("--verify", verify, "compare output hashes with the manifest");
  for (auto* sub : {gen_cmd, sample_cmd, learn_cmd, study_cmd}) {
    sub->add_option("--run-manifest", run_manifest, "where to write the run manifest");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (replay_cmd->parsed()) return run_replay(replay_path, verify);

  const auto start = std::chrono::steady_clock::now();
  Outputs outs;
  std::uint64_t seed = 0;
  std::string command, primary;
  if (gen_cmd->parsed()) {
    command = "gen";
    seed = run_gen(gen, outs);
  } else if (sample_cmd->parsed()) {
    command = "sample";
    seed = run_sample(sample, outs);
  } else if (learn_cmd->parsed()) {
    command = "learn";
    seed = run_learn(learn, outs);
  } else {
    command = "study";
    seed = run_study_cmd(study, outs);
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  // The recorded arguments exclude --run-manifest so a replay does not
  // overwrite the original manifest.
  std::vector<std::string> recorded;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--run-manifest") {
      ++k;
      continue;
    }
    if (args[k].rfind("--run-manifest=", 0) == 0) continue;
    recorded.push_back(args[k]);
  }
  std::string manifest = run_manifest_override;
  if (manifest.empty()) {
    manifest = run_manifest.empty() ? default_manifest_path(outs.files.front().first) : run_manifest;
  }
  write_run_manifest(manifest, command, recorded, config_path, seed, outs, seconds);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return dispatch(args, "");
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  }
}
