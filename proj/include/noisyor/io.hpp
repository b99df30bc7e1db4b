#pragma once

// Serialization: model JSON, dataset CSV, experiment manifests, learner
// diagnostics, EM traces and study tables. Requires nlohmann/json.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "noisyor/dataset.hpp"
#include "noisyor/generator.hpp"
#include "noisyor/learned_model.hpp"
#include "noisyor/model.hpp"
#include "noisyor/study.hpp"

namespace noisyor {

using json = nlohmann::ordered_json;

// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open '" + path + "'", ErrorKind::Io);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write '" + path + "'", ErrorKind::Io);
  out << text;
  require(out.good(), "failed writing '" + path + "'", ErrorKind::Io);
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, what + ": " + e.what());
  }
}

// ---------------------------------------------------------------- models

/// Canonical file layout: "order" lists names in causal order and the
/// disturbance is indexed with the first variable in causal order as the most
/// significant bit. "variables" records the index order so a round trip
/// keeps variable indices.
inline json model_to_json(const Model& m) {
  const std::size_t n = m.size();
  json j;
  j["n"] = n;
  json order = json::array();
  for (auto v : m.order()) order.push_back(m.names()[v]);
  j["order"] = order;
  j["variables"] = m.names();
  json links = json::array();
  // links listed by causal position of (to, from)
  std::vector<std::pair<std::pair<std::size_t, std::size_t>, double>> sorted(m.links().begin(),
                                                                             m.links().end());
  std::sort(sorted.begin(), sorted.end(), [&](const auto& a, const auto& b) {
    return std::make_pair(m.position(a.first.second), m.position(a.first.first)) <
           std::make_pair(m.position(b.first.second), m.position(b.first.first));
  });
  for (const auto& [key, b] : sorted) {
    links.push_back({{"from", m.names()[key.first]}, {"to", m.names()[key.second]}, {"b", b}});
  }
  j["links"] = links;
  const std::size_t size = config_count(n);
  std::vector<double> canon(size);
  for (Config x = 0; x < size; ++x) {
    Config c = 0;
    for (std::size_t v = 0; v < n; ++v) {
      if (bit_of(x, n, v)) c |= var_mask(n, m.position(v));
    }
    canon[c] = m.disturbance()[x];
  }
  j["disturbance"] = canon;
  return j;
}

inline Model model_from_json(const json& j) {
  try {
    const std::size_t n = j.at("n").get<std::size_t>();
    require(n >= 1 && n <= kMaxVariables, "model size out of range", ErrorKind::Io);
    const auto order_names = j.at("order").get<std::vector<std::string>>();
    require(order_names.size() == n, "\"order\" must list n variables", ErrorKind::Io);
    const auto names =
        j.contains("variables") ? j.at("variables").get<std::vector<std::string>>() : order_names;
    require(names.size() == n, "\"variables\" must list n variables", ErrorKind::Io);
    auto index = [&](const std::string& name) {
      auto it = std::find(names.begin(), names.end(), name);
      require(it != names.end(), "unknown variable '" + name + "'", ErrorKind::Io);
      return static_cast<std::size_t>(it - names.begin());
    };
    std::vector<std::size_t> order;
    for (const auto& s : order_names) order.push_back(index(s));
    LinkMap links;
    for (const auto& l : j.at("links")) {
      links[{index(l.at("from").get<std::string>()), index(l.at("to").get<std::string>())}] =
          l.at("b").get<double>();
    }
    const auto canon = j.at("disturbance").get<std::vector<double>>();
    require(canon.size() == config_count(n), "disturbance must have 2^n entries", ErrorKind::Io);
    std::vector<double> dist(canon.size());
    for (Config x = 0; x < canon.size(); ++x) {
      Config c = 0;
      for (std::size_t pos = 0; pos < n; ++pos) {
        if (bit_of(x, n, order[pos])) c |= var_mask(n, pos);
      }
      dist[x] = canon[c];
    }
    return Model(names, order, std::move(links), std::move(dist));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, std::string("malformed model JSON: ") + e.what());
  }
}

inline json interactive_to_json(const InteractiveModel& im) {
  json j = model_to_json(im.base);
  j["y"] = im.y;
  json arr = json::array();
  const auto& names = im.base.names();
  for (const auto& it : im.interactions) {
    arr.push_back({{"node", names[it.node]},
                   {"a", names[it.a]},
                   {"b", names[it.b]},
                   {"probs", it.probs}});
  }
  j["interactions"] = arr;
  return j;
}

inline InteractiveModel interactive_from_json(const json& j) {
  InteractiveModel im{model_from_json(j), {}, 0.0};
  try {
    im.y = j.value("y", 0.0);
    if (j.contains("interactions")) {
      for (const auto& it : j.at("interactions")) {
        Interaction x{im.base.index_of(it.at("node").get<std::string>()),
                      im.base.index_of(it.at("a").get<std::string>()),
                      im.base.index_of(it.at("b").get<std::string>()),
                      it.at("probs").get<std::array<double, 4>>()};
        for (double p : x.probs) {
          require(p >= 0.0 && p <= 1.0, "interaction probability outside [0, 1]", ErrorKind::Io);
        }
        im.interactions.push_back(x);
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, std::string("malformed interactive model JSON: ") + e.what());
  }
  return im;
}

// ----------------------------------------------------------- experiments

inline std::string intervention_text(const ExperimentSpec& exp,
                                     const std::vector<std::string>& names) {
  std::string s;
  for (const auto& [v, p] : exp.probabilities()) {
    if (!s.empty()) s += ';';
    s += names.at(v) + "@" + format_double(p);
  }
  return s;
}

inline ExperimentSpec parse_intervention_text(const std::string& text,
                                              const std::vector<std::string>& names) {
  std::map<std::size_t, double> probs;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.empty()) continue;
    const auto at = item.find('@');
    const std::string name = item.substr(0, at);
    auto it = std::find(names.begin(), names.end(), name);
    require(it != names.end(), "unknown intervened variable '" + name + "'", ErrorKind::Io);
    double p = 0.5;
    if (at != std::string::npos) {
      try {
        p = std::stod(item.substr(at + 1));
      } catch (const std::exception&) {
        throw Error(ErrorKind::Io, "bad intervention probability in '" + item + "'");
      }
    }
    probs[static_cast<std::size_t>(it - names.begin())] = p;
  }
  ExperimentSpec exp(std::move(probs));
  exp.check(names.size());
  return exp;
}

struct PlannedExperiment {
  std::string id;
  ExperimentSpec spec;
  std::optional<std::size_t> samples;
};

/// {"experiments": [{"id": ..., "intervene": {"X1": 0.5}, "samples": 1000}]}
inline json manifest_to_json(const std::vector<PlannedExperiment>& exps,
                             const std::vector<std::string>& names) {
  json arr = json::array();
  for (const auto& e : exps) {
    json item;
    item["id"] = e.id;
    json iv = json::object();
    for (const auto& [v, p] : e.spec.probabilities()) iv[names.at(v)] = p;
    item["intervene"] = iv;
    if (e.samples) item["samples"] = *e.samples;
    arr.push_back(item);
  }
  return json{{"experiments", arr}};
}

inline std::vector<PlannedExperiment> manifest_from_json(const json& j,
                                                         const std::vector<std::string>& names) {
  std::vector<PlannedExperiment> out;
  try {
    for (const auto& item : j.at("experiments")) {
      std::map<std::size_t, double> probs;
      if (item.contains("intervene")) {
        for (const auto& [name, p] : item.at("intervene").items()) {
          auto it = std::find(names.begin(), names.end(), name);
          require(it != names.end(), "unknown intervened variable '" + name + "'",
                  ErrorKind::InvalidArgument);
          probs[static_cast<std::size_t>(it - names.begin())] = p.get<double>();
        }
      }
      ExperimentSpec spec(std::move(probs));
      spec.check(names.size());
      PlannedExperiment e{item.value("id", experiment_label(spec, names)), spec, std::nullopt};
      if (item.contains("samples")) e.samples = item.at("samples").get<std::size_t>();
      out.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, std::string("malformed experiment manifest: ") + e.what());
  }
  require(!out.empty(), "experiment manifest lists no experiments", ErrorKind::InvalidArgument);
  return out;
}

// ---------------------------------------------------------------- datasets

/// experiment_id,intervened_vars,<names...>,count with one row per observed
/// configuration (zero counts omitted).
inline std::string dataset_to_csv(const Dataset& d) {
  d.check();
  const std::size_t n = d.size();
  std::string out = "experiment_id,intervened_vars";
  for (const auto& name : d.names) out += "," + name;
  out += ",count\n";
  for (const auto& e : d.entries) {
    const std::string prefix = e.id + "," + intervention_text(e.experiment, d.names);
    for (Config x = 0; x < e.counts.size(); ++x) {
      if (e.counts[x] == 0.0) continue;
      out += prefix;
      for (std::size_t v = 0; v < n; ++v) out += bit_of(x, n, v) ? ",1" : ",0";
      out += "," + format_double(e.counts[x]) + "\n";
    }
  }
  return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto a = cell.find_first_not_of(" \t\r");
    const auto b = cell.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

inline Dataset dataset_from_csv(const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  require(static_cast<bool>(std::getline(ss, line)), "dataset CSV is empty", ErrorKind::Io);
  const auto header = detail::split_csv_line(line);
  require(header.size() >= 4 && header[0] == "experiment_id" && header[1] == "intervened_vars" &&
              header.back() == "count",
          "dataset CSV header must be experiment_id,intervened_vars,<names...>,count",
          ErrorKind::Io);
  Dataset d;
  d.names.assign(header.begin() + 2, header.end() - 1);
  const std::size_t n = d.names.size();
  require(n <= kMaxVariables, "too many variables in dataset", ErrorKind::Io);
  std::map<std::string, std::size_t> by_id;
  std::size_t line_no = 1;
  while (std::getline(ss, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line);
    const std::string where = "dataset CSV line " + std::to_string(line_no);
    require(cells.size() == n + 3, where + ": expected " + std::to_string(n + 3) + " fields",
            ErrorKind::Io);
    const auto exp = parse_intervention_text(cells[1], d.names);
    auto it = by_id.find(cells[0]);
    if (it == by_id.end()) {
      it = by_id.emplace(cells[0], d.entries.size()).first;
      d.entries.push_back({cells[0], exp, std::vector<double>(config_count(n), 0.0)});
    }
    auto& entry = d.entries[it->second];
    require(entry.experiment.probabilities() == exp.probabilities(),
            where + ": experiment '" + cells[0] + "' changes its interventions", ErrorKind::Io);
    Config x = 0;
    for (std::size_t v = 0; v < n; ++v) {
      const auto& c = cells[2 + v];
      require(c == "0" || c == "1", where + ": variable values must be 0 or 1", ErrorKind::Io);
      if (c == "1") x |= var_mask(n, v);
    }
    double count = 0.0;
    try {
      count = std::stod(cells.back());
    } catch (const std::exception&) {
      throw Error(ErrorKind::Io, where + ": bad count");
    }
    require(count >= 0.0 && std::isfinite(count), where + ": counts must be nonnegative",
            ErrorKind::Io);
    entry.counts[x] += count;
  }
  require(!d.entries.empty(), "dataset CSV has no rows", ErrorKind::InconsistentData);
  d.check();
  return d;
}

// ----------------------------------------------------- learner diagnostics

inline json diagnostics_to_json(const LearnedModel& lm, const std::vector<std::string>& names) {
  auto pair_json = [&](std::size_t a, std::size_t b) { return json::array({names[a], names[b]}); };
  json j;
  j["algorithm"] = lm.algorithm;
  json order = json::array();
  for (auto v : lm.order.order) order.push_back(names[v]);
  j["causal_order"] = order;
  json unknown = json::array(), conflicts = json::array();
  for (const auto& [a, b] : lm.order.unknown) unknown.push_back(pair_json(a, b));
  for (const auto& [a, b] : lm.order.conflicts) conflicts.push_back(pair_json(a, b));
  j["unordered_pairs"] = unknown;
  j["order_conflicts"] = conflicts;

  json pairs = json::array();
  for (const auto& p : lm.pairs) {
    json item{{"cause", names[p.cause]},
              {"effect", names[p.effect]},
              {"status", to_string(p.status)},
              {"estimate", p.estimate}};
    if (p.test) {
      item["test"] = {{"statistic", number_or_null(p.test->statistic)},
                      {"p_value", number_or_null(p.test->p_value)},
                      {"stratum", p.test->stratum},
                      {"min_expected", number_or_null(p.test->min_expected)},
                      {"degenerate", p.test->degenerate}};
    }
    json prov = json::array();
    for (const auto& e : p.provenance) {
      json cond = json::array();
      for (auto v : e.conditioning) cond.push_back(names[v]);
      prov.push_back({{"experiment", e.experiment},
                      {"conditioning", cond},
                      {"value", e.value},
                      {"contrast", e.contrast},
                      {"support_on", e.support_on},
                      {"support_off", e.support_off},
                      {"weight", e.weight()}});
    }
    item["provenance"] = prov;
    pairs.push_back(item);
  }
  j["pairs"] = pairs;

  const auto& d = lm.disturbance;
  j["disturbance"] = {{"method", d.method},
                      {"min_entry", d.min_entry},
                      {"clipped_mass", d.clipped_mass},
                      {"flagged", d.flagged},
                      {"iterations", d.iterations},
                      {"kkt", d.kkt},
                      {"converged", d.converged}};
  if (!lm.trace.empty()) {
    j["em"] = {{"iterations", lm.trace.size()},
               {"final_log_likelihood", lm.trace.back().log_likelihood}};
  }
  if (lm.pruned) j["pruned_model"] = model_to_json(*lm.pruned);
  return j;
}

inline std::string trace_to_csv(const std::vector<EmTraceRow>& trace) {
  std::string out = "iteration,log_likelihood,max_delta\n";
  for (const auto& r : trace) {
    out += std::to_string(r.iteration) + "," + format_double(r.log_likelihood) + "," +
           format_double(r.max_delta) + "\n";
  }
  return out;
}

// ------------------------------------------------------------ study tables

inline std::string study_rows_to_csv(const StudyResults& res) {
  std::string out = "replicate,condition,n,samples,x,y,algorithm,metric,value,note\n";
  for (const auto& r : res.rows) {
    const auto& c = res.conditions[r.condition];
    std::string note = r.note;
    for (char& ch : note) {
      if (ch == ',' || ch == '\n' || ch == '"') ch = ' ';
    }
    out += std::to_string(r.replicate) + "," + c.label + "," + std::to_string(c.n) + "," +
           std::to_string(c.samples) + "," + format_double(c.x) + "," + format_double(c.y) + "," +
           r.algorithm + "," + r.metric + "," + format_double(r.value) + "," + note + "\n";
  }
  return out;
}

inline json study_config_to_json(const StudyConfig& cfg) {
  return json{{"kind", to_string(cfg.kind)},
              {"model_sizes", cfg.model_sizes},
              {"sample_sizes", cfg.sample_sizes},
              {"per_experiment", cfg.per_experiment},
              {"replicates", cfg.replicates},
              {"algorithms", cfg.algorithms},
              {"max_parents", cfg.max_parents},
              {"negative_fraction", cfg.negative_fraction},
              {"intervention_probability", cfg.intervention_probability},
              {"confounding_levels", cfg.confounding_levels},
              {"interaction_levels", cfg.interaction_levels},
              {"map", cfg.map},
              {"em_restarts", cfg.em_restarts},
              {"seed", cfg.seed}};
}

/// Applies the keys present in `j` on top of `base`.
inline StudyConfig study_config_from_json(const json& j, StudyConfig base = {}) {
  try {
    if (j.contains("kind")) base.kind = parse_study_kind(j.at("kind").get<std::string>());
    if (j.contains("model_sizes")) base.model_sizes = j.at("model_sizes").get<std::vector<std::size_t>>();
    if (j.contains("sample_sizes")) base.sample_sizes = j.at("sample_sizes").get<std::vector<std::size_t>>();
    base.per_experiment = j.value("per_experiment", base.per_experiment);
    base.replicates = j.value("replicates", base.replicates);
    if (j.contains("algorithms")) base.algorithms = j.at("algorithms").get<std::vector<std::string>>();
    base.max_parents = j.value("max_parents", base.max_parents);
    base.negative_fraction = j.value("negative_fraction", base.negative_fraction);
    base.intervention_probability = j.value("intervention_probability", base.intervention_probability);
    if (j.contains("confounding_levels")) {
      base.confounding_levels = j.at("confounding_levels").get<std::vector<double>>();
    }
    if (j.contains("interaction_levels")) {
      base.interaction_levels = j.at("interaction_levels").get<std::vector<double>>();
    }
    base.map = j.value("map", base.map);
    base.em_restarts = j.value("em_restarts", base.em_restarts);
    base.seed = j.value("seed", base.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, std::string("malformed study config: ") + e.what());
  }
  return base;
}

inline json study_summary_to_json(const StudyResults& res) {
  json j;
  j["config"] = study_config_to_json(res.config);
  j["kl_direction"] = "KL(true || estimated)";
  json conds = json::array();
  for (const auto& c : res.conditions) {
    conds.push_back({{"label", c.label}, {"n", c.n}, {"samples", c.samples}, {"x", c.x}, {"y", c.y}});
  }
  j["conditions"] = conds;
  json rows = json::array();
  for (const auto& s : res.summary) {
    rows.push_back({{"condition", res.conditions[s.condition].label},
                    {"algorithm", s.algorithm},
                    {"metric", s.metric},
                    {"count", s.count},
                    {"mean", number_or_null(s.mean)},
                    {"sd", number_or_null(s.sd)},
                    {"missing", s.missing},
                    {"infinite", s.infinite}});
  }
  j["summary"] = rows;
  return j;
}

}  // namespace noisyor
