#include "splitflow/cli.hpp"

#include "splitflow/diagnostics.hpp"
#include "splitflow/models.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace splitflow {

namespace fs = std::filesystem;
using json = nlohmann::json;

const char* version() { return SPLITFLOW_VERSION; }

namespace {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class T>
void read_key(const json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: bad value for '") + key + "'");
  }
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot write " + p.string());
  return f;
}

void write_text(const fs::path& p, const std::string& text) {
  auto f = open_out(p);
  f << text;
  if (!f) throw IoError("write failed: " + p.string());
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

fs::path output_dir(const RunConfig& cfg, const std::string& suffix) {
  if (!cfg.out.empty()) return cfg.out;
  const char* root = std::getenv("SPLITFLOW_OUT");
  return fs::path(root && *root ? root : "splitflow-out") / (cfg.model + "-" + suffix);
}

void prepare_dir(const fs::path& dir, const RunConfig& cfg, const ModelPreset& pr) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  json echo = cfg.to_json();
  echo["model_parameters"] = pr.parameters;
  echo["version"] = version();
  write_json(dir / "config.json", echo);
  write_text(dir / "version.txt", std::string(version()) + "\n");
}

Partition make_partition(const RunConfig& cfg, const ModelPreset& pr) {
  if (!cfg.nodes.empty()) {
    if (std::abs(cfg.nodes.back() - pr.T) > 1e-12 * pr.T)
      throw ConfigError("--nodes must end at the model horizon T = " + format_double(pr.T));
    try {
      return Partition::from_nodes(cfg.nodes);
    } catch (const InputError& e) {
      throw ConfigError(e.what());
    }
  }
  const int N = cfg.N.value_or(pr.N);
  if (N < 1) throw ConfigError("N must be >= 1");
  return Partition::uniform(pr.T, N);
}

Scheme pick_scheme(const RunConfig& cfg, const ModelPreset& pr) {
  const Scheme s = cfg.scheme.empty() ? pr.scheme : scheme_from_string(cfg.scheme);
  const bool block = s == Scheme::BlockSplit || s == Scheme::BlockAmm;
  if (block && !pr.system.block_layout)
    throw ConfigError("scheme " + std::string(to_string(s)) + " needs a block model");
  return s;
}

void check_common(const RunConfig& cfg) {
  if (cfg.inner_steps < 1) throw ConfigError("--inner-steps must be >= 1");
  if (!(cfg.tol > 0.0)) throw ConfigError("--tol must be positive");
  if (cfg.jobs < 1) throw ConfigError("--jobs must be >= 1");
}

void write_trajectory(const fs::path& p, const SchemeOutput& out) {
  auto f = open_out(p);
  const Grid& G = *out.grid;
  f << "t";
  for (Index i = 0; i < out.u_linear.dim(); ++i) f << ",u_" << (i + 1);
  f << "\n";
  for (int j = 0; j < G.nodes(); ++j) {
    f << format_double(G.node_time(j));
    const Vec u = out.node_state(j);
    for (Index i = 0; i < u.size(); ++i) f << "," << format_double(u[i]);
    f << "\n";
  }
  if (!f) throw IoError("write failed: " + p.string());
}

void write_forces(const fs::path& p, const SchemeOutput& out) {
  auto f = open_out(p);
  write_csv(out.xi, f);
  if (!f) throw IoError("write failed: " + p.string());
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(6) << x;
  return os.str();
}

int do_study(const RunConfig& cfg, const ModelPreset& pr, Scheme scheme, const fs::path& dir, std::ostream& out) {
  StudyOptions opt;
  opt.inner_steps = cfg.inner_steps;
  opt.tol = cfg.tol;
  opt.jobs = cfg.jobs;
  const std::vector<int> Ns = cfg.study.empty() ? pr.study_N : cfg.study;
  const StudyResult st = convergence_study(pr.system, pr.u0, pr.T, scheme, Ns, opt);
  std::ostringstream csv;
  write_study_csv(st, csv);
  write_text(dir / "study.csv", csv.str());
  out << "convergence study (" << to_string(scheme) << ", reference " << st.reference << ")\n";
  out << std::setw(6) << "N" << std::setw(14) << "sup_error" << std::setw(10) << "order" << std::setw(14)
      << "edb_residual" << std::setw(14) << "defect" << "\n";
  for (const auto& r : st.rows)
    out << std::setw(6) << r.N << std::setw(14) << fmt(r.sup_error) << std::setw(10)
        << (r.order ? fmt(*r.order) : "-") << std::setw(14) << fmt(r.edb_residual) << std::setw(14)
        << fmt(r.defect) << "\n";
  return kExitOk;
}

int do_run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  check_common(cfg);
  const ModelPreset pr = make_model(cfg.model, cfg.overrides);
  const Scheme scheme = pick_scheme(cfg, pr);
  const Partition P = make_partition(cfg, pr);
  for (int n : cfg.study)
    if (n < 1) throw ConfigError("--study entries must be >= 1");
  const fs::path dir = output_dir(cfg, to_string(scheme));
  prepare_dir(dir, cfg, pr);

  const SchemeOutput run = run_scheme(pr.system, P, pr.u0, scheme, cfg.inner_steps, cfg.tol);
  write_trajectory(dir / "trajectory.csv", run);
  write_forces(dir / "forces.csv", run);

  json edb = json::object();
  bool passed = true;
  double worst_residual = 0.0, worst_slack = 0.0;
  if (cfg.edb) {
    json steps = json::array();
    for (int k = 1; k <= P.steps(); ++k) {
      const EDBReport r = edb_audit(run, pr.system, P.node(k - 1), P.node(k));
      passed = passed && r.passed;
      if (r.residual - r.slack > worst_residual - worst_slack || k == 1) {
        worst_residual = r.residual;
        worst_slack = r.slack;
      }
      steps.push_back(to_json(r));
    }
    const EDBReport whole = edb_audit(run, pr.system, 0.0, P.horizon());
    passed = passed && whole.passed;
    edb["whole"] = to_json(whole);
    edb["steps"] = steps;
  }
  if (cfg.remainder) edb["remainder"] = to_json(remainder_term(run, pr.system.energy, 0.0, P.horizon()));
  if (cfg.decomposition && pr.system.r2) edb["decomposition"] = to_json(decomposition_report(run, pr.system));
  edb["passed"] = passed;
  write_json(dir / "edb.json", edb);

  json summary;
  summary["model"] = pr.name;
  summary["scheme"] = to_string(scheme);
  summary["steps"] = P.steps();
  summary["T"] = P.horizon();
  summary["energy_start"] = energy_eval(pr.system.energy, 0.0, pr.u0);
  summary["energy_end"] = energy_eval(pr.system.energy, P.horizon(), run.at_node(P.steps()));
  summary["final_state_norm"] = run.at_node(P.steps()).norm();
  const double tz = time_to_zero(run);
  summary["time_to_zero"] = std::isnan(tz) ? json(nullptr) : json(tz);
  if (pr.name == "counterexample") {
    summary["reference_time_to_zero"] = {{"effective", reference_zero_time(pr, ReferenceKind::Effective)},
                                         {"split_limit", reference_zero_time(pr, ReferenceKind::SplitLimit)}};
  }
  summary["exact_regime"] = run.exact();
  summary["inner_iterations"] = run.total_iterations();
  summary["edb_passed"] = passed;
  if (cfg.edb) {
    summary["edb_worst_step_residual"] = worst_residual;
    summary["edb_worst_step_slack"] = worst_slack;
  }
  summary["warnings"] = run.warnings;
  write_json(dir / "summary.json", summary);

  out << "model " << pr.name << ", scheme " << to_string(scheme) << ", " << P.steps() << " steps on [0, "
      << fmt(P.horizon()) << "]\n";
  out << "  energy " << fmt(summary["energy_start"].get<double>()) << " -> "
      << fmt(summary["energy_end"].get<double>()) << "\n";
  out << "  time to zero: " << (std::isnan(tz) ? std::string("not reached") : fmt(tz)) << "\n";
  if (cfg.edb)
    out << "  EDB audits: " << (passed ? "passed" : "FAILED") << " (worst step residual " << fmt(worst_residual)
        << ", slack " << fmt(worst_slack) << ")\n";
  if (!run.warnings.empty()) out << "  " << run.warnings.size() << " warning(s), see summary.json\n";

  if (!cfg.study.empty()) do_study(cfg, pr, scheme, dir, out);
  out << "  output: " << dir.string() << "\n";
  if (!passed) {
    err << "error: energy-dissipation audit exceeds its slack; see " << (dir / "edb.json").string() << "\n";
    return kExitAuditFailed;
  }
  return kExitOk;
}

int do_study_cmd(const RunConfig& cfg, std::ostream& out) {
  check_common(cfg);
  const ModelPreset pr = make_model(cfg.model, cfg.overrides);
  const Scheme scheme = pick_scheme(cfg, pr);
  for (int n : cfg.study)
    if (n < 1) throw ConfigError("--study entries must be >= 1");
  const fs::path dir = output_dir(cfg, std::string(to_string(scheme)) + "-study");
  prepare_dir(dir, cfg, pr);
  do_study(cfg, pr, scheme, dir, out);
  out << "  output: " << dir.string() << "\n";
  return kExitOk;
}

int do_probe(const RunConfig& cfg, std::ostream& out) {
  if (cfg.model != "allen-cahn-1d") throw ConfigError("probe-qye supports the allen-cahn-1d model");
  if (cfg.qye_samples < 1) throw ConfigError("--samples must be >= 1");
  const ModelPreset pr = make_model(cfg.model, cfg.overrides);
  const fs::path dir = output_dir(cfg, "qye");
  prepare_dir(dir, cfg, pr);
  const Potential Reff = pr.system.effective();
  const DualPairNorm norm = state_norm(pr);
  json res;
  res["norm_exponent"] = norm.exponent;
  json fits = json::array();
  out << "QYE probe of R_eff (p = " << fmt(norm.exponent) << ")\n";
  for (int count : {cfg.qye_samples, 2 * cfg.qye_samples}) {
    const QyeEstimate e = qye_probe(Reff, qye_samples(pr, count, cfg.seed), norm);
    fits.push_back({{"samples", count}, {"c", e.c}, {"C", e.C}, {"worst_ratio", e.worst_ratio},
                    {"worst_index", e.worst_index}});
    out << "  " << count << " samples: c = " << fmt(e.c) << ", C = " << fmt(e.C) << "\n";
  }
  res["fits"] = fits;
  json wit = json::array();
  out << "  witness sequence:";
  for (const auto& w : qye_witness(pr, cfg.witness)) {
    wit.push_back({{"n", w.n}, {"lambda", w.lambda}, {"xi_norm", w.xi_norm}, {"value", w.value}, {"ratio", w.ratio}});
    out << " n=" << w.n << ":" << fmt(w.ratio);
  }
  out << "\n";
  res["witness"] = wit;
  write_json(dir / "qye.json", res);
  out << "  output: " << dir.string() << "\n";
  return kExitOk;
}

int do_list(std::ostream& out) {
  for (const auto& m : list_models()) {
    out << m.name << "\n  " << m.description << "\n  defaults: " << m.defaults.dump() << "\n";
  }
  return kExitOk;
}

json load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config " + path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
}

json parse_param_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return text;
  }
}

}  // namespace

json RunConfig::to_json() const {
  json j;
  j["command"] = command;
  j["model"] = model;
  j["overrides"] = overrides;
  j["scheme"] = scheme;
  j["N"] = N ? json(*N) : json(nullptr);
  j["nodes"] = nodes;
  j["inner_steps"] = inner_steps;
  j["tol"] = tol;
  j["out"] = out;
  j["jobs"] = jobs;
  j["seed"] = seed;
  j["study"] = study;
  j["audits"] = {{"edb", edb}, {"remainder", remainder}, {"decomposition", decomposition}};
  j["qye_samples"] = qye_samples;
  j["witness"] = witness;
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  static const std::vector<std::string> known = {"command", "model", "overrides", "scheme", "N",
                                                 "nodes",   "inner_steps", "tol", "out", "jobs",
                                                 "seed",    "study", "audits", "qye_samples", "witness"};
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ConfigError("config: unknown key '" + k + "'");
  RunConfig c;
  read_key(j, "command", c.command);
  read_key(j, "model", c.model);
  if (j.contains("overrides")) {
    if (!j["overrides"].is_object()) throw ConfigError("config: overrides must be an object");
    c.overrides = j["overrides"];
  }
  read_key(j, "scheme", c.scheme);
  if (j.contains("N") && !j["N"].is_null()) {
    int n = 0;
    read_key(j, "N", n);
    c.N = n;
  }
  read_key(j, "nodes", c.nodes);
  read_key(j, "inner_steps", c.inner_steps);
  read_key(j, "tol", c.tol);
  read_key(j, "out", c.out);
  read_key(j, "jobs", c.jobs);
  read_key(j, "seed", c.seed);
  read_key(j, "study", c.study);
  read_key(j, "qye_samples", c.qye_samples);
  read_key(j, "witness", c.witness);
  if (j.contains("audits")) {
    const json& a = j["audits"];
    if (!a.is_object()) throw ConfigError("config: audits must be an object");
    for (const auto& [k, v] : a.items())
      if (k != "edb" && k != "remainder" && k != "decomposition")
        throw ConfigError("config: unknown audit '" + k + "'");
    read_key(a, "edb", c.edb);
    read_key(a, "remainder", c.remainder);
    read_key(a, "decomposition", c.decomposition);
  }
  return c;
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"splitflow: time-splitting and alternating minimizing movement schemes for gradient systems"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);

  struct Flags {
    std::string config, model, scheme, out, nodes_text;
    int N = 0, inner = 0, jobs = 0, samples = 0;
    double tol = 0.0;
    std::uint64_t seed = 0;
    std::vector<int> study, witness;
    std::vector<std::string> params;
    bool no_edb = false, no_remainder = false, no_decomposition = false;
  } fl;
  std::map<std::string, CLI::Option*> opts;

  auto common = [&](CLI::App* sub, bool scheme_flags) {
    opts[sub->get_name() + "config"] = sub->add_option("--config", fl.config, "JSON run configuration");
    opts[sub->get_name() + "model"] = sub->add_option("--model", fl.model, "model preset");
    opts[sub->get_name() + "param"] =
        sub->add_option("--param", fl.params, "model parameter override key=value (repeatable)");
    opts[sub->get_name() + "out"] = sub->add_option("--out", fl.out, "output directory");
    if (!scheme_flags) return;
    opts[sub->get_name() + "scheme"] =
        sub->add_option("--scheme", fl.scheme, "split | amm | effective | block-split | block-amm");
    opts[sub->get_name() + "inner"] = sub->add_option("--inner-steps", fl.inner, "inner steps per semi-interval");
    opts[sub->get_name() + "tol"] = sub->add_option("--tol", fl.tol, "inner solver tolerance");
    opts[sub->get_name() + "jobs"] = sub->add_option("--jobs", fl.jobs, "concurrent study rows");
    opts[sub->get_name() + "study"] =
        sub->add_option("--study", fl.study, "comma-separated step counts")->delimiter(',');
  };

  CLI::App* run = app.add_subcommand("run", "run one scheme and audit it");
  common(run, true);
  opts["runN"] = run->add_option("--N", fl.N, "number of uniform steps");
  opts["runnodes"] = run->add_option("--nodes", fl.nodes_text, "comma-separated partition nodes");
  run->add_flag("--no-edb", fl.no_edb, "skip the energy-dissipation audits");
  run->add_flag("--no-remainder", fl.no_remainder, "skip the remainder term");
  run->add_flag("--no-decomposition", fl.no_decomposition, "skip the decomposition report");

  CLI::App* study = app.add_subcommand("study", "convergence study over a list of step counts");
  common(study, true);

  CLI::App* probe = app.add_subcommand("probe-qye", "probe the Quantitative Young Estimate");
  common(probe, false);
  opts["probe-qyesamples"] = probe->add_option("--samples", fl.samples, "random pairs (also run at twice this)");
  opts["probe-qyeseed"] = probe->add_option("--seed", fl.seed, "sampling seed");
  opts["probe-qyewitness"] = probe->add_option("--witness", fl.witness, "witness indices n")->delimiter(',');

  app.add_subcommand("list-models", "list the model presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << version() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "list-models") return do_list(out);
    if (sub->get_help_ptr() && sub->get_help_ptr()->count()) return kExitOk;

    auto given = [&](const std::string& key) {
      auto it = opts.find(name + key);
      return it != opts.end() && it->second->count() > 0;
    };
    RunConfig cfg = given("config") ? RunConfig::from_json(load_config_file(fl.config)) : RunConfig{};
    cfg.command = name;
    if (given("model")) cfg.model = fl.model;
    for (const auto& kv : fl.params) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--param expects key=value, got '" + kv + "'");
      cfg.overrides[kv.substr(0, eq)] = parse_param_value(kv.substr(eq + 1));
    }
    if (given("out")) cfg.out = fl.out;
    if (given("scheme")) cfg.scheme = fl.scheme;
    if (given("inner")) cfg.inner_steps = fl.inner;
    if (given("tol")) cfg.tol = fl.tol;
    if (given("jobs")) cfg.jobs = fl.jobs;
    if (given("study")) cfg.study = fl.study;
    if (given("N")) cfg.N = fl.N;
    if (given("nodes")) {
      cfg.nodes.clear();
      std::stringstream ss(fl.nodes_text);
      for (std::string item; std::getline(ss, item, ',');) {
        try {
          std::size_t used = 0;
          cfg.nodes.push_back(std::stod(item, &used));
          if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
          throw ConfigError("--nodes: not a number '" + item + "'");
        }
      }
    }
    if (given("samples")) cfg.qye_samples = fl.samples;
    if (given("seed")) cfg.seed = fl.seed;
    if (given("witness")) cfg.witness = fl.witness;
    if (fl.no_edb) cfg.edb = false;
    if (fl.no_remainder) cfg.remainder = false;
    if (fl.no_decomposition) cfg.decomposition = false;

    if (name == "run") return do_run(cfg, out, err);
    if (name == "study") return do_study_cmd(cfg, out);
    return do_probe(cfg, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericalError& e) {
    err << "error: numerical failure: " << e.what() << " (residual " << e.gap() << ", " << e.iterations()
        << " iterations)\n";
    return kExitNumerical;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }
}

}  // namespace splitflow
