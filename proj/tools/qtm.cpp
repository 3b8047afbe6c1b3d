// Command-line front end: training, evaluation, baselines, sweeps, reports
// and the verification suite.

#include "qtm/pareto/coherence.hpp"
#include "qtm/pareto/config.hpp"
#include "qtm/pareto/extract.hpp"
#include "qtm/pareto/plots.hpp"
#include "qtm/pareto/sweep.hpp"
#include "qtm/pareto/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace qtm;
using namespace qtm::pareto;

namespace {

struct ConfigArgs {
  std::string path;
  std::string machine = "qubit_refrigerator";
  std::vector<std::string> set;
};

void add_config_flags(CLI::App* cmd, ConfigArgs& a) {
  cmd->add_option("--config", a.path, "Experiment config file");
  cmd->add_option("--machine", a.machine, "Machine defaults when no config is given")
      ->check(CLI::IsMember({"qubit_refrigerator", "oscillator_engine"}));
  cmd->add_option("--set", a.set, "Override a config entry, key=value (repeatable)");
}

ExperimentConfig resolve(const ConfigArgs& a) {
  std::vector<std::pair<std::string, std::string>> ov;
  for (const auto& s : a.set) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    ov.emplace_back(detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)));
  }
  if (!a.path.empty()) return load_config(a.path, ov);
  return parse_config("machine = " + a.machine + "\n", ov);
}

nlohmann::json record_json(const RunRecord& r) {
  nlohmann::json j;
  j["source"] = to_string(r.source);
  j["c"] = r.c;
  j["seed"] = r.run_seed;
  j["power"] = r.power;
  j["efficiency"] = r.efficiency;
  j["sigma"] = r.sigma;
  j["return"] = r.ret;
  j["period_steps"] = r.period;
  j["train_return"] = r.train_return;
  j["config_hash"] = r.config_hash;
  j["message"] = r.message;
  return j;
}

void write_json(const fs::path& p, const nlohmann::json& j) { io::write_text_atomic(p, j.dump(2) + "\n"); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reinforcement-learning control of quantum thermal machines"};
  app.require_subcommand(1);

  ConfigArgs cfg_args;
  double c = 1.0;
  std::uint64_t seed = 0;
  std::string out, checkpoint, trace, dir;

  auto* train = app.add_subcommand("train", "Train one agent, extract its cycle and evaluate it");
  add_config_flags(train, cfg_args);
  train->add_option("--c", c, "Power weight in [0, 1]")->check(CLI::Range(0.0, 1.0));
  train->add_option("--seed", seed, "Run seed");
  train->add_option("--out", out, "Output directory")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Extract and evaluate the cycle of a checkpoint");
  add_config_flags(evaluate, cfg_args);
  evaluate->add_option("--checkpoint", checkpoint, "Training checkpoint")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--c", c, "Power weight in [0, 1]")->check(CLI::Range(0.0, 1.0));
  evaluate->add_option("--out", out, "Output directory")->required();

  auto* trap = app.add_subcommand("baseline-trap", "Optimize the trapezoid cycle (qubit refrigerator)");
  auto* otto = app.add_subcommand("baseline-otto", "Optimize the Otto cycle");
  for (auto* cmd : {trap, otto}) {
    add_config_flags(cmd, cfg_args);
    cmd->add_option("--c", c, "Power weight in [0, 1]")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--out", out, "Output directory")->required();
  }

  bool baseline_only = false;
  auto* sweep = app.add_subcommand("sweep", "Seeds x weights sweep with baselines; resumes from the manifest");
  add_config_flags(sweep, cfg_args);
  sweep->add_option("--out", out, "Output directory (overrides sweep.output_dir)");
  sweep->add_flag("--baseline-only", baseline_only, "Skip RL training");

  auto* coherence = app.add_subcommand("coherence", "Coherence of a traced cycle vs an equal-period trapezoid");
  add_config_flags(coherence, cfg_args);
  coherence->add_option("--checkpoint", checkpoint, "Training checkpoint")->check(CLI::ExistingFile);
  coherence->add_option("--trace", trace, "Cycle trace CSV with a coherence column")->check(CLI::ExistingFile);
  coherence->add_option("--c", c, "Power weight in [0, 1]")->check(CLI::Range(0.0, 1.0));
  coherence->add_option("--out", out, "CSV file to append to (stdout if omitted)");
  bool match_trace = false;
  coherence->add_flag("--match-trace", match_trace, "Span the trapezoid over the trace's control range");

  std::optional<std::uint64_t> plot_seed;
  auto* plots = app.add_subcommand("plots", "Write plot data and SVGs for a sweep directory");
  plots->add_option("--dir", dir, "Sweep directory")->required();
  plots->add_option("--seed", plot_seed, "Only RL results of this seed");

  VerifyOptions vopt;
  std::string json_out;
  auto* verify_cmd = app.add_subcommand("verify", "Run the verification suites");
  verify_cmd->add_flag("--fast", vopt.fast, "Short variants only");
  verify_cmd->add_option("--suite", vopt.suites, "Restrict to suites (repeatable)")
      ->check(CLI::IsMember(suite_names()));
  verify_cmd->add_flag("--inject-sigma-sign-error", vopt.sigma_sign_error,
                       "Flip the sign of the entropy production in the second-law check");
  verify_cmd->add_option("--json", json_out, "Write results as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const auto cfg = resolve(cfg_args);
      auto rec = train_and_evaluate(cfg, c, seed, out);
      rec.config_hash = config_hash(cfg);
      write_json(fs::path(out) / "result.json", record_json(rec));
      std::cout << record_json(rec).dump(2) << '\n';
      return 0;
    }
    if (*evaluate) {
      const auto cfg = resolve(cfg_args);
      fs::create_directories(out);
      const CycleTrace tr = extract_cycle(checkpoint, cfg, c);
      io::write_file_atomic(fs::path(out) / "cycle_trace.csv", [&](std::ostream& os) { write_trace_csv(os, tr); });
      nlohmann::json j;
      j["c"] = c;
      j["checkpoint"] = checkpoint;
      j["config_hash"] = config_hash(cfg);
      j["stable"] = tr.stable;
      j["windows"] = tr.windows;
      j["correlation"] = tr.correlation;
      j["window_power"] = tr.mean_power;
      j["window_sigma"] = tr.mean_sigma;
      if (tr.period) {
        auto opt = cfg.eval_options();
        opt.throw_on_nonconvergence = false;
        const auto m = baselines::evaluate_steps(cfg.env, tr.period_steps(), c, opt);
        io::write_file_atomic(fs::path(out) / "steady_state.csv", [&](std::ostream& os) {
          os << baselines::kCycleCsvHeader << '\n';
          baselines::write_cycle_row(os, c, baselines::CycleSpec::from_table(tr.period_steps()), m);
        });
        j["period_steps"] = *tr.period;
        j["power"] = m.power / cfg.env.P0;
        j["sigma"] = m.sigma / cfg.env.Sigma0;
        j["efficiency"] = std::isnan(m.efficiency) ? 0.0 : m.efficiency;
        j["return"] = m.ret;
        j["converged"] = m.converged;
      } else {
        j["period_steps"] = nullptr;
      }
      write_json(fs::path(out) / "evaluation.json", j);
      std::cout << j.dump(2) << '\n';
      return 0;
    }
    if (*trap || *otto) {
      auto cfg = resolve(cfg_args);
      const Source s = *trap ? Source::Trapezoid : Source::Otto;
      if (s == Source::Trapezoid && !cfg.env.is_qubit())
        throw ConfigError("baseline-trap applies to the qubit refrigerator only");
      auto rec = detail::run_baseline(cfg, s, c, out);
      rec.config_hash = config_hash(cfg);
      write_json(fs::path(out) / "result.json", record_json(rec));
      std::cout << io::read_text(fs::path(out) / "cycle.csv");
      return 0;
    }
    if (*sweep) {
      auto cfg = resolve(cfg_args);
      if (!out.empty()) cfg.output_dir = out;
      SweepOptions so;
      so.baseline_only = baseline_only;
      so.threads = threads_from_env();
      const auto res = run_sweep(cfg, so);
      std::cout << "executed " << res.executed << ", skipped " << res.skipped << ", points " << res.points.size()
                << ", config " << res.config_hash << '\n';
      int errors = 0;
      for (const auto& r : res.records) errors += r.status == "error";
      return errors ? 1 : 0;
    }
    if (*coherence) {
      const auto cfg = resolve(cfg_args);
      if (checkpoint.empty() == trace.empty()) throw ConfigError("coherence: give exactly one of --checkpoint, --trace");
      const CycleTrace tr =
          trace.empty() ? extract_cycle(checkpoint, cfg, c) : read_trace_csv(trace, cfg.extract.min_correlation);
      CoherenceOptions co;
      co.match_trace = match_trace;
      const auto row = coherence_report(tr, cfg.env, c, co);
      if (out.empty()) {
        std::cout << kCoherenceCsvHeader << '\n';
        write_coherence_row(std::cout, row);
      } else {
        const bool fresh = !fs::exists(out);
        std::ofstream os(out, std::ios::app);
        if (fresh) os << kCoherenceCsvHeader << '\n';
        write_coherence_row(os, row);
      }
      return 0;
    }
    if (*plots) {
      PlotOptions po;
      po.seed = plot_seed;
      const auto rep = emit_plots(dir, po);
      if (rep.no_data) std::cout << "no data\n";
      for (const auto& f : rep.files) std::cout << f.string() << '\n';
      for (const auto& g : rep.gaps) std::cerr << "gap: " << g << '\n';
      return 0;
    }
    if (*verify_cmd) {
      const auto results = verify(vopt, &std::cout);
      int failed = 0;
      nlohmann::json j = nlohmann::json::array();
      for (const auto& r : results) {
        failed += !r.passed;
        j.push_back({{"suite", r.suite}, {"name", r.name}, {"passed", r.passed}, {"detail", r.detail},
                     {"seconds", r.seconds}});
      }
      if (!json_out.empty()) write_json(json_out, j);
      std::cout << results.size() - failed << '/' << results.size() << " checks passed\n";
      return failed ? 1 : 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const AperiodicTrace& e) {
    std::cerr << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
