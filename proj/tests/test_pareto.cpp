#include "qtm/pareto/coherence.hpp"
#include "qtm/pareto/config.hpp"
#include "qtm/pareto/csv.hpp"
#include "qtm/pareto/extract.hpp"
#include "qtm/pareto/plots.hpp"
#include "qtm/pareto/sweep.hpp"
#include "qtm/pareto/verify.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

using namespace qtm;
using namespace qtm::pareto;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qtm_test_pareto_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<env::ControlAction> square_wave(std::size_t n, std::size_t half, double lo, double hi, Coupling d) {
  std::vector<env::ControlAction> a;
  for (std::size_t i = 0; i < n; ++i) a.push_back({(i / half) % 2 ? lo : hi, d});
  return a;
}

/// Replays a fixed period regardless of the observed history.
Policy periodic_policy(std::vector<env::ControlAction> period) {
  auto k = std::make_shared<std::size_t>(0);
  return [period = std::move(period), k](const env::HistoryState&) { return period[(*k)++ % period.size()]; };
}

ExperimentConfig cheap_config(const std::string& machine) {
  ExperimentConfig c = default_config(machine);
  c.baseline.trap.grid = 6;
  c.baseline.trap.golden_iterations = 8;
  c.baseline.otto_opt.grid = 2;
  c.baseline.otto_opt.newton_iterations = 0;
  c.baseline.otto_opt.polish_rounds = 0;
  c.baseline.rel_tol = 1e-6;
  if (!c.env.is_qubit()) {
    std::get<sim::OscillatorModel>(c.env.model).n_fock = 64;
    c.baseline.otto_opt.grid_n_fock = 0;
  }
  return c;
}

ExperimentConfig tiny_rl_config(const std::string& machine) {
  ExperimentConfig c = cheap_config(machine);
  c.env.history_length = 16;
  c.env.penalty.window = 16;
  c.env.penalty.min_count = 3;
  c.agent.conv_channels = {4, 4, 4, 4};
  c.agent.policy_hidden = {8};
  c.agent.critic_hidden = {8};
  c.agent.batch_size = 16;
  c.agent.buffer_capacity = 1000;
  c.agent.total_steps = 240;
  c.agent.random_steps = 80;
  c.agent.first_update = 60;
  c.agent.n_updates = 5;
  c.agent.log_every = 40;
  c.c_mean = 100;
  c.c_decay = 20;
  c.extract.warmup = 50;
  c.extract.window = 64;
  c.extract.max_windows = 2;
  c.baseline.trapezoid = false;
  c.baseline.otto = false;
  return c;
}

RunRecord fake_run(double ret) {
  RunRecord r;
  r.power = ret + 1.0;
  r.efficiency = 0.1;
  r.sigma = 1.0;
  r.ret = ret;
  return r;
}

}  // namespace

// ---- config ----

TEST(Config, ParsesFractionsLogsAndComments) {
  const auto c = parse_config(
      "# header\n"
      "machine = oscillator_engine   # trailing\n"
      "\n"
      "oscillator.beta_hot = 1/5\n"
      "agent.entropy_d.start = ln(3)\n"
      "agent.conv_channels = (32, 32, 64, 64, 64, 128, 128)\n"
      "sweep.c = 1, 0.5\n");
  const auto& m = std::get<sim::OscillatorModel>(c.env.model);
  EXPECT_DOUBLE_EQ(m[sim::Bath::Hot].beta, 0.2);
  EXPECT_DOUBLE_EQ(c.agent.entropy_d.start, std::log(3.0));
  EXPECT_EQ(c.agent.conv_channels.size(), 7u);
  EXPECT_EQ(c.c_values, (std::vector<double>{1.0, 0.5}));
}

TEST(Config, ResonantFrequenciesFollowTheGap) {
  const auto c = parse_config("machine = qubit_refrigerator\nqubit.delta = 0.2\nqubit.omega_cold = resonant\n");
  const auto& q = std::get<sim::QubitModel>(c.env.model);
  EXPECT_DOUBLE_EQ(q[sim::Bath::Cold].omega, 0.4);
}

TEST(Config, RejectsBadInput) {
  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message("machine = qubit_refrigerator\nenv.nope = 1\n").find("line 2: unknown key"), std::string::npos);
  EXPECT_NE(message("env.dt = 1\nenv.dt = 2\n").find("duplicate"), std::string::npos);
  EXPECT_NE(message("env.dt = 1\nmachine = oscillator_engine\n").find("first"), std::string::npos);
  EXPECT_NE(message("env.dt = abc\n").find("env.dt"), std::string::npos);
  EXPECT_NE(message("machine = steam_engine\n").find("machine"), std::string::npos);
  EXPECT_NE(message("machine = oscillator_engine\nbaseline.trapezoid = true\n").find("qubit"), std::string::npos);
  EXPECT_NE(message("qubit.E0 = 1\nsweep.c = (1.5)\n").find("[0, 1]"), std::string::npos);
  EXPECT_NE(message("just words\n").find("key = value"), std::string::npos);
}

TEST(Config, FormatRoundTrips) {
  for (const char* m : {"qubit_refrigerator", "oscillator_engine"}) {
    auto c = default_config(m);
    c.seeds = {3, 4};
    c.agent.lr = 1.0 / 3.0;
    c.env.gamma = 0.9991;
    const std::string text = format_config(c);
    EXPECT_EQ(format_config(parse_config(text)), text) << m;
    EXPECT_EQ(config_hash(parse_config(text)), config_hash(c)) << m;
  }
}

TEST(Config, HashIsStableAndSensitive) {
  const auto a = default_config("qubit_refrigerator");
  auto b = a;
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  b.output_dir = "elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.env.dt = 0.99;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(default_config("oscillator_engine")));
}

TEST(Config, OverridesReplaceFileEntries) {
  const auto c = parse_config("machine = qubit_refrigerator\nenv.dt = 0.5\n",
                              {{"env.dt", "0.25"}, {"agent.total_steps", "100"}});
  EXPECT_DOUBLE_EQ(c.env.dt, 0.25);
  EXPECT_EQ(c.agent.total_steps, 100u);
  EXPECT_THROW(parse_config("", {{"machine", "oscillator_engine"}}), ConfigError);
  EXPECT_THROW(parse_config("", {{"env.nope", "1"}}), ConfigError);
}

TEST(Config, ShippedFilesEqualTheDefaults) {
  for (const char* m : {"qubit_refrigerator", "oscillator_engine"}) {
    const auto c = load_config(fs::path(QTM_SOURCE_DIR) / "configs" / (std::string(m) + ".cfg"));
    auto d = default_config(m);
    d.seeds = c.seeds;
    d.c_values = c.c_values;
    d.output_dir = c.output_dir;
    EXPECT_EQ(format_config(c), format_config(d)) << m;
    EXPECT_EQ(c.seeds.size(), 5u);
  }
}

TEST(Config, AgentScheduleFollowsAnnealFlag) {
  auto c = default_config("qubit_refrigerator");
  const auto a = c.agent_for(0.6, 7);
  EXPECT_EQ(a.seed, 7u);
  EXPECT_DOUBLE_EQ(a.weight.start, 1.0);
  EXPECT_DOUBLE_EQ(a.weight.end, 0.6);
  c.anneal_c = false;
  EXPECT_DOUBLE_EQ(c.agent_for(0.6, 7).weight.start, 0.6);
}

// ---- csv ----

TEST(Csv, KeepsEmptyCells) {
  const auto t = parse_csv("a,b,c\n1,,3\n4,5,\n");
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_TRUE(std::isnan(t.number(0, "b")));
  EXPECT_TRUE(std::isnan(t.number(1, "c")));
  EXPECT_DOUBLE_EQ(t.number(1, "b"), 5.0);
  EXPECT_THROW(t.column("d"), std::out_of_range);
}

// ---- period detection ----

TEST(Period, SquareWaveOfSixteenSteps) {
  const auto est = estimate_period(square_wave(512, 8, 0.0, 0.5, Coupling::Both));
  ASSERT_TRUE(est.period);
  EXPECT_EQ(*est.period, 16u);
  EXPECT_GT(est.correlation, 0.99);
}

TEST(Period, NoiseDoesNotShiftThePeriod) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 0.03);
  auto a = square_wave(600, 8, 0.0, 0.5, Coupling::Both);
  for (auto& x : a) x.u += n(rng);
  const auto est = estimate_period(a);
  ASSERT_TRUE(est.period);
  EXPECT_EQ(*est.period, 16u);
}

TEST(Period, ConstantPolicyHasNoPeriod) {
  const std::vector<env::ControlAction> a(256, {0.3, Coupling::Both});
  EXPECT_FALSE(estimate_period(a).period);
  EXPECT_FALSE(estimate_period(std::vector<double>(100, 1.0)).period);
}

TEST(Period, WhiteNoiseHasNoPeriod) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(1000);
  for (auto& v : x) v = u(rng);
  EXPECT_FALSE(estimate_period(x).period);
}

TEST(Period, FallsBackToTheBathChoice) {
  std::vector<env::ControlAction> a;
  for (std::size_t i = 0; i < 320; ++i) a.push_back({0.75, (i / 8) % 2 ? Coupling::Cold : Coupling::Hot});
  const auto est = estimate_period(a);
  ASSERT_TRUE(est.period);
  EXPECT_EQ(*est.period, 16u);
}

// ---- extraction ----

TEST(Extract, PeriodicPolicyOnTheQubit) {
  const auto cfg = env::qubit_refrigerator_preset();
  ExtractSettings s;
  s.warmup = 400;
  s.window = 320;
  s.stability = 1e-3;
  const auto tr = extract_cycle(periodic_policy(square_wave(16, 8, 0.0, 0.5, Coupling::Both)), cfg, s);
  ASSERT_TRUE(tr.period);
  EXPECT_EQ(*tr.period, 16u);
  EXPECT_TRUE(tr.stable);
  EXPECT_EQ(tr.actions.size(), 320u);
  EXPECT_EQ(tr.averaged_steps, 320u);
  EXPECT_EQ(tr.coherence.size(), 320u);
  EXPECT_EQ(tr.period_steps().size(), 16u);

  // The window average approaches the converged cycle average.
  const auto m = baselines::evaluate_steps(cfg, tr.period_steps(), 1.0);
  EXPECT_NEAR(tr.mean_power * cfg.P0, m.power, 1e-3 * std::abs(m.power));
  EXPECT_NEAR(tr.mean_sigma * cfg.Sigma0, m.sigma, 1e-3 * std::abs(m.sigma));
}

TEST(Extract, WindowsExtendUntilStable) {
  const auto cfg = env::qubit_refrigerator_preset();
  ExtractSettings s;
  s.warmup = 0;
  s.window = 16;
  s.stability = 1e-7;
  s.max_windows = 3;
  const auto tr = extract_cycle(periodic_policy(square_wave(16, 8, 0.0, 0.5, Coupling::Both)), cfg, s);
  EXPECT_EQ(tr.windows, 3);
  EXPECT_FALSE(tr.stable);
}

TEST(Extract, TraceCsvRoundTrips) {
  const auto dir = fresh_dir("trace");
  auto cfg = env::oscillator_engine_preset();
  std::get<sim::OscillatorModel>(cfg.model).n_fock = 64;
  ExtractSettings s;
  s.warmup = 32;
  s.window = 96;
  s.stability = 1.0;
  std::vector<env::ControlAction> period;
  for (int i = 0; i < 4; ++i) period.push_back({1.0, Coupling::Hot});
  for (int i = 0; i < 4; ++i) period.push_back({0.75, Coupling::None});
  for (int i = 0; i < 4; ++i) period.push_back({0.5, Coupling::Cold});
  for (int i = 0; i < 4; ++i) period.push_back({0.75, Coupling::None});
  const auto tr = extract_cycle(periodic_policy(period), cfg, s);
  io::write_file_atomic(dir / "t.csv", [&](std::ostream& os) { write_trace_csv(os, tr); });
  const auto back = read_trace_csv(dir / "t.csv");
  ASSERT_EQ(back.actions.size(), tr.actions.size());
  for (std::size_t i = 0; i < tr.actions.size(); ++i) {
    EXPECT_EQ(back.actions[i].u, tr.actions[i].u);
    EXPECT_EQ(back.actions[i].d, tr.actions[i].d);
    EXPECT_EQ(back.coherence[i], tr.coherence[i]);
  }
  EXPECT_EQ(back.period, tr.period);
  EXPECT_EQ(back.start_step, tr.start_step);
  EXPECT_NEAR(back.dt, cfg.dt, 1e-12);
}

// ---- coherence ----

TEST(Coherence, EqualPeriodTrapezoidSpansTheRange) {
  const std::vector<Coupling> baths(40, Coupling::Both);
  const auto t = equal_period_trapezoid(40, 0.1, 0.6, baths);
  ASSERT_EQ(t.size(), 40u);
  double lo = 1, hi = 0;
  for (const auto& a : t) {
    lo = std::min(lo, a.u);
    hi = std::max(hi, a.u);
  }
  EXPECT_GE(lo, 0.1 - 1e-12);
  EXPECT_LE(hi, 0.6 + 1e-12);
  EXPECT_GT(hi - lo, 0.4);
}

TEST(Coherence, DiagonalCycleHasNone) {
  auto cfg = env::oscillator_engine_preset();
  std::get<sim::OscillatorModel>(cfg.model).n_fock = 64;
  std::vector<env::ControlAction> period;
  for (int i = 0; i < 8; ++i) period.push_back({0.75, Coupling::Hot});
  for (int i = 0; i < 8; ++i) period.push_back({0.75, Coupling::Cold});
  ExtractSettings s;
  s.warmup = 160;
  s.window = 160;
  s.stability = 1.0;
  const auto tr = extract_cycle(periodic_policy(period), cfg, s);
  ASSERT_TRUE(tr.period);
  EXPECT_EQ(*tr.period, 16u);
  CoherenceOptions opt;
  opt.match_trace = true;
  const auto row = coherence_report(tr, cfg, 1.0, opt);
  EXPECT_LT(std::abs(row.rl), 1e-10);
  EXPECT_LT(std::abs(row.trapezoid), 1e-10);
  EXPECT_EQ(row.period_steps, 16u);
}

TEST(Coherence, QubitSquareWaveReport) {
  const auto cfg = env::qubit_refrigerator_preset();
  ExtractSettings s;
  s.warmup = 400;
  s.window = 320;
  s.stability = 1.0;
  const auto tr = extract_cycle(periodic_policy(square_wave(16, 8, 0.0, 0.5, Coupling::Both)), cfg, s);
  const auto row = coherence_report(tr, cfg, 1.0);
  EXPECT_GT(row.rl, 0.0);
  EXPECT_GT(row.trapezoid, 0.0);
  EXPECT_TRUE(std::isfinite(row.trapezoid));
  EXPECT_GT(row.trapezoid_periods, 1);
  std::ostringstream os;
  write_coherence_row(os, row);
  const std::string line = os.str();
  EXPECT_EQ(std::count(line.begin(), line.end(), ','), 3);
}

TEST(Coherence, AperiodicTraceIsRejected) {
  CycleTrace tr;
  tr.actions.assign(10, {0.3, Coupling::Both});
  tr.coherence.assign(10, 0.0);
  EXPECT_THROW(coherence_report(tr, env::qubit_refrigerator_preset(), 1.0), AperiodicTrace);
}

// ---- sweep ----

TEST(Sweep, BaselineOnlyEmitsBothBaselines) {
  auto cfg = cheap_config("qubit_refrigerator");
  cfg.output_dir = fresh_dir("baseline_only").string();
  SweepOptions opt;
  opt.baseline_only = true;
  const auto res = run_sweep(cfg, opt);
  ASSERT_EQ(res.points.size(), 2u);
  EXPECT_EQ(res.points[0].source, Source::Trapezoid);
  EXPECT_EQ(res.points[1].source, Source::Otto);
  EXPECT_GT(res.points[0].ret, 0.0);
  EXPECT_TRUE(std::isfinite(res.points[1].ret));
  for (const auto& p : res.points) EXPECT_EQ(p.config_hash, config_hash(cfg));
  const auto t = read_csv(fs::path(cfg.output_dir) / "pareto.csv");
  EXPECT_EQ(t.rows.size(), 2u);
  EXPECT_TRUE(fs::exists(fs::path(cfg.output_dir) / "runs" / "trapezoid_c1_s0" / "cycle.csv"));
  EXPECT_TRUE(fs::exists(fs::path(cfg.output_dir) / "metadata.json"));
}

TEST(Sweep, FiveSeedsGiveMeanAndSampleStd) {
  auto cfg = default_config("oscillator_engine");
  cfg.baseline.otto = false;
  cfg.seeds = {0, 1, 2, 3, 4};
  cfg.c_values = {1.0};
  cfg.output_dir = fresh_dir("five_seeds").string();
  SweepOptions opt;
  opt.run_override = [](const ExperimentConfig&, double, std::uint64_t seed, const fs::path&) {
    return fake_run(0.1 * static_cast<double>(seed + 1));
  };
  const auto res = run_sweep(cfg, opt);
  ASSERT_EQ(res.summaries.size(), 1u);
  const auto& s = res.summaries[0];
  EXPECT_EQ(s.n, 5);
  EXPECT_NEAR(s.mean_return, 0.3, 1e-15);
  EXPECT_NEAR(s.std_return, std::sqrt(0.025), 1e-15);
  EXPECT_EQ(s.best_seed, 4u);
  int best = 0;
  for (const auto& p : res.points) best += p.best;
  EXPECT_EQ(best, 1);
  const auto t = read_csv(fs::path(cfg.output_dir) / "summary.csv");
  EXPECT_EQ(t.get(0, "config_hash"), config_hash(cfg));
}

TEST(Sweep, ResumeSkipsCompletedRuns) {
  auto cfg = default_config("oscillator_engine");
  cfg.baseline.otto = false;
  cfg.seeds = {0, 1, 2};
  cfg.output_dir = fresh_dir("resume").string();
  int calls = 0;
  SweepOptions opt;
  opt.run_override = [&](const ExperimentConfig&, double, std::uint64_t seed, const fs::path&) {
    ++calls;
    return fake_run(1.0 + static_cast<double>(seed));
  };
  const auto first = run_sweep(cfg, opt);
  EXPECT_EQ(first.executed, 3);
  const std::string pareto = io::read_text(fs::path(cfg.output_dir) / "pareto.csv");
  const auto second = run_sweep(cfg, opt);
  EXPECT_EQ(second.executed, 0);
  EXPECT_EQ(second.skipped, 3);
  EXPECT_EQ(calls, 3);
  EXPECT_EQ(io::read_text(fs::path(cfg.output_dir) / "pareto.csv"), pareto);

  // A manifest from another config is not silently mixed in.
  cfg.env.gamma = 0.99;
  EXPECT_THROW(run_sweep(cfg, opt), ConfigError);
}

TEST(Sweep, NegativeRunsAreRerunOnceThenFlagged) {
  auto cfg = default_config("oscillator_engine");
  cfg.baseline.otto = false;
  cfg.seeds = {0, 1, 2};
  cfg.output_dir = fresh_dir("failed").string();
  SweepOptions opt;
  opt.run_override = [](const ExperimentConfig&, double, std::uint64_t seed, const fs::path&) {
    if (seed == 1) return fake_run(-0.5);     // rerun at 1001 succeeds
    if (seed == 2 || seed == 1002) return fake_run(-0.2);
    if (seed == 0) return fake_run(0.4);
    return fake_run(0.3);
  };
  const auto res = run_sweep(cfg, opt);
  ASSERT_EQ(res.records.size(), 3u);
  EXPECT_EQ(res.records[0].status, "done");
  EXPECT_EQ(res.records[0].attempts, 1);
  EXPECT_EQ(res.records[1].status, "done");
  EXPECT_EQ(res.records[1].attempts, 2);
  EXPECT_DOUBLE_EQ(res.records[1].ret, 0.3);
  EXPECT_EQ(res.records[2].status, "failed");
  EXPECT_EQ(res.records[2].attempts, 2);
  EXPECT_TRUE(res.points[2].failed);
  EXPECT_FALSE(res.points[1].failed);

  const auto m = read_manifest(fs::path(cfg.output_dir) / "manifest.csv");
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m[1].run_seed, 1001u);
}

TEST(Sweep, ErrorsAreRecordedAndTheSweepContinues) {
  auto cfg = default_config("oscillator_engine");
  cfg.baseline.otto = false;
  cfg.seeds = {0, 1, 2};
  cfg.output_dir = fresh_dir("errors").string();
  SweepOptions opt;
  opt.run_override = [](const ExperimentConfig&, double, std::uint64_t seed, const fs::path&) {
    if (seed == 1) throw std::runtime_error("solver blew up, badly");
    return fake_run(0.5);
  };
  const auto res = run_sweep(cfg, opt);
  EXPECT_EQ(res.points.size(), 2u);
  ASSERT_EQ(res.records.size(), 3u);
  EXPECT_EQ(res.records[1].status, "error");
  const auto m = read_manifest(fs::path(cfg.output_dir) / "manifest.csv");
  EXPECT_EQ(m[1].message, "solver blew up; badly");

  const auto rep = emit_plots(cfg.output_dir);
  ASSERT_EQ(rep.gaps.size(), 1u);
  EXPECT_NE(rep.gaps[0].find("solver blew up"), std::string::npos);
}

TEST(Sweep, ThreadedRunMatchesSerial) {
  auto cfg = default_config("oscillator_engine");
  cfg.baseline.otto = false;
  cfg.seeds = {0, 1, 2, 3};
  cfg.c_values = {1.0, 0.5};
  SweepOptions opt;
  opt.run_override = [](const ExperimentConfig&, double c, std::uint64_t seed, const fs::path&) {
    return fake_run(c * static_cast<double>(seed + 1) - 0.1);
  };
  cfg.output_dir = fresh_dir("serial").string();
  opt.threads = 1;
  run_sweep(cfg, opt);
  const std::string a = io::read_text(fs::path(cfg.output_dir) / "pareto.csv");
  cfg.output_dir = fresh_dir("threaded").string();
  opt.threads = 3;
  run_sweep(cfg, opt);
  EXPECT_EQ(io::read_text(fs::path(cfg.output_dir) / "pareto.csv"), a);
}

TEST(Sweep, DominatedRlPointsAreFlagged) {
  auto point = [](double c, std::uint64_t seed, double power, double eta, double ret, Source src) {
    ParetoPoint p;
    p.c = c;
    p.seed = seed;
    p.power = power;
    p.efficiency = eta;
    p.ret = ret;
    p.source = src;
    return p;
  };
  std::vector<ParetoPoint> pts{point(1.0, 0, 1.0, 0.5, 0.9, Source::RL),
                               point(1.0, 1, 0.5, 0.4, 0.4, Source::RL),    // dominated by the first
                               point(0.5, 2, 0.3, 0.9, 0.2, Source::RL),    // trade-off, not dominated
                               point(1.0, 0, 0.1, 0.1, 0.05, Source::Otto)};  // baselines are not compared
  annotate_points(pts);
  EXPECT_FALSE(pts[0].dominated);
  EXPECT_TRUE(pts[1].dominated);
  EXPECT_FALSE(pts[2].dominated);
  EXPECT_FALSE(pts[3].dominated);
  EXPECT_TRUE(pts[0].best);
  EXPECT_FALSE(pts[1].best);
  EXPECT_TRUE(pts[2].best);
}

TEST(Sweep, TinyTrainingRunEndToEnd) {
  auto cfg = tiny_rl_config("qubit_refrigerator");
  cfg.output_dir = fresh_dir("tiny_rl").string();
  const auto res = run_sweep(cfg, {});
  ASSERT_EQ(res.records.size(), 1u);
  EXPECT_NE(res.records[0].status, "error") << res.records[0].message;
  const fs::path run = fs::path(cfg.output_dir) / "runs" / "rl_c1_s0";
  for (const char* f : {"config.cfg", "train_log.csv", "checkpoint.bin", "cycle_trace.csv"})
    EXPECT_TRUE(fs::exists(run / f)) << f;
  EXPECT_EQ(format_config(load_config(run / "config.cfg")), format_config(cfg));

  const auto tr = extract_cycle(run / "checkpoint.bin", cfg, 1.0);
  EXPECT_EQ(io::read_text(run / "cycle_trace.csv"), [&] {
    std::ostringstream os;
    write_trace_csv(os, tr);
    return os.str();
  }());

  const auto rep = emit_plots(cfg.output_dir);
  EXPECT_FALSE(rep.no_data);
  EXPECT_EQ(io::read_text(fs::path(cfg.output_dir) / "plots" / "return_vs_step_rl_c1_s0.csv"),
            io::read_text(run / "train_log.csv"));
  EXPECT_TRUE(fs::exists(fs::path(cfg.output_dir) / "plots" / "cycle_rl_c1_s0.svg"));
}

// ---- plots ----

TEST(Plots, EmptyDirectoryGivesNoData) {
  const auto dir = fresh_dir("plots_empty");
  const auto rep = emit_plots(dir);
  EXPECT_TRUE(rep.no_data);
  EXPECT_TRUE(fs::exists(dir / "plots" / "NO_DATA"));
}

TEST(Plots, ScatterLabelsAllSources) {
  const auto dir = fresh_dir("plots_sources");
  io::write_text_atomic(dir / "pareto.csv",
                        std::string(kParetoCsvHeader) +
                            "\n1,0,rl,2,0.3,1,0.5,0,0,1,h\n1,0,trapezoid,1,0.2,1,0.1,0,0,0,h\n"
                            "1,0,otto,0.5,0.1,1,0.05,0,0,0,h\n0.5,1,rl,nan,0.1,1,0.05,0,0,0,h\n");
  const auto rep = emit_plots(dir);
  ASSERT_FALSE(rep.no_data);
  const std::string svg = io::read_text(dir / "plots" / "pareto_scatter.svg");
  for (const char* s : {">rl<", ">trapezoid<", ">otto<"}) EXPECT_NE(svg.find(s), std::string::npos) << s;
  EXPECT_EQ(rep.gaps.size(), 1u);
  EXPECT_TRUE(fs::exists(dir / "plots" / "gaps.txt"));

  const auto only = emit_plots(dir, {std::uint64_t{1}});
  EXPECT_FALSE(only.no_data);
  EXPECT_EQ(read_csv(dir / "plots" / "pareto_scatter.csv").rows.size(), 1u);
  EXPECT_TRUE(emit_plots(dir, {std::uint64_t{9}}).no_data);
}

// ---- verify ----

TEST(Verify, FastSuitePasses) {
  VerifyOptions o;
  o.fast = true;
  const auto r = verify(o);
  EXPECT_GE(r.size(), 10u);
  for (const auto& c : r) EXPECT_TRUE(c.passed) << c.suite << '/' << c.name << ": " << c.detail;
}

TEST(Verify, SigmaSignMutationIsCaught) {
  VerifyOptions o;
  o.fast = true;
  o.suites = {"physics"};
  o.sigma_sign_error = true;
  const auto r = verify(o);
  int failed = 0;
  for (const auto& c : r) {
    failed += !c.passed;
    if (c.name == "second_law") {
      EXPECT_FALSE(c.passed);
    }
  }
  EXPECT_EQ(failed, 1);
}

TEST(Verify, UnknownSuiteIsAnError) {
  VerifyOptions o;
  o.suites = {"astrology"};
  EXPECT_THROW(verify(o), std::invalid_argument);
}
