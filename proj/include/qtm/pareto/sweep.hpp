#pragma once

#include "qtm/baselines/optimize.hpp"
#include "qtm/common/atomic_file.hpp"
#include "qtm/pareto/config.hpp"
#include "qtm/pareto/csv.hpp"
#include "qtm/pareto/extract.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace qtm::pareto {

namespace fs = std::filesystem;

enum class Source { RL, Trapezoid, Otto };

inline const char* to_string(Source s) {
  switch (s) {
    case Source::RL: return "rl";
    case Source::Trapezoid: return "trapezoid";
    case Source::Otto: return "otto";
  }
  return "?";
}

inline Source parse_source(const std::string& s) {
  if (s == "rl") return Source::RL;
  if (s == "trapezoid") return Source::Trapezoid;
  if (s == "otto") return Source::Otto;
  throw std::invalid_argument("unknown source '" + s + "'");
}

/// One (power, efficiency) point; power and entropy production in units of
/// P0 and Sigma0. Efficiency is 0 when the power is not positive.
struct ParetoPoint {
  double c = 0.0;
  std::uint64_t seed = 0;
  double power = 0.0;
  double efficiency = 0.0;
  double sigma = 0.0;
  double ret = 0.0;
  Source source = Source::RL;
  bool failed = false;
  bool dominated = false;
  bool best = false;  ///< largest return among the RL runs at this c
  std::string config_hash;
};

/// Manifest entry: one completed (source, c, seed) job.
struct RunRecord {
  Source source = Source::RL;
  double c = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t run_seed = 0;  ///< seed actually trained; differs after a rerun
  std::string status;          ///< done | failed | error
  int attempts = 1;
  double power = 0.0;
  double efficiency = 0.0;
  double sigma = 0.0;
  double ret = 0.0;
  long period = -1;  ///< steps; -1 when aperiodic or not applicable
  double train_return = 0.0;
  std::string config_hash;
  std::string message;
};

inline const char* kManifestHeader =
    "source,c,seed,run_seed,status,attempts,power,efficiency,sigma,return,period,train_return,config_hash,message";

inline std::string manifest_line(const RunRecord& r) {
  std::ostringstream os;
  os.precision(17);
  std::string msg = r.message;
  std::replace(msg.begin(), msg.end(), ',', ';');
  std::replace(msg.begin(), msg.end(), '\n', ' ');
  os << to_string(r.source) << ',' << r.c << ',' << r.seed << ',' << r.run_seed << ',' << r.status << ','
     << r.attempts << ',' << r.power << ',' << r.efficiency << ',' << r.sigma << ',' << r.ret << ',' << r.period
     << ',' << r.train_return << ',' << r.config_hash << ',' << msg;
  return os.str();
}

inline std::vector<RunRecord> read_manifest(const fs::path& path) {
  std::vector<RunRecord> out;
  if (!fs::exists(path)) return out;
  const CsvTable t = read_csv(path);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    RunRecord r;
    r.source = parse_source(t.get(i, "source"));
    r.c = t.number(i, "c");
    r.seed = static_cast<std::uint64_t>(std::stoull(t.get(i, "seed")));
    r.run_seed = static_cast<std::uint64_t>(std::stoull(t.get(i, "run_seed")));
    r.status = t.get(i, "status");
    r.attempts = std::stoi(t.get(i, "attempts"));
    r.power = t.number(i, "power");
    r.efficiency = t.number(i, "efficiency");
    r.sigma = t.number(i, "sigma");
    r.ret = t.number(i, "return");
    r.period = std::stol(t.get(i, "period"));
    r.train_return = t.number(i, "train_return");
    r.config_hash = t.get(i, "config_hash");
    r.message = t.get(i, "message");
    out.push_back(r);
  }
  return out;
}

inline void write_manifest(const fs::path& path, const std::vector<RunRecord>& recs) {
  io::write_file_atomic(path, [&](std::ostream& os) {
    os << kManifestHeader << '\n';
    for (const auto& r : recs) os << manifest_line(r) << '\n';
  });
}

struct CSummary {
  double c = 0.0;
  Source source = Source::RL;
  int n = 0;
  double mean_return = 0.0;
  double std_return = 0.0;  ///< sample standard deviation; 0 for a single run
  std::uint64_t best_seed = 0;
  double best_return = 0.0;
};

struct SweepOptions {
  bool baseline_only = false;
  int threads = 1;
  /// Replaces training for tests; receives the run config, c, the trained
  /// seed and the run directory.
  std::function<RunRecord(const ExperimentConfig&, double, std::uint64_t, const fs::path&)> run_override;
};

struct SweepResult {
  std::vector<ParetoPoint> points;
  std::vector<CSummary> summaries;
  std::vector<RunRecord> records;
  int skipped = 0;  ///< jobs taken from the manifest
  int executed = 0;
  std::string config_hash;
};

/// Thread count from QTM_THREADS, defaulting to 1.
inline int threads_from_env() {
  const char* v = std::getenv("QTM_THREADS");
  if (!v || !*v) return 1;
  const int n = std::atoi(v);
  return n > 0 ? n : 1;
}

inline std::string run_name(Source s, double c, std::uint64_t seed) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s_c%.6g_s%llu", to_string(s), c, static_cast<unsigned long long>(seed));
  return buf;
}

/// Fills power, efficiency, sigma and return from steady-state metrics.
inline void set_metrics(RunRecord& r, const env::EnvConfig& cfg, const baselines::CycleMetrics& m) {
  r.power = m.power / cfg.P0;
  r.sigma = m.sigma / cfg.Sigma0;
  r.efficiency = std::isnan(m.efficiency) ? 0.0 : m.efficiency;
  r.ret = m.ret;
}

/// Trains one agent, extracts its deterministic cycle and evaluates it.
/// Writes the training log, checkpoint, trace and resolved config to `dir`.
inline RunRecord train_and_evaluate(const ExperimentConfig& cfg, double c, std::uint64_t seed, const fs::path& dir) {
  fs::create_directories(dir);
  io::write_text_atomic(dir / "config.cfg", format_config(cfg));
  RunRecord rec;
  rec.source = Source::RL;
  rec.c = c;
  rec.run_seed = seed;
  sac::MachineTask task(cfg.env);
  sac::Trainer trainer(cfg.agent_for(c, seed), task);
  trainer.set_diagnostic_path(dir / "diverged.bin");
  {
    std::ostringstream log;
    trainer.set_log(&log);
    trainer.run(cfg.agent.total_steps);
    io::write_text_atomic(dir / "train_log.csv", log.str());
  }
  trainer.save_checkpoint(dir / "checkpoint.bin");
  rec.train_return = trainer.average_return();

  const CycleTrace tr = extract_cycle(agent_policy(trainer.agent()), cfg.env, cfg.extract);
  io::write_file_atomic(dir / "cycle_trace.csv", [&](std::ostream& os) { write_trace_csv(os, tr); });
  if (tr.period) {
    rec.period = static_cast<long>(*tr.period);
    auto opt = cfg.eval_options();
    opt.throw_on_nonconvergence = false;
    const auto m = baselines::evaluate_steps(cfg.env, tr.period_steps(), c, opt);
    set_metrics(rec, cfg.env, m);
    if (!m.converged) rec.message = "steady state not reached";
  } else {
    // Aperiodic: window averages only.
    rec.power = tr.mean_power;
    rec.sigma = tr.mean_sigma;
    rec.ret = env::combined_reward(c, tr.mean_power, tr.mean_sigma);
    const double bh = cfg.env.beta(sim::Bath::Hot), bc = cfg.env.beta(sim::Bath::Cold);
    rec.efficiency = tr.mean_power > 0.0
                         ? baselines::efficiency_from_power_entropy(tr.mean_power * cfg.env.P0,
                                                                    tr.mean_sigma * cfg.env.Sigma0, cfg.env.kind, bh, bc)
                         : 0.0;
    rec.message = "aperiodic; window averages";
  }
  return rec;
}

namespace detail {

inline RunRecord run_baseline(const ExperimentConfig& cfg, Source s, double c, const fs::path& dir) {
  RunRecord rec;
  rec.source = s;
  rec.c = c;
  fs::create_directories(dir);
  baselines::CycleSpec spec;
  baselines::CycleMetrics m;
  if (s == Source::Trapezoid) {
    auto opt = cfg.baseline.trap;
    opt.eval = cfg.eval_options();
    const auto r = baselines::optimize_trapezoid(cfg.env, c, opt);
    spec = baselines::CycleSpec::trapezoid(r.omega, opt.smoothing);
    m = r.metrics;
  } else {
    auto opt = cfg.baseline.otto_opt;
    opt.eval = cfg.eval_options();
    const auto r = baselines::optimize_otto(cfg.env, c, opt);
    const double uh = std::isnan(opt.u_hot) ? cfg.env.u_max : opt.u_hot;
    const double uc = std::isnan(opt.u_cold) ? cfg.env.u_min : opt.u_cold;
    spec = baselines::CycleSpec::otto(r.durations, uh, uc, baselines::otto_baths(cfg.env));
    m = r.metrics;
  }
  set_metrics(rec, cfg.env, m);
  rec.period = -1;
  io::write_file_atomic(dir / "cycle.csv", [&](std::ostream& os) {
    os << baselines::kCycleCsvHeader << '\n';
    baselines::write_cycle_row(os, c, spec, m);
  });
  return rec;
}

inline double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace detail

/// Flags RL points strictly dominated in (power, efficiency) by another RL
/// point, and marks the best-return RL run at each c.
inline void annotate_points(std::vector<ParetoPoint>& pts) {
  for (auto& p : pts) {
    if (p.source != Source::RL) continue;
    p.dominated = false;
    for (const auto& q : pts) {
      if (&q == &p || q.source != Source::RL) continue;
      if (q.power >= p.power && q.efficiency >= p.efficiency && (q.power > p.power || q.efficiency > p.efficiency)) {
        p.dominated = true;
        break;
      }
    }
  }
  std::map<double, ParetoPoint*> best;
  for (auto& p : pts) {
    if (p.source != Source::RL) continue;
    p.best = false;
    auto& b = best[p.c];
    if (!b || p.ret > b->ret) b = &p;
  }
  for (auto& [c, p] : best) p->best = true;
}

inline std::vector<CSummary> summarize(const std::vector<ParetoPoint>& pts) {
  std::map<std::pair<double, int>, std::vector<const ParetoPoint*>> groups;
  for (const auto& p : pts) groups[{p.c, static_cast<int>(p.source)}].push_back(&p);
  std::vector<CSummary> out;
  for (const auto& [key, g] : groups) {
    CSummary s;
    s.c = key.first;
    s.source = static_cast<Source>(key.second);
    s.n = static_cast<int>(g.size());
    std::vector<double> r;
    s.best_return = -std::numeric_limits<double>::infinity();
    for (const auto* p : g) {
      r.push_back(p->ret);
      s.mean_return += p->ret;
      if (p->ret > s.best_return) {
        s.best_return = p->ret;
        s.best_seed = p->seed;
      }
    }
    s.mean_return /= static_cast<double>(s.n);
    s.std_return = detail::sample_std(r);
    out.push_back(s);
  }
  return out;
}

inline const char* kParetoCsvHeader = "c,seed,source,power,efficiency,sigma,return,failed,dominated,best,config_hash";
inline const char* kSummaryCsvHeader = "c,source,n,mean_return,std_return,best_seed,best_return,config_hash";

inline void write_pareto_csv(std::ostream& os, const std::vector<ParetoPoint>& pts) {
  const auto old = os.precision(17);
  os << kParetoCsvHeader << '\n';
  for (const auto& p : pts)
    os << p.c << ',' << p.seed << ',' << to_string(p.source) << ',' << p.power << ',' << p.efficiency << ','
       << p.sigma << ',' << p.ret << ',' << p.failed << ',' << p.dominated << ',' << p.best << ',' << p.config_hash
       << '\n';
  os.precision(old);
}

inline void write_summary_csv(std::ostream& os, const std::vector<CSummary>& s, const std::string& hash) {
  const auto old = os.precision(17);
  os << kSummaryCsvHeader << '\n';
  for (const auto& r : s)
    os << r.c << ',' << to_string(r.source) << ',' << r.n << ',' << r.mean_return << ',' << r.std_return << ','
       << r.best_seed << ',' << r.best_return << ',' << hash << '\n';
  os.precision(old);
}

inline ParetoPoint to_point(const RunRecord& r) {
  ParetoPoint p;
  p.c = r.c;
  p.seed = r.seed;
  p.power = r.power;
  p.efficiency = r.efficiency;
  p.sigma = r.sigma;
  p.ret = r.ret;
  p.source = r.source;
  p.failed = r.status == "failed";
  p.config_hash = r.config_hash;
  return p;
}

/// Runs every (c, seed) job not already in the output directory's manifest:
/// RL training per seed (unless baseline-only) and the baselines once per c.
/// Errors are recorded and the sweep continues. A run whose final return is
/// negative is retrained once on seed + rerun_seed_offset and flagged failed
/// if that is negative too.
inline SweepResult run_sweep(const ExperimentConfig& cfg, const SweepOptions& opt = {}) {
  validate(cfg);
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  const std::string hash = config_hash(cfg);
  const fs::path manifest_path = out / "manifest.csv";

  SweepResult res;
  res.config_hash = hash;
  std::vector<RunRecord> records = read_manifest(manifest_path);
  for (const auto& r : records)
    if (r.config_hash != hash)
      throw ConfigError("manifest in " + out.string() + " was written by config " + r.config_hash + ", current is " +
                        hash);
  io::write_text_atomic(out / "config.cfg", format_config(cfg));

  struct Job {
    Source source;
    double c;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  auto done = [&](Source s, double c, std::uint64_t seed) {
    return std::any_of(records.begin(), records.end(),
                       [&](const RunRecord& r) { return r.source == s && r.c == c && r.seed == seed; });
  };
  for (double c : cfg.c_values) {
    for (Source s : {Source::Trapezoid, Source::Otto}) {
      if ((s == Source::Trapezoid && !cfg.baseline.trapezoid) || (s == Source::Otto && !cfg.baseline.otto)) continue;
      if (done(s, c, 0))
        ++res.skipped;
      else
        jobs.push_back({s, c, 0});
    }
    if (opt.baseline_only) continue;
    for (std::uint64_t seed : cfg.seeds) {
      if (done(Source::RL, c, seed))
        ++res.skipped;
      else
        jobs.push_back({Source::RL, c, seed});
    }
  }

  auto train = opt.run_override ? opt.run_override : train_and_evaluate;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const Job j = jobs[i];
      RunRecord rec;
      try {
        if (j.source == Source::RL) {
          rec = train(cfg, j.c, j.seed, out / "runs" / run_name(Source::RL, j.c, j.seed));
          rec.run_seed = j.seed;
          rec.attempts = 1;
          if (rec.ret < 0.0 && cfg.rerun_failed) {
            const std::uint64_t s2 = j.seed + cfg.rerun_seed_offset;
            rec = train(cfg, j.c, s2, out / "runs" / run_name(Source::RL, j.c, s2));
            rec.run_seed = s2;
            rec.attempts = 2;
          }
          rec.status = rec.ret < 0.0 ? "failed" : "done";
        } else {
          rec = detail::run_baseline(cfg, j.source, j.c, out / "runs" / run_name(j.source, j.c, 0));
          rec.status = "done";
        }
      } catch (const std::exception& e) {
        rec = RunRecord{};
        rec.status = "error";
        rec.message = e.what();
      }
      rec.source = j.source;
      rec.c = j.c;
      rec.seed = j.seed;
      if (j.source != Source::RL) rec.run_seed = 0;
      rec.config_hash = hash;
      std::lock_guard<std::mutex> lock(mu);
      records.push_back(rec);
      ++res.executed;
      write_manifest(manifest_path, records);
    }
  };
  const int n_threads = std::max(1, std::min<int>(opt.threads, static_cast<int>(jobs.size())));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Deterministic order regardless of completion order.
  std::stable_sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
    if (a.c != b.c) return a.c > b.c;
    if (a.source != b.source) return static_cast<int>(a.source) < static_cast<int>(b.source);
    return a.seed < b.seed;
  });
  write_manifest(manifest_path, records);
  res.records = records;
  for (const auto& r : records)
    if (r.status != "error") res.points.push_back(to_point(r));
  annotate_points(res.points);
  res.summaries = summarize(res.points);

  io::write_file_atomic(out / "pareto.csv", [&](std::ostream& os) { write_pareto_csv(os, res.points); });
  io::write_file_atomic(out / "summary.csv", [&](std::ostream& os) { write_summary_csv(os, res.summaries, hash); });
  nlohmann::json meta;
  meta["config_hash"] = hash;
  meta["machine"] = cfg.machine;
  meta["jobs_executed"] = res.executed;
  meta["jobs_skipped"] = res.skipped;
  meta["points"] = res.points.size();
  int errors = 0, failed = 0;
  for (const auto& r : records) {
    errors += r.status == "error";
    failed += r.status == "failed";
  }
  meta["errors"] = errors;
  meta["failed"] = failed;
  meta["baseline_only"] = opt.baseline_only;
  io::write_text_atomic(out / "metadata.json", meta.dump(2) + "\n");
  return res;
}

}  // namespace qtm::pareto
