// Command-line front end: data generation, training, sampling, evaluation,
// conditional sampling, and entropy-bound tables over the core library.
//
// Exit codes: 0 success, 2 usage error, 1 runtime failure.

#include <fcntl.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "diffusion/bound.hpp"
#include "diffusion/checkpoint.hpp"
#include "diffusion/conditioning.hpp"
#include "diffusion/config.hpp"
#include "diffusion/datasets.hpp"
#include "diffusion/entropy_bounds.hpp"
#include "diffusion/likelihood.hpp"
#include "diffusion/sampling.hpp"
#include "diffusion/textio.hpp"
#include "diffusion/train.hpp"

namespace fs = std::filesystem;
using namespace diffusion;

namespace {

constexpr double kLn2 = 0.6931471805599453094;

ProcessKind kind_of(const Dataset& ds) {
  return ds.kind == DataKind::continuous ? ProcessKind::gaussian : ProcessKind::binomial;
}

// Exclusive lock on a run directory; released on destruction.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : path_(dir / ".lock") {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0)
      throw std::runtime_error("run directory is locked (remove " + path_.string() +
                               " if no other run is active)");
    ::close(fd);
  }
  ~RunLock() { ::unlink(path_.c_str()); }

 private:
  fs::path path_;
};

void check_kind(const Checkpoint& ckpt, const Dataset& ds) {
  if (ckpt.spec.kind() != kind_of(ds))
    throw std::runtime_error("kind mismatch: checkpoint is " +
                             std::string(ckpt.spec.kind() == ProcessKind::gaussian
                                             ? "gaussian"
                                             : "binomial") +
                             " but dataset is " +
                             (ds.kind == DataKind::continuous ? "continuous" : "binary"));
  if (ckpt.spec.dim != ds.values.cols)
    throw std::runtime_error("dimension mismatch between checkpoint and dataset");
}

void write_summary(const fs::path& path, const std::map<std::string, std::string>& kv) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
}

int cmd_gen_data(const std::string& kind, int n, int holdout, std::uint64_t seed,
                 const fs::path& out) {
  Rng rng(seed);
  auto generate = [&](int count, Rng& r) {
    if (kind == "swiss-roll") return swiss_roll(count, r);
    if (kind == "heartbeat") return heartbeat(count, r);
    throw std::runtime_error("--kind must be swiss-roll or heartbeat");
  };

  if (holdout <= 0) {
    write_dataset(out, generate(n, rng));
    std::cout << "wrote " << n << " rows to " << out.string() << "\n";
    return 0;
  }

  // One generation, one standardization constant, two files.
  Dataset all = generate(n + holdout, rng);
  Dataset train = all, hold = all;
  train.values = Mat(n, all.values.cols);
  hold.values = Mat(holdout, all.values.cols);
  for (int i = 0; i < n; ++i) train.values.set_row(i, all.values.row_vector(i));
  for (int i = 0; i < holdout; ++i) hold.values.set_row(i, all.values.row_vector(n + i));
  fs::path hold_path = out;
  hold_path.replace_filename(out.stem().string() + "_holdout" + out.extension().string());
  write_dataset(out, train);
  write_dataset(hold_path, hold);
  std::cout << "wrote " << n << " rows to " << out.string() << " and " << holdout << " rows to "
            << hold_path.string() << "\n";
  return 0;
}

int cmd_train(const fs::path& config_path) {
  const RunConfig cfg = parse_run_config(config_path);
  const Dataset ds = read_dataset(cfg.data_path);
  const ProcessKind kind = kind_of(ds);

  DiffusionSpec spec{make_schedule(kind, cfg.steps_T, cfg.beta1, cfg.schedule_mode),
                     ds.values.cols};
  Rng model_rng(cfg.train.seed);
  auto model = make_model(spec, cfg.model, model_rng, &ds.values);

  fs::create_directories(cfg.out_dir);
  RunLock lock(cfg.out_dir);

  std::ofstream log(cfg.out_dir / "train_log.csv");
  log << "step,wall_seconds,k_bits,grad_norm\n";
  TrainConfig train_cfg = cfg.train;
  train_cfg.on_log = [&log](const TrainLogRow& row) {
    log << row.step << "," << format_double(row.wall_seconds) << ","
        << format_double(row.bound_bits) << "," << format_double(row.grad_norm) << "\n";
    log.flush();
  };
  const TrainResult res = train(spec, *model, ds.values, train_cfg);

  Checkpoint ckpt;
  ckpt.spec = spec;
  ckpt.model_desc = cfg.model;
  ckpt.params = model->params();
  ckpt.train_step = static_cast<std::uint64_t>(res.steps_done);
  ckpt.seed = cfg.train.seed;
  ckpt.standardization = ds.factor;
  save_checkpoint(cfg.out_dir / (res.aborted ? "aborted.ckpt" : "final.ckpt"), ckpt);

  if (res.aborted) {
    std::cerr << "training diverged (non-finite bound); last good state saved to aborted.ckpt\n";
    return 1;
  }
  if (!res.log.empty())
    std::cout << "final bound " << res.log.back().bound_bits << " bits after "
              << res.steps_done << " steps\n";
  std::cout << "checkpoint written to " << (cfg.out_dir / "final.ckpt").string() << "\n";
  return 0;
}

int cmd_sample(const fs::path& ckpt_path, int n, std::uint64_t seed, const fs::path& out,
               bool frames) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  auto model = model_from_checkpoint(ckpt);
  Rng rng(seed);

  fs::path frames_dir;
  FrameSink sink;
  if (frames) {
    frames_dir = out;
    frames_dir += ".frames";
    fs::create_directories(frames_dir);
    sink = [&](int t, const Mat& states) {
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%05d.txt", t);
      write_matrix(frames_dir / name, states,
                   {{"t", std::to_string(t)}, {"n", std::to_string(states.rows)}});
    };
  }

  const Mat samples = sample_reverse(ckpt.spec, *model, n, rng, sink);
  write_matrix(out, samples,
               {{"kind", ckpt.spec.kind() == ProcessKind::gaussian ? "continuous" : "binary"},
                {"n", std::to_string(n)},
                {"d", std::to_string(samples.cols)},
                {"seed", std::to_string(seed)},
                {"factor", format_double(ckpt.standardization)}});
  std::cout << "wrote " << n << " samples to " << out.string() << "\n";
  return 0;
}

int cmd_evaluate(const fs::path& ckpt_path, const fs::path& data_path, int n_traj, int limit,
                 int t_subsample, std::uint64_t seed, const fs::path& out,
                 const fs::path& breakdown_path) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Dataset ds = read_dataset(data_path);
  check_kind(ckpt, ds);
  auto model = model_from_checkpoint(ckpt);
  Rng rng(seed);

  const BoundBreakdown bb = bound_terms(ckpt.spec, *model, ds.values, rng, t_subsample);
  const double null_bits = null_baseline_bits(ckpt.spec, ds.values);

  const int n_ll = limit > 0 ? std::min(limit, ds.values.rows) : ds.values.rows;
  double ll_mean = 0.0, ll_m2 = 0.0;
  for (int i = 0; i < n_ll; ++i) {
    Rng r = rng.split(1000 + static_cast<std::uint64_t>(i));
    const LogLikelihoodEstimate est =
        estimate_log_likelihood(ckpt.spec, *model, ds.values.row_vector(i), n_traj, r);
    const double bits = est.log_nats / kLn2;
    const double delta = bits - ll_mean;
    ll_mean += delta / (i + 1);
    ll_m2 += delta * (bits - ll_mean);
  }
  const double ll_se = n_ll > 1 ? std::sqrt(ll_m2 / (n_ll - 1.0) / n_ll) : 0.0;

  std::map<std::string, std::string> kv;
  kv["kind"] = ckpt.spec.kind() == ProcessKind::gaussian ? "gaussian" : "binomial";
  kv["n"] = std::to_string(ds.values.rows);
  kv["d"] = std::to_string(ds.values.cols);
  kv["T"] = std::to_string(ckpt.spec.steps());
  kv["k_bits"] = format_double(bb.total_bits);
  kv["k_stderr_bits"] = format_double(bb.stderr_nats / kLn2);
  kv["null_bits"] = format_double(null_bits);
  kv["k_minus_null_bits"] = format_double(bb.total_bits - null_bits);
  kv["loglik_bits"] = format_double(ll_mean);
  kv["loglik_stderr_bits"] = format_double(ll_se);
  kv["loglik_n_traj"] = std::to_string(n_traj);
  kv["loglik_data_used"] = std::to_string(n_ll);
  write_summary(out, kv);

  if (!breakdown_path.empty()) {
    Mat table(static_cast<int>(bb.ts.size()), 2);
    for (std::size_t i = 0; i < bb.ts.size(); ++i) {
      table(static_cast<int>(i), 0) = bb.ts[i];
      table(static_cast<int>(i), 1) = bb.kl_nats[i] / kLn2;
    }
    write_matrix(breakdown_path, table, {{"columns", "t,kl_bits"}});
  }

  std::cout << "bound " << bb.total_bits << " bits (stderr " << bb.stderr_nats / kLn2
            << "), importance log likelihood " << ll_mean << " bits (stderr " << ll_se
            << "), bound - null " << bb.total_bits - null_bits << " bits\n";
  if (bb.total_bits > ll_mean + 4.0 * (bb.stderr_nats / kLn2 + ll_se))
    std::cerr << "warning: bound exceeds the likelihood estimate beyond error bars\n";
  return 0;
}

int cmd_conditional(const fs::path& ckpt_path, const fs::path& mask_path,
                    const fs::path& obs_path, double obs_var, const std::string& r_sched,
                    int n, std::uint64_t seed, const fs::path& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  auto model = model_from_checkpoint(ckpt);
  const int d = ckpt.spec.dim;

  auto read_row = [&](const fs::path& p) {
    const MatrixFile mf = read_matrix(p);
    if (mf.values.rows != 1 || mf.values.cols != d)
      throw std::runtime_error("expected a 1x" + std::to_string(d) + " matrix in " + p.string());
    return mf.values.row_vector(0);
  };

  ExternalFactor factor;
  if (!mask_path.empty()) {
    const std::vector<double> mask_row = read_row(mask_path);
    std::vector<std::uint8_t> mask(d);
    for (int j = 0; j < d; ++j) {
      if (mask_row[j] != 0.0 && mask_row[j] != 1.0)
        throw std::runtime_error("mask entries must be 0 or 1");
      mask[j] = mask_row[j] != 0.0;
    }
    factor = ExternalFactor::coordinate_mask_factor(std::move(mask), read_row(obs_path));
  } else {
    factor = ExternalFactor::gaussian_observation_factor(read_row(obs_path), obs_var);
  }

  const RSchedule sched = r_sched == "annealed" ? RSchedule::annealed : RSchedule::constant;
  Rng rng(seed);
  const Mat samples = sample_conditional(ckpt.spec, *model, factor, sched, n, rng);
  write_matrix(out, samples,
               {{"kind", ckpt.spec.kind() == ProcessKind::gaussian ? "continuous" : "binary"},
                {"n", std::to_string(n)},
                {"d", std::to_string(d)},
                {"seed", std::to_string(seed)}});
  std::cout << "wrote " << n << " conditional samples to " << out.string() << "\n";
  return 0;
}

int cmd_bounds(const fs::path& ckpt_path, const fs::path& data_path, const fs::path& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Dataset ds = read_dataset(data_path);
  check_kind(ckpt, ds);

  const int T = ckpt.spec.steps();
  Mat table(T - 1, 3);
  for (int t = 2; t <= T; ++t) {
    const EntropyBoundReport rep = entropy_bounds(ckpt.spec, t, ds.values);
    table(t - 2, 0) = t;
    table(t - 2, 1) = rep.lower_nats;
    table(t - 2, 2) = rep.upper_nats;
  }
  write_matrix(out, table, {{"columns", "t,lower_nats,upper_nats"}});
  std::cout << "wrote entropy bounds for t in [2," << T << "] to " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diffusion probabilistic modeling toolkit"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate a toy dataset");
  std::string gen_kind;
  int gen_n = 0, gen_holdout = 0;
  std::uint64_t gen_seed = 1;
  fs::path gen_out;
  gen->add_option("--kind", gen_kind, "swiss-roll | heartbeat")
      ->required()
      ->check(CLI::IsMember({"swiss-roll", "heartbeat"}));
  gen->add_option("--n", gen_n, "number of rows")->required()->check(CLI::PositiveNumber);
  gen->add_option("--holdout", gen_holdout, "extra holdout rows written alongside");
  gen->add_option("--seed", gen_seed, "rng seed");
  gen->add_option("--out", gen_out, "output file")->required();

  auto* tr = app.add_subcommand("train", "train a model from a config file");
  fs::path tr_config;
  tr->add_option("--config", tr_config, "key=value run config")->required();

  auto* sm = app.add_subcommand("sample", "draw samples from a checkpoint");
  fs::path sm_ckpt, sm_out;
  int sm_n = 0;
  std::uint64_t sm_seed = 1;
  bool sm_frames = false;
  sm->add_option("--ckpt", sm_ckpt, "checkpoint file")->required();
  sm->add_option("--n", sm_n, "number of samples")->required()->check(CLI::PositiveNumber);
  sm->add_option("--seed", sm_seed, "rng seed");
  sm->add_option("--out", sm_out, "output file")->required();
  sm->add_flag("--frames", sm_frames, "also write every intermediate state");

  auto* ev = app.add_subcommand("evaluate", "bound breakdown and importance log likelihood");
  fs::path ev_ckpt, ev_data, ev_out, ev_breakdown;
  int ev_ntraj = 16, ev_limit = 256, ev_tsub = 0;
  std::uint64_t ev_seed = 1;
  ev->add_option("--ckpt", ev_ckpt)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--n-traj", ev_ntraj, "forward trajectories per datum");
  ev->add_option("--limit", ev_limit, "data rows for the likelihood estimate (0 = all)");
  ev->add_option("--t-subsample", ev_tsub, "time indices per bound evaluation (0 = full sum)");
  ev->add_option("--seed", ev_seed);
  ev->add_option("--out", ev_out, "summary file")->required();
  ev->add_option("--breakdown", ev_breakdown, "optional per-t divergence table");

  auto* cd = app.add_subcommand("conditional", "sample with an external factor");
  fs::path cd_ckpt, cd_mask, cd_obs, cd_out;
  double cd_obs_var = 0.0;
  int cd_n = 0;
  std::uint64_t cd_seed = 1;
  std::string cd_sched = "constant";
  cd->add_option("--ckpt", cd_ckpt)->required();
  cd->add_option("--mask", cd_mask, "0/1 row marking observed coordinates");
  cd->add_option("--obs", cd_obs, "observed values row")->required();
  cd->add_option("--obs-var", cd_obs_var, "gaussian observation noise variance");
  cd->add_option("--r-schedule", cd_sched, "constant | annealed")
      ->check(CLI::IsMember({"constant", "annealed"}));
  cd->add_option("--n", cd_n, "number of samples")->required()->check(CLI::PositiveNumber);
  cd->add_option("--seed", cd_seed);
  cd->add_option("--out", cd_out)->required();

  auto* bd = app.add_subcommand("bounds", "per-step entropy bound table");
  fs::path bd_ckpt, bd_data, bd_out;
  bd->add_option("--ckpt", bd_ckpt)->required();
  bd->add_option("--data", bd_data)->required();
  bd->add_option("--out", bd_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) return cmd_gen_data(gen_kind, gen_n, gen_holdout, gen_seed, gen_out);
    if (*tr) return cmd_train(tr_config);
    if (*sm) return cmd_sample(sm_ckpt, sm_n, sm_seed, sm_out, sm_frames);
    if (*ev)
      return cmd_evaluate(ev_ckpt, ev_data, ev_ntraj, ev_limit, ev_tsub, ev_seed, ev_out,
                          ev_breakdown);
    if (*cd) {
      if (cd_mask.empty() && !(cd_obs_var > 0.0))
        throw std::runtime_error("conditional needs either --mask or --obs-var > 0");
      return cmd_conditional(cd_ckpt, cd_mask, cd_obs, cd_obs_var, cd_sched, cd_n, cd_seed,
                             cd_out);
    }
    if (*bd) return cmd_bounds(bd_ckpt, bd_data, bd_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
