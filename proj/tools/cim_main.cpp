// cim — collaborative inference of coexisting information diffusions.
//
// Subcommands: synth (make a synthetic event log), build (event log ->
// tensor + constraint matrices on disk), fit (run the nda or twpda solver),
// eval (holdout ablation study), bench (scalability timings).

#include "cim/constraints.hpp"
#include "cim/diffusion.hpp"
#include "cim/evaluation.hpp"
#include "cim/io.hpp"
#include "cim/nda.hpp"
#include "cim/tucker.hpp"
#include "cim/twpda.hpp"

#include <CLI11.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitNoConvergence = 4;

struct HyperFlags {
  cim::HyperParams hp;
  std::array<double, 5> numbered{};  // --lambda1 .. --lambda5
  std::array<CLI::Option*, 5> numbered_opts{};
  std::array<CLI::Option*, 5> named_opts{};
  std::string convention = "alg1";
};

void add_hyper_options(CLI::App* cmd, HyperFlags& f) {
  cim::HyperParams& hp = f.hp;
  cmd->add_option("--rank", hp.rank, "Decomposition rank R")
      ->capture_default_str();
  cmd->add_option("--eta", hp.eta, "SGD step size")->capture_default_str();
  cmd->add_option("--epsilon", hp.epsilon,
                  "Convergence threshold on the loss change")
      ->capture_default_str();
  cmd->add_option("--max-epochs", hp.max_epochs, "Epoch cap")
      ->capture_default_str();
  f.named_opts[0] =
      cmd->add_option("--lambda-sda", hp.lambda_sda, "SDA constraint weight")
          ->capture_default_str();
  f.named_opts[1] =
      cmd->add_option("--lambda-nma", hp.lambda_nma, "NMA constraint weight")
          ->capture_default_str();
  f.named_opts[2] =
      cmd->add_option("--lambda-mc", hp.lambda_mc, "MC constraint weight")
          ->capture_default_str();
  f.named_opts[3] =
      cmd->add_option("--lambda-ts", hp.lambda_ts, "TS constraint weight")
          ->capture_default_str();
  f.named_opts[4] =
      cmd->add_option("--lambda-reg", hp.lambda_reg, "Regularization weight")
          ->capture_default_str();
  for (int i = 0; i < 5; ++i) {
    f.numbered_opts[i] = cmd->add_option(
        "--lambda" + std::to_string(i + 1), f.numbered[i],
        "Numbered weight, mapped per --lambda-convention");
  }
  cmd->add_option("--lambda-convention", f.convention,
                  "Role order of --lambda1..5: alg1 = sda,nma,mc,ts,reg; "
                  "eq3 = reg,sda,nma,mc,ts")
      ->check(CLI::IsMember({"alg1", "eq3"}))
      ->capture_default_str();
  cmd->add_flag("--sda,!--no-sda", hp.use_sda, "Toggle the SDA constraint")
      ->capture_default_str();
  cmd->add_flag("--nma,!--no-nma", hp.use_nma, "Toggle the NMA constraint")
      ->capture_default_str();
  cmd->add_flag("--mc,!--no-mc", hp.use_mc, "Toggle the MC constraint")
      ->capture_default_str();
  cmd->add_flag("--ts,!--no-ts", hp.use_ts, "Toggle the TS constraint")
      ->capture_default_str();
  cmd->add_flag("--shuffle", hp.shuffle,
                "Reshuffle the cell order each epoch (seeded)");
  cmd->add_flag("--normalize-constraints", hp.normalize_constraint_gradients,
                "Divide constraint gradients by nnz in the per-cell loop");
  cmd->add_option("--seed", hp.seed, "Base seed for all randomness")
      ->capture_default_str();
}

/// Numbered lambdas fill the named ones per the chosen convention; named
/// flags win when both are given.
void resolve_lambdas(HyperFlags& f) {
  static const std::map<std::string, std::array<int, 5>> kRole = {
      // index into (sda, nma, mc, ts, reg) for --lambda1..5
      {"alg1", {0, 1, 2, 3, 4}},
      {"eq3", {4, 0, 1, 2, 3}},
  };
  const std::array<int, 5>& role = kRole.at(f.convention);
  std::array<double*, 5> named = {&f.hp.lambda_sda, &f.hp.lambda_nma,
                                  &f.hp.lambda_mc, &f.hp.lambda_ts,
                                  &f.hp.lambda_reg};
  for (int i = 0; i < 5; ++i) {
    if (f.numbered_opts[i]->count() > 0 &&
        f.named_opts[role[i]]->count() == 0) {
      *named[role[i]] = f.numbered[i];
    }
  }
}

cim::SyntheticMode parse_mode(const std::string& mode) {
  return mode == "planted" ? cim::SyntheticMode::kPlantedTucker
                           : cim::SyntheticMode::kGaussianMagnitude;
}

struct BuildInputs {
  cim::SparseTensor4d cdt;
  cim::ConstraintSetd cs;
};

/// CDT from the target log; constraint matrices from the auxiliary log when
/// given, else from the target log itself.
BuildInputs load_inputs(const std::string& log_path,
                        const std::string& aux_path) {
  BuildInputs in;
  const cim::DiffusionLog log = cim::read_event_log(log_path);
  in.cdt = cim::assemble_cdt(log);
  if (aux_path.empty()) {
    in.cs = cim::build_constraints(log);
  } else {
    const cim::DiffusionLog aux = cim::read_event_log(aux_path);
    if (aux.dims.nodes != log.dims.nodes || aux.dims.memes != log.dims.memes) {
      throw cim::DataError(aux_path +
                           ": auxiliary log dims (N, M) must match the target "
                           "log");
    }
    in.cs = cim::build_constraints(aux, log.dims.times);
  }
  return in;
}

BuildInputs load_from_build_dir(const std::string& dir) {
  const fs::path base(dir);
  BuildInputs in;
  in.cdt = cim::read_tensor((base / "cdt.txt").string());
  in.cs.x = cim::read_matrix((base / "sda.txt").string());
  in.cs.y = cim::read_matrix((base / "nma.txt").string());
  in.cs.z = cim::read_matrix((base / "mc_z.txt").string());
  in.cs.k = cim::read_matrix((base / "mc_k.txt").string());
  in.cs.laplacian = cim::read_matrix((base / "mc_laplacian.txt").string());
  in.cs.u = cim::read_matrix((base / "ts.txt").string());
  return in;
}

int run_synth(const std::string& out, cim::Index nodes, cim::Index memes,
              cim::Index times, double density, const std::string& mode,
              cim::Index rank, std::uint64_t seed,
              const std::string& raw_out) {
  const cim::DiffusionLog log = cim::generate_synthetic(
      nodes, memes, times, density, parse_mode(mode), seed, rank);
  cim::write_event_log(out, log);
  std::cout << "wrote " << out << ": N=" << log.dims.nodes
            << " M=" << log.dims.memes << " Q=" << log.dims.times
            << " events=" << log.events.size() << "\n";
  if (!raw_out.empty()) {
    const cim::SparseTensor4d raw =
        cim::generate_synthetic_raw(nodes, memes, times, density, seed);
    cim::write_tensor(raw_out, raw);
    std::cout << "wrote " << raw_out << ": raw-normal tensor, nnz="
              << raw.nnz() << "\n";
  }
  return kExitOk;
}

int run_build(const std::string& log_path, const std::string& aux_path,
              const std::string& out_dir) {
  fs::create_directories(out_dir);
  const BuildInputs in = load_inputs(log_path, aux_path);
  const fs::path base(out_dir);
  cim::write_tensor((base / "cdt.txt").string(), in.cdt);
  cim::write_matrix((base / "sda.txt").string(), in.cs.x);
  cim::write_matrix((base / "nma.txt").string(), in.cs.y);
  cim::write_matrix((base / "mc_z.txt").string(), in.cs.z);
  cim::write_matrix((base / "mc_k.txt").string(), in.cs.k);
  cim::write_matrix((base / "mc_laplacian.txt").string(), in.cs.laplacian);
  cim::write_matrix((base / "ts.txt").string(), in.cs.u);
  const cim::Dims4& d = in.cdt.dims();
  std::cout << "cdt: " << d[0] << "x" << d[1] << "x" << d[2] << "x" << d[3]
            << ", nnz=" << in.cdt.nnz() << "\n";
  if (in.cdt.nnz() == 0) {
    std::cout << "warning: the log is empty; all artifacts are zero\n";
  }
  std::cout << "constraints: X " << in.cs.x.rows() << "x" << in.cs.x.cols()
            << ", Y " << in.cs.y.rows() << "x" << in.cs.y.cols() << ", Z "
            << in.cs.z.rows() << "x" << in.cs.z.cols() << ", U "
            << in.cs.u.rows() << "x" << in.cs.u.cols() << "\n";
  std::cout << "wrote artifacts to " << out_dir << "\n";
  return kExitOk;
}

int run_fit(const BuildInputs& in, const cim::HyperParams& hp,
            const std::string& solver, const std::string& out_dir,
            cim::Index alpha1, cim::Index beta, cim::Index parallelism,
            double emit_threshold) {
  fs::create_directories(out_dir);
  const fs::path base(out_dir);
  if (solver == "nda") {
    const cim::NdaFit<double> fit = cim::fit_nda(in.cdt, in.cs, hp);
    cim::write_checkpoint((base / "checkpoint.txt").string(), fit.model);
    cim::write_loss_trace_csv((base / "loss_trace.csv").string(), fit.report);
    std::cout << "nda: epochs=" << fit.report.epochs_run << " converged="
              << (fit.report.converged ? "yes" : "no") << " final-loss="
              << fit.report.loss_trace.back().total << " wall-seconds="
              << fit.report.wall_time_seconds << "\n";
    if (!fit.report.converged) {
      std::cerr << "stopped at the epoch cap without meeting the loss-change "
                   "threshold\n";
      return kExitNoConvergence;
    }
    return kExitOk;
  }

  const cim::Index q = in.cdt.dims()[3];
  const cim::Index a1 = alpha1 > 0 ? alpha1 : std::min<cim::Index>(2, q);
  const cim::Index b = beta >= 0 ? beta : cim::default_beta(in.cdt);
  const cim::TwpdaFitd fit =
      cim::fit_twpda(in.cdt, in.cs, hp, a1, b, parallelism);
  cim::write_plan_csv((base / "plan.csv").string(), fit.plan);
  for (std::size_t w = 0; w < fit.models.size(); ++w) {
    const std::string tag = "window_" + std::to_string(w + 1);
    cim::write_checkpoint((base / (tag + "_checkpoint.txt")).string(),
                          fit.models[w]);
    cim::write_loss_trace_csv((base / (tag + "_loss.csv")).string(),
                              fit.window_reports[w]);
  }
  cim::write_merged_estimates((base / "estimates.txt").string(), fit,
                              emit_threshold);
  std::cout << "twpda: windows=" << fit.plan.windows.size() << " (alpha1="
            << a1 << ", beta=" << b << ") converged="
            << (fit.converged ? "yes" : "no") << " wall-seconds="
            << fit.wall_time_seconds << "\n";
  if (!fit.converged) {
    std::cerr << "at least one window stopped at the epoch cap\n";
    return kExitNoConvergence;
  }
  return kExitOk;
}

int run_eval(const BuildInputs& in, const cim::HyperParams& hp,
             const cim::AblationOptions& opts, const std::string& out_csv) {
  const std::vector<cim::EvalReport> reports =
      cim::run_ablation(in.cdt, in.cs, hp, opts);
  cim::write_eval_csv(out_csv, reports);

  // Seed-averaged summary per (method, fraction).
  std::map<std::pair<std::string, double>, std::pair<double, double>> sums;
  std::map<std::pair<std::string, double>, int> counts;
  for (const cim::EvalReport& r : reports) {
    const auto key = std::make_pair(r.method, r.removal_fraction);
    sums[key].first += r.ra;
    sums[key].second += r.rmse;
    counts[key] += 1;
  }
  std::cout << "method fraction mean_ra mean_rmse\n";
  for (const auto& [key, sum] : sums) {
    const int c = counts[key];
    std::cout << key.first << " " << key.second << " " << (sum.first / c)
              << " " << (sum.second / c) << "\n";
  }
  std::cout << "wrote " << out_csv << "\n";
  return kExitOk;
}

int run_bench(const cim::HyperParams& hp, const std::vector<cim::Index>& nodes,
              cim::Index memes, cim::Index times, double density,
              const std::vector<cim::Index>& threads, cim::Index alpha1,
              cim::Index beta, const std::string& out_csv) {
  std::vector<cim::BenchSize> sizes;
  for (cim::Index n : nodes) sizes.push_back({n, memes, times, density});
  cim::BenchOptions opts;
  opts.thread_counts = threads;
  opts.alpha1 = alpha1;
  opts.beta = beta;
  opts.seed = hp.seed;
  const std::vector<cim::BenchRow> rows = cim::run_benchmark(sizes, hp, opts);
  cim::write_bench_csv(out_csv, rows);
  std::cout << "nodes solver threads wall_seconds speedup\n";
  for (const cim::BenchRow& r : rows) {
    std::cout << r.nodes << " " << r.solver << " " << r.threads << " "
              << r.wall_time_seconds << " " << r.speedup << "\n";
  }
  std::cout << "wrote " << out_csv << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collaborative inference of coexisting information diffusions"};
  app.require_subcommand(0, 1);
  app.set_config("--config", "", "INI config file; command-line flags win");
  bool dump_config = false;
  app.add_flag("--dump-config", dump_config,
               "Print the canonical config for this invocation and exit")
      ->configurable(false);

  // --- synth ---------------------------------------------------------------
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic log");
  std::string synth_out = "log.txt";
  cim::Index synth_n = 100, synth_m = 2, synth_q = 10, synth_rank = 3;
  double synth_density = 0.01;
  std::string synth_mode = "planted";
  std::uint64_t synth_seed = 1;
  std::string synth_raw_out;
  synth->add_option("--out", synth_out, "Event-log output path")
      ->capture_default_str()
      ->configurable(false);
  synth->add_option("--nodes", synth_n, "Node count N")->capture_default_str();
  synth->add_option("--memes", synth_m, "Meme count M")->capture_default_str();
  synth->add_option("--times", synth_q, "Time-point count Q")
      ->capture_default_str();
  synth->add_option("--density", synth_density, "Fraction of nonzero cells")
      ->capture_default_str();
  synth->add_option("--mode", synth_mode, "Cell-value scheme")
      ->check(CLI::IsMember({"gaussian", "planted"}))
      ->capture_default_str();
  synth->add_option("--rank", synth_rank, "Planted model rank")
      ->capture_default_str();
  synth->add_option("--seed", synth_seed, "Seed")->capture_default_str();
  synth->add_option("--raw-out", synth_raw_out,
                    "Also write a raw-normal tensor to this path")
      ->configurable(false);

  // --- build ---------------------------------------------------------------
  CLI::App* build = app.add_subcommand(
      "build", "Assemble the tensor and constraint matrices");
  std::string build_log, build_aux, build_out = "artifacts";
  build->add_option("--log", build_log, "Target event log")
      ->required()
      ->check(CLI::ExistingFile)
      ->configurable(false);
  build->add_option("--aux", build_aux, "Auxiliary event log for constraints")
      ->check(CLI::ExistingFile)
      ->configurable(false);
  build->add_option("--out-dir", build_out, "Artifact directory")
      ->capture_default_str()
      ->configurable(false);

  // --- fit -----------------------------------------------------------------
  CLI::App* fit = app.add_subcommand("fit", "Run a solver");
  std::string fit_log, fit_aux, fit_from_build, fit_out = "fit_out";
  std::string fit_solver = "nda";
  HyperFlags fit_hf;
  cim::Index fit_alpha1 = 0, fit_beta = -1, fit_parallelism = 1;
  double fit_emit_threshold = 1e-3;
  fit->add_option("--log", fit_log, "Target event log")
      ->check(CLI::ExistingFile)
      ->configurable(false);
  fit->add_option("--aux", fit_aux, "Auxiliary event log for constraints")
      ->check(CLI::ExistingFile)
      ->configurable(false);
  fit->add_option("--from-build", fit_from_build,
                  "Load cdt.txt and constraint matrices from a build "
                  "directory instead of --log")
      ->check(CLI::ExistingDirectory)
      ->configurable(false);
  fit->add_option("--out-dir", fit_out, "Output directory")
      ->capture_default_str()
      ->configurable(false);
  fit->add_option("--solver", fit_solver, "Solver")
      ->check(CLI::IsMember({"nda", "twpda"}))
      ->capture_default_str();
  fit->add_option("--alpha1", fit_alpha1,
                  "Initial window width (0: min(2, Q))")
      ->capture_default_str();
  fit->add_option("--beta", fit_beta,
                  "Window nnz threshold (negative: max(32, nnz/Q))")
      ->capture_default_str();
  fit->add_option("--parallelism", fit_parallelism,
                  "Concurrent window fits (twpda)")
      ->capture_default_str();
  fit->add_option("--emit-threshold", fit_emit_threshold,
                  "Magnitude cutoff for merged estimate emission")
      ->capture_default_str();
  add_hyper_options(fit, fit_hf);

  // --- eval ----------------------------------------------------------------
  CLI::App* eval = app.add_subcommand("eval", "Holdout ablation study");
  std::string eval_log, eval_aux, eval_out = "eval.csv";
  HyperFlags eval_hf;
  cim::AblationOptions eval_opts;
  eval->add_option("--log", eval_log, "Target event log")
      ->required()
      ->check(CLI::ExistingFile)
      ->configurable(false);
  eval->add_option("--aux", eval_aux, "Auxiliary event log for constraints")
      ->check(CLI::ExistingFile)
      ->configurable(false);
  eval->add_option("--out", eval_out, "Report CSV path")
      ->capture_default_str()
      ->configurable(false);
  eval->add_option("--fractions", eval_opts.fractions,
                   "Removal fractions (comma list)")
      ->delimiter(',')
      ->capture_default_str();
  eval->add_option("--seeds", eval_opts.seeds, "Holdout/fit seeds (comma list)")
      ->delimiter(',')
      ->capture_default_str();
  eval->add_flag("--include-twpda", eval_opts.include_twpda,
                 "Also evaluate the windowed parallel solver");
  eval->add_option("--alpha1", eval_opts.alpha1, "Initial window width")
      ->capture_default_str();
  eval->add_option("--beta", eval_opts.beta,
                   "Window nnz threshold (negative: automatic)")
      ->capture_default_str();
  eval->add_option("--parallelism", eval_opts.parallelism,
                   "Concurrent window fits")
      ->capture_default_str();
  add_hyper_options(eval, eval_hf);

  // --- bench ---------------------------------------------------------------
  CLI::App* bench = app.add_subcommand("bench", "Scalability timings");
  std::string bench_out = "bench.csv";
  std::vector<cim::Index> bench_nodes{300, 600};
  cim::Index bench_memes = 2, bench_times = 35;
  double bench_density = 1e-4;
  std::vector<cim::Index> bench_threads{1, 2, 4};
  cim::Index bench_alpha1 = 2, bench_beta = -1;
  HyperFlags bench_hf;
  bench_hf.hp.max_epochs = 3;  // timing runs don't need convergence
  bench->add_option("--out", bench_out, "Report CSV path")
      ->capture_default_str()
      ->configurable(false);
  bench->add_option("--nodes", bench_nodes, "Node counts (comma list)")
      ->delimiter(',')
      ->capture_default_str();
  bench->add_option("--memes", bench_memes, "Meme count")
      ->capture_default_str();
  bench->add_option("--times", bench_times, "Time-point count")
      ->capture_default_str();
  bench->add_option("--density", bench_density, "Cell density")
      ->capture_default_str();
  bench->add_option("--threads", bench_threads, "Thread counts (comma list)")
      ->delimiter(',')
      ->capture_default_str();
  bench->add_option("--alpha1", bench_alpha1, "Initial window width")
      ->capture_default_str();
  bench->add_option("--beta", bench_beta,
                    "Window nnz threshold (negative: automatic)")
      ->capture_default_str();
  add_hyper_options(bench, bench_hf);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (dump_config) {
    std::cout << app.config_to_str(true, false);
    return kExitOk;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return kExitUsage;
  }

  try {
    if (*synth) {
      return run_synth(synth_out, synth_n, synth_m, synth_q, synth_density,
                       synth_mode, synth_rank, synth_seed, synth_raw_out);
    }
    if (*build) {
      return run_build(build_log, build_aux, build_out);
    }
    if (*fit) {
      resolve_lambdas(fit_hf);
      if (fit_from_build.empty() && fit_log.empty()) {
        std::cerr << "fit needs --log or --from-build\n";
        return kExitUsage;
      }
      const BuildInputs in = fit_from_build.empty()
                                 ? load_inputs(fit_log, fit_aux)
                                 : load_from_build_dir(fit_from_build);
      return run_fit(in, fit_hf.hp, fit_solver, fit_out, fit_alpha1, fit_beta,
                     fit_parallelism, fit_emit_threshold);
    }
    if (*eval) {
      resolve_lambdas(eval_hf);
      const BuildInputs in = load_inputs(eval_log, eval_aux);
      return run_eval(in, eval_hf.hp, eval_opts, eval_out);
    }
    if (*bench) {
      resolve_lambdas(bench_hf);
      return run_bench(bench_hf.hp, bench_nodes, bench_memes, bench_times,
                       bench_density, bench_threads, bench_alpha1, bench_beta,
                       bench_out);
    }
  } catch (const cim::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const cim::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
