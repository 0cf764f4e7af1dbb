#include "dmdlab/tools/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dmdlab/checkpoint.hpp"
#include "dmdlab/config.hpp"
#include "dmdlab/error.hpp"
#include "dmdlab/eval.hpp"
#include "dmdlab/io.hpp"
#include "dmdlab/pipeline.hpp"
#include "dmdlab/tools/verify.hpp"

namespace dmdlab::tools {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path default_output_root() {
  const char* env = std::getenv("DMDLAB_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

namespace {

struct UsageError : Error {
  using Error::Error;
};

fs::path choose_output_dir(const std::string& requested, const std::string& command) {
  if (!requested.empty()) return requested;
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream stem;
  stem << command << "-" << std::put_time(&tm, "%Y%m%d-%H%M%S");
  fs::path dir = default_output_root() / stem.str();
  for (int k = 1; fs::exists(dir); ++k) dir = default_output_root() / (stem.str() + "-" + std::to_string(k));
  return dir;
}

// Refuses to reuse a directory that already holds results.
void prepare_output_dir(const fs::path& dir) {
  if (fs::exists(dir) && !fs::is_directory(dir))
    throw UsageError("output path " + dir.string() + " exists and is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir))
    throw UsageError("output directory " + dir.string() +
                     " is not empty; choose a fresh directory so earlier results stay untouched");
  fs::create_directories(dir);
}

void write_error_file(const fs::path& dir, int code, const std::string& kind, const json& detail) {
  if (dir.empty()) return;
  try {
    fs::create_directories(dir);
    json j{{"exit_code", code}, {"kind", kind}};
    j.update(detail);
    write_json(dir / "error.json", j);
  } catch (const std::exception&) {
    // The exit code still reports the failure.
  }
}

// Runs `body`, mapping library exceptions to exit codes and error.json.
template <typename Fn>
int guarded(const fs::path& dir, std::ostream& err, Fn&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    write_error_file(dir, kExitUsage, "config", {{"field", e.field()}, {"message", e.what()}});
    return kExitUsage;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    write_error_file(dir, kExitUsage, "checkpoint", {{"section", e.section()}, {"message", e.what()}});
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const TrainingAborted& e) {
    err << "training aborted: " << e.what() << "\n";
    write_error_file(dir, kExitAborted, "training_aborted", {{"phase", e.phase()}, {"message", e.what()}});
    return kExitAborted;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    write_error_file(dir, kExitFailure, "internal", {{"message", e.what()}});
    return kExitFailure;
  }
}

std::vector<std::string> with_seed(std::vector<std::string> overrides, const std::optional<std::uint64_t>& seed) {
  if (seed) overrides.push_back("seed=" + std::to_string(*seed));
  return overrides;
}

int cmd_run(const std::string& config, const std::vector<std::string>& overrides,
            const std::optional<std::uint64_t>& seed, const std::string& out_arg,
            const std::string& resume, int progress_every, bool quiet, std::ostream& err) {
  const fs::path dir = choose_output_dir(out_arg, "run");
  return guarded(dir, err, [&] {
    prepare_output_dir(dir);
    const RunConfig cfg = load_run_config(config, with_seed(overrides, seed));
    ExperimentOptions opt;
    opt.out_dir = dir;
    opt.progress = quiet ? nullptr : &err;
    opt.progress_every = progress_every;
    if (!resume.empty()) opt.resume = fs::path(resume);
    err << "[run] writing to " << dir.string() << "\n";
    const RunReport rep = run_experiment(cfg, opt);
    err << "[run] coverage " << rep.coverage() << ", energy distance " << rep.energy_distance() << "\n";
    return kExitOk;
  });
}

int cmd_ablate(const std::string& config, const std::vector<std::string>& overrides,
               const std::vector<std::uint64_t>& seeds, const std::vector<std::string>& row_names,
               const std::string& out_arg, bool quiet, std::ostream& out, std::ostream& err) {
  const fs::path dir = choose_output_dir(out_arg, "ablate");
  return guarded(dir, err, [&] {
    prepare_output_dir(dir);
    const RunConfig base = load_run_config(config, overrides);
    std::vector<AblationRow> rows;
    for (const auto& r : default_ablation_rows())
      if (row_names.empty() || std::find(row_names.begin(), row_names.end(), r.name) != row_names.end())
        rows.push_back(r);
    for (const auto& name : row_names)
      if (std::none_of(rows.begin(), rows.end(), [&](const AblationRow& r) { return r.name == name; }))
        throw ConfigError("rows", "unknown ablation row '" + name +
                                      "' (valid: no_gan_init, gan_only, gan_dmd_plain, full)");
    ExperimentOptions opt;
    opt.out_dir = dir;
    opt.progress = quiet ? nullptr : &err;
    opt.write_samples = false;
    const AblationResult res = run_ablation_matrix(base, seeds, rows, opt);
    out << std::left << std::setw(16) << "row" << std::setw(18) << "median_coverage"
        << std::setw(18) << "median_energy" << "failures\n";
    for (const auto& r : res.rows)
      out << std::setw(16) << r.row.name << std::setw(18) << r.median_coverage << std::setw(18)
          << r.median_energy << r.failures << "\n";
    return kExitOk;
  });
}

int cmd_verify(std::vector<std::string> suites, std::ostream& out, std::ostream& err) {
  if (suites.empty() || (suites.size() == 1 && suites[0] == "all")) suites = verify_suite_names();
  return guarded({}, err, [&] {
    for (const auto& s : suites) {
      const auto names = verify_suite_names();
      if (std::find(names.begin(), names.end(), s) == names.end()) run_verify_suite(s);  // throws
    }
    bool all = true;
    out << std::left << std::setw(12) << "suite" << std::setw(52) << "check" << std::setw(14)
        << "measured" << std::setw(12) << "tolerance" << "result\n";
    for (const auto& s : suites) {
      for (const auto& c : run_verify_suite(s)) {
        all = all && c.pass;
        out << std::setw(12) << c.suite << std::setw(52) << c.name << std::setw(14) << c.measured
            << std::setw(12) << c.tolerance << (c.pass ? "PASS" : "FAIL") << "\n";
      }
    }
    return all ? kExitOk : kExitFailure;
  });
}

int cmd_sample(const std::string& checkpoint, int n, std::uint64_t seed, const std::string& out_arg,
               std::ostream& err) {
  const fs::path dir = choose_output_dir(out_arg, "sample");
  return guarded(dir, err, [&] {
    if (n < 0) throw UsageError("--n must be >= 0");
    prepare_output_dir(dir);
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    if (!ckpt.header.contains("config")) throw CheckpointError("header", "no configuration recorded");
    RunConfig cfg = parse_run_config(ckpt.header.at("config"));
    const StudentModel m = student_from_checkpoint(ckpt, cfg);

    Rng latent = Rng::stream(seed, "sample-latent");
    Rng renoise = Rng::stream(seed, "sample-renoise");
    Eigen::MatrixXd samples(cfg.mixture.dim(), 0);
    if (n > 0) {
      const Eigen::MatrixXd z = latent.normal_matrix(cfg.mixture.dim(), n);
      Eigen::MatrixXd cond;
      if (m.denoiser.condition_dim() > 0) {
        Rng labels = Rng::stream(seed, "sample-labels");
        cond = one_hot(sample_mixture(cfg.mixture, n, labels).components, m.denoiser.condition_dim());
      }
      samples = generate_few_step(m, z, cond, renoise, cfg.renoise).samples;
    }
    write_samples_csv(dir / "samples.csv", samples, seed);
    if (n < 2) {
      err << "[sample] wrote " << n << " samples; coverage and distance reports need at least two samples\n";
      return kExitOk;
    }
    Rng ref_rng = Rng::stream(seed, "sample-reference");
    Rng proj = Rng::stream(seed, "sample-directions");
    const Eigen::MatrixXd ref = sample_mixture(cfg.mixture, n, ref_rng).samples;
    const CoverageReport cov = mode_coverage(samples, cfg.mixture, cfg.eval.radius, cfg.eval.min_hits);
    const DistanceReport dist =
        distance_report(samples, ref, proj, cfg.eval.directions, cfg.eval.energy_max_points);
    write_json(dir / "sample_report.json",
               {{"checkpoint", checkpoint}, {"n", n}, {"seed", seed}, {"coverage", to_json(cov)},
                {"distance", to_json(dist)}});
    err << "[sample] coverage " << cov.coverage << ", energy distance " << dist.energy << "\n";
    return kExitOk;
  });
}

int cmd_report(const std::string& run_dir, std::ostream& out, std::ostream& err) {
  return guarded({}, err, [&] {
    const fs::path dir(run_dir);
    if (fs::exists(dir / "ablation.json")) {
      const json a = read_json(dir / "ablation.json");
      out << std::left << std::setw(16) << "row" << std::setw(18) << "median_coverage"
          << "median_energy\n";
      for (const auto& r : a.at("rows"))
        out << std::setw(16) << r.at("name").get<std::string>() << std::setw(18)
            << r.value("median_coverage", std::nan("")) << r.value("median_energy_distance", std::nan(""))
            << "\n";
      return kExitOk;
    }
    if (!fs::exists(dir / "report.json")) throw UsageError(dir.string() + " holds no report.json or ablation.json");
    const json r = read_json(dir / "report.json");
    const json& f = r.at("final");
    json summary{{"status", r.at("status")}};
    if (f.contains("coverage")) {
      summary["coverage"] = f["coverage"]["coverage"];
      summary["energy_distance"] = f["distance"]["energy_distance"];
      summary["sliced_wasserstein"] = f["distance"]["sliced_wasserstein"];
      summary["student_evals"] = f["speedup"]["student_evals"];
      summary["teacher_evals"] = f["speedup"]["teacher_evals"];
      summary["count_reduction"] = f["speedup"]["count_reduction"];
      summary["wall_ratio"] = f["speedup"]["wall_ratio"];
      summary["teacher_sampler_coverage"] = f["teacher_sampler"]["coverage"]["coverage"];
    }
    for (const auto& key : {"gan", "dmd"})
      if (r.at("phases").contains(key)) summary[std::string(key) + "_iters"] = r["phases"][key]["iters"];
    for (auto it = summary.begin(); it != summary.end(); ++it)
      out << std::left << std::setw(26) << it.key() << it.value().dump() << "\n";
    write_json(dir / "summary.json", summary);
    return kExitOk;
  });
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-step distillation testbed on Gaussian mixtures", "dmdlab"};
  app.require_subcommand(1, 1);

  std::string config, out_dir, resume, checkpoint, run_dir;
  std::vector<std::string> overrides, suites, rows;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::uint64_t sample_seed = 0;
  int n = 10000, progress_every = 500;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "Train one experiment");
  run->add_option("-c,--config", config, "JSON config file")->required();
  run->add_option("-o,--out", out_dir, "Output directory (default: $DMDLAB_OUTPUT_ROOT/run-<time>)");
  run->add_option("-s,--set", overrides, "Override, e.g. dmd.weight_mode=main-text");
  run->add_option("--seed", seed, "Training seed");
  run->add_option("--resume", resume, "Checkpoint directory to resume from");
  run->add_option("--progress-every", progress_every, "Progress line interval (iterations)");
  run->add_flag("-q,--quiet", quiet, "No progress output");

  auto* ablate = app.add_subcommand("ablate", "Run the ablation matrix");
  ablate->add_option("-c,--config", config, "JSON config file")->required();
  ablate->add_option("-o,--out", out_dir, "Output directory");
  ablate->add_option("-s,--set", overrides, "Override, e.g. optim.batch=64");
  ablate->add_option("--seeds", seeds, "Seeds (at least three)")->delimiter(',');
  ablate->add_option("--rows", rows, "Subset of rows")->delimiter(',');
  ablate->add_flag("-q,--quiet", quiet, "No progress output");

  auto* verify = app.add_subcommand("verify", "Run oracle suites");
  verify->add_option("suites", suites, "scores, gradients, ratio, quadrature or all");

  auto* sample = app.add_subcommand("sample", "Draw few-step samples from a checkpoint");
  sample->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  sample->add_option("-n,--n", n, "Number of samples");
  sample->add_option("--seed", sample_seed, "Sampling seed");
  sample->add_option("-o,--out", out_dir, "Output directory");

  auto* report = app.add_subcommand("report", "Summarize a run or ablation directory");
  report->add_option("run", run_dir, "Run directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  if (run->parsed()) return cmd_run(config, overrides, seed, out_dir, resume, progress_every, quiet, err);
  if (ablate->parsed()) return cmd_ablate(config, overrides, seeds, rows, out_dir, quiet, out, err);
  if (verify->parsed()) return cmd_verify(suites, out, err);
  if (sample->parsed()) return cmd_sample(checkpoint, n, sample_seed, out_dir, err);
  if (report->parsed()) return cmd_report(run_dir, out, err);
  return kExitUsage;
}

}  // namespace dmdlab::tools
