#pragma once

#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmdlab/adversarial.hpp"
#include "dmdlab/checkpoint.hpp"
#include "dmdlab/config.hpp"
#include "dmdlab/dmd.hpp"
#include "dmdlab/eval.hpp"
#include "dmdlab/student.hpp"
#include "dmdlab/teacher.hpp"

namespace dmdlab {

enum class Phase { kGan, kDmd, kDone };
std::string to_string(Phase p);

/// Teachers keyed by the mixture, schedule and teacher sections of a config,
/// so ablation rows and seeds share one fitted teacher.
class TeacherCache {
 public:
  struct Entry {
    std::shared_ptr<const TeacherBundle> bundle;
    TrainLog log;
    double seconds = 0.0;
  };
  const Entry& get(const RunConfig& cfg, std::ostream* progress = nullptr);
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, Entry> entries_;
};

/// Builds and fits the teacher described by `cfg` from its own seed.
TeacherCache::Entry prepare_teacher(const RunConfig& cfg, std::ostream* progress = nullptr);

/// Phase-1 then phase-2 training state. Streams: "data" (mixture draws),
/// "noise" (timesteps and Gaussian noise), "init" (head initialization),
/// "pretrain" (optional student regression), all derived from cfg.seed.
class Trainer {
 public:
  Trainer(const RunConfig& cfg, std::shared_ptr<const TeacherBundle> teacher);

  Phase phase() const { return phase_; }
  /// Runs up to `n` iterations across phase boundaries; returns the count run.
  int advance(int n);
  void run_to_end() { advance(std::numeric_limits<int>::max()); }
  /// Iterations left in the whole run.
  int remaining() const;

  Checkpoint checkpoint() const;
  /// Restores every network, optimizer, RNG and counter. The configuration
  /// stored in the checkpoint must match this trainer's (CheckpointError("header")).
  void restore(const Checkpoint& ckpt);

  const RunConfig& config() const { return cfg_; }
  const TeacherBundle& teacher() const { return *teacher_; }
  const StudentModel& student() const { return student_; }
  const Discriminator& discriminator() const { return disc_; }
  const Denoiser& fake_score() const { return fake_; }
  const std::vector<GanBatchReport>& gan_log() const { return gan_log_; }
  const std::vector<DmdLogRow>& dmd_log() const { return dmd_log_; }
  /// Phase of every student optimizer step, in order.
  const std::vector<Phase>& update_stamps() const { return stamps_; }
  int gan_iteration() const { return gan_.iteration; }
  int dmd_iteration() const { return dmd_.iteration; }
  const Rng& data_rng() const { return data_; }
  const Rng& noise_rng() const { return noise_; }

  void set_progress(std::ostream* out, int every) {
    progress_ = out;
    progress_every_ = every;
  }

 private:
  Phase first_phase() const;
  void stamp(Phase p);

  RunConfig cfg_;
  std::shared_ptr<const TeacherBundle> teacher_;
  StudentModel student_;
  AdamState student_opt_;
  Discriminator disc_;
  AdamState head_opt_;
  Denoiser fake_;
  AdamState fake_opt_;
  Rng data_;
  Rng noise_;
  GanProgress gan_;
  DmdProgress dmd_;
  Phase phase_;
  std::vector<GanBatchReport> gan_log_;
  std::vector<DmdLogRow> dmd_log_;
  std::vector<Phase> stamps_;
  std::ostream* progress_ = nullptr;
  int progress_every_ = 0;
};

/// Rebuilds the teacher stored in a trainer checkpoint, so a run can resume
/// without refitting it.
std::shared_ptr<const TeacherBundle> teacher_from_checkpoint(const Checkpoint& ckpt,
                                                             const RunConfig& cfg);
/// Student network stored in a checkpoint, with the config's grid and schedule.
StudentModel student_from_checkpoint(const Checkpoint& ckpt, const RunConfig& cfg);

struct StudentEvaluation {
  CoverageReport coverage;
  DistanceReport distance;
  int evaluations = 0;
  double seconds = 0.0;
  Eigen::MatrixXd samples;
};

/// Few-step samples from eval-seeded noise, scored against fresh mixture
/// samples. Uses only streams derived from cfg.eval_seed.
StudentEvaluation evaluate_student(const StudentModel& m, const RunConfig& cfg, int n);

/// The teacher's multistep sampler on the same budget, for speedup accounting.
StudentEvaluation evaluate_teacher(const TeacherBundle& t, const RunConfig& cfg, int n, int steps);

struct ExperimentOptions {
  std::filesystem::path out_dir;  // empty: nothing is written
  TeacherCache* cache = nullptr;
  std::ostream* progress = nullptr;
  int progress_every = 500;
  bool write_samples = true;
  /// Resume from this checkpoint directory when set.
  std::optional<std::filesystem::path> resume;
};

struct RunReport {
  nlohmann::json config;
  nlohmann::json phases = nlohmann::json::object();
  nlohmann::json final_block = nlohmann::json::object();
  std::vector<std::string> checkpoints;
  std::string error;        // empty on success
  std::string error_phase;

  bool ok() const { return error.empty(); }
  double coverage() const;
  double energy_distance() const;
  nlohmann::json to_json() const;
};

/// Teacher, optional pretrain, phase 1, phase 2, evaluation. Writes
/// config.json before training, then teacher.csv, gan.csv, dmd.csv,
/// eval.csv, samples.csv, checkpoints/ and report.json under out_dir.
/// A TrainingAborted propagates after the partial logs are written.
RunReport run_experiment(const RunConfig& cfg, const ExperimentOptions& options = {});

struct AblationRow {
  std::string name;
  AblationSwitches switches;
};

/// {no_gan_init, gan_only, gan_dmd_plain, full}.
std::vector<AblationRow> default_ablation_rows();

struct AblationResult {
  struct Row {
    AblationRow row;
    std::vector<std::uint64_t> seeds;
    std::vector<RunReport> reports;
    std::vector<double> coverage;  // NaN for failed runs
    std::vector<double> energy;
    double median_coverage = 0.0;
    double median_energy = 0.0;
    int failures = 0;
  };
  std::vector<Row> rows;
  nlohmann::json to_json() const;
};

/// Median over finite values; NaN when none.
double median(std::vector<double> values);

/// One run per (row, seed); failed runs are recorded and the matrix continues.
/// Requires at least three seeds. Writes <out>/<row>/seed_<s>/ and
/// ablation.json / ablation.csv when out_dir is set.
AblationResult run_ablation_matrix(const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                                   const std::vector<AblationRow>& rows,
                                   const ExperimentOptions& options = {});

}  // namespace dmdlab
