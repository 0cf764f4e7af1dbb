#include "dmdlab/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "dmdlab/error.hpp"
#include "dmdlab/io.hpp"

namespace dmdlab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

json teacher_key(const RunConfig& cfg) {
  return {{"mixture", cfg.resolved.at("mixture")},
          {"schedule", cfg.resolved.at("schedule")},
          {"teacher", cfg.resolved.at("teacher")}};
}

AdamConfig adam_with(double lr, double weight_decay) {
  AdamConfig c;
  c.lr = lr;
  c.weight_decay = weight_decay;
  return c;
}

}  // namespace

std::string to_string(Phase p) {
  switch (p) {
    case Phase::kGan: return "gan";
    case Phase::kDmd: return "dmd";
    case Phase::kDone: return "done";
  }
  return "done";
}

TeacherCache::Entry prepare_teacher(const RunConfig& cfg, std::ostream* progress) {
  const auto t0 = Clock::now();
  Rng init = Rng::stream(cfg.teacher.seed, "teacher-init");
  Rng data = Rng::stream(cfg.teacher.seed, "teacher-data");
  auto bundle = std::make_shared<TeacherBundle>(
      make_teacher_bundle(cfg.mixture, cfg.schedule, cfg.teacher.hidden, cfg.teacher.activation,
                          cfg.teacher.prediction, cfg.teacher.conditional, init));
  if (progress) *progress << "[teacher] fitting " << cfg.teacher.train.iters << " iterations\n";
  TeacherCache::Entry e;
  e.log = train_teacher_denoiser(*bundle, cfg.teacher.train, data);
  e.bundle = std::move(bundle);
  e.seconds = seconds_since(t0);
  if (progress && !e.log.loss.empty())
    *progress << "[teacher] done in " << e.seconds << " s, final loss "
              << moving_average(e.log.loss, 200).back() << "\n";
  return e;
}

const TeacherCache::Entry& TeacherCache::get(const RunConfig& cfg, std::ostream* progress) {
  const std::string key = teacher_key(cfg).dump();
  auto it = entries_.find(key);
  if (it == entries_.end()) it = entries_.emplace(key, prepare_teacher(cfg, progress)).first;
  return it->second;
}

namespace {

Discriminator build_discriminator(const RunConfig& cfg, const TeacherBundle& teacher) {
  Rng init = Rng::stream(cfg.seed, "init");
  return make_discriminator(teacher, cfg.gan.tap_layer, cfg.gan.head_hidden,
                            cfg.teacher.activation, init);
}

StudentModel build_student(const RunConfig& cfg, const TeacherBundle& teacher) {
  StudentModel m =
      make_student_from_teacher(teacher, FewStepGrid::uniform(cfg.schedule.num_steps, cfg.grid_steps));
  if (cfg.pretrain_iters > 0) {
    Rng rng = Rng::stream(cfg.seed, "pretrain");
    DenoiserTrainOptions o = cfg.teacher.train;
    o.iters = cfg.pretrain_iters;
    o.adam = adam_with(cfg.lr, cfg.weight_decay);
    pretrain_student(m, teacher, o, rng);
  }
  return m;
}

}  // namespace

Trainer::Trainer(const RunConfig& cfg, std::shared_ptr<const TeacherBundle> teacher)
    : cfg_(cfg),
      teacher_(std::move(teacher)),
      student_(build_student(cfg_, *teacher_)),
      student_opt_(make_adam(student_.denoiser.net.num_params(), adam_with(cfg_.lr, cfg_.weight_decay))),
      disc_(build_discriminator(cfg_, *teacher_)),
      head_opt_(make_adam(disc_.head.num_params(), adam_with(cfg_.gan.head_lr, 0.0))),
      fake_(teacher_->denoiser),
      fake_opt_(make_adam(fake_.net.num_params(), adam_with(cfg_.dmd.fake_lr, 0.0))),
      data_(Rng::stream(cfg_.seed, "data")),
      noise_(Rng::stream(cfg_.seed, "noise")),
      phase_(first_phase()) {
  dmd_.fake_monitor = DivergenceMonitor(100.0, 500);
}

Phase Trainer::first_phase() const {
  if (cfg_.ablation.gan_init && gan_.iteration < cfg_.gan.iters) return Phase::kGan;
  if (cfg_.ablation.dmd && dmd_.iteration < cfg_.dmd.iters) return Phase::kDmd;
  return Phase::kDone;
}

int Trainer::remaining() const {
  int r = 0;
  if (cfg_.ablation.gan_init) r += std::max(0, cfg_.gan.iters - gan_.iteration);
  if (cfg_.ablation.dmd) r += std::max(0, cfg_.dmd.iters - dmd_.iteration);
  return r;
}

void Trainer::stamp(Phase p) {
  if (!stamps_.empty() && static_cast<int>(p) < static_cast<int>(stamps_.back()))
    throw Error("phase ordering violated: " + to_string(p) + " update after " +
                to_string(stamps_.back()));
  stamps_.push_back(p);
}

int Trainer::advance(int n) {
  int done = 0;
  const auto& mix = teacher_->mixture;
  const bool conditional = teacher_->condition_dim > 0;
  while (done < n && phase_ != Phase::kDone) {
    if (phase_ == Phase::kGan) {
      const int k = std::min(cfg_.gan.iters - gan_.iteration, n - done);
      if (k > 0) {
        GanPhaseOptions o;
        o.iters = cfg_.gan.iters;
        o.batch = cfg_.batch;
        o.disc_updates = cfg_.gan.disc_updates;
        o.form = cfg_.gan.form;
        o.conditional = conditional;
        o.collapse_patience = cfg_.gan.collapse_patience;
        o.collapse_threshold = cfg_.gan.collapse_threshold;
        run_gan_phase(disc_, head_opt_, student_, student_opt_, mix, o, data_, noise_, gan_, k,
                      [this](int it, const GanBatchReport& r) {
                        stamp(Phase::kGan);
                        gan_log_.push_back(r);
                        if (progress_ && progress_every_ > 0 && (it + 1) % progress_every_ == 0)
                          *progress_ << "[gan " << it + 1 << "/" << cfg_.gan.iters
                                     << "] loss_D " << r.loss_d << " loss_G " << r.loss_g
                                     << " P(real) " << r.real_prob << " P(fake) " << r.fake_prob
                                     << "\n";
                      });
        done += k;
      }
    } else {
      if (cfg_.ablation.gan_init && gan_.iteration < cfg_.gan.iters)
        throw Error("phase ordering violated: DMD requested before phase 1 finished");
      const int k = std::min(cfg_.dmd.iters - dmd_.iteration, n - done);
      if (k > 0) {
        DmdPhaseOptions o;
        o.iters = cfg_.dmd.iters;
        o.batch = cfg_.batch;
        o.dmd.weight_mode = cfg_.effective_weight_mode();
        o.dmd.chain_sqrt_alpha = cfg_.dmd.chain_sqrt_alpha;
        o.dmd.normalize = cfg_.dmd.normalize;
        o.truncate_tau = cfg_.dmd.truncate_tau;
        o.fake_updates = cfg_.dmd.fake_updates;
        o.disc_updates = cfg_.gan.disc_updates;
        o.train_head = cfg_.dmd.train_head;
        o.form = cfg_.gan.form;
        o.conditional = conditional;
        const ScoreSource real = cfg_.dmd.score_provider == "analytic"
                                     ? ScoreSource::analytic(mix)
                                     : ScoreSource::neural(teacher_->denoiser);
        run_dmd_phase(student_, student_opt_, fake_, fake_opt_, &disc_, &head_opt_, real, mix, o,
                      data_, noise_, dmd_, k, [this](int it, const DmdLogRow& r) {
                        stamp(Phase::kDmd);
                        dmd_log_.push_back(r);
                        if (progress_ && progress_every_ > 0 && (it + 1) % progress_every_ == 0)
                          *progress_ << "[dmd " << it + 1 << "/" << cfg_.dmd.iters << "] |grad| "
                                     << r.mean_cotangent << " r " << r.mean_ratio << " w "
                                     << r.mean_weight << " fake_loss " << r.fake_score_loss
                                     << "\n";
                      });
        done += k;
      }
    }
    phase_ = first_phase();
  }
  return done;
}

namespace {

constexpr int kGanColumns = 6;
constexpr int kDmdColumns = 5;

Eigen::VectorXd flatten(const std::vector<GanBatchReport>& log) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(log.size()) * kGanColumns);
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& r = log[i];
    v.segment(static_cast<Eigen::Index>(i) * kGanColumns, kGanColumns)
        << r.loss_d, r.loss_g, r.real_prob, r.fake_prob, r.grad_norm_g, r.grad_norm_d;
  }
  return v;
}

Eigen::VectorXd flatten(const std::vector<DmdLogRow>& log) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(log.size()) * kDmdColumns);
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& r = log[i];
    v.segment(static_cast<Eigen::Index>(i) * kDmdColumns, kDmdColumns)
        << r.mean_cotangent, r.mean_ratio, r.mean_weight, r.fake_score_loss, r.rms;
  }
  return v;
}

}  // namespace

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.header = {{"config", cfg_.resolved},
              {"phase", to_string(phase_)},
              {"gan", {{"iteration", gan_.iteration}, {"collapse_streak", gan_.collapse_streak}}},
              {"dmd",
               {{"iteration", dmd_.iteration},
                {"monitor_streak", dmd_.fake_monitor.streak()},
                {"monitor_started", dmd_.fake_monitor.started()}}},
              {"rng", {{"data", data_.state()}, {"noise", noise_.state()}}},
              {"teacher_prediction", to_string(teacher_->denoiser.prediction)}};
  add_network(c, "teacher", teacher_->denoiser.net);
  add_network(c, "student", student_.denoiser.net);
  add_adam(c, "student_adam", student_opt_);
  add_network(c, "head", disc_.head);
  add_adam(c, "head_adam", head_opt_);
  add_network(c, "fake_score", fake_.net);
  add_adam(c, "fake_score_adam", fake_opt_);
  c.add("fake_monitor", Eigen::VectorXd::Constant(1, dmd_.fake_monitor.initial()));
  c.add("gan_log", flatten(gan_log_));
  c.add("dmd_log", flatten(dmd_log_));
  Eigen::VectorXd st(static_cast<Eigen::Index>(stamps_.size()));
  for (std::size_t i = 0; i < stamps_.size(); ++i) st[static_cast<Eigen::Index>(i)] = static_cast<double>(stamps_[i]);
  c.add("stamps", std::move(st));
  return c;
}

void Trainer::restore(const Checkpoint& c) {
  if (!c.header.contains("config") || c.header.at("config") != cfg_.resolved)
    throw CheckpointError("header", "checkpoint was written for a different configuration");
  try {
    if (teacher_->denoiser.net.params() != c.get("teacher").values)
      throw CheckpointError("teacher", "teacher parameters differ from the checkpoint");
    restore_network(c, "student", student_.denoiser.net);
    restore_adam(c, "student_adam", student_opt_);
    restore_network(c, "head", disc_.head);
    restore_adam(c, "head_adam", head_opt_);
    restore_network(c, "fake_score", fake_.net);
    restore_adam(c, "fake_score_adam", fake_opt_);

    const auto& h = c.header;
    gan_.iteration = h.at("gan").at("iteration");
    gan_.collapse_streak = h.at("gan").at("collapse_streak");
    dmd_.iteration = h.at("dmd").at("iteration");
    dmd_.fake_monitor.restore(c.get("fake_monitor").values[0], h.at("dmd").at("monitor_streak"),
                              h.at("dmd").at("monitor_started"));
    data_.set_state(h.at("rng").at("data"));
    noise_.set_state(h.at("rng").at("noise"));

    const auto& g = c.get("gan_log").values;
    if (g.size() != static_cast<Eigen::Index>(gan_.iteration) * kGanColumns)
      throw CheckpointError("gan_log", "log length disagrees with the iteration counter");
    gan_log_.resize(static_cast<std::size_t>(gan_.iteration));
    for (std::size_t i = 0; i < gan_log_.size(); ++i) {
      const auto s = g.segment(static_cast<Eigen::Index>(i) * kGanColumns, kGanColumns);
      gan_log_[i] = {s[0], s[1], s[2], s[3], s[4], s[5]};
    }
    const auto& d = c.get("dmd_log").values;
    if (d.size() != static_cast<Eigen::Index>(dmd_.iteration) * kDmdColumns)
      throw CheckpointError("dmd_log", "log length disagrees with the iteration counter");
    dmd_log_.resize(static_cast<std::size_t>(dmd_.iteration));
    for (std::size_t i = 0; i < dmd_log_.size(); ++i) {
      const auto s = d.segment(static_cast<Eigen::Index>(i) * kDmdColumns, kDmdColumns);
      dmd_log_[i] = {s[0], s[1], s[2], s[3], s[4]};
    }
    const auto& st = c.get("stamps").values;
    stamps_.clear();
    for (Eigen::Index i = 0; i < st.size(); ++i) stamps_.push_back(static_cast<Phase>(static_cast<int>(st[i])));
  } catch (const json::exception& e) {
    throw CheckpointError("header", e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError("header", e.what());
  }
  phase_ = first_phase();
}

std::shared_ptr<const TeacherBundle> teacher_from_checkpoint(const Checkpoint& ckpt,
                                                             const RunConfig& cfg) {
  Rng dummy(0);
  auto bundle = std::make_shared<TeacherBundle>(
      make_teacher_bundle(cfg.mixture, cfg.schedule, cfg.teacher.hidden, cfg.teacher.activation,
                          cfg.teacher.prediction, cfg.teacher.conditional, dummy));
  restore_network(ckpt, "teacher", bundle->denoiser.net);
  return bundle;
}

StudentModel student_from_checkpoint(const Checkpoint& ckpt, const RunConfig& cfg) {
  const auto& s = ckpt.get("student");
  DenseNet net = architecture_from_json(s.meta);
  restore_network(ckpt, "student", net);
  const std::string pred =
      ckpt.header.value("teacher_prediction", to_string(cfg.teacher.prediction));
  StudentModel m{Denoiser{std::move(net), prediction_from_string(pred)},
                 FewStepGrid::uniform(cfg.schedule.num_steps, cfg.grid_steps), cfg.schedule};
  m.validate();
  return m;
}

namespace {

Eigen::MatrixXd eval_condition(const RunConfig& cfg, int condition_dim, int n) {
  if (condition_dim == 0) return {};
  Rng labels = Rng::stream(cfg.eval_seed, "eval-labels");
  return one_hot(sample_mixture(cfg.mixture, n, labels).components, condition_dim);
}

void score_samples(StudentEvaluation& ev, const RunConfig& cfg, int n) {
  Rng ref_rng = Rng::stream(cfg.eval_seed, "eval-reference");
  Rng proj = Rng::stream(cfg.eval_seed, "eval-directions");
  const Eigen::MatrixXd ref = sample_mixture(cfg.mixture, n, ref_rng).samples;
  ev.coverage = mode_coverage(ev.samples, cfg.mixture, cfg.eval.radius, cfg.eval.min_hits);
  ev.distance = distance_report(ev.samples, ref, proj, cfg.eval.directions, cfg.eval.energy_max_points);
}

}  // namespace

StudentEvaluation evaluate_student(const StudentModel& m, const RunConfig& cfg, int n) {
  if (n < 2) throw Error("evaluation needs at least two samples");
  Rng latent = Rng::stream(cfg.eval_seed, "eval-latent");
  Rng renoise = Rng::stream(cfg.eval_seed, "eval-renoise");
  const Eigen::MatrixXd z = latent.normal_matrix(cfg.mixture.dim(), n);
  const Eigen::MatrixXd cond = eval_condition(cfg, m.denoiser.condition_dim(), n);
  StudentEvaluation ev;
  const auto t0 = Clock::now();
  FewStepResult r = generate_few_step(m, z, cond, renoise, cfg.renoise);
  ev.seconds = seconds_since(t0);
  ev.evaluations = r.evaluations;
  ev.samples = std::move(r.samples);
  score_samples(ev, cfg, n);
  return ev;
}

StudentEvaluation evaluate_teacher(const TeacherBundle& t, const RunConfig& cfg, int n, int steps) {
  if (n < 2) throw Error("evaluation needs at least two samples");
  Rng latent = Rng::stream(cfg.eval_seed, "eval-latent");
  const Eigen::MatrixXd z = latent.normal_matrix(cfg.mixture.dim(), n);
  const Eigen::MatrixXd cond = eval_condition(cfg, t.condition_dim, n);
  StudentEvaluation ev;
  const auto t0 = Clock::now();
  MultistepResult r = sample_multistep(t, steps, z, cond);
  ev.seconds = seconds_since(t0);
  ev.evaluations = r.evaluations;
  ev.samples = std::move(r.samples);
  score_samples(ev, cfg, n);
  return ev;
}

double RunReport::coverage() const {
  if (!final_block.contains("coverage")) return std::numeric_limits<double>::quiet_NaN();
  return final_block["coverage"]["coverage"].get<double>();
}

double RunReport::energy_distance() const {
  if (!final_block.contains("distance")) return std::numeric_limits<double>::quiet_NaN();
  return final_block["distance"]["energy_distance"].get<double>();
}

json RunReport::to_json() const {
  json j{{"config", config},
         {"phases", phases},
         {"final", final_block},
         {"checkpoints", checkpoints},
         {"status", ok() ? "ok" : "aborted"}};
  if (!ok()) j["error"] = {{"phase", error_phase}, {"message", error}};
  return j;
}

namespace {

void write_logs(const fs::path& out, const Trainer& tr, const RunConfig& cfg) {
  const int every = std::max(cfg.log_every, 1);
  {
    CsvWriter w(out / "gan.csv", {"iteration", "loss_d", "loss_g", "real_prob", "fake_prob",
                                  "grad_norm_g", "grad_norm_d"});
    const auto& log = tr.gan_log();
    for (std::size_t i = 0; i < log.size(); ++i) {
      if ((i + 1) % static_cast<std::size_t>(every) != 0 && i + 1 != log.size()) continue;
      const auto& r = log[i];
      w.row({static_cast<double>(i + 1), r.loss_d, r.loss_g, r.real_prob, r.fake_prob,
             r.grad_norm_g, r.grad_norm_d});
    }
  }
  {
    CsvWriter w(out / "dmd.csv", {"iteration", "mean_cotangent", "mean_ratio", "mean_weight",
                                  "fake_score_loss", "rms"});
    const auto& log = tr.dmd_log();
    for (std::size_t i = 0; i < log.size(); ++i) {
      if ((i + 1) % static_cast<std::size_t>(every) != 0 && i + 1 != log.size()) continue;
      const auto& r = log[i];
      w.row({static_cast<double>(i + 1), r.mean_cotangent, r.mean_ratio, r.mean_weight,
             r.fake_score_loss, r.rms});
    }
  }
}

json eval_json(const StudentEvaluation& ev) {
  return {{"coverage", to_json(ev.coverage)},
          {"distance", to_json(ev.distance)},
          {"evaluations", ev.evaluations}};
}

}  // namespace

RunReport run_experiment(const RunConfig& cfg, const ExperimentOptions& options) {
  RunReport rep;
  rep.config = cfg.resolved;
  const bool write = !options.out_dir.empty();
  const fs::path& out = options.out_dir;
  if (write) {
    fs::create_directories(out);
    write_json(out / "config.json", cfg.resolved);
  }
  std::ostream* progress = options.progress;

  // Teacher: from the resume checkpoint, the shared cache, or a fresh fit.
  std::optional<Checkpoint> resume;
  if (options.resume) resume = load_checkpoint(*options.resume);
  std::shared_ptr<const TeacherBundle> teacher;
  if (resume) {
    teacher = teacher_from_checkpoint(*resume, cfg);
    rep.phases["teacher"] = {{"source", "checkpoint"}};
  } else {
    TeacherCache local;
    TeacherCache& cache = options.cache ? *options.cache : local;
    const auto& entry = cache.get(cfg, progress);
    teacher = entry.bundle;
    const auto& loss = entry.log.loss;
    rep.phases["teacher"] = {{"iters", loss.size()},
                             {"final_loss", loss.empty() ? 0.0 : moving_average(loss, 200).back()},
                             {"seconds", entry.seconds}};
    if (write) {
      CsvWriter w(out / "teacher.csv", {"iteration", "loss"});
      for (std::size_t i = 0; i < loss.size(); ++i) w.row({static_cast<double>(i + 1), loss[i]});
    }
  }

  Trainer tr(cfg, teacher);
  tr.set_progress(progress, options.progress_every);
  if (resume) tr.restore(*resume);

  double gan_seconds = 0.0;
  double dmd_seconds = 0.0;
  std::vector<std::vector<double>> eval_rows;
  auto phase_eval = [&](double stage) {
    const auto ev = evaluate_student(tr.student(), cfg, std::max(cfg.eval.samples, 2));
    eval_rows.push_back({stage, static_cast<double>(tr.gan_iteration() + tr.dmd_iteration()),
                         ev.coverage.coverage, ev.distance.energy, ev.distance.sliced_w});
    return ev;
  };

  const bool ran_gan = cfg.ablation.gan_init && cfg.gan.iters > 0;
  try {
    while (tr.phase() != Phase::kDone) {
      const Phase p = tr.phase();
      const int in_phase = p == Phase::kGan ? cfg.gan.iters - tr.gan_iteration()
                                            : cfg.dmd.iters - tr.dmd_iteration();
      int chunk = in_phase;
      if (cfg.checkpoint_every > 0) {
        const int done = tr.gan_iteration() + tr.dmd_iteration();
        chunk = std::min(chunk, cfg.checkpoint_every - done % cfg.checkpoint_every);
      }
      const auto t0 = Clock::now();
      tr.advance(chunk);
      (p == Phase::kGan ? gan_seconds : dmd_seconds) += seconds_since(t0);
      const int total = tr.gan_iteration() + tr.dmd_iteration();
      if (write && cfg.checkpoint_every > 0 && total % cfg.checkpoint_every == 0) {
        const fs::path dir = out / "checkpoints" / ("iter_" + std::to_string(total));
        save_checkpoint(tr.checkpoint(), dir);
        rep.checkpoints.push_back(dir.string());
      }
      if (p == Phase::kGan && tr.phase() == Phase::kDmd && cfg.eval.samples >= 2) {
        const auto ev = phase_eval(0.0);
        rep.phases["gan_eval"] = eval_json(ev);
        if (progress)
          *progress << "[eval] after phase 1: coverage " << ev.coverage.coverage << " energy "
                    << ev.distance.energy << "\n";
      }
    }
  } catch (const TrainingAborted& e) {
    rep.error = e.what();
    rep.error_phase = e.phase();
    if (write) {
      write_logs(out, tr, cfg);
      write_json(out / "report.json", rep.to_json());
    }
    throw;
  }

  if (ran_gan) rep.phases["gan"] = {{"iters", tr.gan_iteration()}, {"seconds", gan_seconds}};
  if (cfg.ablation.dmd && cfg.dmd.iters > 0)
    rep.phases["dmd"] = {{"iters", tr.dmd_iteration()},
                         {"seconds", dmd_seconds},
                         {"weight_mode", to_string(cfg.effective_weight_mode())},
                         {"score_provider", cfg.dmd.score_provider}};

  if (cfg.eval.samples >= 2) {
    const auto t0 = Clock::now();
    const StudentEvaluation ev = phase_eval(1.0);
    const StudentEvaluation tev =
        evaluate_teacher(*teacher, cfg, cfg.eval.samples, cfg.eval.teacher_steps);
    const SpeedupReport sp =
        speedup_report(ev.evaluations, tev.evaluations, ev.seconds, tev.seconds);
    rep.final_block = eval_json(ev);
    rep.final_block["teacher_sampler"] = eval_json(tev);
    rep.final_block["speedup"] = to_json(sp);
    rep.final_block["seconds"] = {{"teacher", rep.phases["teacher"].value("seconds", 0.0)},
                                  {"gan", gan_seconds},
                                  {"dmd", dmd_seconds},
                                  {"eval", seconds_since(t0)},
                                  {"student_sampling", ev.seconds},
                                  {"teacher_sampling", tev.seconds}};
    if (progress)
      *progress << "[eval] final: coverage " << ev.coverage.coverage << " energy "
                << ev.distance.energy << " sliced-W " << ev.distance.sliced_w << "\n";
    if (write && options.write_samples) write_samples_csv(out / "samples.csv", ev.samples, cfg.eval_seed);
  }

  if (write) {
    write_logs(out, tr, cfg);
    CsvWriter w(out / "eval.csv", {"stage", "iteration", "coverage", "energy_distance",
                                   "sliced_wasserstein"});
    for (const auto& r : eval_rows) w.row(r);
    const fs::path dir = out / "checkpoints" / "final";
    save_checkpoint(tr.checkpoint(), dir);
    rep.checkpoints.push_back(dir.string());
    write_parameters_f32(tr.student().denoiser.net, out / "student");
    write_json(out / "report.json", rep.to_json());
  }
  return rep;
}

std::vector<AblationRow> default_ablation_rows() {
  return {{"no_gan_init", {false, true, true}},
          {"gan_only", {true, false, true}},
          {"gan_dmd_plain", {true, true, false}},
          {"full", {true, true, true}}};
}

double median(std::vector<double> values) {
  std::erase_if(values, [](double v) { return !std::isfinite(v); });
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

json AblationResult::to_json() const {
  json rows_j = json::array();
  for (const auto& r : rows) {
    json runs = json::array();
    for (std::size_t i = 0; i < r.reports.size(); ++i) {
      json run{{"seed", r.seeds[i]}, {"status", r.reports[i].ok() ? "ok" : "aborted"}};
      if (std::isfinite(r.coverage[i])) run["coverage"] = r.coverage[i];
      if (std::isfinite(r.energy[i])) run["energy_distance"] = r.energy[i];
      if (!r.reports[i].ok()) run["error"] = r.reports[i].error;
      runs.push_back(run);
    }
    json row{{"name", r.row.name},
             {"gan_init", r.row.switches.gan_init},
             {"dmd", r.row.switches.dmd},
             {"soften", r.row.switches.soften},
             {"runs", runs},
             {"failures", r.failures}};
    if (std::isfinite(r.median_coverage)) row["median_coverage"] = r.median_coverage;
    if (std::isfinite(r.median_energy)) row["median_energy_distance"] = r.median_energy;
    rows_j.push_back(row);
  }
  return {{"rows", rows_j}};
}

AblationResult run_ablation_matrix(const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                                   const std::vector<AblationRow>& rows,
                                   const ExperimentOptions& options) {
  if (seeds.size() < 3) throw ConfigError("seeds", "the ablation matrix needs at least three seeds");
  if (rows.empty()) throw ConfigError("rows", "no ablation rows selected");
  TeacherCache local;
  ExperimentOptions opt = options;
  if (!opt.cache) opt.cache = &local;
  opt.resume.reset();

  AblationResult result;
  for (const auto& row : rows) {
    AblationResult::Row r;
    r.row = row;
    for (const auto seed : seeds) {
      json resolved = base.resolved;
      resolved["seed"] = seed;
      resolved["ablation"] = {{"gan_init", row.switches.gan_init},
                              {"dmd", row.switches.dmd},
                              {"soften", row.switches.soften}};
      const RunConfig cfg = parse_run_config(resolved);
      ExperimentOptions run_opt = opt;
      if (!options.out_dir.empty())
        run_opt.out_dir = options.out_dir / row.name / ("seed_" + std::to_string(seed));
      if (opt.progress) *opt.progress << "[ablate] row " << row.name << " seed " << seed << "\n";
      RunReport rep;
      try {
        rep = run_experiment(cfg, run_opt);
      } catch (const Error& e) {
        rep.config = cfg.resolved;
        rep.error = e.what();
        if (const auto* ta = dynamic_cast<const TrainingAborted*>(&e)) rep.error_phase = ta->phase();
        ++r.failures;
      }
      r.seeds.push_back(seed);
      r.coverage.push_back(rep.ok() ? rep.coverage() : std::numeric_limits<double>::quiet_NaN());
      r.energy.push_back(rep.ok() ? rep.energy_distance() : std::numeric_limits<double>::quiet_NaN());
      r.reports.push_back(std::move(rep));
    }
    r.median_coverage = median(r.coverage);
    r.median_energy = median(r.energy);
    if (opt.progress)
      *opt.progress << "[ablate] " << row.name << ": median coverage " << r.median_coverage
                    << ", median energy " << r.median_energy << "\n";
    result.rows.push_back(std::move(r));
  }

  if (!options.out_dir.empty()) {
    write_json(options.out_dir / "ablation.json", result.to_json());
    std::string csv = "row,seed,coverage,energy_distance,status\n";
    for (const auto& r : result.rows)
      for (std::size_t i = 0; i < r.seeds.size(); ++i)
        csv += r.row.name + "," + std::to_string(r.seeds[i]) + "," + format_number(r.coverage[i]) +
               "," + format_number(r.energy[i]) + "," + (r.reports[i].ok() ? "ok" : "aborted") + "\n";
    write_text(options.out_dir / "ablation.csv", csv);
  }
  return result;
}

}  // namespace dmdlab
