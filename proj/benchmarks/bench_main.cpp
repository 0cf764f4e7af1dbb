#include <benchmark/benchmark.h>

#include "dmdlab/dense_net.hpp"
#include "dmdlab/dmd.hpp"
#include "dmdlab/mixture.hpp"
#include "dmdlab/student.hpp"
#include "dmdlab/teacher.hpp"

using namespace dmdlab;

namespace {

DenseNet teacher_sized_net() {
  DenseNet net({2 + kTimeEmbeddingWidth, 64, 64, 64, 2}, Activation::kAlgebraic,
               InputLayout{2, kTimeEmbeddingWidth, 0});
  Rng rng(0);
  init_fan_in(net, rng);
  return net;
}

void BM_Forward(benchmark::State& state) {
  const DenseNet net = teacher_sized_net();
  Rng rng(1);
  const Eigen::MatrixXd x = rng.normal_matrix(net.input_width(), state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(4)->Arg(128)->Arg(10000);

void BM_ForwardBackward(benchmark::State& state) {
  const DenseNet net = teacher_sized_net();
  Rng rng(1);
  const Eigen::MatrixXd x = rng.normal_matrix(net.input_width(), state.range(0));
  const Eigen::MatrixXd c = rng.normal_matrix(2, state.range(0));
  DenseNet::Tape tape;
  for (auto _ : state) {
    net.forward(x, tape);
    benchmark::DoNotOptimize(net.backward(tape, c));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(4)->Arg(128);

void BM_AnalyticScore(benchmark::State& state) {
  const MixtureSpec mix = MixtureSpec::ring(8, 2.0, 0.1);
  const Schedule s = make_schedule(1000);
  Rng rng(2);
  const Eigen::MatrixXd x = rng.normal_matrix(2, state.range(0));
  std::vector<int> ts(static_cast<std::size_t>(state.range(0)));
  for (auto& t : ts) t = rng.uniform_int(1, 1000);
  for (auto _ : state) benchmark::DoNotOptimize(analytic_score_batch(x, ts, mix, s));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AnalyticScore)->Arg(128)->Arg(10000);

void BM_FewStepVsMultistep(benchmark::State& state) {
  const Schedule s = make_schedule(1000);
  Rng rng(3);
  const TeacherBundle t = make_teacher_bundle(MixtureSpec::ring(8, 2.0, 0.1), s, {64, 64, 64},
                                              Activation::kAlgebraic, Prediction::kSample, false, rng);
  const StudentModel m = make_student_from_teacher(t, FewStepGrid::uniform(1000, 4));
  const Eigen::MatrixXd z = rng.normal_matrix(2, 10000);
  const int steps = static_cast<int>(state.range(0));
  for (auto _ : state) {
    if (steps == 4)
      benchmark::DoNotOptimize(generate_few_step(m, z, {}, rng).samples);
    else
      benchmark::DoNotOptimize(sample_multistep(t, steps, z).samples);
  }
}
BENCHMARK(BM_FewStepVsMultistep)->Arg(4)->Arg(50)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
