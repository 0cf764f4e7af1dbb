#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "dmdlab/adam.hpp"
#include "dmdlab/denoiser.hpp"
#include "dmdlab/dense_net.hpp"
#include "dmdlab/error.hpp"
#include "dmdlab/rng.hpp"
#include "dmdlab/schedule.hpp"

using namespace dmdlab;

namespace {

DenseNet small_net(Activation act, std::uint64_t seed) {
  DenseNet net({3, 8, 2}, act, InputLayout{3, 0, 0});
  Rng rng(seed);
  init_fan_in(net, rng);
  // Non-zero biases so every parameter is exercised.
  net.mutable_params() += 0.1 * rng.normal_matrix(net.num_params(), 1).col(0);
  return net;
}

// <forward(x), c> for the FD oracle.
double pairing(const DenseNet& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& c) {
  return (net.forward(x).array() * c.array()).sum();
}

}  // namespace

TEST_CASE("reverse pass matches central differences on a 3-8-2 net") {
  for (Activation act : {Activation::kTanh, Activation::kSilu, Activation::kAlgebraic}) {
    CAPTURE(to_string(act));
    const DenseNet net = small_net(act, 2);
    Rng rng(8);
    const Eigen::MatrixXd x = rng.normal_matrix(3, 5);
    const Eigen::MatrixXd c = rng.normal_matrix(2, 5);
    DenseNet::Tape tape;
    net.forward(x, tape);
    const DenseNet::Gradients g = net.backward(tape, c);

    const double h = 1e-6;
    DenseNet probe = net;
    Eigen::VectorXd fd(net.num_params());
    for (Eigen::Index i = 0; i < net.num_params(); ++i) {
      Eigen::VectorXd p = net.params();
      p[i] += h;
      probe.set_params(p);
      const double up = pairing(probe, x, c);
      p[i] -= 2.0 * h;
      probe.set_params(p);
      fd[i] = (up - pairing(probe, x, c)) / (2.0 * h);
    }
    CHECK((g.params - fd).norm() / fd.norm() < 1e-5);

    Eigen::MatrixXd fdx(3, 5);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Eigen::MatrixXd xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      fdx(i) = (pairing(net, xp, c) - pairing(net, xm, c)) / (2.0 * h);
    }
    CHECK((g.input - fdx).norm() / fdx.norm() < 1e-5);
  }
}

TEST_CASE("hidden-layer input gradient matches central differences") {
  const DenseNet net = small_net(Activation::kTanh, 4);
  Rng rng(1);
  const Eigen::MatrixXd x = rng.normal_matrix(3, 2);
  const Eigen::MatrixXd c = rng.normal_matrix(8, 2);
  DenseNet::Tape tape;
  net.forward(x, tape);
  const Eigen::MatrixXd g = net.backward_input_from(tape, 0, c);
  auto f = [&](const Eigen::MatrixXd& y) {
    DenseNet::Tape t;
    net.forward(y, t);
    return (t.post[0].array() * c.array()).sum();
  };
  const double h = 1e-6;
  Eigen::MatrixXd fd(3, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::MatrixXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    fd(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  CHECK((g - fd).norm() / fd.norm() < 1e-5);
}

TEST_CASE("forward rejects a wrong input width") {
  const DenseNet net = small_net(Activation::kTanh, 1);
  CHECK_THROWS_AS(net.forward(Eigen::MatrixXd::Zero(4, 1)), ShapeError);
  DenseNet other = net;
  CHECK_THROWS_AS(other.set_params(Eigen::VectorXd::Zero(3)), ShapeError);
}

TEST_CASE("fan-in init bounds") {
  DenseNet net({2, 50, 1}, Activation::kTanh, InputLayout{2, 0, 0});
  Rng rng(0);
  init_fan_in(net, rng, /*zero_output=*/true);
  const Eigen::VectorXd& p = net.params();
  // Layer 0: 100 weights then 50 biases.
  CHECK(p.head(100).cwiseAbs().maxCoeff() <= std::sqrt(3.0 / 2.0));
  CHECK(p.segment(100, 50).isZero());
  CHECK(p.tail(51).isZero());
  CHECK(net.forward(Eigen::MatrixXd::Ones(2, 3)).isZero());
}

TEST_CASE("time embedding is bounded and distinguishes timesteps") {
  const std::vector<int> ts{0, 1, 500, 1000};
  const Eigen::MatrixXd e = time_embedding(ts, 1000);
  CHECK(e.rows() == kTimeEmbeddingWidth);
  CHECK(e.cwiseAbs().maxCoeff() <= 1.0);
  CHECK((e.col(0) - e.col(1)).norm() > 0.0);
}

TEST_CASE("float32 export round trip") {
  const DenseNet net = small_net(Activation::kAlgebraic, 6);
  const auto stem = std::filesystem::temp_directory_path() / "dmdlab_f32_roundtrip";
  write_parameters_f32(net, stem);
  const DenseNet back = read_parameters_f32(stem);
  CHECK(back.same_architecture(net));
  CHECK((back.params() - net.params().cast<float>().cast<double>()).norm() == 0.0);
}

TEST_CASE("first Adam step moves each coordinate by lr against the gradient sign") {
  AdamConfig cfg;
  cfg.lr = 1e-3;
  cfg.eps = 0.0;
  AdamState st = make_adam(3, cfg);
  Eigen::VectorXd p(3);
  p << 1.0, -2.0, 0.5;
  const Eigen::VectorXd p0 = p;
  Eigen::VectorXd g(3);
  g << 0.3, -7.0, 1e-4;
  adam_step(st, p, g);
  for (int i = 0; i < 3; ++i)
    CHECK(p[i] - p0[i] == doctest::Approx(-1e-3 * (g[i] > 0 ? 1.0 : -1.0)).epsilon(1e-9));
  CHECK(st.step == 1);
}

TEST_CASE("Adam matches a scalar reference over several steps") {
  AdamConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.1;
  AdamState st = make_adam(1, cfg);
  Eigen::VectorXd p = Eigen::VectorXd::Constant(1, 2.0);
  double x = 2.0, m = 0.0, v = 0.0;
  const double grads[] = {1.0, -0.5, 0.25, 3.0, -2.0};
  for (int k = 1; k <= 5; ++k) {
    const double g = grads[k - 1];
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, k));
    const double vh = v / (1.0 - std::pow(0.999, k));
    x -= 0.01 * (mh / (std::sqrt(vh) + 1e-8) + 0.1 * x);
    adam_step(st, p, Eigen::VectorXd::Constant(1, g));
    CHECK(p[0] == doctest::Approx(x).epsilon(1e-12));
  }
}

TEST_CASE("Adam rejects a non-finite gradient without touching parameters") {
  AdamState st = make_adam(2, AdamConfig{});
  Eigen::VectorXd p = Eigen::VectorXd::Ones(2);
  Eigen::VectorXd g(2);
  g << 1.0, std::nan("");
  CHECK_THROWS_AS(adam_step(st, p, g), Error);
  CHECK(p == Eigen::VectorXd::Ones(2));
  CHECK(st.step == 0);
  CHECK(st.m.isZero());
}

TEST_CASE("denoiser input gradient matches central differences") {
  const Schedule sched = make_schedule(1000);
  for (Prediction pred : {Prediction::kSample, Prediction::kVelocity}) {
    Rng rng(12);
    const Denoiser d = make_denoiser(2, {16, 16}, Activation::kTanh, pred, 0, rng);
    const Eigen::MatrixXd x = rng.normal_matrix(2, 3);
    const Eigen::MatrixXd c = rng.normal_matrix(2, 3);
    const std::vector<int> ts{3, 400, 990};
    Denoiser::Tape tape;
    d.predict_x0(x, ts, sched, {}, tape);
    const Denoiser::Gradients g = d.backward_x0(tape, c, sched);
    auto f = [&](const Eigen::MatrixXd& y) {
      return (d.predict_x0(y, ts, sched).array() * c.array()).sum();
    };
    Eigen::MatrixXd fd(2, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Eigen::MatrixXd xp = x, xm = x;
      xp(i) += 1e-6;
      xm(i) -= 1e-6;
      fd(i) = (f(xp) - f(xm)) / 2e-6;
    }
    CHECK((g.x_t - fd).norm() / fd.norm() < 1e-5);
  }
}

TEST_CASE("denoising loss gradient matches central differences") {
  const Schedule sched = make_schedule(1000);
  Rng rng(21);
  Denoiser d = make_denoiser(2, {8}, Activation::kTanh, Prediction::kVelocity, 0, rng);
  const Eigen::MatrixXd x0 = rng.normal_matrix(2, 4);
  const Eigen::MatrixXd eps = rng.normal_matrix(2, 4);
  const std::vector<int> ts{1, 10, 300, 1000};
  const DenoisingLoss l = denoising_loss(d, x0, eps, ts, sched);
  const Eigen::VectorXd p0 = d.net.params();
  Eigen::VectorXd fd(p0.size());
  for (Eigen::Index i = 0; i < p0.size(); ++i) {
    Eigen::VectorXd p = p0;
    p[i] += 1e-6;
    d.net.set_params(p);
    const double up = denoising_loss(d, x0, eps, ts, sched).loss;
    p[i] -= 2e-6;
    d.net.set_params(p);
    fd[i] = (up - denoising_loss(d, x0, eps, ts, sched).loss) / 2e-6;
  }
  CHECK((l.grad - fd).norm() / fd.norm() < 1e-5);
}

TEST_CASE("divergence monitor trips after the patience window") {
  DivergenceMonitor mon(10.0, 3);
  CHECK(mon.update(1.0));
  CHECK(mon.update(50.0));
  CHECK(mon.update(50.0));
  CHECK(mon.update(2.0));  // streak resets
  CHECK(mon.update(50.0));
  CHECK(mon.update(50.0));
  CHECK_FALSE(mon.update(50.0));
}

TEST_CASE("moving average window") {
  const auto ma = moving_average({1.0, 2.0, 3.0, 4.0}, 2);
  CHECK(ma == std::vector<double>{1.0, 1.5, 2.5, 3.5});
}
