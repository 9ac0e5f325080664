#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "modal/losses.hpp"
#include "modal/neuralnet.hpp"
#include "oracles.hpp"

using namespace modal;

namespace {

// Eval-mode forward pass written with plain loops.
Eigen::MatrixXd loop_forward(const Mlp& m, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd a = x;
  for (const auto& L : m.layers()) {
    Eigen::MatrixXd next(a.rows(), L.out_dim());
    for (int r = 0; r < a.rows(); ++r) {
      for (int o = 0; o < L.out_dim(); ++o) {
        double s = L.b(o);
        for (int i = 0; i < L.in_dim(); ++i) s += L.W(o, i) * a(r, i);
        if (L.has_bn) {
          s = L.gamma(o) * (s - L.running_mean(o)) / std::sqrt(L.running_var(o) + L.eps) + L.beta(o);
        }
        if (L.activation == Activation::relu) s = s > 0.0 ? s : 0.0;
        if (L.activation == Activation::sigmoid) s = 1.0 / (1.0 + std::exp(-s));
        next(r, o) = s;
      }
    }
    a = next;
  }
  return a;
}

Eigen::MatrixXd random_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = g(rng);
  }
  return m;
}

}  // namespace

TEST(Mlp, ShapesAndParamCount) {
  const auto m = Mlp::point_seg(10, 16, 3, 1);
  EXPECT_EQ(m.in_dim(), 10);
  EXPECT_EQ(m.out_dim(), 1);
  // 10*16+16 + 2*16 (bn) + 16*16+16 + 2*16 + 16+1
  EXPECT_EQ(m.num_params(), 176u + 32u + 272u + 32u + 17u);
  EXPECT_EQ(m.flat_params().size(), m.num_params());
}

TEST(Mlp, PredictMatchesLoopOracle) {
  std::mt19937_64 rng(2);
  auto m = Mlp::point_seg(6, 8, 3, 9);
  // Give the running statistics non-trivial values.
  for (int i = 0; i < 5; ++i) m.forward(random_matrix(16, 6, rng));
  const auto x = random_matrix(7, 6, rng);
  EXPECT_TRUE(m.predict(x).isApprox(loop_forward(m, x), 1e-12));
}

TEST(Mlp, TrainModeUpdatesRunningStatsOnly) {
  std::mt19937_64 rng(3);
  auto m = Mlp::point_seg(4, 5, 2, 1);
  const auto before = m.layers()[0].running_mean;
  const auto params = m.flat_params();
  m.forward_frozen(random_matrix(8, 4, rng));
  EXPECT_EQ(m.layers()[0].running_mean, before);
  m.forward(random_matrix(8, 4, rng));
  EXPECT_NE(m.layers()[0].running_mean, before);
  EXPECT_EQ(m.flat_params(), params);
}

TEST(Mlp, ZeroWeightsGiveHalf) {
  auto m = Mlp::point_seg(3, 4, 2, 0);
  auto p = m.flat_params();
  std::fill(p.begin(), p.end(), 0.0);
  m.set_flat_params(p);
  std::mt19937_64 rng(1);
  const auto out = m.predict(random_matrix(5, 3, rng));
  for (int r = 0; r < out.rows(); ++r) EXPECT_EQ(out(r, 0), 0.5);
}

TEST(Mlp, StaleCacheRejected) {
  std::mt19937_64 rng(4);
  auto m = Mlp::point_seg(3, 4, 2, 0);
  ForwardCache cache;
  const auto out = m.forward(random_matrix(4, 3, rng), &cache);
  m.mutable_layers();
  EXPECT_THROW(m.backward(cache, Eigen::MatrixXd::Ones(out.rows(), 1)), Error);
}

TEST(Mlp, InputGradientMatchesFiniteDifference) {
  std::mt19937_64 rng(5);
  const auto m = Mlp::point_seg(4, 6, 3, 2);
  const auto x = random_matrix(5, 4, rng);
  const std::vector<double> y = {1, 0, 1, 1, 0};
  ForwardCache cache;
  const Eigen::MatrixXd out = m.forward_frozen(x, &cache);
  const auto lv = bce_loss({out.data(), 5}, y);
  const auto g = m.backward(cache, Eigen::Map<const Eigen::MatrixXd>(lv.gradient.data(), 5, 1));
  std::vector<double> flat(x.data(), x.data() + x.size());
  const auto num = oracle::finite_difference(
      [&](const std::vector<double>& v) {
        const Eigen::MatrixXd o = m.forward_frozen(Eigen::Map<const Eigen::MatrixXd>(v.data(), 5, 4));
        return bce_loss({o.data(), 5}, y).value;
      },
      flat, 1e-6);
  for (std::size_t k = 0; k < flat.size(); ++k) {
    EXPECT_TRUE(oracle::gradients_agree(g.input_grad.data()[k], num[k], 1e-4)) << k;
  }
}

TEST(Mlp, CheckpointRoundTripIsExact) {
  std::mt19937_64 rng(6);
  auto m = Mlp::point_seg(5, 7, 3, 3);
  m.forward(random_matrix(9, 5, rng));
  std::stringstream ss;
  write_checkpoint(ss, m);
  const auto back = read_checkpoint(ss);
  EXPECT_EQ(back.flat_params(), m.flat_params());
  const auto x = random_matrix(4, 5, rng);
  EXPECT_EQ(back.predict(x), m.predict(x));
  std::stringstream bad("not a checkpoint");
  EXPECT_THROW(read_checkpoint(bad), Error);
}

TEST(Training, LearnsSeparableData) {
  std::mt19937_64 rng(7);
  const auto x = random_matrix(400, 2, rng);
  Eigen::VectorXd y(400);
  for (int r = 0; r < 400; ++r) y(r) = x(r, 0) + x(r, 1) > 0.0 ? 1.0 : 0.0;
  auto m = Mlp::point_seg(2, 16, 3, 1);
  auto opt = OptimizerState::adam(1e-2);
  const auto res = train_epochs(m, x, y, opt, {30, 32, 1});
  ASSERT_EQ(res.loss_trace.size(), 30u);
  EXPECT_LT(res.loss_trace.back(), 0.5 * res.loss_trace.front());
  const auto p = m.predict(x);
  int correct = 0;
  for (int r = 0; r < 400; ++r) correct += (p(r, 0) > 0.5) == (y(r) > 0.5);
  EXPECT_GT(correct, 380);
}

TEST(Training, DeterministicPerSeed) {
  std::mt19937_64 rng(8);
  const auto x = random_matrix(64, 3, rng);
  Eigen::VectorXd y(64);
  for (int r = 0; r < 64; ++r) y(r) = r % 2;
  auto a = Mlp::point_seg(3, 4, 2, 5), b = Mlp::point_seg(3, 4, 2, 5);
  auto oa = OptimizerState::sgd(0.01), ob = OptimizerState::sgd(0.01);
  train_epochs(a, x, y, oa, {3, 8, 11});
  train_epochs(b, x, y, ob, {3, 8, 11});
  EXPECT_EQ(a.flat_params(), b.flat_params());
}
