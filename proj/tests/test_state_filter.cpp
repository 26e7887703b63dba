#include "rio/state.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "support.hpp"

using namespace rio;
using test::rng;

namespace {

FilterState random_state(std::mt19937& gen) {
  FilterState s;
  for (int i = 0; i < kStateDim; ++i) s.x[i] = test::uniform(-1.0, 1.0, gen);
  Eigen::MatrixXd a(kStateDim, kStateDim);
  for (int i = 0; i < a.size(); ++i)
    a(i / kStateDim, i % kStateDim) = test::uniform(-0.1, 0.1, gen);
  s.P = a * a.transpose() + 0.01 * StateCov::Identity();
  s.lagged_orientation = test::random_quat(gen);
  s.lagged_cov = 0.001 * Mat3::Identity();
  return s;
}

void expect_psd(const StateCov& p) {
  EXPECT_LT((p - p.transpose()).norm(), 1e-9 * p.norm());
  Eigen::SelfAdjointEigenSolver<StateCov> es(p);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-9 * p.trace());
}

}  // namespace

TEST(Predict, ZeroStateZeroNoise) {
  auto& gen = rng();
  FilterState s = random_state(gen);
  s.x.setZero();
  ProcessNoise pn;
  pn.sigma_translation = pn.sigma_increment = 0.0;
  pn.sigma_accel_bias = pn.sigma_gyro_bias = 0.0;
  const ProcessModel m = make_process_model(pn);
  const FilterState out = predict(s, m);
  EXPECT_LT(out.x.norm(), 1e-15);
  EXPECT_LT((out.P - m.A * s.P * m.A.transpose()).norm(), 1e-9);
}

TEST(Predict, TransitionRows) {
  auto& gen = rng();
  const FilterState s = random_state(gen);
  const FilterState out = predict(s, make_process_model());
  // Shift rows.
  for (int k = 0; k < 3; ++k) {
    EXPECT_LT((out.translation_cp(k) - s.translation_cp(k + 1)).norm(), 1e-15);
    EXPECT_LT(
        (out.orientation_increment(k) - s.orientation_increment(k + 1)).norm(),
        1e-15);
  }
  // New knots: -t_{i-3} + 2 t_{i-1} and delta_{i-2}.
  EXPECT_LT((out.translation_cp(3) -
             (-s.translation_cp(0) + 2.0 * s.translation_cp(2)))
                .norm(),
            1e-15);
  EXPECT_LT((out.orientation_increment(3) - s.orientation_increment(1)).norm(),
            1e-15);
  // Biases persist.
  EXPECT_LT((out.accel_bias() - s.accel_bias()).norm(), 1e-15);
  EXPECT_EQ(out.knot_index, s.knot_index + 1);
  EXPECT_NEAR(out.newest_knot_time, s.newest_knot_time + s.dt, 1e-12);
}

TEST(Predict, LaggedQuaternionFold) {
  auto& gen = rng();
  const FilterState s = random_state(gen);
  const FilterState out = predict(s, make_process_model());
  const UnitQuaternion expected =
      s.lagged_orientation * quat_exp(s.orientation_increment(0));
  EXPECT_LT((out.lagged_orientation.wxyz() - expected.wxyz()).norm(), 1e-12);
  // Folded covariance grows by the increment's marginal.
  EXPECT_GE(out.lagged_cov.trace(), s.lagged_cov.trace() - 1e-12);
}

// Monte-Carlo check of the first-order lagged-covariance composition.
TEST(Predict, LaggedCovarianceFoldMonteCarlo) {
  auto& gen = rng();
  FilterState s = random_state(gen);
  s.lagged_cov = 1e-4 * Mat3::Identity();
  const Mat3 inc_cov = 2e-4 * Mat3::Identity();
  s.P.block<3, 3>(kOriOffset, kOriOffset) = inc_cov;
  const FilterState folded = predict(s, make_process_model());

  std::normal_distribution<double> n(0.0, 1.0);
  const int draws = 50000;
  Mat3 acc = Mat3::Zero();
  const UnitQuaternion mean = folded.lagged_orientation;
  for (int i = 0; i < draws; ++i) {
    const Vec3 th = 1e-2 * Vec3(n(gen), n(gen), n(gen));
    const Vec3 eps = std::sqrt(2e-4) * Vec3(n(gen), n(gen), n(gen));
    const UnitQuaternion sample = s.lagged_orientation * quat_exp(th) *
                                  quat_exp(s.orientation_increment(0) + eps);
    const Vec3 d = quat_log(mean.conjugate() * sample);
    acc += d * d.transpose();
  }
  const Mat3 sample_cov = acc / (draws - 1);
  EXPECT_LT((sample_cov - folded.lagged_cov).norm() / folded.lagged_cov.norm(),
            0.06);
}

TEST(StateWindow, ZeroStateGivesIdentityWindow) {
  FilterState s;
  const SplineWindow w = state_to_window(s);
  for (int k = 0; k < 4; ++k) {
    EXPECT_LT(w.translation_cps[k].norm(), 1e-300);
    EXPECT_LT(w.orientation_increments[k].norm(), 1e-300);
  }
  EXPECT_DOUBLE_EQ(w.lagged_orientation.w(), 1.0);
  EXPECT_DOUBLE_EQ(w.knot_time(3), s.newest_knot_time);
}

TEST(StateWindow, RoundTripBitIdentical) {
  auto& gen = rng();
  const FilterState s = random_state(gen);
  const SplineWindow w = state_to_window(s);
  FilterState back = s;
  back.x.setZero();
  window_to_state(w, back);
  for (int k = 0; k < 4; ++k) {
    EXPECT_EQ(back.translation_cp(k), s.translation_cp(k));
    EXPECT_EQ(back.orientation_increment(k), s.orientation_increment(k));
  }
  EXPECT_EQ(back.newest_knot_time, s.newest_knot_time);
}

// Exact-measurement limit: z = x0 observed with tiny noise and a huge prior.
TEST(IteratedUpdate, ExactMeasurementLimit) {
  FilterState s;
  s.P = 1e6 * StateCov::Identity();
  const double z = 3.7;
  UpdateReport rep;
  const auto assemble = [&](const StateVec& x) {
    std::vector<ResidualBlock> blocks(1);
    blocks[0].r.resize(1);
    blocks[0].r[0] = z - x[0];
    blocks[0].H.resize(1, kStateDim);
    blocks[0].H.setZero();
    blocks[0].H(0, 0) = 1.0;
    blocks[0].R.resize(1, 1);
    blocks[0].R(0, 0) = 1e-12;
    return blocks;
  };
  const FilterState out =
      iterated_update(s, assemble, ConstraintMatrix{}, 1e-10, 10, &rep);
  EXPECT_NEAR(out.x[0], z, 1e-5);
  EXPECT_LE(rep.iterations, 2);  // linear model: one productive iteration
}

TEST(IteratedUpdate, ZeroResidualsConvergeImmediately) {
  FilterState s;
  s.P = StateCov::Identity();
  UpdateReport rep;
  const auto assemble = [&](const StateVec& x) {
    std::vector<ResidualBlock> blocks(1);
    blocks[0].r.resize(3);
    blocks[0].r.setZero();
    blocks[0].H.resize(3, kStateDim);
    blocks[0].H.setZero();
    blocks[0].H(0, 3) = 1.0;
    blocks[0].H(1, 4) = 1.0;
    blocks[0].H(2, 5) = 1.0;
    blocks[0].R = 0.1 * Eigen::Matrix3d::Identity();
    return blocks;
  };
  const FilterState out =
      iterated_update(s, assemble, ConstraintMatrix{}, 1e-8, 10, &rep);
  EXPECT_TRUE(rep.converged);
  EXPECT_EQ(rep.iterations, 1);
  EXPECT_LT((out.x - s.x).norm(), 1e-12);
}

TEST(IteratedUpdate, EmptyListReturnsUnchangedWithWarning) {
  auto& gen = rng();
  const FilterState s = random_state(gen);
  UpdateReport rep;
  const auto assemble = [](const StateVec&) {
    return std::vector<ResidualBlock>{};
  };
  const FilterState out =
      iterated_update(s, assemble, ConstraintMatrix{}, 1e-8, 10, &rep);
  EXPECT_TRUE(rep.empty_residuals);
  EXPECT_EQ(out.x, s.x);
  EXPECT_EQ(out.P, s.P);
}

// Nonlinear scalar system: the IEKF fixed point must match a brute-force
// Gauss-Newton solve of the MAP problem.
TEST(IteratedUpdate, MatchesGaussNewtonOnMap) {
  FilterState s;
  s.x[0] = 0.4;
  s.P = StateCov::Identity();
  s.P(0, 0) = 0.5;
  const double z = 0.9;
  const double r_var = 0.01;
  const auto h = [](double x) { return std::sin(x) + 0.3 * x * x; };
  const auto dh = [](double x) { return std::cos(x) + 0.6 * x; };

  const auto assemble = [&](const StateVec& x) {
    std::vector<ResidualBlock> blocks(1);
    blocks[0].r.resize(1);
    blocks[0].r[0] = z - h(x[0]);
    blocks[0].H.resize(1, kStateDim);
    blocks[0].H.setZero();
    blocks[0].H(0, 0) = dh(x[0]);
    blocks[0].R.resize(1, 1);
    blocks[0].R(0, 0) = r_var;
    return blocks;
  };
  UpdateReport rep;
  const FilterState out =
      iterated_update(s, assemble, ConstraintMatrix{}, 1e-12, 50, &rep);

  // Brute-force Gauss-Newton with prior on the scalar subproblem.
  double x = s.x[0];
  for (int it = 0; it < 100; ++it) {
    const double grad =
        (x - s.x[0]) / s.P(0, 0) - dh(x) * (z - h(x)) / r_var;
    const double hess = 1.0 / s.P(0, 0) + dh(x) * dh(x) / r_var;
    x -= grad / hess;
  }
  EXPECT_TRUE(rep.converged);
  EXPECT_NEAR(out.x[0], x, 1e-9);
  // Monotone objective on this well-conditioned problem.
  EXPECT_EQ(rep.objective_increases, 0);
}

// Information-form increment equals the textbook covariance-form gain
// applied to the same linearization.
TEST(IteratedUpdate, GainFormEquivalenceOracle) {
  auto& gen = rng();
  for (int trial = 0; trial < 20; ++trial) {
    FilterState s = random_state(gen);
    const int m = 6;
    Eigen::MatrixXd H(m, kStateDim);
    for (int i = 0; i < H.size(); ++i)
      H(i / kStateDim, i % kStateDim) = test::uniform(-1, 1, gen);
    Eigen::VectorXd z(m);
    for (int i = 0; i < m; ++i) z[i] = test::uniform(-1, 1, gen);
    Eigen::MatrixXd R = Eigen::MatrixXd::Identity(m, m) * 0.05;

    const auto assemble = [&](const StateVec& x) {
      std::vector<ResidualBlock> blocks(1);
      blocks[0].r = (z - H * x).eval();
      blocks[0].H = H;
      blocks[0].R = R;
      return blocks;
    };
    UpdateReport rep;
    const FilterState out =
        iterated_update(s, assemble, ConstraintMatrix{}, 1e-13, 1, &rep);

    // Covariance-form oracle: K = P H^T (H P H^T + R)^-1.
    const Eigen::MatrixXd K =
        s.P * H.transpose() * (H * s.P * H.transpose() + R).inverse();
    const StateVec dx_oracle = K * (z - H * s.x);
    EXPECT_LT((out.x - (s.x + dx_oracle)).norm(), 1e-9);
    // Posterior covariance: (I - K H) P.
    const StateCov p_oracle = (StateCov::Identity() - K * H) * s.P;
    EXPECT_LT((out.P - p_oracle).norm() / p_oracle.norm(), 1e-8);
  }
}

TEST(IteratedUpdate, ConstraintZeroesProjectedSubvector) {
  auto& gen = rng();
  for (int trial = 0; trial < 10; ++trial) {
    FilterState s = random_state(gen);
    ConstraintMatrix cm;
    cm.c.resize(2, 6);
    cm.c << 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1;
    cm.upsilon = cm.c.transpose();

    Eigen::VectorXd z(6);
    for (int i = 0; i < 6; ++i) z[i] = test::uniform(-1, 1, gen);
    const auto assemble = [&](const StateVec& x) {
      std::vector<ResidualBlock> blocks;
      for (int i = 0; i < 6; ++i) {
        ResidualBlock b;
        b.r.resize(1);
        b.H.resize(1, kStateDim);
        b.H.setZero();
        const int idx = i < 3 ? kNewestPosOffset + i : kNewestOriOffset + i - 3;
        b.r[0] = z[i] - x[idx];
        b.H(0, idx) = 1.0;
        b.R.resize(1, 1);
        b.R(0, 0) = 0.01;
        blocks.push_back(b);
      }
      return blocks;
    };
    const StateVec before = s.x;
    const FilterState out =
        iterated_update(s, assemble, cm, 1e-10, 5, nullptr);
    const StateVec dx_total = out.x - before;
    Vec6 sub;
    sub.head<3>() = dx_total.segment<3>(kNewestPosOffset);
    sub.tail<3>() = dx_total.segment<3>(kNewestOriOffset);
    EXPECT_LT((cm.c * sub).norm(), 1e-10);
  }
}

TEST(Invariants, CovarianceStaysPsdThroughPredictUpdateSequences) {
  auto& gen = rng();
  FilterState s;
  s.P = 0.01 * StateCov::Identity();
  const ProcessModel m = make_process_model();
  std::normal_distribution<double> n(0.0, 1.0);
  for (int step = 0; step < 30; ++step) {
    s = predict(s, m);
    const auto assemble = [&](const StateVec& x) {
      std::vector<ResidualBlock> blocks;
      for (int i = 0; i < 5; ++i) {
        ResidualBlock b;
        b.r.resize(1);
        b.H.resize(1, kStateDim);
        b.H.setZero();
        const int idx =
            std::uniform_int_distribution<int>(0, kStateDim - 1)(gen);
        b.H(0, idx) = test::uniform(-1.0, 1.0, gen);
        b.r[0] = 0.1 * n(gen) - b.H.row(0) * x;
        b.R.resize(1, 1);
        b.R(0, 0) = 0.04;
        blocks.push_back(b);
      }
      return blocks;
    };
    s = iterated_update(s, assemble, ConstraintMatrix{}, 1e-8, 5, nullptr);
    expect_psd(s.P);
  }
}
