#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <tuple>
#include <vector>

#include "quadmpc/outer_model.hpp"
#include "test_support.hpp"

namespace quadmpc {
namespace {

using testing::default_model;
using testing::kDrag;

Eigen::MatrixXd zoh_oracle(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double h) {
  const Eigen::Index n = A.rows(), m = B.cols();
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n + m, n + m);
  M.topLeftCorner(n, n) = A * h;
  M.topRightCorner(n, m) = B * h;
  return testing::taylor_expm(M);
}

TEST(OuterState, StackedLayout) {
  OuterState s;
  s.p_err = Vec3(1, 2, 3);
  s.v_err = Vec3(4, 5, 6);
  s.a_d = Vec3(7, 8, 9);
  s.eta = Vec3(10, 11, 12);
  const Vec12 x = s.stacked();
  for (int axis = 0; axis < 3; ++axis) {
    EXPECT_EQ(x(state_index(axis, Block::Position)), s.p_err(axis));
    EXPECT_EQ(x(state_index(axis, Block::Velocity)), s.v_err(axis));
    EXPECT_EQ(x(state_index(axis, Block::Accel)), s.a_d(axis));
    EXPECT_EQ(x(state_index(axis, Block::Filter)), s.eta(axis));
  }
  const OuterState r = OuterState::from_stacked(x);
  EXPECT_EQ(r.stacked(), x);
}

TEST(Discretize, MatchesTaylorExponential) {
  const DiscreteModel& m = default_model();
  const auto [A, B] = continuous_model(testing::kGamma, kDrag);
  const Eigen::MatrixXd phi = zoh_oracle(A, B, testing::kH);
  EXPECT_LE((m.Ad - phi.topLeftCorner(12, 12)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((m.Bd - phi.topRightCorner(12, 3)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Discretize, GenericZohMatchesOracle) {
  Eigen::MatrixXd A(2, 2), B(2, 1);
  A << 0.0, 1.0, -4.0, -0.3;
  B << 0.0, 1.0;
  const auto [Ad, Bd] = zoh(A, B, 0.2);
  const Eigen::MatrixXd phi = zoh_oracle(A, B, 0.2);
  EXPECT_LE((Ad - phi.topLeftCorner(2, 2)).norm(), 1e-13);
  EXPECT_LE((Bd - phi.topRightCorner(2, 1)).norm(), 1e-13);
}

TEST(Discretize, FilterRowsAreClosedForm) {
  const DiscreteModel& m = default_model();
  const double alpha = std::exp(-0.5);
  const double beta = 0.5 * std::exp(-0.5);
  EXPECT_EQ(m.alpha, alpha);
  EXPECT_EQ(m.beta, beta);
  EXPECT_NEAR(m.alpha + m.beta, 1.5 * std::exp(-0.5), 1e-16);
  EXPECT_NEAR(m.alpha + m.beta, 0.9098, 5e-5);
  for (int axis = 0; axis < 3; ++axis) {
    const int a = state_index(axis, Block::Accel);
    const int e = state_index(axis, Block::Filter);
    EXPECT_EQ(m.Ad(a, a), alpha);
    EXPECT_EQ(m.Ad(a, e), beta);
    EXPECT_EQ(m.Bd(a, axis), 1.0 - alpha - beta);
    EXPECT_EQ(m.Ad(e, e), alpha);
    EXPECT_EQ(m.Bd(e, axis), 1.0 - alpha);
    for (int j = 0; j < 12; ++j) {
      if (j != a && j != e) EXPECT_EQ(m.Ad(a, j), 0.0);
      if (j != e) EXPECT_EQ(m.Ad(e, j), 0.0);
    }
  }
}

TEST(Discretize, VelocityDecayPerAxis) {
  const DiscreteModel& m = default_model();
  for (int axis = 0; axis < 3; ++axis) {
    const int v = state_index(axis, Block::Velocity);
    const int p = state_index(axis, Block::Position);
    EXPECT_NEAR(m.Ad(v, v), std::exp(-kDrag(axis) * testing::kH), 1e-14);
    EXPECT_NEAR(m.Ad(p, v), (1.0 - std::exp(-kDrag(axis) * testing::kH)) / kDrag(axis), 1e-14);
    EXPECT_EQ(m.Ad(p, p), 1.0);
  }
}

TEST(Discretize, SlowFilterLimit) {
  const DiscreteModel m = discretize(1e6, 0.05, kDrag);
  EXPECT_NEAR(m.alpha, 1.0, 1e-7);
  EXPECT_NEAR(m.beta, 5e-8, 1e-12);
}

TEST(Discretize, RejectsBadArguments) {
  EXPECT_THROW(discretize(0.0, 0.05, kDrag), InvalidArgument);
  EXPECT_THROW(discretize(0.1, -1.0, kDrag), InvalidArgument);
}

// --- geometry ---------------------------------------------------------------

TEST(Dodecahedron, CubeVerticesLieOnFaces) {
  const double rho = 7.3;
  const double phi = kGoldenRatio;
  EXPECT_NEAR(std::sqrt(3.0) * (1.0 / (phi * phi) + 1.0 / phi), std::sqrt(3.0), 1e-15);
  for (int mask = 0; mask < 8; ++mask) {
    const Vec3 u = rho / std::sqrt(3.0) *
                   Vec3(mask & 1 ? 1.0 : -1.0, mask & 2 ? 1.0 : -1.0, mask & 4 ? 1.0 : -1.0);
    double worst = 0.0;
    for (int j = 0; j < kNumFaces; ++j) worst = std::max(worst, std::abs(face_value(j, u)));
    EXPECT_NEAR(worst, rho, 1e-12 * rho);
  }
}

TEST(Dodecahedron, OriginAndPoleMembership) {
  const SlabSet s = dodecahedron_set(1.0);
  EXPECT_TRUE(s.contains(Vec3::Zero()));
  EXPECT_TRUE(s.contains(Vec3::Ones() / std::sqrt(3.0), 1e-15));
  EXPECT_FALSE(s.contains(Vec3(0.0, 0.0, 1.0)));
  double worst = 0.0;
  for (int j = 0; j < kNumFaces; ++j) {
    worst = std::max(worst, std::abs(face_value(j, Vec3::UnitZ())));
  }
  EXPECT_NEAR(worst, std::sqrt(3.0) / kGoldenRatio, 1e-15);
  EXPECT_NEAR(worst, 1.0705, 1e-4);
}

TEST(Dodecahedron, TwentyVerticesOnCircumscribedSphere) {
  const double rho = 3.0;
  const std::vector<Vec3> v = testing::enumerate_vertices(rho);
  ASSERT_EQ(v.size(), 20u);
  for (const Vec3& p : v) EXPECT_NEAR(p.norm(), rho, 1e-9);
}

TEST(Dodecahedron, CanonicalVertexSet) {
  // Cube vertices plus the cyclic permutations of (0, +-phi, +-1/phi), scaled
  // so the circumradius is rho.
  const double phi = kGoldenRatio;
  const double rho = 2.0;
  const double s = rho / std::sqrt(3.0);
  std::vector<Vec3> canon;
  for (int mask = 0; mask < 8; ++mask) {
    canon.emplace_back(s * (mask & 1 ? 1 : -1), s * (mask & 2 ? 1 : -1), s * (mask & 4 ? 1 : -1));
  }
  for (int sa : {-1, 1}) {
    for (int sb : {-1, 1}) {
      const double a = sa * s * phi, b = sb * s / phi;
      canon.emplace_back(0.0, a, b);
      canon.emplace_back(a, b, 0.0);
      canon.emplace_back(b, 0.0, a);
    }
  }
  const std::vector<Vec3> v = testing::enumerate_vertices(rho);
  ASSERT_EQ(v.size(), 20u);
  const SlabSet set = dodecahedron_set(rho);
  int matched = 0;
  for (const Vec3& c : canon) {
    EXPECT_NEAR(c.norm(), rho, 1e-9);
    EXPECT_TRUE(set.contains(c, 1e-9));
    for (const Vec3& p : v) {
      if ((p - c).norm() < 1e-9) ++matched;
    }
  }
  EXPECT_EQ(matched, 20);
}

TEST(Dodecahedron, InnerApproximationOfSphere) {
  std::mt19937_64 rng(99);
  const double rho = 4.5;
  int failures = 0;
  for (int i = 0; i < 100000; ++i) {
    const Vec3 u = testing::sample_dodecahedron(rng, rho);
    if (u.norm() > rho * (1.0 + 1e-12)) ++failures;
  }
  EXPECT_EQ(failures, 0);
}

TEST(Dodecahedron, RejectsNonPositiveRadius) {
  EXPECT_THROW(dodecahedron_set(0.0), InvalidArgument);
}

// --- mapped constraints -------------------------------------------------------

TEST(MapConstraints, CenteredStateIsSymmetric) {
  const DiscreteModel& m = default_model();
  const double rho_next = 5.0;
  const SlabSet ad = map_ad_constraint(m, OuterState{}, rho_next);
  const SlabSet eta = map_eta_constraint(m, OuterState{}, rho_next);
  for (int j = 0; j < kNumFaces; ++j) {
    EXPECT_NEAR(ad.up[j], rho_next / (1.0 - m.alpha - m.beta), 1e-12);
    EXPECT_NEAR(ad.lo[j], -rho_next / (1.0 - m.alpha - m.beta), 1e-12);
    EXPECT_NEAR(eta.up[j], rho_next / (1.0 - m.alpha), 1e-12);
    EXPECT_NEAR(eta.lo[j], -rho_next / (1.0 - m.alpha), 1e-12);
  }
  const SlabSet u = unified_input_set(m, OuterState{}, 4.0, rho_next);
  for (int j = 0; j < kNumFaces; ++j) {
    const double expect =
        std::min({rho_next / (1.0 - m.alpha - m.beta), rho_next / (1.0 - m.alpha), 4.0});
    EXPECT_NEAR(u.up[j], expect, 1e-12);
    EXPECT_NEAR(u.lo[j], -expect, 1e-12);
  }
}

Vec3 on_face(int j, double value) {
  const Vec3& c = face_normals()[j];
  return value * c / c.squaredNorm();
}

TEST(MapConstraints, AccelBoundaryCase) {
  const DiscreteModel& m = default_model();
  const double rho_now = 6.0;
  OuterState x;
  x.a_d = on_face(1, rho_now);
  x.eta = on_face(1, rho_now);
  const double rho_next = (m.alpha + m.beta) * rho_now;
  const SlabSet ad = map_ad_constraint(m, x, rho_next);
  EXPECT_NEAR(ad.up[1], 0.0, 1e-12);
  const SlabSet u = unified_input_set(m, x, rho_now, rho_next);
  EXPECT_NEAR(u.up[1], 0.0, 1e-12);
  EXPECT_FALSE(u.empty());
}

TEST(MapConstraints, FilterBoundaryCase) {
  const DiscreteModel& m = default_model();
  const double rho_now = 6.0;
  OuterState x;
  x.eta = on_face(1, rho_now);
  const SlabSet eta = map_eta_constraint(m, x, m.alpha * rho_now);
  EXPECT_NEAR(eta.up[1], 0.0, 1e-12);
}

TEST(MapConstraints, ShrinkingTooFastIsEmpty) {
  const DiscreteModel& m = default_model();
  const double rho_now = 6.0;
  OuterState x;
  x.a_d = on_face(1, rho_now);
  x.eta = on_face(1, rho_now);
  try {
    unified_input_set(m, x, rho_now, 0.5 * rho_now);
    FAIL() << "expected EmptyInputSet";
  } catch (const EmptyInputSet& e) {
    EXPECT_EQ(e.face(), 1);
  }
}

TEST(MapConstraints, PropagationOracle) {
  const DiscreteModel& m = default_model();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double s = m.alpha + m.beta;
  int pairs = 0, violations = 0;
  double worst = -1.0;
  while (pairs < 10000) {
    const double rho_now = 1.0 + 20.0 * unit(rng);
    const double rho_next = rho_now * (s + (1.2 - s) * unit(rng));
    OuterState x;
    x.a_d = testing::sample_dodecahedron(rng, rho_now);
    x.eta = testing::sample_dodecahedron(rng, rho_now);
    const SlabSet set = unified_input_set(m, x, rho_now, rho_next);
    bool found = false;
    Vec3 u;
    for (int attempt = 0; attempt < 2000 && !found; ++attempt) {
      u = testing::sample_dodecahedron(rng, rho_now);
      found = set.contains(u);
    }
    if (!found) continue;
    ++pairs;
    const Vec3 ad_next = m.alpha * x.a_d + m.beta * x.eta + (1.0 - s) * u;
    const Vec3 eta_next = m.alpha * x.eta + (1.0 - m.alpha) * u;
    for (int j = 0; j < kNumFaces; ++j) {
      const double e = std::max(std::abs(face_value(j, ad_next)),
                                std::abs(face_value(j, eta_next))) -
                       rho_next;
      worst = std::max(worst, e);
      if (e > 1e-9) ++violations;
    }
  }
  EXPECT_EQ(violations, 0) << "worst excess " << worst;
}

// --- time-varying radius ------------------------------------------------------

TEST(Rho, FromThrust) {
  EXPECT_DOUBLE_EQ(rho_from_thrust(20.0, 45.21, 1.0), 19.0);
  EXPECT_NEAR(rho_from_thrust(9.81, 45.21, 1.0), 8.81, 1e-14);
  EXPECT_NEAR(rho_from_thrust(45.0, 45.21, 1.0), 0.21, 1e-12);
  EXPECT_THROW(rho_from_thrust(0.5, 45.21, 1.0), InfeasibleReference);
  EXPECT_THROW(rho_from_thrust(46.0, 45.21, 1.0), InfeasibleReference);
}

TEST(Rho, IntervalMinimumConstant) {
  const double r = rho_interval_min([](double) { return 19.0; }, 0.0, 0.05);
  EXPECT_DOUBLE_EQ(r, 0.999 * 19.0);
}

TEST(Rho, IntervalMinimumAgainstFineGrid) {
  const ScalarFn f = [](double t) { return 10.0 + std::sin(40.0 * t); };
  for (double t0 : {0.0, 0.03, 0.11, 0.2}) {
    double fine = 1e300;
    for (int i = 0; i <= 1000; ++i) fine = std::min(fine, f(t0 + 0.05 * i / 1000.0));
    EXPECT_NEAR(rho_interval_min(f, t0, t0 + 0.05), 0.999 * fine, 1e-3);
  }
}

TEST(Rho, FeasibilityCondition) {
  const DiscreteModel& m = default_model();
  const std::vector<double> flat(50, 8.81);
  EXPECT_TRUE(feasibility_condition(flat, m.alpha, m.beta));
  std::vector<double> halving{16.0};
  for (int i = 0; i < 5; ++i) halving.push_back(0.5 * halving.back());
  EXPECT_FALSE(feasibility_condition(halving, m.alpha, m.beta));
}

TEST(Rho, StarOfConstantSchedule) {
  const DiscreteModel& m = default_model();
  const std::vector<double> flat(30, 12.5);
  EXPECT_NEAR(compute_rho_star(flat, m.alpha, m.beta), 12.5, 1e-12);
}

TEST(Rho, StarOfTwoStepSchedule) {
  const DiscreteModel& m = default_model();
  const std::vector<double> r{10.0, 9.2};
  const double s = m.alpha + m.beta;
  const double ad_term = (9.2 - s * 10.0) / (1.0 - s);
  const double eta_term = (9.2 - m.alpha * 10.0) / (1.0 - m.alpha);
  const double star = compute_rho_star(r, m.alpha, m.beta);
  EXPECT_NEAR(star, std::min({ad_term, eta_term, 9.2}), 1e-12);
  EXPECT_NEAR(star, ad_term, 1e-12);
  EXPECT_NEAR(star, 1.13, 0.01);
}

TEST(Rho, StarRejectsInfeasibleSchedule) {
  const DiscreteModel& m = default_model();
  const std::vector<double> r{10.0, 5.0};
  EXPECT_THROW(compute_rho_star(r, m.alpha, m.beta), InfeasibleReference);
}

TEST(Rho, CubeOfStarInsideUnifiedSetsAlongSchedule) {
  const DiscreteModel& m = default_model();
  std::vector<double> r;
  for (int k = 0; k < 200; ++k) r.push_back(8.0 + 3.0 * std::sin(0.07 * k));
  ASSERT_TRUE(feasibility_condition(r, m.alpha, m.beta));
  const double star = compute_rho_star(r, m.alpha, m.beta);
  std::mt19937_64 rng(3);
  for (std::size_t k = 0; k + 1 < r.size(); ++k) {
    OuterState x;
    x.a_d = testing::sample_dodecahedron(rng, r[k]);
    x.eta = testing::sample_dodecahedron(rng, r[k]);
    const SlabSet u = unified_input_set(m, x, r[k], r[k + 1]);
    for (int j = 0; j < kNumFaces; ++j) {
      EXPECT_GE(u.up[j] + 1e-9, star);
      EXPECT_LE(u.lo[j] - 1e-9, -star);
    }
  }
}

// --- intersample ----------------------------------------------------------------

TEST(FilterResponse, MatchesDiscreteMapAtSamplePeriod) {
  const DiscreteModel& m = default_model();
  const Vec3 a(1.0, -2.0, 0.5), e(0.3, 0.1, -1.0), u(2.0, 2.0, -3.0);
  const FilterSample f = filter_response(m.gamma, a, e, u, m.h);
  EXPECT_LE((f.a_d - (m.alpha * a + m.beta * e + (1.0 - m.alpha - m.beta) * u)).norm(), 1e-14);
  EXPECT_LE((f.eta - (m.alpha * e + (1.0 - m.alpha) * u)).norm(), 1e-14);
}

TEST(FilterResponse, DerivativesMatchFiniteDifferences) {
  const Vec3 a(1.0, -2.0, 0.5), e(0.3, 0.1, -1.0), u(2.0, 2.0, -3.0);
  const double tau = 0.021, d = 1e-5;
  const FilterSample f = filter_response(0.1, a, e, u, tau);
  const FilterSample fp = filter_response(0.1, a, e, u, tau + d);
  const FilterSample fm = filter_response(0.1, a, e, u, tau - d);
  EXPECT_LE((f.a_d_dot - (fp.a_d - fm.a_d) / (2 * d)).norm(), 1e-6 * (1 + f.a_d_dot.norm()));
  EXPECT_LE((f.a_d_ddot - (fp.a_d_dot - fm.a_d_dot) / (2 * d)).norm(),
            1e-5 * (1 + f.a_d_ddot.norm()));
}

TEST(Intersample, OriginStaysAtOrigin) {
  EXPECT_TRUE(intersample_check(default_model(), OuterState{}, Vec3::Zero(),
                                [](double) { return 1.0; }, 0.0));
}

TEST(Intersample, CommonFaceValueIsBoundaryMember) {
  const double rho = 5.0;
  OuterState x;
  x.a_d = on_face(2, rho);
  x.eta = on_face(2, rho);
  const Vec3 u = on_face(2, rho);
  EXPECT_TRUE(intersample_check(default_model(), x, u, [rho](double) { return rho; }, 0.0, 20,
                                1e-12));
}

TEST(Intersample, RandomFeasibleTuples) {
  const DiscreteModel& m = default_model();
  std::mt19937_64 rng(8);
  for (int i = 0; i < 2000; ++i) {
    const double rho = 9.0;
    OuterState x;
    x.a_d = testing::sample_dodecahedron(rng, rho);
    x.eta = testing::sample_dodecahedron(rng, rho);
    const SlabSet set = unified_input_set(m, x, rho, rho);
    Vec3 u;
    do {
      u = testing::sample_dodecahedron(rng, rho);
    } while (!set.contains(u));
    EXPECT_TRUE(intersample_check(m, x, u, [rho](double) { return rho; }, 0.0, 20, 1e-9));
  }
}

}  // namespace
}  // namespace quadmpc
