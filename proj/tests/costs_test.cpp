// Copyright 2026 The pisoc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pisoc/costs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "pisoc/cost_models.hpp"
#include "pisoc/random.hpp"
#include "pisoc/types.hpp"
#include "support/gradient_check.hpp"

namespace pisoc {
namespace {

JointState agents_at(std::initializer_list<Vec2> positions, const Vec2& velocity = Vec2(2.0, 0.0)) {
  JointState x(positions.size());
  std::size_t i = 0;
  for (const auto& p : positions) {
    x.position(i) = p;
    x.velocity(i) = velocity;
    ++i;
  }
  return x;
}

Eigen::Matrix2d rotation(double angle) {
  Eigen::Matrix2d r;
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

// --------------------------- ControlCostSpec -------------------------------

TEST(ControlCostSpec, NoiseCovarianceIdentityHolds) {
  NormalStream rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const double lambda = std::exp(rng.uniform(-5.0, 5.0));
    const double sigma = std::exp(rng.uniform(-4.0, 2.0));
    const ControlCostSpec spec(lambda, sigma);
    EXPECT_NEAR(lambda / spec.r(), sigma * sigma, 1e-15 * sigma * sigma);
  }
}

TEST(ControlCostSpec, RateIsHalfRSquaredNorm) {
  const ControlCostSpec spec(1.0, std::sqrt(0.5));
  EXPECT_DOUBLE_EQ(spec.r(), 2.0);
  EXPECT_DOUBLE_EQ(spec.rate(Eigen::Vector2d(1.0, 0.0)), 1.0);
  EXPECT_DOUBLE_EQ(spec.rate(Eigen::Vector4d(1.0, 1.0, 0.0, 1.0)), 3.0);
}

TEST(ControlCostSpec, ZeroNoiseChargesOnlyNonZeroControls) {
  const ControlCostSpec spec(1.0, 0.0);
  EXPECT_TRUE(std::isinf(spec.r()));
  EXPECT_EQ(spec.rate(Eigen::Vector2d::Zero()), 0.0);
  EXPECT_TRUE(std::isinf(spec.rate(Eigen::Vector2d(0.1, 0.0))));
}

TEST(ControlCostSpec, RejectsInvalidParameters) {
  EXPECT_THROW(ControlCostSpec(0.0, 1.0), ContractViolation);
  EXPECT_THROW(ControlCostSpec(-1.0, 1.0), ContractViolation);
  EXPECT_THROW(ControlCostSpec(1.0, -0.1), ContractViolation);
  EXPECT_THROW(ControlCostSpec(1.0, std::nan("")), ContractViolation);
}

// --------------------------- path_cost -------------------------------------

TEST(PathCost, NullCostIsZero) {
  const std::vector<JointState> traj(4, agents_at({Vec2(1, 2)}));
  EXPECT_EQ(path_cost(traj, ControlSequence(3, 1), ControlCostSpec(1.0, 1.0), FunctionCost{}, 0.1), 0.0);
}

TEST(PathCost, HandEvaluatedExample) {
  // R = 1 / 0.5 = 2, u = (1, 0) on both steps: control rate 1. r(x0) = 0, r(x1) = 0.01, r_T = 0.
  FunctionCost model;
  model.running_fn = [](const JointState& x) { return 0.01 * x.position(0).x(); };
  const std::vector<JointState> traj{agents_at({Vec2(0, 0)}), agents_at({Vec2(1, 0)}), agents_at({Vec2(2, 0)})};
  ControlSequence u(2, 1);
  u.at(0) = Eigen::Vector2d(1, 0);
  u.at(1) = Eigen::Vector2d(1, 0);
  EXPECT_NEAR(path_cost(traj, u, ControlCostSpec(1.0, std::sqrt(0.5)), model, 0.1), 0.201, 1e-15);
}

TEST(PathCost, ObstacleHitIsInfinite) {
  TargetCost model;
  model.obstacles = ObstacleSet{{Box{Vec2(6, -1), Vec2(10, 1)}}, 0.5};
  const std::vector<JointState> traj{agents_at({Vec2(0, 0)}), agents_at({Vec2(8, 0)}), agents_at({Vec2(16, 0)})};
  EXPECT_TRUE(std::isinf(path_cost(traj, ControlSequence(2, 1), ControlCostSpec(1.0, 1.0), model, 0.1)));
  const std::vector<JointState> last{agents_at({Vec2(0, 0)}), agents_at({Vec2(3, 0)}), agents_at({Vec2(8, 0)})};
  EXPECT_TRUE(std::isinf(path_cost(last, ControlSequence(2, 1), ControlCostSpec(1.0, 1.0), model, 0.1)));
}

TEST(PathCost, RejectsLengthMismatch) {
  const std::vector<JointState> traj(3, agents_at({Vec2(0, 0)}));
  EXPECT_THROW(path_cost(traj, ControlSequence(3, 1), ControlCostSpec(1.0, 1.0), FunctionCost{}, 0.1),
               ContractViolation);
}

TEST(PathCost, AdditiveOverTime) {
  NormalStream rng(21);
  FunctionCost model;
  model.running_fn = [](const JointState& x) { return x.vector().squaredNorm(); };
  model.terminal_fn = [](const JointState& x) { return 3.0 * x.position(0).norm(); };
  const ControlCostSpec spec(0.7, 0.4);
  const std::size_t steps = 12;
  std::vector<JointState> traj;
  for (std::size_t t = 0; t <= steps; ++t) {
    JointState x(2);
    x.vector() = Eigen::VectorXd::NullaryExpr(8, [&] { return rng(); });
    traj.push_back(x);
  }
  ControlSequence u(steps, 2);
  u.matrix() = Eigen::MatrixXd::NullaryExpr(4, static_cast<Eigen::Index>(steps), [&] { return rng(); });
  const double whole = path_cost(traj, u, spec, model, 0.05);
  for (std::size_t split = 1; split < steps; ++split) {
    FunctionCost no_terminal = model;
    no_terminal.terminal_fn = [](const JointState&) { return 0.0; };
    const std::vector<JointState> head(traj.begin(), traj.begin() + static_cast<std::ptrdiff_t>(split) + 1);
    const std::vector<JointState> tail(traj.begin() + static_cast<std::ptrdiff_t>(split), traj.end());
    const auto u_head = ControlSequence::from_matrix(u.matrix().leftCols(static_cast<Eigen::Index>(split)));
    const auto u_tail = ControlSequence::from_matrix(u.matrix().rightCols(static_cast<Eigen::Index>(steps - split)));
    const double sum = path_cost(head, u_head, spec, no_terminal, 0.05) + path_cost(tail, u_tail, spec, model, 0.05);
    EXPECT_NEAR(sum, whole, 1e-12 * whole) << "split at " << split;
  }
}

// --------------------------- holding_pattern_cost --------------------------

TEST(HoldingPatternCost, SingleAgentOnCircle) {
  const HoldingPatternParams hp;
  const double expected = 2.0 * std::exp(-1.0) + 1.0;
  EXPECT_NEAR(holding_pattern_cost(agents_at({Vec2(7, 0)}), hp), expected, 1e-15);
  EXPECT_NEAR(expected, 1.7358, 5e-5);
}

TEST(HoldingPatternCost, PairTermIsCHitOverSeparation) {
  const HoldingPatternParams hp;
  const double single = holding_pattern_cost(agents_at({Vec2(7, 0)}), hp);
  const double pair = holding_pattern_cost(agents_at({Vec2(7, 0), Vec2(-7, 0)}), hp);
  EXPECT_NEAR(pair - 2.0 * single, 20.0 / 14.0, 1e-14);
}

TEST(HoldingPatternCost, PairTermVanishesWithSeparation) {
  HoldingPatternParams hp;
  hp.d = 1e7;
  const double single = holding_pattern_cost(agents_at({Vec2(1e7, 0)}), hp);
  const double pair = holding_pattern_cost(agents_at({Vec2(1e7, 0), Vec2(-1e7, 0)}), hp);
  EXPECT_NEAR(pair, 2.0 * single, 2e-6);
}

TEST(HoldingPatternCost, SpeedNotComponentsEntersTheBand) {
  const HoldingPatternParams hp;
  const double along = holding_pattern_cost(agents_at({Vec2(7, 0)}, Vec2(2, 0)), hp);
  const double diagonal = holding_pattern_cost(agents_at({Vec2(7, 0)}, Vec2(std::sqrt(2.0), std::sqrt(2.0))), hp);
  EXPECT_NEAR(along, diagonal, 1e-14);
}

TEST(HoldingPatternCost, CoincidentAgentsAreInfinite) {
  EXPECT_TRUE(std::isinf(holding_pattern_cost(agents_at({Vec2(1, 1), Vec2(1, 1)}), HoldingPatternParams{})));
}

TEST(HoldingPatternCost, RejectsEmptyState) {
  EXPECT_THROW(holding_pattern_cost(JointState(0), HoldingPatternParams{}), ContractViolation);
}

TEST(HoldingPatternCost, InvariantUnderRotationAndPermutation) {
  NormalStream rng(8);
  const HoldingPatternParams hp;
  for (int trial = 0; trial < 50; ++trial) {
    const JointState x = testing::random_formation_state(rng, 5, 9.0);
    const double base = holding_pattern_cost(x, hp);
    const Eigen::Matrix2d rot = rotation(rng.uniform(-M_PI, M_PI));
    JointState rotated = x;
    for (std::size_t i = 0; i < 5; ++i) {
      rotated.position(i) = rot * x.position(i);
      rotated.velocity(i) = rot * x.velocity(i);
    }
    EXPECT_NEAR(holding_pattern_cost(rotated, hp), base, 1e-12 * base);
    std::vector<std::size_t> order(5);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());
    JointState permuted(5);
    for (std::size_t i = 0; i < 5; ++i) {
      permuted.position(i) = x.position(order[i]);
      permuted.velocity(i) = x.velocity(order[i]);
    }
    EXPECT_NEAR(holding_pattern_cost(permuted, hp), base, 1e-12 * base);
  }
}

TEST(HoldingPatternParams, RejectsInvalidParameters) {
  EXPECT_THROW((HoldingPatternParams{3.0, 1.0, 7.0, 20.0}.validate()), ContractViolation);
  EXPECT_THROW((HoldingPatternParams{1.0, 3.0, 0.0, 20.0}.validate()), ContractViolation);
  EXPECT_THROW((HoldingPatternParams{1.0, 3.0, 7.0, -1.0}.validate()), ContractViolation);
  EXPECT_THROW((CatMouseParams{HoldingPatternParams{}, 0.0}.validate()), ContractViolation);
}

// --------------------------- cat_mouse_cost --------------------------------

TEST(CatMouseCost, HandEvaluatedDistances) {
  const CatMouseParams params;
  const JointState cats = agents_at({Vec2(3, 0), Vec2(0, 4)});
  EXPECT_NEAR(cat_mouse_cost(cats, Vec2::Zero(), params), holding_pattern_cost(cats, params.hp) + 7.0, 1e-13);
}

TEST(CatMouseCost, ReducesToHoldingPatternAtZeroDistance) {
  const CatMouseParams params;
  const JointState cat = agents_at({Vec2(5, -2)});
  EXPECT_EQ(cat_mouse_cost(cat, Vec2(5, -2), params), holding_pattern_cost(cat, params.hp));
}

TEST(CatMouseCost, DifferenceIsSumOfMouseDistances) {
  NormalStream rng(13);
  const CatMouseParams params;
  for (int trial = 0; trial < 50; ++trial) {
    const JointState cats = testing::random_formation_state(rng, 4, 20.0);
    const Vec2 mouse(rng.uniform(-20, 20), rng.uniform(-20, 20));
    double distances = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      distances += (cats.position(i) - mouse).norm();
    }
    EXPECT_NEAR(cat_mouse_cost(cats, mouse, params) - holding_pattern_cost(cats, params.hp), distances,
                1e-12 * cat_mouse_cost(cats, mouse, params));
  }
}

TEST(CatMouseCost, TranslationChangesOnlyArenaTerms) {
  CatMouseParams params;
  params.hp.arena = ArenaShape::kRing;
  params.hp.d = 7.0;
  const JointState cats = agents_at({Vec2(3, 1), Vec2(-2, 4), Vec2(0, -5)});
  const Vec2 mouse(0.5, 0.5);
  const Vec2 shift(4.0, -3.0);
  JointState moved = cats;
  for (std::size_t i = 0; i < 3; ++i) {
    moved.position(i) += shift;
  }
  auto arena = [&](const JointState& x) {
    double total = 0.0;
    for (std::size_t i = 0; i < x.num_agents(); ++i) {
      total += std::exp(std::abs(x.position(i).norm() - params.hp.d));
    }
    return total;
  };
  const double before = cat_mouse_cost(cats, mouse, params) - arena(cats);
  const double after = cat_mouse_cost(moved, mouse + shift, params) - arena(moved);
  EXPECT_NEAR(before, after, 1e-12 * before);
}

// --------------------------- obstacle_violation ----------------------------

TEST(ObstacleViolation, CentreInsideBox) {
  const ObstacleSet obstacles{{Box{Vec2(0, 0), Vec2(2, 2)}}, 0.5};
  EXPECT_TRUE(obstacle_violation(agents_at({Vec2(1, 1)}), obstacles));
}

TEST(ObstacleViolation, ClearanceJustAboveRadius) {
  const ObstacleSet obstacles{{Box{Vec2(0, 0), Vec2(2, 2)}}, 0.5};
  EXPECT_FALSE(obstacle_violation(agents_at({Vec2(2.5 + 1e-9, 1), Vec2(4.5 + 2e-9, 1)}), obstacles));
}

TEST(ObstacleViolation, ContactCountsAsCollision) {
  const ObstacleSet obstacles{{Box{Vec2(0, 0), Vec2(2, 2)}}, 0.5};
  EXPECT_TRUE(obstacle_violation(agents_at({Vec2(2.5, 1)}), obstacles));
  const ObstacleSet none{{}, 0.5};
  EXPECT_TRUE(obstacle_violation(agents_at({Vec2(0, 0), Vec2(1, 0)}), none));
  EXPECT_FALSE(obstacle_violation(agents_at({Vec2(0, 0), Vec2(1.25, 0)}), none));
}

TEST(ObstacleSet, RejectsDegenerateBoxes) {
  EXPECT_THROW((ObstacleSet{{Box{Vec2(0, 0), Vec2(0, 2)}}, 0.5}.validate()), ContractViolation);
  EXPECT_THROW((ObstacleSet{{}, -0.5}.validate()), ContractViolation);
}

// --------------------------- smooth_obstacle_penalty -----------------------

TEST(SmoothObstaclePenalty, TailBound) {
  const ObstacleSet obstacles{{Box{Vec2(0, 0), Vec2(2, 2)}}, 0.5};
  const double scale = 0.3;
  const JointState far = agents_at({Vec2(2.5 + 10.0 * scale, 1)});
  EXPECT_LE(smooth_obstacle_penalty(far, obstacles, scale, 2.0), 2.0 * std::exp(-10.0) * (1.0 + 1e-12));
}

TEST(SmoothObstaclePenalty, EqualsWeightPerBoxAtContact) {
  const ObstacleSet obstacles{{Box{Vec2(0, 0), Vec2(2, 2)}, Box{Vec2(3, 0), Vec2(5, 2)}}, 0.5};
  EXPECT_NEAR(smooth_obstacle_penalty(agents_at({Vec2(2.5, 1)}), obstacles, 0.3, 1.5), 1.5 * (1.0 + 1.0), 1e-15);
  const ObstacleSet point{{Box{Vec2(0, 0), Vec2(2, 2)}}, 0.0};
  EXPECT_NEAR(smooth_obstacle_penalty(agents_at({Vec2(2, 1)}), point, 0.3, 1.5), 1.5, 1e-15);
}

TEST(SmoothObstaclePenalty, PositiveAndIncreasingTowardTheBox) {
  const ObstacleSet obstacles{{Box{Vec2(0, 0), Vec2(2, 2)}}, 0.5};
  double previous = 0.0;
  for (double x = 8.0; x > -1.0; x -= 0.25) {
    const double value = smooth_obstacle_penalty(agents_at({Vec2(x, 1)}), obstacles, 0.3, 1.0);
    EXPECT_GT(value, 0.0);
    if (x < 8.0 && x >= 1.0) {
      EXPECT_GT(value, previous) << "at x = " << x;
    }
    previous = value;
  }
}

TEST(SmoothObstaclePenalty, RejectsNonPositiveScale) {
  const ObstacleSet obstacles{{Box{Vec2(0, 0), Vec2(2, 2)}}, 0.5};
  EXPECT_THROW(smooth_obstacle_penalty(agents_at({Vec2(4, 1)}), obstacles, 0.0, 1.0), ContractViolation);
}

TEST(SmoothObstaclePenalty, DerivativesMatchFiniteDifferences) {
  NormalStream rng(2);
  const ObstacleSet obstacles = testing::check_obstacles();
  for (int trial = 0; trial < 100; ++trial) {
    const JointState x = testing::random_clear_state(rng, 2, obstacles, 0.01);
    const auto check = testing::check_derivatives(
        [&](const JointState& s) { return smooth_obstacle_penalty(s, obstacles, 0.3, 1.0); },
        [&](const JointState& s) { return smooth_obstacle_penalty_derivatives(s, obstacles, 0.3, 1.0); }, x);
    EXPECT_LT(check.gradient, 1e-5) << "trial " << trial;
    EXPECT_LT(check.hessian, 1e-5) << "trial " << trial;
  }
}

TEST(SignedDistance, SignConventions) {
  const Box box{Vec2(0, 0), Vec2(2, 2)};
  EXPECT_DOUBLE_EQ(signed_distance(Vec2(3, 1), box).value, 1.0);
  EXPECT_DOUBLE_EQ(signed_distance(Vec2(1, 1.5), box).value, -0.5);
  EXPECT_DOUBLE_EQ(signed_distance(Vec2(5, 6), box).value, 5.0);
  EXPECT_EQ(signed_distance(Vec2(5, 6), box).gradient, Vec2(0.6, 0.8));
}

// --------------------------- analytic derivatives --------------------------

TEST(HoldingPatternDerivatives, MatchFiniteDifferences) {
  NormalStream rng(4);
  for (const auto arena : {ArenaShape::kRing, ArenaShape::kDisc}) {
    HoldingPatternParams hp;
    hp.arena = arena;
    for (int trial = 0; trial < 50; ++trial) {
      const JointState x = testing::random_formation_state(rng, 3, 10.0);
      const auto check = testing::check_derivatives([&](const JointState& s) { return holding_pattern_cost(s, hp); },
                                                    [&](const JointState& s) { return holding_pattern_derivatives(s, hp); },
                                                    x);
      EXPECT_LT(check.gradient, 1e-5);
      EXPECT_LT(check.hessian, 1e-5);
    }
  }
}

TEST(CatMouseDerivatives, MatchFiniteDifferences) {
  NormalStream rng(6);
  const CatMouseParams params;
  for (int trial = 0; trial < 50; ++trial) {
    const JointState x = testing::random_formation_state(rng, 4, 25.0);
    const Vec2 mouse(rng.uniform(-5, 5), rng.uniform(-5, 5));
    const auto check =
        testing::check_derivatives([&](const JointState& s) { return cat_mouse_cost(s, mouse, params); },
                                   [&](const JointState& s) { return cat_mouse_derivatives(s, mouse, params); }, x);
    EXPECT_LT(check.gradient, 1e-5);
    EXPECT_LT(check.hessian, 1e-5);
  }
}

TEST(TargetCostDerivatives, SmoothModeMatchesFiniteDifferences) {
  NormalStream rng(9);
  TargetCost cost;
  cost.obstacles = testing::check_obstacles();
  cost.target = Vec2(16, 0);
  cost.hard = false;
  for (int trial = 0; trial < 50; ++trial) {
    const JointState x = testing::random_clear_state(rng, 1, cost.obstacles, 0.01);
    const auto running = testing::check_derivatives([&](const JointState& s) { return cost.running(s, {}); },
                                                    [&](const JointState& s) { return cost.running_derivatives(s, {}); }, x);
    const auto terminal = testing::check_derivatives(
        [&](const JointState& s) { return cost.terminal(s, {}); },
        [&](const JointState& s) { return cost.terminal_derivatives(s, {}); }, x);
    EXPECT_LT(running.gradient, 1e-5);
    EXPECT_LT(running.hessian, 1e-5);
    EXPECT_LT(terminal.gradient, 1e-5);
    EXPECT_LT(terminal.hessian, 1e-5);
  }
}

TEST(TargetCost, HardModeKillsAndSmoothModeNeverDoes) {
  TargetCost cost;
  cost.obstacles = ObstacleSet{{Box{Vec2(6, -1), Vec2(10, 1)}}, 0.5};
  const JointState inside = agents_at({Vec2(8, 0)});
  EXPECT_TRUE(cost.violated(inside, {}));
  cost.hard = false;
  EXPECT_FALSE(cost.violated(inside, {}));
  EXPECT_GT(cost.running(inside, {}), cost.penalty_weight);
}

}  // namespace
}  // namespace pisoc
