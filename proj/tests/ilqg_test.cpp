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

#include "pisoc/ilqg.hpp"

#include <cmath>
#include <limits>
#include <variant>

#include <gtest/gtest.h>

#include "pisoc/config_io.hpp"
#include "pisoc/cost_models.hpp"
#include "pisoc/costs.hpp"
#include "pisoc/random.hpp"
#include "pisoc/scenario.hpp"
#include "pisoc/sim_engine.hpp"
#include "pisoc/types.hpp"
#include "support/gradient_check.hpp"
#include "support/lq_oracle.hpp"

namespace pisoc {
namespace {

IlqgConfig lq_config() {
  IlqgConfig cfg;
  cfg.horizon_s = 2.0;
  cfg.step_size = 1.0;
  cfg.control_weight = 1.0;
  return cfg;
}

double max_control_error(const ControlSequence& a, const ControlSequence& b) {
  return (a.matrix() - b.matrix()).cwiseAbs().maxCoeff();
}

FunctionCost finite_difference_only(const QuadraticCost& q) {
  FunctionCost f;
  f.running_fn = [q](const JointState& x) { return q.running(x, {}); };
  f.terminal_fn = [q](const JointState& x) { return q.terminal(x, {}); };
  return f;
}

// --------------------------- ilqg_solve: LQ oracle -------------------------

TEST(IlqgSolve, FullStepConvergesToRiccatiInOneIteration) {
  const IlqgConfig cfg = lq_config();
  const auto sol = ilqg_solve(testing::lq_start(), testing::lq_cost(), cfg);
  const auto oracle = testing::riccati(testing::lq_start(), testing::lq_cost(), 1.0, cfg.dt_s, cfg.steps());
  EXPECT_EQ(sol.iterations, 1u);
  EXPECT_TRUE(sol.converged);
  EXPECT_LE(max_control_error(sol.nominal_controls, oracle.feedforward), 1e-8);
  for (std::size_t t = 0; t < cfg.steps(); ++t) {
    EXPECT_LE((sol.feedback_gains[t] + oracle.gains[t]).cwiseAbs().maxCoeff(), 1e-8) << "step " << t;
  }
}

TEST(IlqgSolve, BacktrackingReachesTheSameSolution) {
  IlqgConfig cfg = lq_config();
  cfg.mode = IlqgStepMode::kBacktracking;
  cfg.step_size = 0.005;
  const auto sol = ilqg_solve(testing::lq_start(), testing::lq_cost(), cfg);
  const auto oracle = testing::riccati(testing::lq_start(), testing::lq_cost(), 1.0, cfg.dt_s, cfg.steps());
  EXPECT_LE(max_control_error(sol.nominal_controls, oracle.feedforward), 1e-8);
}

TEST(IlqgSolve, FiniteDifferenceQuadratizationAlsoMatchesRiccati) {
  const IlqgConfig cfg = lq_config();
  const auto sol = ilqg_solve(testing::lq_start(), finite_difference_only(testing::lq_cost()), cfg);
  const auto oracle = testing::riccati(testing::lq_start(), testing::lq_cost(), 1.0, cfg.dt_s, cfg.steps());
  EXPECT_LE(max_control_error(sol.nominal_controls, oracle.feedforward), 1e-5);
}

TEST(IlqgSolve, ConstantSmallStepOnlyApproachesTheOptimum) {
  IlqgConfig cfg = lq_config();
  cfg.step_size = 0.005;
  cfg.max_iters = 200;
  const auto sol = ilqg_solve(testing::lq_start(), testing::lq_cost(), cfg);
  const auto oracle = testing::riccati(testing::lq_start(), testing::lq_cost(), 1.0, cfg.dt_s, cfg.steps());
  // After n blended steps the remaining gap is (1 - 0.005)^n of the initial one.
  const double expected_gap = std::pow(1.0 - 0.005, 200.0) * oracle.feedforward.matrix().cwiseAbs().maxCoeff();
  EXPECT_NEAR(max_control_error(sol.nominal_controls, oracle.feedforward), expected_gap, 1e-6);
}

TEST(IlqgSolve, ZeroCostGivesZeroControls) {
  const auto sol = ilqg_solve(testing::lq_start(), FunctionCost{}, lq_config());
  EXPECT_EQ(sol.nominal_controls.matrix().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(sol.cost_trace.back(), 0.0);
}

TEST(IlqgSolve, AcceptedIterationsNeverIncreaseCost) {
  const auto cfg = load_scenario(PISOC_SCENARIO_DIR "/drunken.yaml");
  const auto cost = std::get<TargetCost>(make_cost(cfg, ControllerKind::kIlqg));
  IlqgConfig solver = cfg.ilqg_solver();
  solver.max_iters = 300;
  const auto sol = ilqg_solve(initial_state(cfg, 0), cost, solver);
  ASSERT_GT(sol.cost_trace.size(), 2u);
  for (std::size_t i = 1; i < sol.cost_trace.size(); ++i) {
    EXPECT_LE(sol.cost_trace[i], sol.cost_trace[i - 1]);
  }
}

TEST(IlqgSolve, NonFiniteInitialCostNamesTheStep) {
  FunctionCost cost;
  cost.running_fn = [](const JointState& x) {
    return x.position(0).x() > 0.5 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
  };
  const JointState x0{AgentState{Vec2(0, 0), Vec2(1, 0)}};
  try {
    ilqg_solve(x0, cost, lq_config());
    FAIL() << "expected IlqgError";
  } catch (const IlqgError& e) {
    // x after t steps is t * dt; 0.5 is first exceeded at t = 8.
    EXPECT_EQ(e.step(), 8u);
  }
}

TEST(IlqgSolve, RejectsInvalidConfig) {
  IlqgConfig cfg;
  cfg.step_size = 0.0;
  EXPECT_THROW(cfg.validate(), ContractViolation);
  cfg.step_size = 1.5;
  EXPECT_THROW(cfg.validate(), ContractViolation);
  cfg = IlqgConfig{};
  cfg.max_iters = 0;
  EXPECT_THROW(cfg.validate(), ContractViolation);
  cfg = IlqgConfig{};
  cfg.control_weight = 0.0;
  EXPECT_THROW(cfg.validate(), ContractViolation);
}

// --------------------------- drunken layout --------------------------------

TEST(IlqgSolve, DrunkenNominalUsesTheGapForEveryNoiseLevel) {
  const auto base = load_scenario(PISOC_SCENARIO_DIR "/drunken.yaml");
  ASSERT_EQ(base.sweep.size(), 2u);
  std::optional<IlqgSolution> first;
  for (const auto& point : base.sweep) {
    const auto cfg = apply_sweep_point(base, point);
    const auto cost = std::get<TargetCost>(make_cost(cfg, ControllerKind::kIlqg));
    IlqgConfig solver = cfg.ilqg_solver();
    solver.horizon_s = 8.0;
    const auto sol = ilqg_solve(initial_state(cfg, 0), cost, solver);
    bool through_gap = false;
    for (const auto& x : sol.nominal_states) {
      const Vec2 p = x.position(0);
      through_gap = through_gap || (p.x() > 6.0 && p.x() < 10.0 && std::abs(p.y()) < 0.7);
    }
    EXPECT_TRUE(through_gap) << point_label(point);
    if (first) {
      EXPECT_EQ(sol.nominal_controls.matrix(), first->nominal_controls.matrix()) << "nominal depends on noise";
    } else {
      first = sol;
    }
  }
}

// --------------------------- quadratize ------------------------------------

TEST(Quadratize, RecoversQuadraticWeights) {
  Eigen::MatrixXd q(4, 4);
  q << 4, 1, 0, 0.5, 1, 3, 0.2, 0, 0, 0.2, 2, 0.1, 0.5, 0, 0.1, 1;
  QuadraticCost quad;
  quad.q = q;
  quad.qf = 2.0 * q;
  quad.reference = Eigen::VectorXd::Zero(4);
  const std::vector<JointState> traj{JointState{AgentState{Vec2(1, -2), Vec2(0.5, 3)}},
                                     JointState{AgentState{Vec2(-4, 1), Vec2(2, -1)}}};
  const auto models = quadratize(finite_difference_only(quad), std::span<const JointState>(traj), 0.1);
  ASSERT_EQ(models.size(), 2u);
  EXPECT_LT(testing::relative_error(q, models[0].hessian), 1e-6);
  EXPECT_LT(testing::relative_error(2.0 * q, models[1].hessian), 1e-6);
  EXPECT_LT(testing::relative_error(q * traj[0].vector(), models[0].gradient), 1e-6);
}

TEST(Quadratize, LinearCostHasZeroHessian) {
  const Eigen::Vector4d c(1.5, -2.0, 0.25, 3.0);
  FunctionCost linear;
  linear.running_fn = [c](const JointState& x) { return c.dot(x.vector()); };
  const std::vector<JointState> traj{JointState{AgentState{Vec2(3, 1), Vec2(-2, 0.5)}}, JointState{AgentState{}}};
  const auto models = quadratize(linear, std::span<const JointState>(traj), 0.1, {}, 0.0);
  EXPECT_LT(testing::relative_error(c, models[0].gradient), 1e-9);
  EXPECT_LT(models[0].hessian.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Quadratize, ClampsIndefiniteHessians) {
  FunctionCost saddle;
  saddle.running_fn = [](const JointState& x) { return x.position(0).x() * x.position(0).x() - x.position(0).y() * x.position(0).y(); };
  const std::vector<JointState> traj{JointState{AgentState{Vec2(1, 1), Vec2(0, 0)}}, JointState{AgentState{}}};
  const auto models = quadratize(saddle, std::span<const JointState>(traj), 0.1, {}, 1e-6);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(models[0].hessian);
  EXPECT_GE(eig.eigenvalues().minCoeff(), 1e-6 - 1e-12);
  EXPECT_EQ(models[0].hessian, models[0].hessian.transpose());
}

TEST(Quadratize, FiniteDifferencesMatchAnalyticPenaltyGradient) {
  NormalStream rng(10);
  const ObstacleSet obstacles = testing::check_obstacles();
  FunctionCost penalty;
  penalty.running_fn = [&](const JointState& x) { return smooth_obstacle_penalty(x, obstacles, 0.3, 1.0); };
  for (int trial = 0; trial < 20; ++trial) {
    const JointState x = testing::random_clear_state(rng, 1, obstacles, 0.05);
    const std::vector<JointState> traj{x, x};
    const auto models = quadratize(penalty, std::span<const JointState>(traj), 0.1);
    const auto analytic = smooth_obstacle_penalty_derivatives(x, obstacles, 0.3, 1.0);
    EXPECT_LT(testing::relative_error(analytic.gradient, models[0].gradient), 1e-5);
  }
}

TEST(Quadratize, NonFiniteDifferencesRaise) {
  FunctionCost broken;
  broken.running_fn = [](const JointState& x) { return std::sqrt(x.position(0).x()); };
  const std::vector<JointState> traj{JointState{AgentState{Vec2(0, 0), Vec2(0, 0)}}, JointState{AgentState{}}};
  EXPECT_THROW(quadratize(broken, std::span<const JointState>(traj), 0.1), IlqgError);
}

// --------------------------- execution -------------------------------------

ScenarioConfig lq_scenario() {
  auto cfg = load_scenario(PISOC_SCENARIO_DIR "/lq_oracle.yaml");
  cfg.duration_s = 2.0;
  cfg.ilqg.resolve = false;
  return cfg;
}

TEST(IlqgExecution, NoiselessPlantFollowsTheNominal) {
  auto cfg = lq_scenario();
  cfg.plant.sigma_u = 0.0;
  const auto log = run_episode(cfg, ControllerKind::kIlqg, 0);
  const auto sol = ilqg_solve(initial_state(cfg, 0), testing::lq_cost(), cfg.ilqg_solver());
  ASSERT_FALSE(log.summary.aborted);
  ASSERT_GE(log.records.size(), sol.nominal_states.size());
  for (std::size_t t = 0; t < sol.nominal_states.size(); ++t) {
    EXPECT_LE((log.records[t].state.vector() - sol.nominal_states[t].vector()).cwiseAbs().maxCoeff(), 1e-9)
        << "step " << t;
  }
}

TEST(IlqgExecution, FeedbackCostsNoMoreThanOpenLoop) {
  auto feedback = lq_scenario();
  auto open_loop = feedback;
  open_loop.ilqg.execution = IlqgExecution::kOpenLoop;
  double feedback_cost = 0.0;
  double open_loop_cost = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto a = run_episode(feedback, ControllerKind::kIlqg, seed).summary;
    const auto b = run_episode(open_loop, ControllerKind::kIlqg, seed).summary;
    feedback_cost += a.total_cost + a.control_effort;
    open_loop_cost += b.total_cost + b.control_effort;
  }
  EXPECT_LE(feedback_cost, open_loop_cost);
}

}  // namespace
}  // namespace pisoc
