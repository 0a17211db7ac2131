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

#ifndef PISOC_PI_CONTROLLER_HPP
#define PISOC_PI_CONTROLLER_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "pisoc/costs.hpp"
#include "pisoc/dynamics.hpp"
#include "pisoc/parallel.hpp"
#include "pisoc/random.hpp"
#include "pisoc/types.hpp"

/**
 * \file
 * \brief Path-integral model predictive control.
 *
 * One replan samples N noisy rollouts of the double integrator under the current importance controls,
 * scores them with the path cost, weights them by exp(-S_k / lambda) and moves every control of the
 * horizon by the weighted mean of the noise that was applied at that step. The first updated control
 * becomes a velocity target and the rest of the sequence warm-starts the next replan.
 *
 * Rollout k draws its noise from a stream keyed by (seed, k); the results are therefore identical for
 * any number of workers.
 */

namespace pisoc {

/// Raised when every rollout of a batch violated a hard constraint.
class NoFeasibleSample : public std::runtime_error {
 public:
  NoFeasibleSample() : std::runtime_error("no feasible sample: every rollout was killed") {}
};

struct PiConfig {
  std::size_t n_samples = 1000;
  double horizon_s = 1.0;
  double dt_s = 1.0 / 15.0;
  double lambda = 1.0;
  double sigma_u = 1.0;
  double replan_hz = 15.0;
  /// Adds the likelihood-ratio term sum_s u_s^T R dxi_s to every sampled cost. Without it the weights
  /// ignore how far the importance controls are from the passive dynamics.
  bool importance_correction = true;
  std::size_t workers = 1;

  void validate() const {
    if (n_samples < 1) {
      throw ContractViolation("pi: n_samples must be at least 1");
    }
    if (!(dt_s > 0.0) || !(horizon_s >= dt_s - 1e-12)) {
      throw ContractViolation("pi: need horizon_s >= dt_s > 0");
    }
    if (!(lambda > 0.0)) {
      throw ContractViolation("pi: lambda must be positive");
    }
    if (!(sigma_u >= 0.0)) {
      throw ContractViolation("pi: sigma_u must be non-negative");
    }
    if (!(replan_hz > 0.0) || !(1.0 / replan_hz >= dt_s - 1e-12)) {
      throw ContractViolation("pi: replan period must be at least dt_s");
    }
  }

  [[nodiscard]] std::size_t steps() const { return steps_for(horizon_s, dt_s); }
  [[nodiscard]] double replan_period() const { return 1.0 / replan_hz; }
  [[nodiscard]] std::size_t replan_shift() const { return steps_for(replan_period(), dt_s); }
  [[nodiscard]] ControlCostSpec control_cost() const { return ControlCostSpec(lambda, sigma_u); }
};

/// N sampled paths with their stored noise, costs and normalized weights.
struct RolloutBatch {
  std::size_t steps = 0;
  std::size_t agents = 0;
  std::vector<std::vector<JointState>> paths;  ///< filled only on request
  Eigen::MatrixXd noises;                       ///< (2M * steps) x N; column k is rollout k
  std::vector<double> costs;
  std::vector<double> weights;
  std::vector<std::uint8_t> alive;

  [[nodiscard]] std::size_t size() const { return costs.size(); }

  auto noise(std::size_t k, std::size_t s) const {
    const auto width = 2 * static_cast<Eigen::Index>(agents);
    return noises.col(static_cast<Eigen::Index>(k)).segment(width * static_cast<Eigen::Index>(s), width);
  }

  [[nodiscard]] std::size_t alive_count() const {
    return static_cast<std::size_t>(std::count(alive.begin(), alive.end(), std::uint8_t{1}));
  }
};

struct PiDiagnostics {
  double ess = 0.0;
  double min_cost = kInfinity;
  double mean_cost = kInfinity;
  double alive_fraction = 0.0;
};

/// Normalized weights proportional to exp(-(S_k - min_alive S) / lambda); killed rollouts get 0.
inline std::vector<double> compute_weights(std::span<const double> costs, std::span<const std::uint8_t> alive,
                                           double lambda) {
  if (costs.size() != alive.size()) {
    throw ContractViolation("compute_weights: costs and alive flags differ in length");
  }
  double best = kInfinity;
  bool any = false;
  for (std::size_t k = 0; k < costs.size(); ++k) {
    if (alive[k] != 0) {
      any = true;
      best = std::min(best, costs[k]);
    }
  }
  if (!any) {
    throw NoFeasibleSample();
  }
  std::vector<double> w(costs.size(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < costs.size(); ++k) {
    if (alive[k] != 0) {
      const double shifted = costs[k] == best ? 0.0 : costs[k] - best;
      w[k] = std::exp(-shifted / lambda);
      total += w[k];
    }
  }
  for (auto& wk : w) {
    wk /= total;
  }
  return w;
}

/// 1 / sum_k w_k^2 for normalized weights.
inline double effective_sample_size(std::span<const double> weights) {
  double sq = 0.0;
  for (const double w : weights) {
    sq += w * w;
  }
  return 1.0 / sq;
}

/// Samples N rollouts from x0 under `controls` and scores them.
/**
 * A rollout is killed (alive = 0, cost +inf, weight 0) at the first state that violates a hard
 * constraint, x0 included. Throws NoFeasibleSample when nothing survives.
 */
template <CostModel Cost>
RolloutBatch sample_rollouts(const JointState& x0, const ControlSequence& controls, const PiConfig& cfg,
                             const Cost& cost, std::uint64_t seed, const typename Cost::Context& context = {},
                             bool store_paths = false) {
  cfg.validate();
  const std::size_t steps = cfg.steps();
  const std::size_t agents = x0.num_agents();
  if (controls.steps() != steps || controls.num_agents() != agents) {
    throw ContractViolation("sample_rollouts: control sequence does not match horizon and agent count");
  }
  const std::size_t n = cfg.n_samples;
  const auto width = 2 * static_cast<Eigen::Index>(agents);
  const double dt = cfg.dt_s;
  const double noise_scale = cfg.sigma_u * std::sqrt(dt);
  const ControlCostSpec spec = cfg.control_cost();
  const bool correct = cfg.importance_correction && cfg.sigma_u > 0.0;
  const double r = spec.r();

  RolloutBatch batch;
  batch.steps = steps;
  batch.agents = agents;
  batch.noises = Eigen::MatrixXd::Zero(width * static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(n));
  batch.costs.assign(n, kInfinity);
  batch.alive.assign(n, 0);
  if (store_paths) {
    batch.paths.resize(n);
  }

  // Control cost of the importance sequence is shared by every rollout.
  std::vector<double> control_rate(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    control_rate[s] = spec.rate(controls.at(s)) * dt;
  }

  parallel_for(n, cfg.workers, [&](std::size_t begin, std::size_t end) {
    JointState x = x0;
    for (std::size_t k = begin; k < end; ++k) {
      NormalStream rng(derive_seed(seed, {k}));
      x = x0;
      typename Cost::Context ctx = context;
      double* xi_all = batch.noises.col(static_cast<Eigen::Index>(k)).data();
      std::vector<JointState>* path = store_paths ? &batch.paths[k] : nullptr;
      if (path != nullptr) {
        path->reserve(steps + 1);
        path->push_back(x);
      }
      double total = 0.0;
      bool alive = true;
      for (std::size_t s = 0; s < steps && alive; ++s) {
        if (cost.violated(x, ctx)) {
          alive = false;
          break;
        }
        double* xi = xi_all + width * static_cast<Eigen::Index>(s);
        const double* u = controls.at(s).data();
        double cross = 0.0;
        for (Eigen::Index j = 0; j < width; ++j) {
          xi[j] = noise_scale == 0.0 ? 0.0 : noise_scale * rng();
          cross += u[j] * xi[j];
        }
        total += cost.running(x, ctx) * dt + control_rate[s];
        if (correct) {
          total += r * cross;
        }
        ctx = cost.advance_context(x, ctx, dt);
        detail::advance(x.vector().data(), u, xi, agents, dt);
        if (path != nullptr) {
          path->push_back(x);
        }
      }
      if (alive && cost.violated(x, ctx)) {
        alive = false;
      }
      if (alive) {
        batch.costs[k] = total + cost.terminal(x, ctx);
        batch.alive[k] = 1;
      }
    }
  });

  batch.weights = compute_weights(batch.costs, batch.alive, cfg.lambda);
  return batch;
}

/// u*_s = u_s + (1/dt) sum_k w_k dxi_{k,s}, reduced in rollout order.
inline ControlSequence update_controls(const ControlSequence& controls, const RolloutBatch& batch, double dt) {
  if (controls.steps() != batch.steps || controls.num_agents() != batch.agents) {
    throw ContractViolation("update_controls: batch does not match the control sequence");
  }
  Eigen::VectorXd shift = Eigen::VectorXd::Zero(batch.noises.rows());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    if (batch.weights[k] != 0.0) {
      shift.noalias() += batch.weights[k] * batch.noises.col(static_cast<Eigen::Index>(k));
    }
  }
  ControlSequence out = controls;
  const auto width = 2 * static_cast<Eigen::Index>(batch.agents);
  for (std::size_t s = 0; s < batch.steps; ++s) {
    out.at(s) += shift.segment(width * static_cast<Eigen::Index>(s), width) / dt;
  }
  return out;
}

/// Drops the first `steps` controls and pads the tail with zeros.
inline ControlSequence shift_warm_start(const ControlSequence& controls, std::size_t steps) {
  if (steps > controls.steps()) {
    throw ContractViolation("shift_warm_start: shift exceeds sequence length");
  }
  ControlSequence out(controls.steps(), controls.num_agents());
  const auto keep = static_cast<Eigen::Index>(controls.steps() - steps);
  out.matrix().leftCols(keep) = controls.matrix().rightCols(keep);
  return out;
}

inline PiDiagnostics diagnose(const RolloutBatch& batch) {
  PiDiagnostics d;
  const std::size_t alive = batch.alive_count();
  d.alive_fraction = batch.size() == 0 ? 0.0 : static_cast<double>(alive) / static_cast<double>(batch.size());
  if (alive == 0) {
    return d;
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    if (batch.alive[k] != 0) {
      d.min_cost = std::min(d.min_cost, batch.costs[k]);
      sum += batch.costs[k];
    }
  }
  d.mean_cost = sum / static_cast<double>(alive);
  d.ess = effective_sample_size(batch.weights);
  return d;
}

struct MpcStepResult {
  std::vector<Vec2> v_next;  ///< per-agent velocity target for the low-level layer
  ControlSequence updated;   ///< u* over the current horizon
  ControlSequence warm;      ///< u* shifted by one replan period, for the next replan
  PiDiagnostics diagnostics;
};

/// One receding-horizon replan: sample, weight, update, hand off the first control as a velocity.
/**
 * Propagates NoFeasibleSample; the caller owns the fail-safe policy.
 */
template <CostModel Cost>
MpcStepResult mpc_step(const JointState& x0, const ControlSequence& warm, const PiConfig& cfg, const Cost& cost,
                       std::uint64_t seed, const typename Cost::Context& context = {}) {
  const RolloutBatch batch = sample_rollouts(x0, warm, cfg, cost, seed, context);
  MpcStepResult out;
  out.updated = update_controls(warm, batch, cfg.dt_s);
  out.diagnostics = diagnose(batch);
  out.v_next.reserve(x0.num_agents());
  for (std::size_t i = 0; i < x0.num_agents(); ++i) {
    out.v_next.push_back(
        propagate_velocity_command(x0.velocity(i), out.updated.control(0, i), cfg.replan_period()));
  }
  out.warm = shift_warm_start(out.updated, std::min(cfg.replan_shift(), out.updated.steps()));
  return out;
}

}  // namespace pisoc

#endif
