// Copyright 2026 The Stinespring Authors
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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "stinespring/ansatz.hpp"
#include "stinespring/channel.hpp"
#include "stinespring/hardware.hpp"
#include "stinespring/linalg.hpp"
#include "stinespring/training_set.hpp"

namespace stinespring {

// ---------------------------------------------------------------------------
// Losses

namespace detail {

inline double trace_product(const ComplexMatrix& o, const DensityMatrix& rho) {
  // Tr[O rho] without forming the product.
  return (o.transpose().cwiseProduct(rho)).sum().real();
}

inline std::vector<std::vector<std::size_t>> pairs_by_state(const TrainingSet& ts) {
  std::vector<std::vector<std::size_t>> groups(ts.states.size());
  for (std::size_t l = 0; l < ts.pairs.size(); ++l) groups[ts.pairs[l].state].push_back(l);
  return groups;
}

}  // namespace detail

/// Model predictions along the training horizon: rho~_{s,n} for n = 0..steps
/// per initial state, and residuals e_{l,n} = Tr[O_l rho~_{l,n}] - target.
/// A NaN target marks a step at which the pair was not measured; its
/// residual is zero.
struct Rollout {
  std::vector<std::vector<DensityMatrix>> states;  // [state][n], n = 0..steps
  RealMatrix residuals;                            // pairs x steps

  [[nodiscard]] double loss() const { return residuals.squaredNorm(); }
};

inline Rollout rollout(const StinespringChannel& c, const TrainingSet& ts, int steps) {
  if (steps < 1 || steps > ts.n_steps) throw std::invalid_argument("rollout: bad number of steps");
  Rollout r;
  r.states.resize(ts.states.size());
  for (std::size_t s = 0; s < ts.states.size(); ++s) {
    auto& traj = r.states[s];
    traj.reserve(static_cast<std::size_t>(steps) + 1);
    traj.push_back(ts.states[s]);
    for (int n = 0; n < steps; ++n) traj.push_back(c.apply(traj.back()));
  }
  r.residuals.resize(static_cast<Eigen::Index>(ts.pairs.size()), steps);
  for (std::size_t l = 0; l < ts.pairs.size(); ++l) {
    const auto& p = ts.pairs[l];
    for (int n = 0; n < steps; ++n) {
      const double target = p.targets[static_cast<std::size_t>(n)];
      r.residuals(static_cast<Eigen::Index>(l), n) =
          std::isnan(target) ? 0.0
                             : detail::trace_product(p.obs, r.states[p.state][static_cast<std::size_t>(n) + 1]) - target;
    }
  }
  return r;
}

/// Single-step loss sum_l (Tr[O_l Phi^(rho_l)] - Tr[O_l rho_{l,1}])^2.
inline double loss(const StinespringChannel& c, const TrainingSet& ts) { return rollout(c, ts, 1).loss(); }

/// Loss summed over every recorded step of the training set.
inline double multistep_loss(const StinespringChannel& c, const TrainingSet& ts) {
  return rollout(c, ts, ts.n_steps).loss();
}

// ---------------------------------------------------------------------------
// Finite differences

inline int thread_count() {
  if (const char* env = std::getenv("STINESPRING_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

using Objective = std::function<double(const RealVector&)>;

/// Central differences over the given coordinates (all when empty); the other
/// entries of the result are zero.
inline RealVector fd_gradient(const Objective& f, const RealVector& params, double eps,
                              const std::vector<Eigen::Index>& coords = {}) {
  if (!(eps > 0.0)) throw std::invalid_argument("fd_gradient: eps must be positive");
  std::vector<Eigen::Index> idx = coords;
  if (idx.empty()) {
    idx.resize(static_cast<std::size_t>(params.size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  }
  RealVector grad = RealVector::Zero(params.size());
  std::vector<double> values(idx.size(), 0.0);
  auto work = [&](std::size_t begin, std::size_t stride) {
    RealVector x = params;
    for (std::size_t t = begin; t < idx.size(); t += stride) {
      const Eigen::Index i = idx[t];
      x(i) = params(i) + eps;
      const double up = f(x);
      x(i) = params(i) - eps;
      const double down = f(x);
      x(i) = params(i);
      values[t] = (up - down) / (2.0 * eps);
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::min<int>(thread_count(), static_cast<int>(idx.size())));
  if (n_threads <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work, t, n_threads);
    for (auto& th : pool) th.join();
  }
  for (std::size_t t = 0; t < idx.size(); ++t) {
    if (!std::isfinite(values[t])) throw NumericalError("fd_gradient: non-finite objective");
    grad(idx[t]) = values[t];
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Adjoint (costate) matrices

namespace detail {

/// (M (x) I_B) U (rho (x) |0><0|_B) without forming the Kronecker products.
inline ComplexMatrix weighted_response(const ComplexMatrix& m, const ComplexMatrix& u,
                                       const DensityMatrix& rho, Eigen::Index dim_a,
                                       Eigen::Index dim_b) {
  const Eigen::Index d = dim_a * dim_b;
  ComplexMatrix w(d, dim_a);  // U (I (x) |0>)
  for (Eigen::Index j = 0; j < dim_a; ++j) w.col(j) = u.col(j * dim_b);
  const ComplexMatrix mw = kron(m, ComplexMatrix::Identity(dim_b, dim_b)) * w * rho;
  ComplexMatrix out = ComplexMatrix::Zero(d, d);
  for (Eigen::Index j = 0; j < dim_a; ++j) out.col(j * dim_b) = mw.col(j);
  return out;
}

}  // namespace detail

/// Terminal condition of the adjoint process for the single-step loss:
/// P(tau_f) = -4i sum_l e_l (O_l (x) I) U (rho_l (x) |0><0|).
inline ComplexMatrix adjoint_terminal(const ComplexMatrix& u_final, const TrainingSet& ts,
                                      Eigen::Index dim_a, Eigen::Index dim_b) {
  const StinespringChannel c(u_final, dim_a, dim_b);
  const Rollout r = rollout(c, ts, 1);
  const auto groups = detail::pairs_by_state(ts);
  ComplexMatrix p = ComplexMatrix::Zero(u_final.rows(), u_final.cols());
  for (std::size_t s = 0; s < groups.size(); ++s) {
    if (groups[s].empty()) continue;
    ComplexMatrix m = ComplexMatrix::Zero(dim_a, dim_a);
    for (auto l : groups[s]) m += r.residuals(static_cast<Eigen::Index>(l), 0) * ts.pairs[l].obs;
    p += detail::weighted_response(m, u_final, ts.states[s], dim_a, dim_b);
  }
  return complex(0.0, -4.0) * p;
}

/// Pulled-back observables O_k = Phi^dagger(O_{k-1}), O_0 = O, for k = 0..k_max.
inline std::vector<ComplexMatrix> pulled_back_observables(const StinespringChannel& c,
                                                          const ComplexMatrix& obs, int k_max) {
  std::vector<ComplexMatrix> out{obs};
  for (int k = 1; k <= k_max; ++k) out.push_back(c.adjoint_apply(out.back()));
  return out;
}

/// Multi-step generalisation of adjoint_terminal:
/// -4i sum_n sum_l sum_{k<n} e_{l,n} (O_{l,k} (x) I) U (rho~_{l,n-k-1} (x) |0><0|).
///
/// The sum over (n, k) is regrouped by the state index j = n - k - 1 and the
/// pulled-back observables are accumulated backwards, B_j = A_{j+1} +
/// Phi^dagger(B_{j+1}) with A_n = sum_l e_{l,n} O_l, so each state costs N
/// adjoint applications instead of N^2.
inline ComplexMatrix multistep_frechet(const StinespringChannel& c, const TrainingSet& ts) {
  const int steps = ts.n_steps;
  const Rollout r = rollout(c, ts, steps);
  const auto groups = detail::pairs_by_state(ts);
  const Eigen::Index da = c.dim_a();
  ComplexMatrix p = ComplexMatrix::Zero(c.unitary().rows(), c.unitary().cols());
  for (std::size_t s = 0; s < groups.size(); ++s) {
    if (groups[s].empty()) continue;
    ComplexMatrix acc = ComplexMatrix::Zero(da, da);
    for (int j = steps - 1; j >= 0; --j) {
      ComplexMatrix a = ComplexMatrix::Zero(da, da);
      for (auto l : groups[s]) a += r.residuals(static_cast<Eigen::Index>(l), j) * ts.pairs[l].obs;
      acc = (j == steps - 1) ? a : ComplexMatrix(a + c.adjoint_apply(acc));
      p += detail::weighted_response(acc, c.unitary(), r.states[s][static_cast<std::size_t>(j)], da,
                                     c.dim_b());
    }
  }
  return complex(0.0, -4.0) * p;
}

/// Cotangent G of the loss w.r.t. U: dJ = Re Tr[dU G^dagger]. With the
/// -4i convention of the terminal matrices, G = i P(tau_f).
inline ComplexMatrix loss_cotangent(const ComplexMatrix& p_final) { return kI * p_final; }

/// Adjoint process P(tau) = U(tau) U(tau_f)^dagger P(tau_f).
inline ComplexMatrix adjoint_state(const ComplexMatrix& u_tau, const ComplexMatrix& u_final,
                                   const ComplexMatrix& p_final) {
  return u_tau * u_final.adjoint() * p_final;
}

/// KKT trace term Tr[Q^dagger (P U^dagger + U P^dagger)] at one instant.
/// With P(tau_f) = -4i(...) this equals minus eta_commutator.
inline complex eta_trace(const ComplexMatrix& p_tau, const ComplexMatrix& u_tau, const ControlOperator& op) {
  return (op.q.adjoint() * (p_tau * u_tau.adjoint() + u_tau * p_tau.adjoint())).trace();
}

/// sum_l sum_k 4i e_l conj(c_k) Tr[rho^(tau) [V_k^dagger, Gamma^dagger (O_l (x) I) Gamma]]
/// with Gamma = U(tau_f) U(tau)^dagger and rho^(tau) = U(tau) (rho_l (x) |0><0|) U(tau)^dagger.
/// Its real part is the instantaneous derivative of the single-step loss
/// with respect to a real control amplitude.
inline complex eta_commutator(const TrainingSet& ts, const ComplexMatrix& u_tau,
                              const ComplexMatrix& u_final, const ControlOperator& op,
                              Eigen::Index dim_a, Eigen::Index dim_b) {
  const StinespringChannel c(u_final, dim_a, dim_b);
  const Rollout r = rollout(c, ts, 1);
  const ComplexMatrix gamma = u_final * u_tau.adjoint();
  const ComplexMatrix id_b = ComplexMatrix::Identity(dim_b, dim_b);
  const ComplexMatrix anc0 = zero_projector(dim_b);
  complex eta{0.0, 0.0};
  for (std::size_t l = 0; l < ts.pairs.size(); ++l) {
    const auto& pair = ts.pairs[l];
    const double e = r.residuals(static_cast<Eigen::Index>(l), 0);
    if (e == 0.0) continue;
    const ComplexMatrix w = gamma.adjoint() * kron(pair.obs, id_b) * gamma;
    const ComplexMatrix rho_tau = u_tau * kron(ts.rho0(pair), anc0) * u_tau.adjoint();
    for (const auto& [coef, v] : op.unitary_parts) {
      const ComplexMatrix vd = v.adjoint();
      eta += complex(0.0, 4.0) * e * std::conj(coef) * (rho_tau * (vd * w - w * vd)).trace();
    }
  }
  return eta;
}

// ---------------------------------------------------------------------------
// Pulse gradients

/// U(tau) for a time inside the schedule, including a fixed unitary `pre`
/// applied before the pulse (identity when empty).
inline ComplexMatrix propagate_to(const PulseSchedule& s, const ComplexMatrix& h_v,
                                  const std::vector<ControlOperator>& ops, double tau,
                                  const ComplexMatrix& pre = {}) {
  const double w = s.segment_width();
  const auto segs = pulse_segments(s, h_v, ops);
  ComplexMatrix u = pre.size() ? pre : ComplexMatrix(ComplexMatrix::Identity(h_v.rows(), h_v.cols()));
  double t = 0.0;
  for (const auto& seg : segs) {
    if (tau <= t + w) {
      const ComplexVector ph =
          (seg.eigenvalues.cast<complex>() * complex(0.0, -(tau - t))).array().exp().matrix();
      return seg.eigenvectors * ph.asDiagonal() * seg.eigenvectors.adjoint() * u;
    }
    u = (seg.propagator * u).eval();
    t += w;
  }
  return u;
}

/// Gradient of Re Tr[U G^dagger] with respect to each segment amplitude, where
/// U = S_N ... S_1 pre. Uses the exact derivative of every segment exponential
/// (divided differences of exp(-i w x) in the segment eigenbasis), i.e. the
/// integral of the instantaneous trace term over the segment.
inline RealMatrix segment_gradient(const std::vector<PulseSegment>& segs,
                                   const std::vector<ControlOperator>& ops, double width,
                                   const ComplexMatrix& cotangent, const ComplexMatrix& pre) {
  const auto n = segs.size();
  const Eigen::Index d = cotangent.rows();
  std::vector<ComplexMatrix> forward(n);  // S_{j-1} ... S_1 pre
  forward[0] = pre.size() ? pre : ComplexMatrix(ComplexMatrix::Identity(d, d));
  for (std::size_t j = 1; j < n; ++j) forward[j] = segs[j - 1].propagator * forward[j - 1];

  std::vector<ComplexMatrix> generators;
  generators.reserve(ops.size());
  for (const auto& op : ops) generators.push_back(op.generator());

  RealMatrix grad(static_cast<Eigen::Index>(ops.size()), static_cast<Eigen::Index>(n));
  ComplexMatrix backward = cotangent;  // (S_N ... S_{j+1})^dagger G
  for (std::size_t jj = n; jj-- > 0;) {
    const auto& seg = segs[jj];
    const ComplexMatrix x = backward * forward[jj].adjoint();
    const ComplexMatrix xh = seg.eigenvectors.adjoint() * x * seg.eigenvectors;
    ComplexMatrix y(d, d);
    for (Eigen::Index a = 0; a < d; ++a) {
      const double la = seg.eigenvalues(a);
      for (Eigen::Index b = 0; b < d; ++b) {
        const double lb = seg.eigenvalues(b);
        // (e^{-i w la} - e^{-i w lb}) / (la - lb) = -i w e^{-i w (la + lb) / 2} sinc(w (la - lb) / 2)
        const double x = 0.5 * width * (la - lb);
        const double sinc = std::abs(x) < 1e-4 ? 1.0 - x * x / 6.0 : std::sin(x) / x;
        const complex phi = complex(0.0, -width * sinc) * std::polar(1.0, -0.5 * width * (la + lb));
        y(a, b) = phi * std::conj(xh(a, b));
      }
    }
    for (std::size_t r = 0; r < generators.size(); ++r) {
      const ComplexMatrix gh = seg.eigenvectors.adjoint() * generators[r] * seg.eigenvectors;
      grad(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(jj)) = (gh.cwiseProduct(y)).sum().real();
    }
    backward = (seg.propagator.adjoint() * backward).eval();
  }
  return grad;
}

struct PulseEvaluation {
  ComplexMatrix unitary;
  double loss = 0.0;       // J(U) over all steps of the training set
  double objective = 0.0;  // loss + energy penalty
  RealMatrix gradient;     // d objective / d z, R x N
};

/// Loss and exact gradient of the pulse objective. `pre` is a fixed unitary
/// applied before the pulse (e.g. U_H (x) I for the decoherence stage of split
/// training); leave empty for none.
inline PulseEvaluation evaluate_pulse(const PulseSchedule& s, const ComplexMatrix& h_v,
                                      const std::vector<ControlOperator>& ops, const TrainingSet& ts,
                                      Eigen::Index dim_a, Eigen::Index dim_b,
                                      const ComplexMatrix& pre = {}, bool with_gradient = true) {
  const auto segs = pulse_segments(s, h_v, ops);
  ComplexMatrix u = pre.size() ? pre : ComplexMatrix(ComplexMatrix::Identity(h_v.rows(), h_v.cols()));
  for (const auto& seg : segs) u = (seg.propagator * u).eval();
  const StinespringChannel c(u, dim_a, dim_b);
  PulseEvaluation ev;
  ev.loss = multistep_loss(c, ts);
  ev.objective = ev.loss + s.energy_penalty();
  if (with_gradient) {
    const ComplexMatrix p = ts.n_steps > 1 ? multistep_frechet(c, ts) : adjoint_terminal(u, ts, dim_a, dim_b);
    ev.gradient = segment_gradient(segs, ops, s.segment_width(), loss_cotangent(p), pre);
    ev.gradient += s.lambda * s.segment_width() * s.values;
  }
  ev.unitary = std::move(u);
  return ev;
}

/// d(J + penalty)/dz for every control and segment.
inline RealMatrix pulse_gradient(const PulseSchedule& s, const ComplexMatrix& h_v,
                                 const std::vector<ControlOperator>& ops, const TrainingSet& ts,
                                 Eigen::Index dim_a, Eigen::Index dim_b, const ComplexMatrix& pre = {}) {
  return evaluate_pulse(s, h_v, ops, ts, dim_a, dim_b, pre).gradient;
}

// ---------------------------------------------------------------------------
// Quantum-evaluation accounting

enum class GradientMethod { gate, pulse, multistep_pulse };

struct QeDims {
  long long d = 0;        // gate depth
  long long m = 0;        // qubits
  long long n = 0;        // pulse segments
  long long k = 0;        // unitaries per control operator
  long long r = 0;        // control operators
  long long l = 0;        // training pairs
  long long n_steps = 0;  // training time steps
};

/// Quantum evaluations per gradient.
inline long long qe_count(GradientMethod method, const QeDims& dims) {
  switch (method) {
    case GradientMethod::gate:
      return 3 * dims.d * dims.m;
    case GradientMethod::pulse:
      return dims.n * dims.k * dims.r;
    case GradientMethod::multistep_pulse:
      return dims.n_steps * (dims.n_steps - 1) / 2 * dims.k * dims.l * dims.r;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Optimizer

struct OptimizerConfig {
  int max_iters = 500;
  double fd_eps = 1e-5;
  double armijo_c = 1e-4;
  double armijo_shrink = 0.5;
  int armijo_max_backtracks = 25;
  double initial_step = 1.0;
  double step_growth = 2.0;  // next trial step = growth * last accepted step
  bool bb_step = false;      // trial step from the Barzilai-Borwein quotient instead
  double batch_fraction = 1.0;
  std::uint64_t seed = 0;
  double lambda = 1e-3;
  double loss_tolerance = 1e-10;
  int stall_limit = 5;
  long long qe_budget = 0;  // 0 = unlimited

  void validate() const {
    if (max_iters < 0 || !(fd_eps > 0.0) || !(armijo_c > 0.0) || !(armijo_shrink > 0.0) ||
        armijo_shrink >= 1.0 || armijo_max_backtracks < 1 || !(initial_step > 0.0) ||
        !(step_growth >= 1.0) || !(batch_fraction > 0.0) || batch_fraction > 1.0 || lambda < 0.0 ||
        stall_limit < 1) {
      throw std::invalid_argument("OptimizerConfig: parameter out of range");
    }
  }
};

struct IterationRecord {
  int iter = 0;
  double loss = 0.0;       // J(U) of the full channel on the full training set
  double objective = 0.0;  // the quantity being minimised in the current stage
  double grad_norm = 0.0;
  double alpha = 0.0;
  long long qe_cumulative = 0;
};

enum class StopReason { converged, max_iters, stalled, qe_budget };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::converged: return "converged";
    case StopReason::max_iters: return "max_iters";
    case StopReason::stalled: return "stalled";
    case StopReason::qe_budget: return "qe_budget";
  }
  return "unknown";
}

struct DescentResult {
  RealVector params;
  std::vector<IterationRecord> trace;
  StopReason reason = StopReason::max_iters;
};

/// Hooks of one descent problem. `gradient` receives the coordinates to
/// differentiate (all of them for a full gradient) and must return a vector
/// of the parameter size, zero outside those coordinates.
struct DescentProblem {
  std::function<double(const RealVector&)> objective;
  std::function<RealVector(const RealVector&, const std::vector<Eigen::Index>&)> gradient;
  std::function<long long(std::size_t)> qe_per_gradient;  // argument: coordinates used
  std::function<double(const RealVector&)> monitor;        // full-set J; defaults to objective
  std::function<void(const RealVector&)> on_accept;        // called for every iterate
};

/// Gradient descent with Armijo backtracking; a random coordinate batch per
/// iteration when batch_fraction < 1.
inline DescentResult armijo_descent(const DescentProblem& prob, RealVector x0, const OptimizerConfig& cfg,
                                    int iter_offset = 0, long long qe_offset = 0) {
  cfg.validate();
  DescentResult res;
  res.params = std::move(x0);
  std::mt19937_64 rng(cfg.seed);
  const auto p = static_cast<std::size_t>(res.params.size());
  const std::size_t batch =
      std::min(p, static_cast<std::size_t>(std::ceil(cfg.batch_fraction * static_cast<double>(p))));
  std::vector<Eigen::Index> all(p);
  std::iota(all.begin(), all.end(), Eigen::Index{0});

  auto monitor = [&](const RealVector& x, double obj) { return prob.monitor ? prob.monitor(x) : obj; };

  double f = prob.objective(res.params);
  if (!std::isfinite(f)) throw NumericalError("armijo_descent: non-finite objective");
  long long qe = qe_offset;
  double alpha_trial = cfg.initial_step;
  int stalls = 0;
  RealVector prev_x, prev_g;
  res.trace.push_back({iter_offset, monitor(res.params, f), f, 0.0, 0.0, qe});
  if (prob.on_accept) prob.on_accept(res.params);

  for (int it = 1; it <= cfg.max_iters; ++it) {
    if (f < cfg.loss_tolerance) {
      res.reason = StopReason::converged;
      return res;
    }
    if (cfg.qe_budget > 0 && qe >= cfg.qe_budget) {
      res.reason = StopReason::qe_budget;
      return res;
    }
    std::vector<Eigen::Index> coords;
    if (batch < p) {
      coords = all;
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(batch);
      std::sort(coords.begin(), coords.end());
    }
    const RealVector g = prob.gradient(res.params, coords.empty() ? all : coords);
    if (!g.allFinite()) throw NumericalError("armijo_descent: non-finite gradient");
    qe += prob.qe_per_gradient ? prob.qe_per_gradient(coords.empty() ? p : coords.size()) : 0;
    const double g2 = g.squaredNorm();
    if (cfg.bb_step && prev_g.size() && coords.empty()) {
      const RealVector sx = res.params - prev_x;
      const double sy = sx.dot(g - prev_g);
      if (sy > 0.0) alpha_trial = std::min(sx.squaredNorm() / sy, 1e12);
    }
    prev_x = res.params;
    prev_g = g;

    double alpha = alpha_trial;
    bool accepted = false;
    RealVector trial;
    double f_trial = f;
    for (int bt = 0; bt <= cfg.armijo_max_backtracks; ++bt) {
      trial = res.params - alpha * g;
      f_trial = prob.objective(trial);
      if (std::isfinite(f_trial) && f_trial <= f - cfg.armijo_c * alpha * g2) {
        accepted = true;
        break;
      }
      alpha *= cfg.armijo_shrink;
    }
    if (accepted && g2 > 0.0) {
      res.params = std::move(trial);
      f = f_trial;
      alpha_trial = std::min(alpha * cfg.step_growth, 1e12);
      stalls = 0;
    } else {
      alpha = 0.0;
      ++stalls;
    }
    res.trace.push_back({iter_offset + it, monitor(res.params, f), f, std::sqrt(g2), alpha, qe});
    if (prob.on_accept) prob.on_accept(res.params);
    if (stalls >= cfg.stall_limit) {
      res.reason = StopReason::stalled;
      return res;
    }
  }
  res.reason = f < cfg.loss_tolerance ? StopReason::converged : StopReason::max_iters;
  return res;
}

// ---------------------------------------------------------------------------
// Problems

/// Gate-ansatz training with finite-difference gradients.
struct GateProblem {
  int m_total = 1;
  int depth = 1;
  double tau_g = 1.0;
  double tau_v = 10.0;
  ComplexMatrix u_ent;
  Eigen::Index dim_a = 2;
  Eigen::Index dim_b = 2;
  RealVector theta0;  // empty: uniform(-0.1, 0.1) from the optimizer seed

  [[nodiscard]] GateAnsatz ansatz(const RealVector& theta) const {
    return {m_total, depth, theta, tau_g, tau_v, u_ent};
  }
};

/// Pulse training of U = pulse * pre on the full register.
struct PulseProblem {
  ComplexMatrix h_v;
  std::vector<ControlOperator> ops;
  int n_segments = 10;
  double tau_f = 1.0;
  Eigen::Index dim_a = 2;
  Eigen::Index dim_b = 2;
  ComplexMatrix pre;  // fixed unitary before the pulse; empty = identity
  RealMatrix z0;      // empty: zero pulses

  [[nodiscard]] PulseSchedule schedule(const RealVector& flat, double lambda) const {
    PulseSchedule s(static_cast<int>(ops.size()), n_segments, tau_f, lambda);
    s.values = Eigen::Map<const RealMatrix>(flat.data(), static_cast<Eigen::Index>(ops.size()), n_segments);
    return s;
  }
  [[nodiscard]] int k_terms() const {
    std::size_t k = 0;
    for (const auto& op : ops) k = std::max(k, op.unitary_parts.size());
    return static_cast<int>(k);
  }
};

/// Two-stage training: the system pulse learns the coherent part against a
/// dissipation-free copy of the data, then is frozen while the full-register
/// pulse learns the decoherence.
struct SplitProblem {
  PulseProblem system;  // dim_b = 1
  PulseProblem full;
  TrainingSet coherent_set;
  int system_iters = 100;
};

struct TrainingResult {
  ComplexMatrix unitary;
  RealVector params;  // flattened final parameters of the last stage
  RealVector system_params;
  std::vector<IterationRecord> trace;
  StopReason reason = StopReason::max_iters;
  int stage1_iterations = 0;
};

inline std::function<long long(std::size_t)> pulse_qe(const PulseProblem& prob, const TrainingSet& ts) {
  QeDims dims;
  dims.n = prob.n_segments;
  dims.k = prob.k_terms();
  dims.r = static_cast<long long>(prob.ops.size());
  dims.l = static_cast<long long>(ts.l_count());
  dims.n_steps = ts.n_steps;
  const GradientMethod method = ts.n_steps > 1 ? GradientMethod::multistep_pulse : GradientMethod::pulse;
  const long long per = qe_count(method, dims);
  return [per](std::size_t) { return per; };
}

inline DescentProblem make_descent(const PulseProblem& prob, const TrainingSet& ts, double lambda) {
  DescentProblem d;
  d.objective = [&prob, &ts, lambda](const RealVector& x) {
    return evaluate_pulse(prob.schedule(x, lambda), prob.h_v, prob.ops, ts, prob.dim_a, prob.dim_b, prob.pre, false)
        .objective;
  };
  d.gradient = [&prob, &ts, lambda](const RealVector& x, const std::vector<Eigen::Index>& coords) {
    const RealMatrix g =
        evaluate_pulse(prob.schedule(x, lambda), prob.h_v, prob.ops, ts, prob.dim_a, prob.dim_b, prob.pre).gradient;
    RealVector flat = Eigen::Map<const RealVector>(g.data(), g.size());
    if (static_cast<Eigen::Index>(coords.size()) != flat.size()) {
      RealVector masked = RealVector::Zero(flat.size());
      for (auto i : coords) masked(i) = flat(i);
      return masked;
    }
    return flat;
  };
  d.qe_per_gradient = pulse_qe(prob, ts);
  return d;
}

inline ComplexMatrix pulse_unitary(const PulseProblem& prob, const RealVector& flat, double lambda) {
  ComplexMatrix u = pulse_propagate(prob.schedule(flat, lambda), prob.h_v, prob.ops);
  return prob.pre.size() ? ComplexMatrix(u * prob.pre) : u;
}

using ChannelObserver = std::function<void(const StinespringChannel&)>;

inline TrainingResult optimize(const GateProblem& prob, const OptimizerConfig& cfg, const TrainingSet& ts,
                               const ChannelObserver& observer = {}) {
  const Eigen::Index n_params = 3 * static_cast<Eigen::Index>(prob.depth) * prob.m_total;
  RealVector theta0 = prob.theta0.size() ? prob.theta0 : random_gate_parameters(n_params, cfg.seed);
  auto channel_of = [&prob](const RealVector& th) {
    return StinespringChannel(gate_unitary(prob.ansatz(th)), prob.dim_a, prob.dim_b);
  };
  DescentProblem d;
  d.objective = [&](const RealVector& th) { return multistep_loss(channel_of(th), ts); };
  d.gradient = [&](const RealVector& th, const std::vector<Eigen::Index>& coords) {
    return fd_gradient(d.objective, th, cfg.fd_eps, coords);
  };
  d.qe_per_gradient = [&prob](std::size_t coords) {
    const auto full = qe_count(GradientMethod::gate, {prob.depth, prob.m_total, 0, 0, 0, 0, 0});
    return static_cast<long long>(coords) < full ? static_cast<long long>(coords) : full;
  };
  if (observer) d.on_accept = [&](const RealVector& th) { observer(channel_of(th)); };
  DescentResult r = armijo_descent(d, theta0, cfg);
  TrainingResult out;
  out.unitary = gate_unitary(prob.ansatz(r.params));
  out.params = std::move(r.params);
  out.trace = std::move(r.trace);
  out.reason = r.reason;
  return out;
}

inline TrainingResult optimize(const PulseProblem& prob, const OptimizerConfig& cfg, const TrainingSet& ts,
                               const ChannelObserver& observer = {}) {
  const Eigen::Index n_params = static_cast<Eigen::Index>(prob.ops.size()) * prob.n_segments;
  RealVector x0 = prob.z0.size() ? RealVector(Eigen::Map<const RealVector>(prob.z0.data(), prob.z0.size()))
                                 : RealVector(RealVector::Zero(n_params));
  DescentProblem d = make_descent(prob, ts, cfg.lambda);
  d.monitor = [&](const RealVector& x) {
    return multistep_loss(StinespringChannel(pulse_unitary(prob, x, cfg.lambda), prob.dim_a, prob.dim_b), ts);
  };
  if (observer) {
    d.on_accept = [&](const RealVector& x) {
      observer(StinespringChannel(pulse_unitary(prob, x, cfg.lambda), prob.dim_a, prob.dim_b));
    };
  }
  DescentResult r = armijo_descent(d, x0, cfg);
  TrainingResult out;
  out.unitary = pulse_unitary(prob, r.params, cfg.lambda);
  out.params = std::move(r.params);
  out.trace = std::move(r.trace);
  out.reason = r.reason;
  return out;
}

/// Stage 1 runs for `system_iters` iterations (or until converged), stage 2
/// for the remaining `cfg.max_iters - stage1` iterations. The trace records
/// the full-set loss of the composed channel throughout.
inline TrainingResult optimize(const SplitProblem& prob, const OptimizerConfig& cfg, const TrainingSet& ts,
                               const ChannelObserver& observer = {}) {
  const PulseProblem& sys = prob.system;
  PulseProblem full = prob.full;
  const Eigen::Index dim_b_full = full.dim_b;
  const Eigen::Index n_full = static_cast<Eigen::Index>(full.ops.size()) * full.n_segments;
  const RealVector z_full0 = full.z0.size() ? RealVector(Eigen::Map<const RealVector>(full.z0.data(), full.z0.size()))
                                            : RealVector(RealVector::Zero(n_full));
  const ComplexMatrix u_dec0 = pulse_propagate(full.schedule(z_full0, cfg.lambda), full.h_v, full.ops);
  auto composed = [&](const ComplexMatrix& u_h, const ComplexMatrix& u_dec) {
    return StinespringChannel(split_compose(u_h, u_dec), full.dim_a, dim_b_full);
  };

  OptimizerConfig c1 = cfg;
  c1.max_iters = std::min(prob.system_iters, cfg.max_iters);
  c1.qe_budget = 0;
  DescentProblem d1 = make_descent(sys, prob.coherent_set, cfg.lambda);
  d1.monitor = [&](const RealVector& x) {
    return multistep_loss(composed(pulse_unitary(sys, x, cfg.lambda), u_dec0), ts);
  };
  if (observer) d1.on_accept = [&](const RealVector& x) { observer(composed(pulse_unitary(sys, x, cfg.lambda), u_dec0)); };
  const Eigen::Index n_sys = static_cast<Eigen::Index>(sys.ops.size()) * sys.n_segments;
  RealVector x_sys0 = sys.z0.size() ? RealVector(Eigen::Map<const RealVector>(sys.z0.data(), sys.z0.size()))
                                    : RealVector(RealVector::Zero(n_sys));
  DescentResult r1 = armijo_descent(d1, x_sys0, c1);
  const int stage1 = r1.trace.back().iter;
  const ComplexMatrix u_h = pulse_unitary(sys, r1.params, cfg.lambda);

  full.pre = kron(u_h, ComplexMatrix::Identity(dim_b_full, dim_b_full));
  OptimizerConfig c2 = cfg;
  c2.max_iters = std::max(0, cfg.max_iters - stage1);
  DescentProblem d2 = make_descent(full, ts, cfg.lambda);
  if (observer) {
    d2.on_accept = [&](const RealVector& x) {
      observer(StinespringChannel(pulse_unitary(full, x, cfg.lambda), full.dim_a, dim_b_full));
    };
  }
  d2.monitor = [&](const RealVector& x) {
    return multistep_loss(StinespringChannel(pulse_unitary(full, x, cfg.lambda), full.dim_a, dim_b_full), ts);
  };
  DescentResult r2 = armijo_descent(d2, z_full0, c2, stage1, r1.trace.back().qe_cumulative);

  TrainingResult out;
  out.unitary = pulse_unitary(full, r2.params, cfg.lambda);
  out.trace = std::move(r1.trace);
  out.trace.insert(out.trace.end(), r2.trace.begin() + 1, r2.trace.end());
  out.params = std::move(r2.params);
  out.system_params = std::move(r1.params);
  out.reason = r2.reason;
  out.stage1_iterations = stage1;
  return out;
}

}  // namespace stinespring
