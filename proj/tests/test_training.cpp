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


#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <random>

#include "test_util.hpp"

namespace stinespring {
namespace {

using testing::max_abs;

TrainingSet decay_set(double gamma, double omega, double dt, int n_steps, int n_qubits = 1) {
  const auto model = n_qubits == 1 ? presets::single_decay(gamma, omega) : presets::two_qubit_decay(gamma, 0.5 * gamma);
  const auto states = n_qubits == 1 ? single_qubit_reference_states() : basis_and_pair_states(n_qubits);
  return make_training_set(model, states, pauli_strings(n_qubits), n_steps, dt);
}

/// Reference loss straight from the definitions: dense channel applications
/// and explicit traces.
double brute_force_loss(const ComplexMatrix& u, const TrainingSet& ts, Eigen::Index da, Eigen::Index db) {
  double j = 0.0;
  for (const auto& p : ts.pairs) {
    DensityMatrix rho = ts.states[p.state];
    for (int n = 0; n < ts.n_steps; ++n) {
      rho = testing::dense_channel(u, rho, da, db);
      const double e = (p.obs * rho).trace().real() - p.targets[static_cast<std::size_t>(n)];
      j += e * e;
    }
  }
  return j;
}

double relative_error(const RealMatrix& a, const RealMatrix& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

struct PulseInstance {
  ComplexMatrix h_v;
  std::vector<ControlOperator> ops;
  PulseSchedule schedule;
  TrainingSet ts;
  Eigen::Index da = 2;
  Eigen::Index db = 2;
};

/// Random pulse problem on one system qubit plus `m_anc` ancillas with data
/// from a random dissipative model.
PulseInstance random_pulse_instance(int m_anc, int n_segments, double lambda, int n_steps, std::mt19937_64& rng) {
  const int m = 1 + m_anc;
  PulseInstance inst;
  inst.h_v = drift_hamiltonian(m == 2 ? geometry::line(2) : geometry::triangle(), m);
  inst.ops = control_operators(m, ControlMode::rotational);
  inst.db = Eigen::Index{1} << m_anc;
  std::uniform_real_distribution<double> amp(-1.0, 1.0);
  std::uniform_real_distribution<double> dur(0.5, 3.0);
  inst.schedule = PulseSchedule(static_cast<int>(inst.ops.size()), n_segments, dur(rng), lambda);
  for (Eigen::Index i = 0; i < inst.schedule.values.size(); ++i) inst.schedule.values.data()[i] = amp(rng);
  const auto model = testing::random_model(2, 2, rng);
  inst.ts = make_training_set(model, haar_states(1, 4, rng()), pauli_strings(1), n_steps, 0.3);
  return inst;
}

RealMatrix fd_pulse_gradient(const PulseInstance& inst, double eps = 1e-5) {
  const RealVector flat = Eigen::Map<const RealVector>(inst.schedule.values.data(), inst.schedule.values.size());
  const auto f = [&](const RealVector& x) {
    PulseSchedule s = inst.schedule;
    s.values = Eigen::Map<const RealMatrix>(x.data(), s.values.rows(), s.values.cols());
    return evaluate_pulse(s, inst.h_v, inst.ops, inst.ts, inst.da, inst.db, {}, false).objective;
  };
  const RealVector g = fd_gradient(f, flat, eps);
  return Eigen::Map<const RealMatrix>(g.data(), inst.schedule.values.rows(), inst.schedule.values.cols());
}

// ---------------------------------------------------------------------------
// Losses

TEST(Loss, ExactDilationIsZero) {
  const double gamma = 0.5, dt = 0.25;
  const auto ts = decay_set(gamma, 0.0, dt, 4);
  const StinespringChannel c(exact_dilation_single_decay(gamma, dt), 2, 2);
  EXPECT_LE(loss(c, ts), 1e-18 * 1e4);
  EXPECT_LE(multistep_loss(c, ts), 1e-24 * 1e6 + 1e-20);
}

TEST(Loss, IdentityChannelAgainstDecay) {
  const double gamma = 0.5, dt = 1.0;
  TrainingSet ts = make_training_set(presets::single_decay(gamma, 0.0), {basis_projector(2, 1)}, {pauli::z()}, 1, dt);
  const StinespringChannel c(ComplexMatrix::Identity(4, 4), 2, 2);
  const double expected = std::pow(1.0 - (2.0 * std::exp(-0.5) - 1.0), 2);
  EXPECT_NEAR(loss(c, ts), expected, 1e-14);
}

TEST(Loss, PermutationInvariant) {
  std::mt19937_64 rng(1);
  const auto ts = decay_set(0.5, 0.5, 0.25, 1);
  const StinespringChannel c(haar_random_unitary(4, rng), 2, 2);
  TrainingSet shuffled = ts;
  std::shuffle(shuffled.pairs.begin(), shuffled.pairs.end(), rng);
  EXPECT_NEAR(loss(c, shuffled), loss(c, ts), 1e-13);
}

TEST(Loss, MultistepReducesToSingleStep) {
  std::mt19937_64 rng(2);
  const auto ts = decay_set(0.5, 0.5, 0.25, 1);
  const StinespringChannel c(haar_random_unitary(8, rng), 2, 4);
  EXPECT_DOUBLE_EQ(multistep_loss(c, ts), loss(c, ts));
}

TEST(Loss, TwoStepsFromDirectComposition) {
  std::mt19937_64 rng(3);
  const auto ts = decay_set(0.5, 0.5, 0.25, 2);
  const ComplexMatrix u = haar_random_unitary(8, rng);
  const StinespringChannel c(u, 2, 4);
  double step2 = 0.0;
  for (const auto& p : ts.pairs) {
    const DensityMatrix rho2 = testing::dense_channel(u, testing::dense_channel(u, ts.states[p.state], 2, 4), 2, 4);
    step2 += std::pow((p.obs * rho2).trace().real() - p.targets[1], 2);
  }
  EXPECT_NEAR(multistep_loss(c, ts), loss(c, ts.truncated(1)) + step2, 1e-12);
}

TEST(Loss, ThreeStepsBruteForce) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 3; ++trial) {
    const auto ts = decay_set(0.4, 0.3, 0.5, 3, 2);
    const ComplexMatrix u = haar_random_unitary(8, rng);
    const StinespringChannel c(u, 4, 2);
    EXPECT_NEAR(multistep_loss(c, ts), brute_force_loss(u, ts, 4, 2), 1e-11);
  }
}

TEST(Loss, ZeroIffTracesMatch) {
  std::mt19937_64 rng(5);
  const StinespringChannel c(haar_random_unitary(8, rng), 2, 4);
  const auto states = single_qubit_reference_states();
  TrainingSet ts = testing::self_consistent_set(c, states, pauli_strings(1), 3);
  EXPECT_LE(multistep_loss(c, ts), 1e-18);
  ts.pairs[5].targets[2] += 1e-4;
  EXPECT_NEAR(multistep_loss(c, ts), 1e-8, 1e-12);
}

// ---------------------------------------------------------------------------
// Finite differences

TEST(FdGradient, Quadratic) {
  const RealVector theta = RealVector::LinSpaced(7, -1.0, 2.0);
  const auto g = fd_gradient([](const RealVector& x) { return x.squaredNorm(); }, theta, 1e-5);
  EXPECT_LT((g - 2.0 * theta).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FdGradient, ConstantAndSubset) {
  const RealVector theta = RealVector::Ones(4);
  EXPECT_EQ(fd_gradient([](const RealVector&) { return 3.0; }, theta, 1e-5).cwiseAbs().maxCoeff(), 0.0);
  const auto g = fd_gradient([](const RealVector& x) { return x.squaredNorm(); }, theta, 1e-5, {1, 3});
  EXPECT_EQ(g(0), 0.0);
  EXPECT_NEAR(g(1), 2.0, 1e-8);
  EXPECT_EQ(g(2), 0.0);
}

TEST(FdGradient, Errors) {
  const RealVector theta = RealVector::Ones(2);
  EXPECT_THROW(fd_gradient([](const RealVector& x) { return x(0) > 1.0 ? std::nan("") : 0.0; }, theta, 1e-5),
               NumericalError);
  EXPECT_THROW(fd_gradient([](const RealVector&) { return 0.0; }, theta, 0.0), std::invalid_argument);
}

TEST(FdGradient, ThreadCountDoesNotChangeResult) {
  std::mt19937_64 rng(6);
  const RealVector theta = random_gate_parameters(12, 3, 1.0);
  const auto f = [](const RealVector& x) { return std::sin(x.sum()) + x.array().cube().sum(); };
  ::setenv("STINESPRING_THREADS", "1", 1);
  const auto serial = fd_gradient(f, theta, 1e-5);
  ::setenv("STINESPRING_THREADS", "3", 1);
  const auto parallel = fd_gradient(f, theta, 1e-5);
  ::unsetenv("STINESPRING_THREADS");
  EXPECT_EQ((serial - parallel).cwiseAbs().maxCoeff(), 0.0);
}

// For rotations exp(-i t P / 2): dR/dt = R(t + pi) / 2, so the derivative of
// the ansatz unitary along one angle is half the ansatz with that angle
// shifted by pi.
TEST(FdGradient, GateLossMatchesShiftedUnitaryOracle) {
  std::mt19937_64 rng(7);
  const auto ts = decay_set(0.5, 0.5, 0.25, 1);
  const ComplexMatrix u_ent = entangling_gate(drift_hamiltonian(geometry::line(2), 2), 10.0);
  const RealVector theta = random_gate_parameters(12, 11, 1.5);
  const GateAnsatz a0{2, 2, theta, 1.0, 10.0, u_ent};
  const ComplexMatrix u = gate_unitary(a0);
  const StinespringChannel c(u, 2, 2);
  const Rollout r = rollout(c, ts, 1);
  const auto f = [&](const RealVector& th) {
    return loss(StinespringChannel(gate_unitary({2, 2, th, 1.0, 10.0, u_ent}), 2, 2), ts);
  };
  const RealVector g = fd_gradient(f, theta, 1e-5);
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    RealVector shifted = theta;
    shifted(i) += std::numbers::pi;
    const ComplexMatrix du = 0.5 * gate_unitary({2, 2, shifted, 1.0, 10.0, u_ent});
    double oracle = 0.0;
    for (std::size_t l = 0; l < ts.pairs.size(); ++l) {
      const auto& p = ts.pairs[l];
      const ComplexMatrix joint = kron(ts.states[p.state], zero_projector(2));
      const ComplexMatrix d_joint = du * joint * u.adjoint() + u * joint * du.adjoint();
      oracle += 2.0 * r.residuals(static_cast<Eigen::Index>(l), 0) *
                (p.obs * partial_trace_b(d_joint, 2, 2)).trace().real();
    }
    EXPECT_NEAR(g(i), oracle, 1e-8);
  }
}

// ---------------------------------------------------------------------------
// Adjoint matrices

TEST(AdjointTerminal, ZeroResidualsGiveZero) {
  std::mt19937_64 rng(8);
  const ComplexMatrix u = haar_random_unitary(8, rng);
  const auto ts = testing::self_consistent_set(StinespringChannel(u, 2, 4), single_qubit_reference_states(), pauli_strings(1), 1);
  EXPECT_LT(max_abs(adjoint_terminal(u, ts, 2, 4)), 1e-14);
}

TEST(AdjointTerminal, SinglePairHandAssembled) {
  std::mt19937_64 rng(9);
  const ComplexMatrix u = haar_random_unitary(8, rng);
  const DensityMatrix rho = random_density_matrix(2, rng);
  TrainingSet ts;
  ts.states = {rho};
  ts.pairs = {{0, pauli::z(), {0.3}}};
  ts.n_steps = 1;
  const double e = (pauli::z() * testing::dense_channel(u, rho, 2, 4)).trace().real() - 0.3;
  const ComplexMatrix expected =
      complex(0.0, -4.0) * e * kron(pauli::z(), ComplexMatrix::Identity(4, 4)) * u * kron(rho, zero_projector(4));
  EXPECT_LT(max_abs(adjoint_terminal(u, ts, 2, 4) - expected), 1e-13);
}

TEST(AdjointTerminal, LinearInResiduals) {
  std::mt19937_64 rng(10);
  const ComplexMatrix u = haar_random_unitary(4, rng);
  const StinespringChannel c(u, 2, 2);
  const auto ts = decay_set(0.5, 0.5, 0.25, 1);
  const Rollout r = rollout(c, ts, 1);
  TrainingSet scaled = ts;
  for (std::size_t l = 0; l < ts.pairs.size(); ++l) {
    const double e = r.residuals(static_cast<Eigen::Index>(l), 0);
    scaled.pairs[l].targets[0] = ts.pairs[l].targets[0] + e - 2.5 * e;
  }
  EXPECT_LT(max_abs(adjoint_terminal(u, scaled, 2, 2) - 2.5 * adjoint_terminal(u, ts, 2, 2)), 1e-12);
}

TEST(AdjointState, TerminalConditionReproduced) {
  std::mt19937_64 rng(11);
  const ComplexMatrix u = haar_random_unitary(8, rng);
  const ComplexMatrix p = testing::random_matrix(8, 8, rng);
  EXPECT_LT(max_abs(adjoint_state(u, u, p) - p), 1e-13);
}

TEST(Eta, TraceFormIsMinusCommutatorForm) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    auto inst = random_pulse_instance(trial % 2 ? 2 : 1, 4, 0.0, 1, rng);
    const ComplexMatrix u_final = pulse_propagate(inst.schedule, inst.h_v, inst.ops);
    const ComplexMatrix p_final = adjoint_terminal(u_final, inst.ts, inst.da, inst.db);
    const double tau = 0.37 * inst.schedule.tau_f;
    const ComplexMatrix u_tau = propagate_to(inst.schedule, inst.h_v, inst.ops, tau);
    const ComplexMatrix p_tau = adjoint_state(u_tau, u_final, p_final);
    for (const auto& op : inst.ops) {
      const complex a = eta_trace(p_tau, u_tau, op);
      const complex b = eta_commutator(inst.ts, u_tau, u_final, op, inst.da, inst.db);
      EXPECT_LT(std::abs(a + b), 1e-10 * std::max(1.0, std::abs(a)));
    }
  }
}

// The exact segment derivative is the integral of the instantaneous
// commutator term over the segment; 10-point Gauss-Legendre is exact to
// round-off for these smooth, slowly varying integrands.
TEST(Eta, SegmentGradientIsIntegralOfInstantaneousTerm) {
  static constexpr std::array<double, 5> kNodes{0.1488743389816312, 0.4333953941292472, 0.6794095682990244,
                                                0.8650633666889845, 0.9739065285171717};
  static constexpr std::array<double, 5> kWeights{0.2955242247147529, 0.2692667193099963, 0.2190863625159820,
                                                  0.1494513491505806, 0.0666713443086881};
  std::mt19937_64 rng(13);
  auto inst = random_pulse_instance(1, 3, 0.0, 1, rng);
  const RealMatrix grad = pulse_gradient(inst.schedule, inst.h_v, inst.ops, inst.ts, inst.da, inst.db);
  const ComplexMatrix u_final = pulse_propagate(inst.schedule, inst.h_v, inst.ops);
  const double w = inst.schedule.segment_width();
  for (int j = 0; j < inst.schedule.n_segments(); ++j) {
    const double mid = (j + 0.5) * w;
    for (std::size_t r = 0; r < inst.ops.size(); ++r) {
      double integral = 0.0;
      for (std::size_t k = 0; k < kNodes.size(); ++k) {
        for (double sign : {-1.0, 1.0}) {
          const double tau = mid + sign * kNodes[k] * 0.5 * w;
          const ComplexMatrix u_tau = propagate_to(inst.schedule, inst.h_v, inst.ops, tau);
          integral += 0.5 * w * kWeights[k] *
                      eta_commutator(inst.ts, u_tau, u_final, inst.ops[r], inst.da, inst.db).real();
        }
      }
      EXPECT_NEAR(grad(static_cast<Eigen::Index>(r), j), integral, 1e-9 * std::max(1.0, std::abs(integral)));
    }
  }
}

// ---------------------------------------------------------------------------
// Pulse gradients

TEST(PulseGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 6; ++trial) {
    const int m_anc = trial % 2 ? 2 : 1;
    const int n = trial < 3 ? 5 : 8;
    const double lambda = trial % 3 == 0 ? 0.0 : 1e-3;
    auto inst = random_pulse_instance(m_anc, n, lambda, 1, rng);
    const RealMatrix g = pulse_gradient(inst.schedule, inst.h_v, inst.ops, inst.ts, inst.da, inst.db);
    EXPECT_LT(relative_error(g, fd_pulse_gradient(inst)), 1e-4) << "trial " << trial;
  }
}

TEST(PulseGradient, MultistepMatchesFiniteDifferences) {
  std::mt19937_64 rng(15);
  for (int n_steps : {2, 3}) {
    for (int m_anc : {1, 2}) {
      auto inst = random_pulse_instance(m_anc, 5, 1e-3, n_steps, rng);
      const RealMatrix g = pulse_gradient(inst.schedule, inst.h_v, inst.ops, inst.ts, inst.da, inst.db);
      EXPECT_LT(relative_error(g, fd_pulse_gradient(inst)), 1e-4) << n_steps << " steps";
    }
  }
}

TEST(PulseGradient, WithFixedPrefix) {
  std::mt19937_64 rng(16);
  auto inst = random_pulse_instance(1, 4, 1e-3, 2, rng);
  const ComplexMatrix pre = kron(haar_random_unitary(2, rng), ComplexMatrix::Identity(2, 2));
  const RealMatrix g = pulse_gradient(inst.schedule, inst.h_v, inst.ops, inst.ts, inst.da, inst.db, pre);
  const RealVector flat = Eigen::Map<const RealVector>(inst.schedule.values.data(), inst.schedule.values.size());
  const auto f = [&](const RealVector& x) {
    PulseSchedule s = inst.schedule;
    s.values = Eigen::Map<const RealMatrix>(x.data(), s.values.rows(), s.values.cols());
    return evaluate_pulse(s, inst.h_v, inst.ops, inst.ts, inst.da, inst.db, pre, false).objective;
  };
  const RealVector fd = fd_gradient(f, flat, 1e-5);
  EXPECT_LT(relative_error(Eigen::Map<const RealVector>(g.data(), g.size()), fd), 1e-4);
}

TEST(PulseGradient, ZeroResidualsLeaveOnlyRegularizer) {
  std::mt19937_64 rng(17);
  auto inst = random_pulse_instance(1, 6, 0.0, 1, rng);
  const ComplexMatrix u = pulse_propagate(inst.schedule, inst.h_v, inst.ops);
  inst.ts = testing::self_consistent_set(StinespringChannel(u, 2, 2), inst.ts.states, pauli_strings(1), 1);
  EXPECT_LT(pulse_gradient(inst.schedule, inst.h_v, inst.ops, inst.ts, 2, 2).cwiseAbs().maxCoeff(), 1e-12);
  inst.schedule.lambda = 0.01;
  const RealMatrix g = pulse_gradient(inst.schedule, inst.h_v, inst.ops, inst.ts, 2, 2);
  EXPECT_LT((g - 0.01 * inst.schedule.segment_width() * inst.schedule.values).cwiseAbs().maxCoeff(), 1e-12);
}

// ---------------------------------------------------------------------------
// Multi-step Frechet derivative

TEST(MultistepFrechet, SingleStepEqualsTerminal) {
  std::mt19937_64 rng(18);
  const ComplexMatrix u = haar_random_unitary(8, rng);
  const auto ts = decay_set(0.5, 0.5, 0.25, 1);
  EXPECT_LT(max_abs(multistep_frechet(StinespringChannel(u, 2, 4), ts) - adjoint_terminal(u, ts, 2, 4)), 1e-13);
}

TEST(MultistepFrechet, PulledBackObservableOfDecay) {
  const double gamma = 0.7, dt = 0.4;
  const StinespringChannel c(exact_dilation_single_decay(gamma, dt), 2, 2);
  const auto obs = pulled_back_observables(c, pauli::z(), 2);
  ASSERT_EQ(obs.size(), 3u);
  EXPECT_LT(max_abs(obs[0] - pauli::z()), 1e-15);
  // Phi^dagger(Z) = K0^dagger Z K0 + K1^dagger Z K1 = diag(1, 1 - 2 e^{-gamma dt})
  ComplexMatrix expected = ComplexMatrix::Zero(2, 2);
  expected(0, 0) = 1.0;
  expected(1, 1) = 1.0 - 2.0 * std::exp(-gamma * dt);
  EXPECT_LT(max_abs(obs[1] - expected), 1e-13);
  expected(1, 1) = 1.0 - 2.0 * std::exp(-2.0 * gamma * dt);
  EXPECT_LT(max_abs(obs[2] - expected), 1e-13);
}

TEST(MultistepFrechet, ExplicitDoubleSum) {
  std::mt19937_64 rng(19);
  const ComplexMatrix u = haar_random_unitary(8, rng);
  const StinespringChannel c(u, 2, 4);
  const auto ts = decay_set(0.5, 0.5, 0.25, 3);
  const Rollout r = rollout(c, ts, 3);
  ComplexMatrix expected = ComplexMatrix::Zero(8, 8);
  for (std::size_t l = 0; l < ts.pairs.size(); ++l) {
    const auto& p = ts.pairs[l];
    const auto pulled = pulled_back_observables(c, p.obs, 3);
    for (int n = 1; n <= 3; ++n) {
      for (int k = 0; k < n; ++k) {
        expected += r.residuals(static_cast<Eigen::Index>(l), n - 1) *
                    kron(pulled[static_cast<std::size_t>(k)], ComplexMatrix::Identity(4, 4)) * u *
                    kron(r.states[p.state][static_cast<std::size_t>(n - k - 1)], zero_projector(4));
      }
    }
  }
  expected *= complex(0.0, -4.0);
  EXPECT_LT(max_abs(multistep_frechet(c, ts) - expected), 1e-12);
}

// ---------------------------------------------------------------------------
// Quantum-evaluation counts

TEST(QeCount, Examples) {
  EXPECT_EQ(qe_count(GradientMethod::gate, {.d = 10, .m = 3}), 90);
  EXPECT_EQ(qe_count(GradientMethod::pulse, {.n = 20, .k = 2, .r = 2}), 80);
  EXPECT_EQ(qe_count(GradientMethod::multistep_pulse, {.k = 2, .r = 2, .l = 40, .n_steps = 4}), 960);
}

// ---------------------------------------------------------------------------
// Optimizer

TEST(Optimize, ExactDilationStopsImmediately) {
  const double gamma = 0.5, dt = 0.25;
  const auto ts = decay_set(gamma, 0.0, dt, 4);
  PulseProblem prob{ComplexMatrix::Zero(4, 4), control_operators(2, ControlMode::coupling), 5, 1.0, 2, 2,
                    exact_dilation_single_decay(gamma, dt), {}};
  const auto res = optimize(prob, OptimizerConfig{}, ts);
  EXPECT_EQ(res.reason, StopReason::converged);
  ASSERT_EQ(res.trace.size(), 1u);
  EXPECT_LE(res.trace[0].loss, 1e-18);
}

PulseProblem small_pulse_problem(std::uint64_t seed) {
  PulseProblem prob{drift_hamiltonian(geometry::line(2), 2), control_operators(2, ControlMode::rotational), 6, 4.0, 2, 2, {}, {}};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  prob.z0 = RealMatrix(4, 6);
  for (Eigen::Index i = 0; i < prob.z0.size(); ++i) prob.z0.data()[i] = u(rng);
  return prob;
}

TEST(Optimize, ArmijoConditionHoldsForEveryAcceptedStep) {
  const auto ts = decay_set(0.5, 0.5, 0.25, 2);
  for (bool bb : {false, true}) {
    OptimizerConfig cfg;
    cfg.max_iters = 40;
    cfg.bb_step = bb;
    const auto res = optimize(small_pulse_problem(1), cfg, ts);
    for (std::size_t k = 1; k < res.trace.size(); ++k) {
      const auto& t = res.trace[k];
      if (t.alpha == 0.0) {
        EXPECT_EQ(t.objective, res.trace[k - 1].objective);
        continue;
      }
      EXPECT_LE(t.objective, res.trace[k - 1].objective - cfg.armijo_c * t.alpha * t.grad_norm * t.grad_norm);
    }
    EXPECT_LT(res.trace.back().loss, res.trace.front().loss);
  }
}

TEST(Optimize, ChannelsStayValid) {
  const auto ts = decay_set(0.5, 0.5, 0.25, 1);
  OptimizerConfig cfg;
  cfg.max_iters = 10;
  int seen = 0;
  optimize(small_pulse_problem(2), cfg, ts, [&](const StinespringChannel& c) {
    EXPECT_TRUE(certify(c).valid(1e-10));
    ++seen;
  });
  EXPECT_EQ(seen, 11);
}

TEST(Optimize, SeededDeterminism) {
  const auto ts = decay_set(0.5, 0.5, 0.25, 1);
  OptimizerConfig cfg;
  cfg.max_iters = 15;
  cfg.bb_step = true;
  const auto a = optimize(small_pulse_problem(3), cfg, ts);
  const auto b = optimize(small_pulse_problem(3), cfg, ts);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t k = 0; k < a.trace.size(); ++k) {
    EXPECT_EQ(a.trace[k].loss, b.trace[k].loss);
    EXPECT_EQ(a.trace[k].alpha, b.trace[k].alpha);
  }
  EXPECT_EQ(max_abs(a.unitary - b.unitary), 0.0);
}

GateProblem small_gate_problem() {
  GateProblem prob;
  prob.m_total = 2;
  prob.depth = 2;
  prob.u_ent = entangling_gate(drift_hamiltonian(geometry::line(2), 2), 10.0);
  return prob;
}

TEST(Optimize, StochasticGateBatchesAndDeterminism) {
  const auto ts = decay_set(0.5, 0.5, 0.25, 1);
  OptimizerConfig cfg;
  cfg.max_iters = 12;
  cfg.batch_fraction = 0.5;
  cfg.seed = 9;
  const auto a = optimize(small_gate_problem(), cfg, ts);
  const auto b = optimize(small_gate_problem(), cfg, ts);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t k = 0; k < a.trace.size(); ++k) {
    EXPECT_EQ(a.trace[k].loss, b.trace[k].loss);
    EXPECT_EQ(a.trace[k].qe_cumulative, 6 * static_cast<long long>(k));
  }
  cfg.batch_fraction = 1.0;
  const auto full = optimize(small_gate_problem(), cfg, ts);
  EXPECT_EQ(full.trace.back().qe_cumulative, 12 * static_cast<long long>(full.trace.size() - 1));
}

TEST(Optimize, QeBudgetStops) {
  const auto ts = decay_set(0.5, 0.5, 0.25, 1);
  OptimizerConfig cfg;
  cfg.max_iters = 100;
  cfg.qe_budget = 50;
  const auto res = optimize(small_gate_problem(), cfg, ts);
  EXPECT_EQ(res.reason, StopReason::qe_budget);
  EXPECT_EQ(res.trace.back().qe_cumulative, 60);
}

TEST(Optimize, ArmijoExhaustionStalls) {
  DescentProblem d;
  d.objective = [](const RealVector& x) { return 1.0 + x.squaredNorm(); };
  d.gradient = [](const RealVector& x, const std::vector<Eigen::Index>&) { return RealVector(-2.0 * x); };
  OptimizerConfig cfg;
  cfg.armijo_max_backtracks = 3;
  const auto res = armijo_descent(d, RealVector::Ones(3), cfg);
  EXPECT_EQ(res.reason, StopReason::stalled);
  ASSERT_EQ(res.trace.size(), 6u);
  for (std::size_t k = 1; k < res.trace.size(); ++k) {
    EXPECT_EQ(res.trace[k].alpha, 0.0);
    EXPECT_EQ(res.trace[k].objective, 4.0);
  }
  EXPECT_EQ(res.params, RealVector::Ones(3));
}

TEST(Optimize, RejectsBadConfig) {
  OptimizerConfig cfg;
  cfg.batch_fraction = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.armijo_shrink = 1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.fd_eps = -1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Optimize, SplitTraceIsContinuous) {
  const auto model = presets::single_decay(0.5, 0.5);
  const auto states = single_qubit_reference_states();
  const auto ts = make_training_set(model, states, pauli_strings(1), 2, 0.25);
  const auto coherent = make_training_set(model.coherent_part(), states, pauli_strings(1), 2, 0.25);
  PulseProblem sys{ComplexMatrix::Zero(2, 2), control_operators(1, ControlMode::rotational), 6, 4.0, 2, 1, {}, {}};
  SplitProblem prob{sys, small_pulse_problem(4), coherent, 5};
  OptimizerConfig cfg;
  cfg.max_iters = 12;
  const auto res = optimize(prob, cfg, ts);
  EXPECT_EQ(res.stage1_iterations, 5);
  ASSERT_EQ(res.trace.size(), 13u);
  for (std::size_t k = 0; k < res.trace.size(); ++k) EXPECT_EQ(res.trace[k].iter, static_cast<int>(k));
  for (std::size_t k = 1; k < res.trace.size(); ++k)
    EXPECT_GE(res.trace[k].qe_cumulative, res.trace[k - 1].qe_cumulative);
  EXPECT_NEAR(res.trace.back().loss, multistep_loss(StinespringChannel(res.unitary, 2, 2), ts), 1e-14);
  // the system stage leaves the full-register pulse untouched
  const ComplexMatrix u_h = pulse_unitary(sys, res.system_params, cfg.lambda);
  EXPECT_TRUE(is_unitary(u_h, 1e-12));
}

}  // namespace
}  // namespace stinespring
