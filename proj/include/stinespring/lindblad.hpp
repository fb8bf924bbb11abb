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

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stinespring/linalg.hpp"
#include "stinespring/training_set.hpp"

namespace stinespring {

struct JumpOperator {
  ComplexMatrix op;
  double rate = 0.0;
};

/// Time-independent Lindblad generator: Hamiltonian plus weighted jumps.
struct LindbladModel {
  ComplexMatrix h;
  std::vector<JumpOperator> jumps;

  [[nodiscard]] Eigen::Index dim() const { return h.rows(); }

  void validate() const {
    if (h.rows() != h.cols()) throw DimensionError("Hamiltonian is not square");
    if (!is_hermitian(h, 1e-12)) throw std::invalid_argument("Hamiltonian is not Hermitian");
    for (const auto& j : jumps) {
      if (j.op.rows() != dim() || j.op.cols() != dim()) {
        throw DimensionError("jump operator dimension mismatch");
      }
      if (!(j.rate >= 0.0)) throw std::invalid_argument("negative decay rate");
    }
  }

  /// Same Hamiltonian, no dissipation.
  [[nodiscard]] LindbladModel coherent_part() const { return {h, {}}; }
};

/// Generator L with vec(d rho/dt) = L vec(rho), column-stacking convention.
inline ComplexMatrix build_liouvillian(const LindbladModel& model) {
  model.validate();
  const Eigen::Index d = model.dim();
  const ComplexMatrix id = ComplexMatrix::Identity(d, d);
  ComplexMatrix l = -kI * (kron(id, model.h) - kron(model.h.transpose(), id));
  for (const auto& j : model.jumps) {
    const ComplexMatrix gdg = j.op.adjoint() * j.op;
    l += j.rate * (kron(j.op.conjugate(), j.op) - 0.5 * kron(id, gdg) -
                   0.5 * kron(gdg.transpose(), id));
  }
  return l;
}

inline DensityMatrix propagate(const LindbladModel& model, const DensityMatrix& rho0, double t) {
  if (t < 0.0) throw std::invalid_argument("propagate: negative time");
  if (rho0.rows() != model.dim() || rho0.cols() != model.dim()) {
    throw DimensionError("propagate: state dimension mismatch");
  }
  const ComplexMatrix prop = expm(build_liouvillian(model) * t);
  return unvec(prop * vec(rho0), model.dim());
}

/// A fixed point of the dynamics: the kernel vector of the generator,
/// normalised to unit trace. When the kernel is degenerate one element of it
/// is returned.
inline DensityMatrix steady_state(const LindbladModel& model) {
  const ComplexMatrix l = build_liouvillian(model);
  Eigen::JacobiSVD<ComplexMatrix> svd(l, Eigen::ComputeFullV);
  const ComplexVector v = svd.matrixV().col(l.cols() - 1);
  DensityMatrix rho = unvec(v, model.dim());
  const complex tr = rho.trace();
  if (std::abs(tr) < 1e-12) throw NumericalError("steady_state: kernel vector is traceless");
  rho /= tr;
  return 0.5 * (rho + rho.adjoint());
}

/// The exact channel Phi_dt as a superoperator on column-stacked states.
struct TargetChannel {
  LindbladModel model;
  double dt = 0.0;
  ComplexMatrix superoperator;

  TargetChannel(LindbladModel m, double step)
      : model(std::move(m)), dt(step), superoperator(expm(build_liouvillian(model) * step)) {
    if (step < 0.0) throw std::invalid_argument("TargetChannel: negative time step");
  }

  [[nodiscard]] DensityMatrix apply(const DensityMatrix& rho) const {
    return unvec(superoperator * vec(rho), model.dim());
  }

  /// rho(k dt) for k = 1..n.
  [[nodiscard]] std::vector<DensityMatrix> trajectory(const DensityMatrix& rho0, int n) const {
    std::vector<DensityMatrix> out;
    out.reserve(static_cast<std::size_t>(n));
    DensityMatrix rho = rho0;
    for (int k = 0; k < n; ++k) {
      rho = apply(rho);
      out.push_back(rho);
    }
    return out;
  }
};

/// Closed-form solution of a single qubit with Rabi drive H = (omega/2) X and
/// decay Gamma = |0><1| at rate gamma.
///
/// With x = rho00, y = Im rho01 the dynamics is a damped linear system with
/// fixed point (B, Im B') and eigenvalues (-3 gamma +- F)/4, F = sqrt(gamma^2 -
/// 16 omega^2). The sinh/F term is carried in product form so the constants C
/// and C' never need their (possibly vanishing) denominators; for F imaginary
/// the hyperbolic functions turn into cos/sin.
inline DensityMatrix analytic_single_qubit(const DensityMatrix& rho0, double gamma, double omega,
                                           double t) {
  if (rho0.rows() != 2 || rho0.cols() != 2) throw DimensionError("analytic_single_qubit: need 2x2");
  if (gamma < 0.0) throw std::invalid_argument("analytic_single_qubit: negative rate");
  const double x0 = rho0(0, 0).real();
  const complex c0 = rho0(0, 1);
  DensityMatrix out(2, 2);

  if (omega == 0.0) {
    const double decay = std::exp(-gamma * t);
    const double half = std::exp(-0.5 * gamma * t);
    out(0, 0) = rho0(0, 0) + rho0(1, 1) * (1.0 - decay);
    out(0, 1) = c0 * half;
    out(1, 0) = rho0(1, 0) * half;
    out(1, 1) = rho0(1, 1) * decay;
    return out;
  }

  const double g2 = gamma * gamma;
  const double w2 = omega * omega;
  const double s = g2 + 2.0 * w2;
  const double b = (g2 + w2) / s;
  const double b_im = gamma * omega / s;  // B' = i * b_im

  const double dx = x0 - b;
  const double dy = c0.imag() - b_im;
  const double c_dx = -gamma * dx - 4.0 * omega * dy;  // C  * (rho00 - B)
  const double c_dy = gamma * dy + 4.0 * omega * dx;   // C' * (Im rho01 - Im B')

  const double f2 = g2 - 16.0 * w2;
  double ch = 1.0;
  double sh_over_f = 0.25 * t;
  if (f2 > 0.0) {
    const double f = std::sqrt(f2);
    ch = std::cosh(0.25 * t * f);
    sh_over_f = std::sinh(0.25 * t * f) / f;
  } else if (f2 < 0.0) {
    const double f = std::sqrt(-f2);
    ch = std::cos(0.25 * t * f);
    sh_over_f = std::sin(0.25 * t * f) / f;
  }
  const double env = std::exp(-0.75 * gamma * t);

  const double x = b + env * (dx * ch + c_dx * sh_over_f);
  const double y = b_im + env * (dy * ch + c_dy * sh_over_f);
  const complex c(c0.real() * std::exp(-0.5 * gamma * t), y);
  out(0, 0) = x;
  out(0, 1) = c;
  out(1, 0) = std::conj(c);
  out(1, 1) = 1.0 - x;
  return out;
}

/// Two-qubit (system, ancilla) unitary whose induced channel is amplitude
/// damping exp(-gamma t): a partial SWAP between |10> and |01>.
inline ComplexMatrix exact_dilation_single_decay(double gamma, double t) {
  if (gamma < 0.0 || t < 0.0) throw std::invalid_argument("exact_dilation_single_decay: negative input");
  const double keep = std::exp(-0.5 * gamma * t);
  const double lost = std::sqrt(-std::expm1(-gamma * t));
  ComplexMatrix u = ComplexMatrix::Identity(4, 4);
  u(1, 1) = keep;
  u(1, 2) = -lost;
  u(2, 1) = lost;
  u(2, 2) = keep;
  return u;
}

namespace detail {
inline ComplexMatrix lowering() {
  ComplexMatrix m = ComplexMatrix::Zero(2, 2);
  m(0, 1) = 1.0;
  return m;
}
inline ComplexMatrix hadamard() {
  ComplexMatrix m(2, 2);
  const double r = 1.0 / std::numbers::sqrt2;
  m << r, r, r, -r;
  return m;
}
inline ComplexMatrix projector_11(int n_qubits, int a, int b) {
  const ComplexMatrix p1 = basis_projector(2, 1);
  return embed_single(p1, a, n_qubits) * embed_single(p1, b, n_qubits);
}
}  // namespace detail

namespace presets {

/// Single qubit decaying |1> -> |0> with Rabi drive (omega/2) X.
inline LindbladModel single_decay(double gamma, double omega) {
  return {0.5 * omega * pauli::x(), {{detail::lowering(), gamma}}};
}

/// Decay from |+> to |->: the single-qubit decay in a rotated basis where
/// |0> -> |->, |1> -> |+>.
inline LindbladModel plus_minus_decay(double gamma, double omega = 0.0) {
  const ComplexMatrix basis = detail::hadamard() * pauli::x();
  const ComplexMatrix jump = basis * detail::lowering() * basis.adjoint();
  const ComplexMatrix h = basis * (0.5 * omega * pauli::x()) * basis.adjoint();
  return {h, {{jump, gamma}}};
}

/// Independent decay of two qubits with optional |11><11| interaction.
inline LindbladModel two_qubit_decay(double gamma0, double gamma1, double interaction = 0.0) {
  return {interaction * detail::projector_11(2, 0, 1),
          {{embed_single(detail::lowering(), 0, 2), gamma0},
           {embed_single(detail::lowering(), 1, 2), gamma1}}};
}

/// Two driven, decaying qubits with |11> interaction.
inline LindbladModel driven_two_qubit_decay(double gamma0, double omega0, double gamma1,
                                            double omega1, double interaction) {
  const ComplexMatrix h = 0.5 * omega0 * embed_single(pauli::x(), 0, 2) +
                          0.5 * omega1 * embed_single(pauli::x(), 1, 2) +
                          interaction * detail::projector_11(2, 0, 1);
  return {h,
          {{embed_single(detail::lowering(), 0, 2), gamma0},
           {embed_single(detail::lowering(), 1, 2), gamma1}}};
}

/// Four-level cascade 3 -> 2 -> 1 -> 0 encoded on two qubits as
/// |3> = |10>, |2> = |11>, |1> = |01>, |0> = |00>; every jump flips one qubit.
inline LindbladModel four_level_cascade(double gamma32, double gamma21, double gamma10) {
  constexpr Eigen::Index k3 = 2, k2 = 3, k1 = 1, k0 = 0;
  auto jump = [](Eigen::Index to, Eigen::Index from) {
    ComplexMatrix m = ComplexMatrix::Zero(4, 4);
    m(to, from) = 1.0;
    return m;
  };
  return {ComplexMatrix::Zero(4, 4),
          {{jump(k2, k3), gamma32}, {jump(k1, k2), gamma21}, {jump(k0, k1), gamma10}}};
}

/// Open-chain transverse-field Ising model H = -B sum X_i + J sum Z_i Z_{i+1}
/// with |1> -> |0> decay on each spin.
inline LindbladModel tfim(int n_qubits, double field, double coupling,
                          const std::vector<double>& gammas) {
  if (static_cast<int>(gammas.size()) != n_qubits) {
    throw std::invalid_argument("tfim: need one decay rate per spin");
  }
  const Eigen::Index d = Eigen::Index{1} << n_qubits;
  ComplexMatrix h = ComplexMatrix::Zero(d, d);
  for (int i = 0; i < n_qubits; ++i) h -= field * embed_single(pauli::x(), i, n_qubits);
  for (int i = 0; i + 1 < n_qubits; ++i) {
    h += coupling * embed_single(pauli::z(), i, n_qubits) * embed_single(pauli::z(), i + 1, n_qubits);
  }
  LindbladModel model{h, {}};
  for (int i = 0; i < n_qubits; ++i) {
    model.jumps.push_back({embed_single(detail::lowering(), i, n_qubits), gammas[static_cast<std::size_t>(i)]});
  }
  return model;
}

}  // namespace presets

/// The basis states plus the equal-weight, zero-phase superpositions of every
/// pair of basis states (4 + 6 = 10 states on two qubits).
inline std::vector<DensityMatrix> basis_and_pair_states(int n_qubits) {
  const Eigen::Index d = Eigen::Index{1} << n_qubits;
  std::vector<DensityMatrix> out;
  for (Eigen::Index k = 0; k < d; ++k) out.push_back(basis_projector(d, k));
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i + 1; j < d; ++j) {
      ComplexVector v = ComplexVector::Zero(d);
      v(i) = v(j) = 1.0 / std::numbers::sqrt2;
      out.push_back(v * v.adjoint());
    }
  }
  return out;
}

/// Ten fixed single-qubit states: the six Pauli eigenstates and the four
/// vertices of a regular tetrahedron on the Bloch sphere.
inline std::vector<DensityMatrix> single_qubit_reference_states() {
  auto bloch = [](double x, double y, double z) {
    return DensityMatrix(0.5 * (pauli::identity() + x * pauli::x() + y * pauli::y() + z * pauli::z()));
  };
  const double r = 1.0 / std::sqrt(3.0);
  return {bloch(0, 0, 1),  bloch(0, 0, -1), bloch(1, 0, 0),  bloch(-1, 0, 0),
          bloch(0, 1, 0),  bloch(0, -1, 0), bloch(r, r, r),  bloch(r, -r, -r),
          bloch(-r, r, -r), bloch(-r, -r, r)};
}

inline std::vector<DensityMatrix> haar_states(int n_qubits, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<DensityMatrix> out;
  for (int i = 0; i < count; ++i) out.push_back(haar_random_state(n_qubits, rng).projector());
  return out;
}

/// Exact measured traces Tr[O_l rho_{l,n}] for every (state, observable) pair.
inline TrainingSet make_training_set(const LindbladModel& model,
                                     const std::vector<DensityMatrix>& initial_states,
                                     const std::vector<ComplexMatrix>& observables, int n_steps,
                                     double dt) {
  if (n_steps < 1) throw std::invalid_argument("make_training_set: n_steps must be >= 1");
  for (const auto& o : observables) {
    if (!is_hermitian(o, 1e-12)) throw std::invalid_argument("make_training_set: observable is not Hermitian");
    if (o.rows() != model.dim()) throw DimensionError("make_training_set: observable dimension mismatch");
  }
  const TargetChannel channel(model, dt);
  TrainingSet ts;
  ts.dt = dt;
  ts.n_steps = n_steps;
  ts.states = initial_states;
  for (std::size_t s = 0; s < initial_states.size(); ++s) {
    const auto traj = channel.trajectory(initial_states[s], n_steps);
    for (const auto& o : observables) {
      TrainingPair pair{s, o, {}};
      for (const auto& rho : traj) pair.targets.push_back((o * rho).trace().real());
      ts.pairs.push_back(std::move(pair));
    }
  }
  return ts;
}

}  // namespace stinespring
