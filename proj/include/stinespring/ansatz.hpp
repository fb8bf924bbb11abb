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
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "stinespring/hardware.hpp"
#include "stinespring/linalg.hpp"

namespace stinespring {

/// Hardware-efficient ansatz: d blocks of per-qubit ZXZ rotations, each
/// followed by a fixed entangler.
struct GateAnsatz {
  int m_total = 1;
  int depth = 1;
  RealVector theta;  // index 3 * (block * m_total + qubit) + k, radians
  double tau_g = 1.0;
  double tau_v = 10.0;
  ComplexMatrix u_ent;

  [[nodiscard]] Eigen::Index parameter_count() const { return 3 * depth * m_total; }
  [[nodiscard]] double duration() const { return depth * (tau_g + tau_v); }

  void validate() const {
    if (theta.size() != parameter_count()) {
      throw DimensionError("GateAnsatz: expected " + std::to_string(parameter_count()) +
                           " angles, got " + std::to_string(theta.size()));
    }
    const Eigen::Index d = Eigen::Index{1} << m_total;
    if (u_ent.rows() != d || u_ent.cols() != d) throw DimensionError("GateAnsatz: entangler dimension");
    if (!is_unitary(u_ent, 1e-12)) throw std::invalid_argument("GateAnsatz: entangler is not unitary");
  }
};

inline ComplexMatrix rz(double angle) {
  ComplexMatrix m = ComplexMatrix::Zero(2, 2);
  m(0, 0) = std::polar(1.0, -0.5 * angle);
  m(1, 1) = std::polar(1.0, 0.5 * angle);
  return m;
}

inline ComplexMatrix rx(double angle) {
  ComplexMatrix m(2, 2);
  const double c = std::cos(0.5 * angle);
  const double s = std::sin(0.5 * angle);
  m << c, complex(0.0, -s), complex(0.0, -s), c;
  return m;
}

/// Rz(t3) Rx(t2) Rz(t1).
inline ComplexMatrix zxz_gate(double t1, double t2, double t3) { return rz(t3) * rx(t2) * rz(t1); }

/// u <- (I (x) g (x) I) u with g acting on qubit q of m.
inline void apply_single_qubit(ComplexMatrix& u, const ComplexMatrix& g, int q, int m) {
  const Eigen::Index bit = Eigen::Index{1} << (m - 1 - q);
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    if (i & bit) continue;
    for (Eigen::Index c = 0; c < u.cols(); ++c) {
      const complex a = u(i, c);
      const complex b = u(i | bit, c);
      u(i, c) = g(0, 0) * a + g(0, 1) * b;
      u(i | bit, c) = g(1, 0) * a + g(1, 1) * b;
    }
  }
}

inline ComplexMatrix gate_unitary(const GateAnsatz& a) {
  a.validate();
  const Eigen::Index d = Eigen::Index{1} << a.m_total;
  // Van der Waals drift is diagonal, and so is its entangler.
  const bool diagonal = a.u_ent.isDiagonal(0.0);
  const ComplexVector ent_diag = a.u_ent.diagonal();
  ComplexMatrix u = ComplexMatrix::Identity(d, d);
  for (int j = 0; j < a.depth; ++j) {
    for (int q = 0; q < a.m_total; ++q) {
      const Eigen::Index base = 3 * (static_cast<Eigen::Index>(j) * a.m_total + q);
      apply_single_qubit(u, zxz_gate(a.theta(base), a.theta(base + 1), a.theta(base + 2)), q, a.m_total);
    }
    if (diagonal) {
      u = ent_diag.asDiagonal() * u;
    } else {
      u = (a.u_ent * u).eval();
    }
  }
  return u;
}

inline ComplexMatrix entangling_gate(const ComplexMatrix& h_v, double tau_v) {
  if (!is_hermitian(h_v, 1e-12)) throw std::invalid_argument("entangling_gate: drift is not Hermitian");
  return unitary_exp(h_v, tau_v);
}

/// uniform(-spread, spread) starting angles.
inline RealVector random_gate_parameters(Eigen::Index count, std::uint64_t seed, double spread = 0.1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-spread, spread);
  RealVector theta(count);
  for (Eigen::Index i = 0; i < count; ++i) theta(i) = dist(rng);
  return theta;
}

/// Piecewise-constant real control amplitudes on N equidistant segments.
struct PulseSchedule {
  RealMatrix values;  // R x N, row r = control r, column j = segment j
  double tau_f = 1.0;
  double lambda = 1e-3;

  PulseSchedule() = default;
  PulseSchedule(int r_channels, int n_segments, double duration, double regularization = 1e-3)
      : values(RealMatrix::Zero(r_channels, n_segments)), tau_f(duration), lambda(regularization) {
    if (r_channels < 0 || n_segments < 1) throw std::invalid_argument("PulseSchedule: bad shape");
    if (!(duration > 0.0)) throw std::invalid_argument("PulseSchedule: duration must be positive");
    if (regularization < 0.0) throw std::invalid_argument("PulseSchedule: negative regularization");
  }

  [[nodiscard]] int r_channels() const { return static_cast<int>(values.rows()); }
  [[nodiscard]] int n_segments() const { return static_cast<int>(values.cols()); }
  [[nodiscard]] double segment_width() const { return tau_f / n_segments(); }

  /// (lambda / 2) * integral of z^2.
  [[nodiscard]] double energy_penalty() const {
    return 0.5 * lambda * segment_width() * values.squaredNorm();
  }
};

/// Eigendecomposition and propagator of one constant-Hamiltonian segment.
struct PulseSegment {
  ComplexMatrix eigenvectors;
  RealVector eigenvalues;
  ComplexMatrix propagator;  // exp(-i width H_j)
};

inline std::vector<PulseSegment> pulse_segments(const PulseSchedule& s, const ComplexMatrix& h_v,
                                                const std::vector<ControlOperator>& ops) {
  if (static_cast<std::size_t>(s.r_channels()) != ops.size()) {
    throw DimensionError("pulse schedule has " + std::to_string(s.r_channels()) + " channels but " +
                         std::to_string(ops.size()) + " control operators were given");
  }
  const double width = s.segment_width();
  std::vector<PulseSegment> out;
  out.reserve(static_cast<std::size_t>(s.n_segments()));
  for (int j = 0; j < s.n_segments(); ++j) {
    ComplexMatrix h = h_v;
    if (!ops.empty()) h += control_hamiltonian(ops, s.values.col(j));
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h);
    const ComplexVector phases =
        (es.eigenvalues().cast<complex>() * complex(0.0, -width)).array().exp().matrix();
    out.push_back({es.eigenvectors(), es.eigenvalues(),
                   es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint()});
  }
  return out;
}

/// Time-ordered product of segment propagators up to segment `upto`
/// (all segments when empty).
inline ComplexMatrix pulse_propagate(const PulseSchedule& s, const ComplexMatrix& h_v,
                                     const std::vector<ControlOperator>& ops,
                                     std::optional<int> upto = std::nullopt) {
  const int last = upto.value_or(s.n_segments());
  if (last < 0 || last > s.n_segments()) throw std::out_of_range("pulse_propagate: segment index");
  const auto segs = pulse_segments(s, h_v, ops);
  ComplexMatrix u = ComplexMatrix::Identity(h_v.rows(), h_v.cols());
  for (int j = 0; j < last; ++j) u = (segs[static_cast<std::size_t>(j)].propagator * u).eval();
  return u;
}

/// U = U_dec (U_H (x) I_B).
inline ComplexMatrix split_compose(const ComplexMatrix& u_h, const ComplexMatrix& u_dec) {
  if (u_h.rows() == 0 || u_dec.rows() % u_h.rows() != 0 || u_h.rows() != u_h.cols() ||
      u_dec.rows() != u_dec.cols()) {
    throw DimensionError("split_compose: system unitary does not divide the full register");
  }
  const Eigen::Index dim_b = u_dec.rows() / u_h.rows();
  return u_dec * kron(u_h, ComplexMatrix::Identity(dim_b, dim_b));
}

}  // namespace stinespring
