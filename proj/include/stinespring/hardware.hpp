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

// Neutral-atom register model. Units: frequencies in kHz, times in ms,
// distances in micrometres; exp(-i t H) takes t*H as a plain number (no 2*pi).

#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stinespring/linalg.hpp"

namespace stinespring {

enum class InteractionKind { vdw, dipole };

struct AtomGeometry {
  std::vector<std::array<double, 3>> positions;
  double coefficient = 0.422;  // C6 (kHz um^6) for vdw, C3 (kHz um^3) for dipole
  InteractionKind kind = InteractionKind::vdw;

  [[nodiscard]] int size() const { return static_cast<int>(positions.size()); }

  [[nodiscard]] double distance(int i, int j) const {
    const auto& a = positions[static_cast<std::size_t>(i)];
    const auto& b = positions[static_cast<std::size_t>(j)];
    return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                     (a[2] - b[2]) * (a[2] - b[2]));
  }

  /// C_n / min R_ij^n.
  [[nodiscard]] double characteristic_interaction() const {
    double v = 0.0;
    const double n = kind == InteractionKind::vdw ? 6.0 : 3.0;
    for (int i = 0; i < size(); ++i)
      for (int j = i + 1; j < size(); ++j) v = std::max(v, coefficient / std::pow(distance(i, j), n));
    return v;
  }

  void validate() const {
    for (int i = 0; i < size(); ++i) {
      for (int j = i + 1; j < size(); ++j) {
        if (!(distance(i, j) > 0.0)) {
          throw std::invalid_argument("atoms " + std::to_string(i) + " and " + std::to_string(j) +
                                      " share a position");
        }
      }
    }
  }
};

namespace geometry {

/// Atoms on a line with the given spacing.
inline AtomGeometry line(int n, double spacing = 1.0, double c6 = 0.422) {
  AtomGeometry g;
  g.coefficient = c6;
  for (int i = 0; i < n; ++i) g.positions.push_back({spacing * i, 0.0, 0.0});
  return g;
}

/// Three atoms on an equilateral triangle.
inline AtomGeometry triangle(double side = 1.0, double c6 = 0.422) {
  AtomGeometry g;
  g.coefficient = c6;
  g.positions = {{0.0, 0.0, 0.0}, {side, 0.0, 0.0}, {0.5 * side, std::sqrt(3.0) / 2.0 * side, 0.0}};
  return g;
}

/// Two system atoms on a unit bond with ancillas packed around them at unit
/// nearest-neighbour distance: a square above the bond and a triangle apex
/// below it.
inline AtomGeometry cluster_2_3(double spacing = 1.0, double c6 = 0.422) {
  AtomGeometry g;
  g.coefficient = c6;
  const double s = spacing;
  g.positions = {{0.0, 0.0, 0.0},
                 {s, 0.0, 0.0},
                 {0.0, s, 0.0},
                 {s, s, 0.0},
                 {0.5 * s, -std::sqrt(3.0) / 2.0 * s, 0.0}};
  return g;
}

}  // namespace geometry

/// Always-on interaction of the register, summed over unordered atom pairs.
inline ComplexMatrix drift_hamiltonian(const AtomGeometry& geom, int m) {
  if (geom.size() != m) {
    throw DimensionError("drift_hamiltonian: geometry has " + std::to_string(geom.size()) +
                         " atoms, register has " + std::to_string(m));
  }
  geom.validate();
  const Eigen::Index d = Eigen::Index{1} << m;
  ComplexMatrix h = ComplexMatrix::Zero(d, d);
  const ComplexMatrix p1 = basis_projector(2, 1);
  ComplexMatrix sigma_minus = ComplexMatrix::Zero(2, 2);  // |0><1|
  sigma_minus(0, 1) = 1.0;
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      const double r = geom.distance(i, j);
      if (geom.kind == InteractionKind::vdw) {
        h += geom.coefficient / std::pow(r, 6) * embed_single(p1, i, m) * embed_single(p1, j, m);
      } else {
        // |01><10|_ij + h.c.
        const ComplexMatrix hop = embed_single(sigma_minus, i, m) * embed_single(sigma_minus.adjoint(), j, m);
        h += geom.coefficient / std::pow(r, 3) * (hop + hop.adjoint());
      }
    }
  }
  return h;
}

enum class ControlMode { coupling, detuning, rotational };

/// A control operator Q_r and its decomposition Q_r = sum_k c_k V_k into
/// unitaries with complex weights.
struct ControlOperator {
  enum class Kind { coupling, detuning };

  ComplexMatrix q;
  std::vector<std::pair<complex, ComplexMatrix>> unitary_parts;
  Kind kind = Kind::coupling;
  int qubit = 0;

  /// Generator of this control in H_c for real amplitude: Q + Q^dagger.
  [[nodiscard]] ComplexMatrix generator() const { return q + q.adjoint(); }

  [[nodiscard]] std::string label() const {
    return (kind == Kind::coupling ? "coupling " : "detuning ") + std::to_string(qubit);
  }
};

inline ControlOperator coupling_operator(int qubit, int m) {
  ComplexMatrix sigma_minus = ComplexMatrix::Zero(2, 2);
  sigma_minus(0, 1) = 1.0;
  return {embed_single(sigma_minus, qubit, m),
          {{0.5, embed_single(pauli::x(), qubit, m)},
           {0.5 * kI, embed_single(pauli::y(), qubit, m)}},
          ControlOperator::Kind::coupling,
          qubit};
}

inline ControlOperator detuning_operator(int qubit, int m) {
  return {embed_single(basis_projector(2, 1), qubit, m),
          {{0.5, ComplexMatrix::Identity(Eigen::Index{1} << m, Eigen::Index{1} << m)},
           {-0.5, embed_single(pauli::z(), qubit, m)}},
          ControlOperator::Kind::detuning,
          qubit};
}

/// Per-atom control operators; rotational mode lists all couplings, then all
/// detunings.
inline std::vector<ControlOperator> control_operators(int m, ControlMode mode) {
  if (m < 1) throw std::invalid_argument("control_operators: need at least one qubit");
  std::vector<ControlOperator> ops;
  if (mode != ControlMode::detuning)
    for (int q = 0; q < m; ++q) ops.push_back(coupling_operator(q, m));
  if (mode != ControlMode::coupling)
    for (int q = 0; q < m; ++q) ops.push_back(detuning_operator(q, m));
  return ops;
}

/// H_c[z] = sum_r z_r (Q_r + Q_r^dagger) for real amplitudes z. An effective
/// laser detuning Delta corresponds to z = -Delta / 2 on a detuning operator.
inline ComplexMatrix control_hamiltonian(const std::vector<ControlOperator>& ops,
                                         const Eigen::Ref<const RealVector>& z) {
  if (static_cast<std::size_t>(z.size()) != ops.size()) {
    throw DimensionError("control_hamiltonian: " + std::to_string(z.size()) + " amplitudes for " +
                         std::to_string(ops.size()) + " operators");
  }
  if (ops.empty()) return ComplexMatrix();
  ComplexMatrix h = ComplexMatrix::Zero(ops.front().q.rows(), ops.front().q.cols());
  for (std::size_t r = 0; r < ops.size(); ++r) h += z(static_cast<Eigen::Index>(r)) * ops[r].generator();
  return h;
}

}  // namespace stinespring
