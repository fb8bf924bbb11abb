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
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "stinespring/channel.hpp"
#include "stinespring/lindblad.hpp"
#include "stinespring/linalg.hpp"

namespace stinespring {

/// Bures distance sqrt(2 (1 - Tr[(sqrt(rho) sigma sqrt(rho))^(1/2)])).
///
/// Evaluated as the Frobenius distance || sqrt(rho) - sqrt(sigma) W || with W
/// the optimal unitary from the polar decomposition of sqrt(rho) sqrt(sigma).
/// Both expressions are equal; this one avoids the cancellation in 1 - F,
/// which would otherwise put a floor of ~1e-8 under the distance.
inline double bures_distance(const DensityMatrix& rho, const DensityMatrix& sigma) {
  if (rho.rows() != sigma.rows() || rho.cols() != sigma.cols() || rho.rows() != rho.cols()) {
    throw DimensionError("bures_distance: dimension mismatch");
  }
  const ComplexMatrix sr = psd_sqrt(rho, 1e-10);
  const ComplexMatrix ss = psd_sqrt(sigma, 1e-10);
  Eigen::JacobiSVD<ComplexMatrix> svd(sr * ss, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const ComplexMatrix w = svd.matrixV() * svd.matrixU().adjoint();
  const double d = (sr - ss * w).norm();
  return std::clamp(d, 0.0, std::numbers::sqrt2);
}

/// Fidelity form of the same quantity; used as a cross-check.
inline double bures_distance_fidelity_form(const DensityMatrix& rho, const DensityMatrix& sigma) {
  const ComplexMatrix sr = psd_sqrt(rho, 1e-10);
  const ComplexMatrix inner = sr * sigma * sr;
  const double f = psd_sqrt(inner, 1e-10).trace().real();
  return std::sqrt(std::clamp(2.0 * (1.0 - f), 0.0, 2.0));
}

/// All 4^m Pauli strings, ordered I < X < Y < Z with qubit 0 the most
/// significant digit.
inline std::vector<ComplexMatrix> pauli_strings(int m) {
  if (m < 1) throw std::invalid_argument("pauli_strings: need at least one qubit");
  const std::array<ComplexMatrix, 4> single{pauli::identity(), pauli::x(), pauli::y(), pauli::z()};
  std::vector<ComplexMatrix> out{ComplexMatrix::Identity(1, 1)};
  for (int q = 0; q < m; ++q) {
    std::vector<ComplexMatrix> next;
    next.reserve(out.size() * 4);
    for (const auto& prefix : out)
      for (const auto& p : single) next.push_back(kron(prefix, p));
    out = std::move(next);
  }
  return out;
}

inline std::string pauli_label(std::size_t index, int m) {
  static constexpr char kLetters[] = {'I', 'X', 'Y', 'Z'};
  std::string s(static_cast<std::size_t>(m), 'I');
  for (int q = m - 1; q >= 0; --q) {
    s[static_cast<std::size_t>(q)] = kLetters[index % 4];
    index /= 4;
  }
  return s;
}

inline double expectation(const ComplexMatrix& o, const DensityMatrix& rho) {
  if (o.rows() != rho.rows() || o.cols() != rho.cols()) throw DimensionError("expectation: dimension mismatch");
  if (!is_hermitian(o, 1e-10)) throw std::invalid_argument("expectation: observable is not Hermitian");
  const complex v = (o * rho).trace();
  if (std::abs(v.imag()) > 1e-10) {
    throw NumericalError("expectation: imaginary residue " + std::to_string(v.imag()));
  }
  return v.real();
}

enum class BuresScale { distance, squared };

struct ErrorCurve {
  std::vector<int> steps;
  std::vector<double> mean_bures;
  RealMatrix per_state_bures;  // states x steps

  [[nodiscard]] double min_at(std::size_t k) const {
    return per_state_bures.col(static_cast<Eigen::Index>(k)).minCoeff();
  }
  [[nodiscard]] double max_at(std::size_t k) const {
    return per_state_bures.col(static_cast<Eigen::Index>(k)).maxCoeff();
  }
};

/// Bures error between the exact evolution and the extrapolated learned
/// channel, averaged over Haar-random pure initial states.
inline ErrorCurve error_curve(const TargetChannel& target, const StinespringChannel& learned,
                              int n_states, int n_steps, std::uint64_t seed,
                              BuresScale scale = BuresScale::distance) {
  if (target.model.dim() != learned.dim_a()) throw DimensionError("error_curve: dimension mismatch");
  const int n_qubits = log2_dim(learned.dim_a());
  std::mt19937_64 rng(seed);
  ErrorCurve curve;
  curve.per_state_bures = RealMatrix::Zero(n_states, n_steps);
  for (int s = 0; s < n_states; ++s) {
    const DensityMatrix rho0 = haar_random_state(n_qubits, rng).projector();
    const auto exact = target.trajectory(rho0, n_steps);
    const auto approx = extrapolate(learned, rho0, n_steps).states;
    for (int k = 0; k < n_steps; ++k) {
      const double d = bures_distance(exact[static_cast<std::size_t>(k)], approx[static_cast<std::size_t>(k)]);
      curve.per_state_bures(s, k) = scale == BuresScale::squared ? d * d : d;
    }
  }
  for (int k = 0; k < n_steps; ++k) {
    curve.steps.push_back(k + 1);
    curve.mean_bures.push_back(n_states > 0 ? curve.per_state_bures.col(k).mean() : 0.0);
  }
  return curve;
}

}  // namespace stinespring
