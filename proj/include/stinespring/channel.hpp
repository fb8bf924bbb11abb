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

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stinespring/linalg.hpp"

namespace stinespring {

/// Channel rho -> Tr_B[U (rho (x) |0><0|_B) U^dagger] on a system of dimension
/// dim_a with a dim_b-dimensional ancilla register.
class StinespringChannel {
 public:
  StinespringChannel(ComplexMatrix u, Eigen::Index dim_a, Eigen::Index dim_b)
      : u_(std::move(u)), dim_a_(dim_a), dim_b_(dim_b) {
    if (dim_a_ < 1 || dim_b_ < 1 || u_.rows() != dim_a_ * dim_b_ || u_.cols() != u_.rows()) {
      throw DimensionError("StinespringChannel: unitary is " + std::to_string(u_.rows()) + "x" +
                           std::to_string(u_.cols()) + " for dims " + std::to_string(dim_a_) +
                           " x " + std::to_string(dim_b_));
    }
    if (dim_b_ > dim_a_ * dim_a_) {
      throw std::invalid_argument("StinespringChannel: ancilla dimension exceeds dim_a^2");
    }
    if (!is_unitary(u_, 1e-10)) throw std::invalid_argument("StinespringChannel: U is not unitary");
    kraus_.reserve(static_cast<std::size_t>(dim_b_));
    for (Eigen::Index b = 0; b < dim_b_; ++b) {
      ComplexMatrix k(dim_a_, dim_a_);
      for (Eigen::Index i = 0; i < dim_a_; ++i)
        for (Eigen::Index j = 0; j < dim_a_; ++j) k(i, j) = u_(i * dim_b_ + b, j * dim_b_);
      kraus_.push_back(std::move(k));
    }
  }

  [[nodiscard]] const ComplexMatrix& unitary() const { return u_; }
  [[nodiscard]] Eigen::Index dim_a() const { return dim_a_; }
  [[nodiscard]] Eigen::Index dim_b() const { return dim_b_; }

  /// K_b = (I (x) <b|) U (I (x) |0>).
  [[nodiscard]] const std::vector<ComplexMatrix>& kraus() const { return kraus_; }

  [[nodiscard]] DensityMatrix apply(const DensityMatrix& rho) const {
    check_dim(rho, "apply");
    DensityMatrix out = DensityMatrix::Zero(dim_a_, dim_a_);
    for (const auto& k : kraus_) out.noalias() += k * rho * k.adjoint();
    return out;
  }

  /// Heisenberg-picture map O -> Tr_B[U^dagger (O (x) I) U (I (x) |0><0|)]
  /// restricted to the system.
  [[nodiscard]] ComplexMatrix adjoint_apply(const ComplexMatrix& obs) const {
    check_dim(obs, "adjoint_apply");
    ComplexMatrix out = ComplexMatrix::Zero(dim_a_, dim_a_);
    for (const auto& k : kraus_) out.noalias() += k.adjoint() * obs * k;
    return out;
  }

  /// Superoperator on column-stacked system states.
  [[nodiscard]] ComplexMatrix superoperator() const {
    ComplexMatrix s = ComplexMatrix::Zero(dim_a_ * dim_a_, dim_a_ * dim_a_);
    for (const auto& k : kraus_) s += kron(k.conjugate(), k);
    return s;
  }

 private:
  void check_dim(const ComplexMatrix& m, const char* where) const {
    if (m.rows() != dim_a_ || m.cols() != dim_a_) {
      throw DimensionError(std::string("StinespringChannel::") + where + ": operator is " +
                           std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                           ", system dimension is " + std::to_string(dim_a_));
    }
  }

  ComplexMatrix u_;
  Eigen::Index dim_a_;
  Eigen::Index dim_b_;
  std::vector<ComplexMatrix> kraus_;
};

inline DensityMatrix apply(const StinespringChannel& c, const DensityMatrix& rho) { return c.apply(rho); }

/// States rho(k dt), k = 1..n, from repeated application. Each application
/// consumes one fresh ancilla register; the used registers are never touched
/// again, so tracing them out after every step gives the same system state as
/// carrying the joint register along.
struct Extrapolation {
  std::vector<DensityMatrix> states;
  int fresh_ancilla_registers = 0;
};

inline Extrapolation extrapolate(const StinespringChannel& c, const DensityMatrix& rho0, int n) {
  if (n < 1) throw std::invalid_argument("extrapolate: n must be >= 1");
  Extrapolation out;
  out.states.reserve(static_cast<std::size_t>(n));
  DensityMatrix rho = rho0;
  for (int k = 0; k < n; ++k) {
    rho = c.apply(rho);
    ++out.fresh_ancilla_registers;
    out.states.push_back(rho);
  }
  return out;
}

/// sum_ij |i><j| (x) Phi(|i><j|).
inline ComplexMatrix choi_matrix(const StinespringChannel& c) {
  const Eigen::Index d = c.dim_a();
  ComplexMatrix choi = ComplexMatrix::Zero(d * d, d * d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      ComplexMatrix e = ComplexMatrix::Zero(d, d);
      e(i, j) = 1.0;
      choi.block(i * d, j * d, d, d) = c.apply(e);
    }
  }
  return choi;
}

struct ChannelCertificate {
  double min_choi_eigenvalue = 0.0;
  double tp_residual = 0.0;  // max |Tr_out[Choi] - I|

  [[nodiscard]] bool valid(double tol = 1e-10) const {
    return min_choi_eigenvalue >= -tol && tp_residual <= tol;
  }
};

inline ChannelCertificate certify(const StinespringChannel& c) {
  const ComplexMatrix choi = choi_matrix(c);
  const Eigen::Index d = c.dim_a();
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(0.5 * (choi + choi.adjoint()), Eigen::EigenvaluesOnly);
  ChannelCertificate cert;
  cert.min_choi_eigenvalue = es.eigenvalues().minCoeff();
  cert.tp_residual =
      (partial_trace_b(choi, d, d) - ComplexMatrix::Identity(d, d)).cwiseAbs().maxCoeff();
  return cert;
}

}  // namespace stinespring
