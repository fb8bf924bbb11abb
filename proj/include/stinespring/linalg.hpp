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
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

namespace stinespring {

using complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using RealMatrix = Eigen::MatrixXd;

/// Hermitian, PSD, unit-trace matrix. Kept as a plain matrix so it composes
/// with Eigen expressions; validity is checked at the API boundaries.
using DensityMatrix = Eigen::MatrixXcd;

inline constexpr complex kI{0.0, 1.0};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A normalized state vector on 2^n qubits.
struct PureState {
  ComplexVector amplitudes;

  [[nodiscard]] Eigen::Index dim() const { return amplitudes.size(); }
  [[nodiscard]] DensityMatrix projector() const {
    return amplitudes * amplitudes.adjoint();
  }
};

inline bool is_hermitian(const ComplexMatrix& m, double tol = 1e-12) {
  if (m.rows() != m.cols()) return false;
  return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

inline bool is_unitary(const ComplexMatrix& m, double tol = 1e-12) {
  if (m.rows() != m.cols()) return false;
  const ComplexMatrix id = ComplexMatrix::Identity(m.rows(), m.cols());
  return (m.adjoint() * m - id).cwiseAbs().maxCoeff() <= tol;
}

inline bool is_psd(const ComplexMatrix& m, double tol = 1e-12) {
  if (!is_hermitian(m, std::max(tol, 1e-12))) return false;
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol;
}

inline bool is_power_of_two(Eigen::Index n) { return n > 0 && (n & (n - 1)) == 0; }

inline int log2_dim(Eigen::Index dim) {
  if (!is_power_of_two(dim)) {
    throw DimensionError("dimension " + std::to_string(dim) + " is not a power of two");
  }
  int q = 0;
  while ((Eigen::Index{1} << q) < dim) ++q;
  return q;
}

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  return Eigen::kroneckerProduct(a, b).eval();
}

/// Traces out the second factor of an (dim_a*dim_b)-dimensional operator.
inline ComplexMatrix partial_trace_b(const ComplexMatrix& m, Eigen::Index dim_a,
                                     Eigen::Index dim_b) {
  if (dim_a <= 0 || dim_b <= 0 || m.rows() != dim_a * dim_b || m.cols() != dim_a * dim_b) {
    throw DimensionError("partial_trace_b: matrix is " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + ", expected " +
                         std::to_string(dim_a * dim_b) + " square");
  }
  ComplexMatrix out = ComplexMatrix::Zero(dim_a, dim_a);
  for (Eigen::Index i = 0; i < dim_a; ++i) {
    for (Eigen::Index j = 0; j < dim_a; ++j) {
      complex s{0.0, 0.0};
      for (Eigen::Index k = 0; k < dim_b; ++k) s += m(i * dim_b + k, j * dim_b + k);
      out(i, j) = s;
    }
  }
  return out;
}

/// Traces out the first factor.
inline ComplexMatrix partial_trace_a(const ComplexMatrix& m, Eigen::Index dim_a,
                                     Eigen::Index dim_b) {
  if (dim_a <= 0 || dim_b <= 0 || m.rows() != dim_a * dim_b || m.cols() != dim_a * dim_b) {
    throw DimensionError("partial_trace_a: dimension mismatch");
  }
  ComplexMatrix out = ComplexMatrix::Zero(dim_b, dim_b);
  for (Eigen::Index k = 0; k < dim_b; ++k) {
    for (Eigen::Index l = 0; l < dim_b; ++l) {
      complex s{0.0, 0.0};
      for (Eigen::Index i = 0; i < dim_a; ++i) s += m(i * dim_b + k, i * dim_b + l);
      out(k, l) = s;
    }
  }
  return out;
}

inline void require_finite(const ComplexMatrix& m, const char* where) {
  if (!m.allFinite()) throw NumericalError(std::string(where) + ": non-finite entries");
}

/// General matrix exponential (scaling and squaring, Padé core).
inline ComplexMatrix expm(const ComplexMatrix& m) {
  if (m.rows() != m.cols()) throw DimensionError("expm: matrix is not square");
  require_finite(m, "expm");
  ComplexMatrix out = m.exp();
  require_finite(out, "expm");
  return out;
}

/// exp(-i t h) for Hermitian h, through its eigendecomposition.
inline ComplexMatrix unitary_exp(const ComplexMatrix& h, double t) {
  require_finite(h, "unitary_exp");
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h);
  const ComplexVector phases =
      (es.eigenvalues().cast<complex>() * complex(0.0, -t)).array().exp().matrix();
  return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

/// Square root of a Hermitian PSD matrix. Eigenvalues in [-tol, 0) are
/// clamped to zero; anything more negative is an error.
inline ComplexMatrix psd_sqrt(const ComplexMatrix& m, double tol = 1e-12) {
  if (m.rows() != m.cols()) throw DimensionError("psd_sqrt: matrix is not square");
  require_finite(m, "psd_sqrt");
  const ComplexMatrix herm = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(herm);
  RealVector ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -tol) {
      throw NumericalError("psd_sqrt: eigenvalue " + std::to_string(ev(i)) +
                           " below tolerance");
    }
    ev(i) = ev(i) < 0.0 ? 0.0 : std::sqrt(ev(i));
  }
  return es.eigenvectors() * ev.cast<complex>().asDiagonal() * es.eigenvectors().adjoint();
}

/// Normalized vector of i.i.d. standard complex Gaussians.
template <typename Rng>
PureState haar_random_state(int n_qubits, Rng& rng) {
  if (n_qubits < 1) throw DimensionError("haar_random_state: need at least one qubit");
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index dim = Eigen::Index{1} << n_qubits;
  ComplexVector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    const double re = normal(rng);
    const double im = normal(rng);
    v(i) = complex(re, im);
  }
  return PureState{v / v.norm()};
}

inline PureState haar_random_state(int n_qubits, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return haar_random_state(n_qubits, rng);
}

/// Haar-random unitary via QR of a complex Ginibre matrix with phase fix.
template <typename Rng>
ComplexMatrix haar_random_unitary(Eigen::Index dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ComplexMatrix g(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double re = normal(rng);
      const double im = normal(rng);
      g(i, j) = complex(re, im);
    }
  }
  Eigen::HouseholderQR<ComplexMatrix> qr(g);
  ComplexMatrix q = qr.householderQ();
  const ComplexMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < dim; ++j) {
    const complex d = r(j, j);
    q.col(j) *= std::abs(d) > 0.0 ? d / std::abs(d) : complex(1.0, 0.0);
  }
  return q;
}

/// Random full-rank density matrix (Ginibre ensemble).
template <typename Rng>
DensityMatrix random_density_matrix(Eigen::Index dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ComplexMatrix g(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double re = normal(rng);
      const double im = normal(rng);
      g(i, j) = complex(re, im);
    }
  }
  DensityMatrix rho = g * g.adjoint();
  return rho / rho.trace().real();
}

/// Projector |0...0><0...0| of the given dimension.
inline ComplexMatrix zero_projector(Eigen::Index dim) {
  ComplexMatrix p = ComplexMatrix::Zero(dim, dim);
  p(0, 0) = 1.0;
  return p;
}

/// Computational basis projector |k><k|.
inline DensityMatrix basis_projector(Eigen::Index dim, Eigen::Index k) {
  DensityMatrix p = DensityMatrix::Zero(dim, dim);
  p(k, k) = 1.0;
  return p;
}

/// Column-stacking vectorization.
inline ComplexVector vec(const ComplexMatrix& m) {
  return Eigen::Map<const ComplexVector>(m.data(), m.size());
}

inline ComplexMatrix unvec(const ComplexVector& v, Eigen::Index dim) {
  if (v.size() != dim * dim) throw DimensionError("unvec: size mismatch");
  return Eigen::Map<const ComplexMatrix>(v.data(), dim, dim);
}

namespace pauli {
inline ComplexMatrix identity() { return ComplexMatrix::Identity(2, 2); }
inline ComplexMatrix x() {
  ComplexMatrix m(2, 2);
  m << 0.0, 1.0, 1.0, 0.0;
  return m;
}
inline ComplexMatrix y() {
  ComplexMatrix m(2, 2);
  m << 0.0, -kI, kI, 0.0;
  return m;
}
inline ComplexMatrix z() {
  ComplexMatrix m(2, 2);
  m << 1.0, 0.0, 0.0, -1.0;
  return m;
}
}  // namespace pauli

/// Embeds a single-qubit operator on `qubit` of an n-qubit register
/// (qubit 0 is the most significant bit).
inline ComplexMatrix embed_single(const ComplexMatrix& op, int qubit, int n_qubits) {
  ComplexMatrix out = ComplexMatrix::Identity(1, 1);
  for (int q = 0; q < n_qubits; ++q) {
    out = kron(out, q == qubit ? op : pauli::identity());
  }
  return out;
}

}  // namespace stinespring
