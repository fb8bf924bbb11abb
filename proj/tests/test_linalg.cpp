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

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "test_util.hpp"

namespace stinespring {
namespace {

using testing::max_abs;

TEST(Kron, IdentityAndProjector) {
  EXPECT_EQ(max_abs(kron(pauli::identity(), pauli::identity()) - ComplexMatrix::Identity(4, 4)), 0.0);
  ComplexMatrix p = ComplexMatrix::Zero(2, 2);
  p(0, 0) = 1.0;
  ComplexMatrix expected = ComplexMatrix::Zero(4, 4);
  expected(0, 0) = 1.0;
  EXPECT_EQ(max_abs(kron(p, p) - expected), 0.0);
}

TEST(Kron, MatchesIndexFormula) {
  std::mt19937_64 rng(3);
  for (auto [a, b] : {std::pair{pauli::x(), pauli::z()},
                      std::pair{testing::random_matrix(2, 3, rng), testing::random_matrix(4, 2, rng)}}) {
    const ComplexMatrix k = kron(a, b);
    ASSERT_EQ(k.rows(), a.rows() * b.rows());
    ASSERT_EQ(k.cols(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index r = 0; r < b.rows(); ++r)
          for (Eigen::Index s = 0; s < b.cols(); ++s)
            EXPECT_EQ(k(i * b.rows() + r, j * b.cols() + s), a(i, j) * b(r, s));
  }
}

TEST(Kron, Associative) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = testing::random_matrix(2, 2, rng);
    const auto b = testing::random_matrix(3, 2, rng);
    const auto c = testing::random_matrix(2, 3, rng);
    EXPECT_LT(max_abs(kron(kron(a, b), c) - kron(a, kron(b, c))), 1e-12);
  }
}

TEST(PartialTrace, ProductState) {
  std::mt19937_64 rng(5);
  const auto rho = random_density_matrix(2, rng);
  const ComplexMatrix sigma = testing::random_matrix(4, 4, rng);
  EXPECT_LT(max_abs(partial_trace_b(kron(rho, sigma), 2, 4) - rho * sigma.trace()), 1e-12);
  EXPECT_LT(max_abs(partial_trace_a(kron(rho, sigma), 2, 4) - sigma * rho.trace()), 1e-12);
}

TEST(PartialTrace, IdentityAndBell) {
  EXPECT_LT(max_abs(partial_trace_b(ComplexMatrix::Identity(4, 4), 2, 2) - 2.0 * pauli::identity()), 1e-15);
  ComplexVector bell = ComplexVector::Zero(4);
  bell(0) = bell(3) = 1.0 / std::numbers::sqrt2;
  EXPECT_LT(max_abs(partial_trace_b(bell * bell.adjoint(), 2, 2) - 0.5 * pauli::identity()), 1e-15);
}

TEST(PartialTrace, PreservesTrace) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = testing::random_matrix(8, 8, rng);
    EXPECT_LT(std::abs(partial_trace_b(m, 2, 4).trace() - m.trace()), 1e-12);
    EXPECT_LT(std::abs(partial_trace_b(m, 4, 2).trace() - m.trace()), 1e-12);
  }
}

TEST(PartialTrace, DimensionMismatchThrows) {
  EXPECT_THROW(partial_trace_b(ComplexMatrix::Identity(4, 4), 2, 3), DimensionError);
  EXPECT_THROW(partial_trace_b(ComplexMatrix::Identity(4, 3), 2, 2), DimensionError);
}

TEST(Expm, ZeroAndDiagonal) {
  EXPECT_LT(max_abs(expm(ComplexMatrix::Zero(3, 3)) - ComplexMatrix::Identity(3, 3)), 1e-15);
  ComplexMatrix d = ComplexMatrix::Zero(2, 2);
  d(0, 0) = complex(0.3, -1.2);
  d(1, 1) = -2.5;
  const ComplexMatrix e = expm(d);
  EXPECT_LT(std::abs(e(0, 0) - std::exp(d(0, 0))), 1e-14);
  EXPECT_LT(std::abs(e(1, 1) - std::exp(d(1, 1))), 1e-14);
  EXPECT_EQ(std::abs(e(0, 1)), 0.0);
}

TEST(Expm, InvolutoryEuler) {
  // exp(-i a X) = cos(a) I - i sin(a) X since X^2 = I.
  for (double a : {std::numbers::pi / 2, 0.3, 2.0}) {
    const ComplexMatrix expected = std::cos(a) * pauli::identity() - kI * std::sin(a) * pauli::x();
    EXPECT_LT(max_abs(expm(-kI * a * pauli::x()) - expected), 1e-14);
  }
  EXPECT_LT(max_abs(expm(-kI * (std::numbers::pi / 2) * pauli::x()) + kI * pauli::x()), 1e-14);
}

TEST(Expm, InverseAndUnitarity) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    ComplexMatrix a = testing::random_matrix(6, 6, rng);
    a *= 5.0 / a.operatorNorm();
    EXPECT_LT(max_abs(expm(a) * expm(-a) - ComplexMatrix::Identity(6, 6)), 1e-10);
    const ComplexMatrix h = testing::random_hermitian(6, rng);
    EXPECT_TRUE(is_unitary(expm(-kI * 1.7 * h), 1e-10));
    EXPECT_LT(max_abs(unitary_exp(h, 1.7) - expm(-kI * 1.7 * h)), 1e-10);
  }
}

TEST(Expm, NonFiniteThrows) {
  ComplexMatrix m = ComplexMatrix::Zero(2, 2);
  m(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(expm(m), NumericalError);
}

TEST(PsdSqrt, Examples) {
  EXPECT_LT(max_abs(psd_sqrt(ComplexMatrix::Identity(3, 3)) - ComplexMatrix::Identity(3, 3)), 1e-15);
  ComplexMatrix d = ComplexMatrix::Zero(2, 2);
  d(0, 0) = 4.0;
  d(1, 1) = 9.0;
  const ComplexMatrix s = psd_sqrt(d);
  EXPECT_NEAR(s(0, 0).real(), 2.0, 1e-14);
  EXPECT_NEAR(s(1, 1).real(), 3.0, 1e-14);
}

TEST(PsdSqrt, RandomSquaresBack) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto rho = random_density_matrix(8, rng);
    const auto s = psd_sqrt(rho);
    EXPECT_LT(max_abs(s * s - rho), 1e-10);
    EXPECT_TRUE(is_hermitian(s, 1e-12));
    EXPECT_TRUE(is_psd(s, 1e-12));
  }
}

TEST(PsdSqrt, ClampsNoiseRejectsNegative) {
  ComplexMatrix d = ComplexMatrix::Zero(2, 2);
  d(0, 0) = 1.0;
  d(1, 1) = -5e-13;
  EXPECT_NO_THROW(psd_sqrt(d));
  d(1, 1) = -1e-6;
  EXPECT_THROW(psd_sqrt(d), NumericalError);
}

TEST(Haar, UnitNormAndDeterminism) {
  for (int n = 1; n <= 4; ++n) {
    const auto a = haar_random_state(n, 99);
    EXPECT_EQ(a.dim(), Eigen::Index{1} << n);
    EXPECT_NEAR(a.amplitudes.norm(), 1.0, 1e-12);
    EXPECT_EQ(max_abs(a.amplitudes - haar_random_state(n, 99).amplitudes), 0.0);
  }
  EXPECT_GT((haar_random_state(2, 1).amplitudes - haar_random_state(2, 2).amplitudes).norm(), 1e-3);
}

TEST(Haar, FirstMomentAndRotationInvariance) {
  // |<0|psi>|^2 is Beta(1, d - 1): mean 1/d, variance (d - 1) / (d^2 (d + 1)).
  constexpr int kDraws = 10000;
  std::mt19937_64 rng(2024);
  for (int n : {1, 2, 3}) {
    const double d = std::pow(2.0, n);
    const double sigma = std::sqrt((d - 1) / (d * d * (d + 1)) / kDraws);
    const ComplexMatrix u = haar_random_unitary(static_cast<Eigen::Index>(d), rng);
    double plain = 0.0;
    double rotated = 0.0;
    for (int i = 0; i < kDraws; ++i) {
      const auto psi = haar_random_state(n, rng).amplitudes;
      plain += std::norm(psi(0));
      rotated += std::norm((u * psi)(0));
    }
    EXPECT_NEAR(plain / kDraws, 1.0 / d, 3 * sigma);
    EXPECT_NEAR(rotated / kDraws, 1.0 / d, 3 * sigma);
  }
}

TEST(Vectorization, ColumnStacking) {
  ComplexMatrix m(2, 2);
  m << 1.0, 2.0, 3.0, 4.0;
  const ComplexVector v = vec(m);
  EXPECT_EQ(v(1), complex(3.0, 0.0));
  EXPECT_EQ(v(2), complex(2.0, 0.0));
  EXPECT_EQ(max_abs(unvec(v, 2) - m), 0.0);
}

TEST(EmbedSingle, QubitZeroIsMostSignificant) {
  const ComplexMatrix z0 = embed_single(pauli::z(), 0, 2);
  // basis index 2 = |10>: qubit 0 excited.
  EXPECT_EQ(z0(2, 2), complex(-1.0, 0.0));
  EXPECT_EQ(z0(1, 1), complex(1.0, 0.0));
}

}  // namespace
}  // namespace stinespring
