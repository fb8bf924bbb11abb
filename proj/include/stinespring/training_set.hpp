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

#include <cstddef>
#include <vector>

#include "stinespring/linalg.hpp"

namespace stinespring {

/// One measured datum: an initial state (by index), an observable, and the
/// measured traces Tr[O rho_n] for n = 1..n_steps (NaN where not measured).
struct TrainingPair {
  std::size_t state = 0;
  ComplexMatrix obs;
  std::vector<double> targets;
};

/// Initial states are stored once and referenced by the pairs, since the same
/// state is usually measured against many observables.
struct TrainingSet {
  std::vector<DensityMatrix> states;
  std::vector<TrainingPair> pairs;
  double dt = 0.0;
  int n_steps = 0;

  [[nodiscard]] std::size_t l_count() const { return pairs.size(); }
  [[nodiscard]] const DensityMatrix& rho0(const TrainingPair& p) const { return states[p.state]; }
  [[nodiscard]] Eigen::Index dim() const { return states.empty() ? 0 : states.front().rows(); }

  void validate() const {
    for (const auto& p : pairs) {
      if (p.state >= states.size()) throw DimensionError("training pair references unknown state");
      if (static_cast<int>(p.targets.size()) != n_steps) {
        throw DimensionError("training pair has wrong number of targets");
      }
      if (!is_hermitian(p.obs, 1e-10)) throw std::invalid_argument("observable is not Hermitian");
      if (p.obs.rows() != dim()) throw DimensionError("observable dimension mismatch");
    }
  }

  /// Copy keeping only the first `steps` targets of every pair.
  [[nodiscard]] TrainingSet truncated(int steps) const {
    TrainingSet out = *this;
    out.n_steps = steps;
    for (auto& p : out.pairs) p.targets.resize(static_cast<std::size_t>(steps));
    return out;
  }
};

/// Appends a known steady state as extra data: its traces are the same at
/// every step index.
inline void add_steady_state(TrainingSet& ts, const DensityMatrix& rho_inf,
                             const std::vector<ComplexMatrix>& observables) {
  const std::size_t idx = ts.states.size();
  ts.states.push_back(rho_inf);
  for (const auto& o : observables) {
    const double value = (o * rho_inf).trace().real();
    ts.pairs.push_back({idx, o, std::vector<double>(static_cast<std::size_t>(ts.n_steps), value)});
  }
}

}  // namespace stinespring
