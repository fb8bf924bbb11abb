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


// Config-driven experiment runner: schema, presets, execution and export.

#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "stinespring/ansatz.hpp"
#include "stinespring/channel.hpp"
#include "stinespring/hardware.hpp"
#include "stinespring/lindblad.hpp"
#include "stinespring/linalg.hpp"
#include "stinespring/metrics.hpp"
#include "stinespring/training.hpp"

namespace stinespring {

using Json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ChannelConfig {
  std::string preset = "single_decay";
  Json params = Json::object();  // completed with defaults by parse_config
};

struct HardwareConfig {
  int ancillas = 1;
  std::string geometry = "line";  // line | triangle | cluster_2_3 | explicit
  double spacing = 1.0;
  double coefficient = 0.422;
  std::string interaction = "vdw";  // vdw | dipole
  std::vector<std::array<double, 3>> positions;
  std::string controls = "rotational";  // coupling | detuning | rotational
};

struct AnsatzConfig {
  std::string method = "pulse";  // gate | stochastic_gate | pulse | split_pulse | exact_dilation | compare
  std::vector<std::string> compare;
  int depth = 10;
  double tau_g = 1.0;
  double tau_v = 10.0;
  double gate_init_spread = 0.1;
  int segments = 20;
  double tau_f = 20.0;
  double lambda = 1e-3;
  double pulse_init_spread = 0.02;
  int system_iters = 30;
};

struct TrainingConfig {
  int n_steps = 4;
  double dt = 0.25;
  std::string states = "reference";  // reference | basis_pairs | haar
  int n_states = 10;
  std::string observables = "pauli";  // pauli | z
  std::string pair_count = "per_step";  // per_step | total
  bool steady_state = false;
};

struct EvaluationConfig {
  int n_haar_states = 10;
  int steps = 10;
  std::string bures_scale = "distance";  // distance | squared
  int population_state = -1;              // basis index; -1 = last
  std::uint64_t seed = 1234;
};

struct ExperimentConfig {
  std::string name = "custom";
  ChannelConfig channel;
  HardwareConfig hardware;
  AnsatzConfig ansatz;
  TrainingConfig training;
  OptimizerConfig optimizer;  // seed and lambda are taken from the top level and the ansatz
  EvaluationConfig evaluation;
  std::uint64_t seed = 1;
  std::string output_dir = "runs";
};

// ---------------------------------------------------------------------------
// Schema

namespace detail {

/// Reads the keys of one JSON object and rejects any it did not ask for.
class SectionReader {
 public:
  SectionReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const Json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where(key) + ": expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.get<long long>() < 0) throw ConfigError(where(key) + ": expected a non-negative integer");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where(key) + ": expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where(key) + ": expected a string");
    }
    try {
      out = v.get<T>();
    } catch (const Json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  const Json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(path_ + ": unknown key '" + k + "'");
    }
  }

  [[nodiscard]] std::string where(const std::string& key) const { return path_ + "." + key; }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

/// Allowed parameters and their defaults for every channel preset.
inline const std::map<std::string, Json>& channel_defaults() {
  static const std::map<std::string, Json> table{
      {"single_decay", {{"gamma", 0.5}, {"omega", 0.5}}},
      {"plus_minus_decay", {{"gamma", 0.5}, {"omega", 0.0}}},
      {"two_qubit_decay", {{"gamma0", 0.5}, {"gamma1", 0.3}, {"interaction", 0.0}}},
      {"driven_two_qubit_decay",
       {{"gamma0", 0.3}, {"omega0", 0.5}, {"gamma1", 0.2}, {"omega1", 0.35}, {"interaction", 0.2}}},
      {"four_level_cascade", {{"gamma32", 0.6}, {"gamma21", 0.5}, {"gamma10", 0.4}}},
      {"tfim", {{"n_qubits", 2}, {"field", 0.5}, {"coupling", 0.4}, {"gammas", {0.5, 0.3}}}},
      {"explicit", {{"hamiltonian", Json::array()}, {"jumps", Json::array()}}},
  };
  return table;
}

inline ComplexMatrix matrix_from_json(const Json& j, const std::string& where) {
  // [[[re, im], ...], ...] or [[re, ...], ...]
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a non-empty square matrix");
  const auto n = static_cast<Eigen::Index>(j.size());
  ComplexMatrix m(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n) throw ConfigError(where + ": matrix is not square");
    for (Eigen::Index c = 0; c < n; ++c) {
      const Json& e = row[static_cast<std::size_t>(c)];
      if (e.is_number()) {
        m(r, c) = e.get<double>();
      } else if (e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number()) {
        m(r, c) = complex(e[0].get<double>(), e[1].get<double>());
      } else {
        throw ConfigError(where + ": entries must be numbers or [re, im] pairs");
      }
    }
  }
  return m;
}

inline Json matrix_to_json(const ComplexMatrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back({m(r, c).real(), m(r, c).imag()});
    rows.push_back(row);
  }
  return rows;
}

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace detail

inline LindbladModel build_model(const ChannelConfig& c) {
  const Json& p = c.params;
  auto num = [&](const char* k) { return p.at(k).get<double>(); };
  try {
    if (c.preset == "single_decay") return presets::single_decay(num("gamma"), num("omega"));
    if (c.preset == "plus_minus_decay") return presets::plus_minus_decay(num("gamma"), num("omega"));
    if (c.preset == "two_qubit_decay") return presets::two_qubit_decay(num("gamma0"), num("gamma1"), num("interaction"));
    if (c.preset == "driven_two_qubit_decay") {
      return presets::driven_two_qubit_decay(num("gamma0"), num("omega0"), num("gamma1"), num("omega1"),
                                             num("interaction"));
    }
    if (c.preset == "four_level_cascade") return presets::four_level_cascade(num("gamma32"), num("gamma21"), num("gamma10"));
    if (c.preset == "tfim") {
      return presets::tfim(p.at("n_qubits").get<int>(), num("field"), num("coupling"),
                           p.at("gammas").get<std::vector<double>>());
    }
    if (c.preset == "explicit") {
      LindbladModel m{detail::matrix_from_json(p.at("hamiltonian"), "channel.params.hamiltonian"), {}};
      for (const auto& jump : p.at("jumps")) {
        m.jumps.push_back({detail::matrix_from_json(jump.at("op"), "channel.params.jumps.op"), jump.at("rate").get<double>()});
      }
      m.validate();
      return m;
    }
  } catch (const Json::exception& e) {
    throw ConfigError("channel.params: " + std::string(e.what()));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("channel.params: " + std::string(e.what()));
  }
  throw ConfigError("channel.preset: unknown preset '" + c.preset + "'");
}

inline int system_qubits(const ExperimentConfig& cfg) { return log2_dim(build_model(cfg.channel).dim()); }

inline AtomGeometry build_geometry(const HardwareConfig& h, int m_total) {
  AtomGeometry g;
  if (h.geometry == "line") {
    g = geometry::line(m_total, h.spacing, h.coefficient);
  } else if (h.geometry == "triangle") {
    detail::require(m_total == 3, "hardware.geometry: triangle needs 3 atoms, register has " + std::to_string(m_total));
    g = geometry::triangle(h.spacing, h.coefficient);
  } else if (h.geometry == "cluster_2_3") {
    detail::require(m_total == 5, "hardware.geometry: cluster_2_3 needs 5 atoms, register has " + std::to_string(m_total));
    g = geometry::cluster_2_3(h.spacing, h.coefficient);
  } else if (h.geometry == "explicit") {
    detail::require(static_cast<int>(h.positions.size()) == m_total,
                    "hardware.positions: need one position per atom (" + std::to_string(m_total) + ")");
    g.positions = h.positions;
    g.coefficient = h.coefficient;
  } else {
    throw ConfigError("hardware.geometry: unknown geometry '" + h.geometry + "'");
  }
  g.kind = h.interaction == "dipole" ? InteractionKind::dipole : InteractionKind::vdw;
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("hardware.geometry: ") + e.what());
  }
  return g;
}

inline ControlMode control_mode(const std::string& s) {
  if (s == "coupling") return ControlMode::coupling;
  if (s == "detuning") return ControlMode::detuning;
  if (s == "rotational") return ControlMode::rotational;
  throw ConfigError("hardware.controls: unknown control mode '" + s + "'");
}

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m{"gate", "stochastic_gate", "pulse", "split_pulse", "exact_dilation", "compare"};
  return m;
}

/// Checks every field; returns the non-fatal warnings.
inline std::vector<std::string> validate_config(const ExperimentConfig& cfg) {
  using detail::require;
  std::vector<std::string> warnings;
  const LindbladModel model = build_model(cfg.channel);
  require(is_power_of_two(model.dim()), "channel: dimension must be a power of two");
  const int m_sys = log2_dim(model.dim());

  const auto& h = cfg.hardware;
  require(h.ancillas >= 0, "hardware.ancillas: must be >= 0");
  require(h.ancillas <= 2 * m_sys, "hardware.ancillas: ancilla dimension exceeds dim_a^2");
  require(h.spacing > 0.0, "hardware.spacing: must be positive");
  require(h.coefficient > 0.0, "hardware.coefficient: must be positive");
  require(h.interaction == "vdw" || h.interaction == "dipole", "hardware.interaction: must be vdw or dipole");
  control_mode(h.controls);
  build_geometry(h, m_sys + h.ancillas);
  std::size_t k = 0;
  for (const auto& j : model.jumps) k += j.rate > 0.0 ? 1 : 0;
  const int needed = k > 1 ? static_cast<int>(std::ceil(std::log2(static_cast<double>(k)))) : static_cast<int>(k);
  if (h.ancillas < needed) {
    warnings.push_back("hardware.ancillas: " + std::to_string(h.ancillas) + " ancilla qubits for " + std::to_string(k) +
                       " jump operators; at least " + std::to_string(needed) + " are needed for an exact dilation");
  }

  const auto& a = cfg.ansatz;
  const auto& methods = known_methods();
  auto known = [&](const std::string& m) { return std::find(methods.begin(), methods.end(), m) != methods.end(); };
  require(known(a.method), "ansatz.method: unknown method '" + a.method + "'");
  if (a.method == "compare") {
    require(!a.compare.empty(), "ansatz.compare: list the methods to compare");
    for (const auto& m : a.compare) {
      require(known(m) && m != "compare" && m != "exact_dilation", "ansatz.compare: cannot compare '" + m + "'");
    }
  } else {
    require(a.compare.empty(), "ansatz.compare: only used with method 'compare'");
  }
  require(a.depth >= 1, "ansatz.depth: must be >= 1");
  require(a.tau_g >= 0.0 && a.tau_v >= 0.0, "ansatz.tau_g/tau_v: must be >= 0");
  require(a.gate_init_spread >= 0.0 && a.pulse_init_spread >= 0.0, "ansatz: init spreads must be >= 0");
  require(a.segments >= 1, "ansatz.segments: must be >= 1");
  require(a.tau_f > 0.0, "ansatz.tau_f: must be positive");
  require(a.lambda >= 0.0, "ansatz.lambda: must be >= 0");
  require(a.system_iters >= 0, "ansatz.system_iters: must be >= 0");
  if (a.method == "exact_dilation") {
    require(cfg.channel.preset == "single_decay" && cfg.channel.params.at("omega").get<double>() == 0.0 &&
                h.ancillas == 1,
            "ansatz.method: exact_dilation needs an undriven single_decay channel and one ancilla");
  }
  if (a.method == "split_pulse") require(h.ancillas >= 1, "ansatz.method: split_pulse needs ancillas");

  const auto& t = cfg.training;
  require(t.n_steps >= 1, "training.n_steps: must be >= 1");
  require(t.dt > 0.0, "training.dt: must be positive");
  require(t.states == "reference" || t.states == "basis_pairs" || t.states == "haar",
          "training.states: must be reference, basis_pairs or haar");
  require(t.states != "reference" || m_sys == 1, "training.states: reference states are single-qubit");
  require(t.n_states >= 1, "training.n_states: must be >= 1");
  require(t.observables == "pauli" || t.observables == "z", "training.observables: must be pauli or z");
  require(t.pair_count == "per_step" || t.pair_count == "total", "training.pair_count: must be per_step or total");

  const bool stochastic = a.method == "stochastic_gate" ||
                          std::find(a.compare.begin(), a.compare.end(), "stochastic_gate") != a.compare.end();
  OptimizerConfig o = cfg.optimizer;
  o.lambda = a.lambda;
  try {
    o.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("optimizer: ") + e.what());
  }
  require(!stochastic || o.batch_fraction < 1.0, "optimizer.batch_fraction: stochastic_gate needs a value below 1");
  require(o.qe_budget >= 0, "optimizer.qe_budget: must be >= 0");

  const auto& e = cfg.evaluation;
  require(e.n_haar_states >= 1, "evaluation.n_haar_states: must be >= 1");
  require(e.steps >= 1, "evaluation.steps: must be >= 1");
  require(e.bures_scale == "distance" || e.bures_scale == "squared", "evaluation.bures_scale: must be distance or squared");
  require(e.population_state >= -1 && e.population_state < model.dim(), "evaluation.population_state: out of range");
  return warnings;
}

inline ExperimentConfig parse_config(const Json& j) {
  ExperimentConfig cfg;
  detail::SectionReader top(j, "config");
  top.get("name", cfg.name);
  top.get("seed", cfg.seed);
  top.get("output_dir", cfg.output_dir);

  if (const Json* s = top.sub("channel")) {
    detail::SectionReader r(*s, "channel");
    r.get("preset", cfg.channel.preset);
    const auto& defaults = detail::channel_defaults();
    const auto it = defaults.find(cfg.channel.preset);
    if (it == defaults.end()) throw ConfigError("channel.preset: unknown preset '" + cfg.channel.preset + "'");
    cfg.channel.params = it->second;
    if (const Json* p = r.sub("params")) {
      if (!p->is_object()) throw ConfigError("channel.params: expected an object");
      for (const auto& [k, v] : p->items()) {
        if (!it->second.contains(k)) throw ConfigError("channel.params: unknown key '" + k + "' for preset " + cfg.channel.preset);
        if (it->second.at(k).is_number() && !v.is_number()) throw ConfigError("channel.params." + k + ": expected a number");
        cfg.channel.params[k] = v;
      }
    }
    r.finish();
  } else {
    cfg.channel.params = detail::channel_defaults().at(cfg.channel.preset);
  }

  if (const Json* s = top.sub("hardware")) {
    detail::SectionReader r(*s, "hardware");
    auto& h = cfg.hardware;
    r.get("ancillas", h.ancillas);
    r.get("geometry", h.geometry);
    r.get("spacing", h.spacing);
    r.get("coefficient", h.coefficient);
    r.get("interaction", h.interaction);
    r.get("positions", h.positions);
    r.get("controls", h.controls);
    r.finish();
  }
  if (const Json* s = top.sub("ansatz")) {
    detail::SectionReader r(*s, "ansatz");
    auto& a = cfg.ansatz;
    r.get("method", a.method);
    r.get("compare", a.compare);
    r.get("depth", a.depth);
    r.get("tau_g", a.tau_g);
    r.get("tau_v", a.tau_v);
    r.get("gate_init_spread", a.gate_init_spread);
    r.get("segments", a.segments);
    r.get("tau_f", a.tau_f);
    r.get("lambda", a.lambda);
    r.get("pulse_init_spread", a.pulse_init_spread);
    r.get("system_iters", a.system_iters);
    r.finish();
  }
  if (const Json* s = top.sub("training")) {
    detail::SectionReader r(*s, "training");
    auto& t = cfg.training;
    r.get("n_steps", t.n_steps);
    r.get("dt", t.dt);
    r.get("states", t.states);
    r.get("n_states", t.n_states);
    r.get("observables", t.observables);
    r.get("pair_count", t.pair_count);
    r.get("steady_state", t.steady_state);
    r.finish();
  }
  if (const Json* s = top.sub("optimizer")) {
    detail::SectionReader r(*s, "optimizer");
    auto& o = cfg.optimizer;
    r.get("max_iters", o.max_iters);
    r.get("fd_eps", o.fd_eps);
    r.get("armijo_c", o.armijo_c);
    r.get("armijo_shrink", o.armijo_shrink);
    r.get("armijo_max_backtracks", o.armijo_max_backtracks);
    r.get("initial_step", o.initial_step);
    r.get("step_growth", o.step_growth);
    r.get("bb_step", o.bb_step);
    r.get("batch_fraction", o.batch_fraction);
    r.get("loss_tolerance", o.loss_tolerance);
    r.get("stall_limit", o.stall_limit);
    r.get("qe_budget", o.qe_budget);
    r.finish();
  }
  if (const Json* s = top.sub("evaluation")) {
    detail::SectionReader r(*s, "evaluation");
    auto& e = cfg.evaluation;
    r.get("n_haar_states", e.n_haar_states);
    r.get("steps", e.steps);
    r.get("bures_scale", e.bures_scale);
    r.get("population_state", e.population_state);
    r.get("seed", e.seed);
    r.finish();
  }
  top.finish();
  cfg.optimizer.seed = cfg.seed;
  cfg.optimizer.lambda = cfg.ansatz.lambda;
  return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return parse_config(j);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// Complete, canonical form of a config (every field present, keys sorted).
inline Json to_json(const ExperimentConfig& cfg) {
  const auto& h = cfg.hardware;
  const auto& a = cfg.ansatz;
  const auto& t = cfg.training;
  const auto& o = cfg.optimizer;
  const auto& e = cfg.evaluation;
  return Json{
      {"name", cfg.name},
      {"seed", cfg.seed},
      {"output_dir", cfg.output_dir},
      {"channel", {{"preset", cfg.channel.preset}, {"params", cfg.channel.params}}},
      {"hardware",
       {{"ancillas", h.ancillas},
        {"geometry", h.geometry},
        {"spacing", h.spacing},
        {"coefficient", h.coefficient},
        {"interaction", h.interaction},
        {"positions", h.positions},
        {"controls", h.controls}}},
      {"ansatz",
       {{"method", a.method},
        {"compare", a.compare},
        {"depth", a.depth},
        {"tau_g", a.tau_g},
        {"tau_v", a.tau_v},
        {"gate_init_spread", a.gate_init_spread},
        {"segments", a.segments},
        {"tau_f", a.tau_f},
        {"lambda", a.lambda},
        {"pulse_init_spread", a.pulse_init_spread},
        {"system_iters", a.system_iters}}},
      {"training",
       {{"n_steps", t.n_steps},
        {"dt", t.dt},
        {"states", t.states},
        {"n_states", t.n_states},
        {"observables", t.observables},
        {"pair_count", t.pair_count},
        {"steady_state", t.steady_state}}},
      {"optimizer",
       {{"max_iters", o.max_iters},
        {"fd_eps", o.fd_eps},
        {"armijo_c", o.armijo_c},
        {"armijo_shrink", o.armijo_shrink},
        {"armijo_max_backtracks", o.armijo_max_backtracks},
        {"initial_step", o.initial_step},
        {"step_growth", o.step_growth},
        {"bb_step", o.bb_step},
        {"batch_fraction", o.batch_fraction},
        {"loss_tolerance", o.loss_tolerance},
        {"stall_limit", o.stall_limit},
        {"qe_budget", o.qe_budget}}},
      {"evaluation",
       {{"n_haar_states", e.n_haar_states},
        {"steps", e.steps},
        {"bures_scale", e.bures_scale},
        {"population_state", e.population_state},
        {"seed", e.seed}}},
  };
}

/// FNV-1a over the canonical serialisation.
inline std::string config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : to_json(cfg).dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Presets

inline const std::vector<std::pair<std::string, std::string>>& preset_catalog() {
  static const std::vector<std::pair<std::string, std::string>> c{
      {"fig4_single_decay", "driven single-qubit decay, 2 ancillas on a triangle, split pulse training"},
      {"fig5_plus_minus_decay", "decay from |+> to |->, 1 ancilla, Haar training states"},
      {"fig6_two_qubit_decay", "two decaying qubits, 3 ancillas, pulse training"},
      {"fig7_four_level", "four-level cascade mapped onto two qubits, 3 ancillas"},
      {"fig8_tfim", "two-spin transverse-field Ising model with decay, split pulse training"},
      {"fig9_compare", "gate vs stochastic gate vs pulse with matched evaluation budgets"},
      {"exact_dilation_sanity", "closed-form dilation of single-qubit decay, no training"},
  };
  return c;
}

inline ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  c.optimizer.bb_step = true;
  if (name == "fig4_single_decay") {
    c.channel = {"single_decay", {{"gamma", 0.5}, {"omega", 0.5}}};
    c.hardware.ancillas = 2;
    c.hardware.geometry = "triangle";
    c.ansatz.method = "split_pulse";
    c.ansatz.segments = 20;
    c.ansatz.tau_f = 20.0;
    c.ansatz.system_iters = 30;
    c.training = {4, 0.25, "reference", 10, "pauli", "per_step", false};
    c.optimizer.max_iters = 2000;
  } else if (name == "fig5_plus_minus_decay") {
    c.channel = {"plus_minus_decay", {{"gamma", 0.5}, {"omega", 0.0}}};
    c.hardware.ancillas = 1;
    c.hardware.geometry = "line";
    c.ansatz.method = "pulse";
    c.ansatz.segments = 20;
    c.ansatz.tau_f = 20.0;
    c.training = {4, 0.25, "haar", 10, "pauli", "per_step", false};
    c.optimizer.max_iters = 2000;
  } else if (name == "fig6_two_qubit_decay" || name == "fig7_four_level" || name == "fig8_tfim") {
    if (name == "fig6_two_qubit_decay") {
      c.channel = {"two_qubit_decay", {{"gamma0", 0.5}, {"gamma1", 0.3}, {"interaction", 0.0}}};
      c.evaluation.population_state = 2;
    } else if (name == "fig7_four_level") {
      c.channel = {"four_level_cascade", {{"gamma32", 0.6}, {"gamma21", 0.5}, {"gamma10", 0.4}}};
      c.evaluation.population_state = 2;
    } else {
      c.channel = {"tfim", {{"n_qubits", 2}, {"field", 0.5}, {"coupling", 0.4}, {"gammas", {0.5, 0.3}}}};
      c.ansatz.system_iters = 100;
    }
    c.hardware.ancillas = 3;
    c.hardware.geometry = "cluster_2_3";
    c.ansatz.method = name == "fig8_tfim" ? "split_pulse" : "pulse";
    c.ansatz.segments = 20;
    c.ansatz.tau_f = 20.0;
    c.training = {2, 0.5, "basis_pairs", 10, "pauli", "per_step", false};
    c.optimizer.max_iters = 40000;
  } else if (name == "fig9_compare") {
    c.channel = {"driven_two_qubit_decay",
                 {{"gamma0", 0.3}, {"omega0", 0.5}, {"gamma1", 0.2}, {"omega1", 0.35}, {"interaction", 0.2}}};
    c.hardware.ancillas = 3;
    c.hardware.geometry = "cluster_2_3";
    c.hardware.coefficient = 0.07;
    c.hardware.controls = "coupling";
    c.ansatz.method = "compare";
    c.ansatz.compare = {"gate", "stochastic_gate", "pulse"};
    c.ansatz.depth = 10;
    c.ansatz.tau_g = 1.0;
    c.ansatz.tau_v = 10.0;
    c.ansatz.segments = 15;
    c.ansatz.tau_f = 110.0;
    c.training = {1, 0.5, "basis_pairs", 10, "pauli", "per_step", false};
    c.optimizer.max_iters = 100000;
    c.optimizer.batch_fraction = 0.5;
    // 1000 full gradients per method; plain Armijo for all three, since the
    // Barzilai-Borwein step needs full gradients.
    c.optimizer.qe_budget = 150 * 1000;
    c.optimizer.bb_step = false;
  } else if (name == "exact_dilation_sanity") {
    c.channel = {"single_decay", {{"gamma", 0.5}, {"omega", 0.0}}};
    c.hardware.ancillas = 1;
    c.ansatz.method = "exact_dilation";
    c.training = {1, 0.25, "reference", 10, "pauli", "per_step", false};
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  c.output_dir = "runs/" + name;
  // Round-trip through the schema so defaults are filled in exactly as for a file.
  return parse_config(to_json(c));
}

// ---------------------------------------------------------------------------
// Execution

struct PopulationRow {
  double t = 0.0;
  int state_index = 0;
  double exact = 0.0;
  double approx = 0.0;
};

struct RunRecord {
  std::string method;
  ExperimentConfig config;
  TrainingResult training;
  ErrorCurve curve;
  std::vector<PopulationRow> populations;
  ChannelCertificate certificate;
  std::vector<std::string> warnings;
  long long qe_per_gradient = 0;
  double wall_seconds = 0.0;
};

inline std::vector<DensityMatrix> training_states(const ExperimentConfig& cfg, int m_sys) {
  const auto& t = cfg.training;
  if (t.states == "reference") {
    auto s = single_qubit_reference_states();
    s.resize(std::min<std::size_t>(s.size(), static_cast<std::size_t>(t.n_states)));
    return s;
  }
  if (t.states == "basis_pairs") {
    auto s = basis_and_pair_states(m_sys);
    s.resize(std::min<std::size_t>(s.size(), static_cast<std::size_t>(t.n_states)));
    return s;
  }
  return haar_states(m_sys, t.n_states, cfg.seed + 0x5eed);
}

inline std::vector<ComplexMatrix> training_observables(const ExperimentConfig& cfg, int m_sys) {
  if (cfg.training.observables == "pauli") return pauli_strings(m_sys);
  std::vector<ComplexMatrix> out;
  for (int q = 0; q < m_sys; ++q) out.push_back(embed_single(pauli::z(), q, m_sys));
  return out;
}

/// Exact data for the configured channel. With pair_count "total" every
/// (state, observable) pair is measured at a single step, cycling through the
/// steps, so L counts all measurements rather than those of one step.
inline TrainingSet build_training_set(const ExperimentConfig& cfg, const LindbladModel& model, bool coherent_only = false) {
  const int m_sys = log2_dim(model.dim());
  const LindbladModel m = coherent_only ? model.coherent_part() : model;
  const auto obs = training_observables(cfg, m_sys);
  TrainingSet ts = make_training_set(m, training_states(cfg, m_sys), obs, cfg.training.n_steps, cfg.training.dt);
  if (cfg.training.pair_count == "total") {
    for (std::size_t l = 0; l < ts.pairs.size(); ++l) {
      for (int n = 0; n < ts.n_steps; ++n) {
        if (static_cast<std::size_t>(n) != l % static_cast<std::size_t>(ts.n_steps)) {
          ts.pairs[l].targets[static_cast<std::size_t>(n)] = std::numeric_limits<double>::quiet_NaN();
        }
      }
    }
  }
  if (cfg.training.steady_state) add_steady_state(ts, steady_state(m), obs);
  return ts;
}

inline RealMatrix random_pulses(int rows, int cols, double spread, std::uint64_t seed) {
  RealMatrix z = RealMatrix::Zero(rows, cols);
  if (spread == 0.0) return z;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-spread, spread);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = u(rng);
  return z;
}

struct Hardware {
  int m_sys = 1;
  int m_total = 1;
  Eigen::Index dim_a = 2;
  Eigen::Index dim_b = 1;
  AtomGeometry geometry;
  ComplexMatrix h_v;
  std::vector<ControlOperator> ops;
};

inline Hardware build_hardware(const ExperimentConfig& cfg, int m_sys) {
  Hardware hw;
  hw.m_sys = m_sys;
  hw.m_total = m_sys + cfg.hardware.ancillas;
  hw.dim_a = Eigen::Index{1} << m_sys;
  hw.dim_b = Eigen::Index{1} << cfg.hardware.ancillas;
  hw.geometry = build_geometry(cfg.hardware, hw.m_total);
  hw.h_v = drift_hamiltonian(hw.geometry, hw.m_total);
  hw.ops = control_operators(hw.m_total, control_mode(cfg.hardware.controls));
  return hw;
}

inline PulseProblem full_pulse_problem(const ExperimentConfig& cfg, const Hardware& hw) {
  PulseProblem p{hw.h_v, hw.ops, cfg.ansatz.segments, cfg.ansatz.tau_f, hw.dim_a, hw.dim_b, {}, {}};
  p.z0 = random_pulses(static_cast<int>(hw.ops.size()), cfg.ansatz.segments, cfg.ansatz.pulse_init_spread, cfg.seed);
  return p;
}

/// Pulse problem on the system atoms alone (the first m_sys atoms of the
/// register geometry), starting from zero pulses.
inline PulseProblem system_pulse_problem(const ExperimentConfig& cfg, const Hardware& hw) {
  AtomGeometry g = hw.geometry;
  g.positions.resize(static_cast<std::size_t>(hw.m_sys));
  return {drift_hamiltonian(g, hw.m_sys), control_operators(hw.m_sys, control_mode(cfg.hardware.controls)),
          cfg.ansatz.segments, cfg.ansatz.tau_f, hw.dim_a, 1, {}, {}};
}

inline GateProblem gate_problem(const ExperimentConfig& cfg, const Hardware& hw) {
  GateProblem p;
  p.m_total = hw.m_total;
  p.depth = cfg.ansatz.depth;
  p.tau_g = cfg.ansatz.tau_g;
  p.tau_v = cfg.ansatz.tau_v;
  p.u_ent = entangling_gate(hw.h_v, cfg.ansatz.tau_v);
  p.dim_a = hw.dim_a;
  p.dim_b = hw.dim_b;
  p.theta0 = random_gate_parameters(3 * static_cast<Eigen::Index>(p.depth) * p.m_total, cfg.seed, cfg.ansatz.gate_init_spread);
  return p;
}

inline std::vector<PopulationRow> population_table(const TargetChannel& target, const StinespringChannel& c,
                                                   int basis_index, int steps, double dt) {
  const Eigen::Index d = c.dim_a();
  const DensityMatrix rho0 = basis_projector(d, basis_index < 0 ? d - 1 : basis_index);
  const auto exact = target.trajectory(rho0, steps);
  const auto approx = extrapolate(c, rho0, steps).states;
  std::vector<PopulationRow> rows;
  for (int k = 0; k <= steps; ++k) {
    const DensityMatrix& e = k == 0 ? rho0 : exact[static_cast<std::size_t>(k - 1)];
    const DensityMatrix& a = k == 0 ? rho0 : approx[static_cast<std::size_t>(k - 1)];
    for (Eigen::Index i = 0; i < d; ++i) {
      rows.push_back({k * dt, static_cast<int>(i), e(i, i).real(), a(i, i).real()});
    }
  }
  return rows;
}

/// Trains one method and evaluates the result. `observer` sees every channel
/// produced during optimisation.
inline RunRecord run_method(const ExperimentConfig& cfg, const std::string& method,
                            const ChannelObserver& observer = {}) {
  const auto start = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.method = method;
  rec.config = cfg;
  rec.warnings = validate_config(cfg);
  const LindbladModel model = build_model(cfg.channel);
  const int m_sys = log2_dim(model.dim());
  const Hardware hw = build_hardware(cfg, m_sys);
  const TrainingSet ts = build_training_set(cfg, model);

  OptimizerConfig opt = cfg.optimizer;
  opt.seed = cfg.seed;
  opt.lambda = cfg.ansatz.lambda;

  if (method == "exact_dilation") {
    rec.training.unitary = exact_dilation_single_decay(cfg.channel.params.at("gamma").get<double>(), cfg.training.dt);
    rec.training.reason = StopReason::converged;
  } else if (method == "gate" || method == "stochastic_gate") {
    if (method == "gate") opt.batch_fraction = 1.0;
    const GateProblem p = gate_problem(cfg, hw);
    rec.qe_per_gradient = qe_count(GradientMethod::gate, {p.depth, p.m_total, 0, 0, 0, 0, 0});
    rec.training = optimize(p, opt, ts, observer);
  } else if (method == "pulse" || method == "split_pulse") {
    opt.batch_fraction = 1.0;
    const PulseProblem full = full_pulse_problem(cfg, hw);
    rec.qe_per_gradient = pulse_qe(full, ts)(0);
    if (method == "pulse") {
      rec.training = optimize(full, opt, ts, observer);
    } else {
      const SplitProblem sp{system_pulse_problem(cfg, hw), full, build_training_set(cfg, model, true),
                            cfg.ansatz.system_iters};
      rec.training = optimize(sp, opt, ts, observer);
    }
  } else {
    throw ConfigError("ansatz.method: cannot run '" + method + "'");
  }

  const StinespringChannel learned(rec.training.unitary, hw.dim_a, hw.dim_b);
  if (observer && rec.training.trace.empty()) observer(learned);
  const TargetChannel target(model, cfg.training.dt);
  rec.curve = error_curve(target, learned, cfg.evaluation.n_haar_states, cfg.evaluation.steps, cfg.evaluation.seed,
                          cfg.evaluation.bures_scale == "squared" ? BuresScale::squared : BuresScale::distance);
  rec.populations =
      population_table(target, learned, cfg.evaluation.population_state, cfg.evaluation.steps, cfg.training.dt);
  rec.certificate = certify(learned);
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

inline std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg, const ChannelObserver& observer = {}) {
  validate_config(cfg);
  if (cfg.ansatz.method != "compare") return {run_method(cfg, cfg.ansatz.method, observer)};
  std::vector<RunRecord> out;
  for (const auto& m : cfg.ansatz.compare) out.push_back(run_method(cfg, m, observer));
  return out;
}

// ---------------------------------------------------------------------------
// Export

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

}  // namespace detail

inline void write_convergence_csv(const std::vector<IterationRecord>& trace, std::ostream& out) {
  out << "iter,loss,grad_norm,alpha,qe_cumulative\n";
  for (const auto& r : trace) {
    out << r.iter << ',' << format_double(r.loss) << ',' << format_double(r.grad_norm) << ','
        << format_double(r.alpha) << ',' << r.qe_cumulative << '\n';
  }
}

inline void write_populations_csv(const std::vector<PopulationRow>& rows, std::ostream& out) {
  out << "t,state_index,exact,approx\n";
  for (const auto& r : rows) {
    out << format_double(r.t) << ',' << r.state_index << ',' << format_double(r.exact) << ','
        << format_double(r.approx) << '\n';
  }
}

inline void write_bures_csv(const ErrorCurve& c, std::ostream& out) {
  out << "step,mean_bures,min,max\n";
  for (std::size_t k = 0; k < c.steps.size(); ++k) {
    out << c.steps[k] << ',' << format_double(c.mean_bures[k]) << ',' << format_double(c.min_at(k)) << ','
        << format_double(c.max_at(k)) << '\n';
  }
}

inline Json run_manifest(const RunRecord& r) {
  const auto& t = r.training.trace;
  return Json{
      {"config", to_json(r.config)},
      {"config_hash", config_hash(r.config)},
      {"method", r.method},
      {"status", to_string(r.training.reason)},
      {"iterations", t.empty() ? 0 : t.back().iter},
      {"stage1_iterations", r.training.stage1_iterations},
      {"final_loss", t.empty() ? Json(nullptr) : Json(t.back().loss)},
      {"qe_per_gradient", r.qe_per_gradient},
      {"qe_total", t.empty() ? 0 : t.back().qe_cumulative},
      {"final_parameters", std::vector<double>(r.training.params.data(), r.training.params.data() + r.training.params.size())},
      {"system_parameters", std::vector<double>(r.training.system_params.data(),
                                                r.training.system_params.data() + r.training.system_params.size())},
      {"bures", {{"steps", r.curve.steps}, {"mean", r.curve.mean_bures}, {"scale", r.config.evaluation.bures_scale}}},
      {"certificate",
       {{"min_choi_eigenvalue", r.certificate.min_choi_eigenvalue}, {"tp_residual", r.certificate.tp_residual}}},
      {"warnings", r.warnings},
      {"wall_seconds", r.wall_seconds},
  };
}

inline void export_record(const RunRecord& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  {
    auto out = detail::open_output(dir / "run.json");
    out << run_manifest(r).dump(2) << '\n';
  }
  {
    auto out = detail::open_output(dir / "convergence.csv");
    write_convergence_csv(r.training.trace, out);
  }
  {
    auto out = detail::open_output(dir / "populations.csv");
    write_populations_csv(r.populations, out);
  }
  {
    auto out = detail::open_output(dir / "bures.csv");
    write_bures_csv(r.curve, out);
  }
}

/// Writes one directory per record; with several records each goes into a
/// subdirectory named after its method.
inline void export_records(const std::vector<RunRecord>& records, const std::filesystem::path& dir) {
  if (records.size() == 1) {
    export_record(records.front(), dir);
    return;
  }
  for (const auto& r : records) export_record(r, dir / r.method);
}

}  // namespace stinespring
