#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tversky/unet.hpp"

namespace tversky::optim {

struct AdamConfig {
  double base_lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double decay_factor = 0.9;
  std::uint64_t decay_every = 1000;  // optimizer steps

  void validate() const {
    if (!(base_lr >= 0.0)) throw ConfigError("adam: base_lr must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("adam: beta1 and beta2 must be in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw ConfigError("adam: epsilon must be positive");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ConfigError("adam: decay_factor must be in (0, 1]");
    if (decay_every == 0) throw ConfigError("adam: decay_every must be positive");
  }

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

inline void to_json(nlohmann::json& j, const AdamConfig& c) {
  j = nlohmann::json{{"base_lr", c.base_lr},           {"beta1", c.beta1},
                     {"beta2", c.beta2},               {"epsilon", c.epsilon},
                     {"decay_factor", c.decay_factor}, {"decay_every", c.decay_every}};
}

inline void from_json(const nlohmann::json& j, AdamConfig& c) {
  AdamConfig d;
  c.base_lr = j.value("base_lr", d.base_lr);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.epsilon = j.value("epsilon", d.epsilon);
  c.decay_factor = j.value("decay_factor", d.decay_factor);
  c.decay_every = j.value("decay_every", d.decay_every);
}

/// Moment estimates and step count. Moments are sized on the first step.
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;  // steps taken so far

  explicit AdamState(AdamConfig c = {}) : config(c) { config.validate(); }

  /// Learning rate for the next step: base_lr * decay_factor^floor(t / decay_every).
  double effective_lr() const {
    return config.base_lr * std::pow(config.decay_factor, static_cast<double>(t / config.decay_every));
  }
};

/// One bias-corrected Adam update over parallel lists of parameter and
/// gradient blocks.
inline void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                      AdamState& state) {
  if (params.size() != grads.size()) {
    throw ConfigError("adam_step: " + std::to_string(params.size()) + " parameter blocks but " +
                      std::to_string(grads.size()) + " gradient blocks");
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ConfigError("adam_step: block count changed between steps");
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size() || params[b].size() != state.m[b].size()) {
      throw ConfigError("adam_step: block " + std::to_string(b) + " size mismatch (param " +
                        std::to_string(params[b].size()) + ", grad " + std::to_string(grads[b].size()) +
                        ", state " + std::to_string(state.m[b].size()) + ")");
    }
  }
  const auto& c = state.config;
  const double lr = state.effective_lr();
  state.t += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = state.m[b];
    auto& v = state.v[b];
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      const double g = grads[b][i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      params[b][i] -= lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

inline void adam_step(unet::NetParams& params, const unet::NetParams& grads, AdamState& state) {
  std::vector<std::span<double>> p;
  std::vector<std::span<const double>> g;
  params.for_each_block([&](std::span<double> block) { p.push_back(block); });
  grads.for_each_block([&](std::span<const double> block) { g.push_back(block); });
  adam_step(std::span<const std::span<double>>(p), std::span<const std::span<const double>>(g), state);
}

}  // namespace tversky::optim
