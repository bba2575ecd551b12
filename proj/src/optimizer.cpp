// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "xprompt/optimizer.hpp"

#include <cmath>

#include "xprompt/errors.hpp"

namespace xprompt {

void adam_step(ParamStore& store, const GradMap& grads, AdamState& state, const AdamConfig& cfg) {
  ++state.steps;
  const double t = static_cast<double>(state.steps);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (const auto& [name, g] : grads) {
    const ParamEntry& e = store.entry(name);
    if (e.frozen) {
      ++state.ignored_frozen;
      continue;
    }
    Tensor param = e.tensor;
    auto values = param.mutable_values();
    if (g.size() != values.size()) {
      throw ContractError("adam_step: gradient for '" + name + "' has " + std::to_string(g.size()) +
                          " values, parameter has " + std::to_string(values.size()));
    }
    auto& mom = state.moments[name];
    if (mom.m.empty()) mom.m.assign(values.size(), 0.0), mom.v.assign(values.size(), 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) {
      mom.m[i] = cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * g[i];
      mom.v[i] = cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double step = cfg.lr * (mom.m[i] / c1) / (std::sqrt(mom.v[i] / c2) + cfg.eps);
      values[i] -= step;
    }
  }
}

}  // namespace xprompt
