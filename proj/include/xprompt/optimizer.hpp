// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Adam without weight decay. Moments live in the state keyed by parameter
// name, so a state can follow a store across freeze changes.

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "xprompt/param_store.hpp"

namespace xprompt {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  std::map<std::string, Moments> moments;
  std::size_t steps = 0;
  std::size_t ignored_frozen = 0;  // gradients offered for frozen entries
};

/// One update of every trainable parameter named in `grads`. Gradients for
/// frozen entries are skipped and counted; unknown names and size
/// mismatches raise ContractError.
void adam_step(ParamStore& store, const GradMap& grads, AdamState& state, const AdamConfig& cfg);

}  // namespace xprompt
