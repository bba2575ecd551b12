// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry point:
//   xprompt <synth|pretrain|adapt|eval|ablate|gradcheck> [config.json]
//           [--seed N] [--out PATH] [subcommand options]
// Exit codes: 0 success, 1 contract/config error or failed check (also
// unknown subcommands), 2 I/O error.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace xprompt {

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace xprompt
