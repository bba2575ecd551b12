// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// On-disk checkpoint: a directory holding
//   manifest.json  {"format", "version", "model", "meta", "tensors": [
//                    {"name", "shape", "group", "frozen", "offset", "count"}]}
//   params.bin     little-endian binary32 values, tensors back to back;
//                  "offset" is the byte offset of the first value.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xprompt/config.hpp"
#include "xprompt/param_store.hpp"

namespace xprompt {

struct CheckpointTensor {
  std::string name;
  Shape shape;
  ParamGroup group;
  bool frozen;
  std::uint64_t offset;
  std::vector<float> values;
};

struct Checkpoint {
  ModelConfig model;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& dir, const ParamStore& store, const ModelConfig& model,
                     const nlohmann::json& meta = nlohmann::json::object());
Checkpoint load_checkpoint(const std::string& dir);

/// Copies checkpoint values into same-named store entries. Entries missing
/// from the checkpoint are left alone; shape mismatches raise ContractError.
/// Returns the number of tensors applied.
std::size_t apply_checkpoint(const Checkpoint& ckpt, ParamStore& store);

/// Raw little-endian binary32 bytes of one tensor's values.
std::vector<std::uint8_t> encode_f32(std::span<const double> values);

}  // namespace xprompt
