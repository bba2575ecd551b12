// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "xprompt/checkpoint.hpp"

#include <bit>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "xprompt/errors.hpp"

namespace xprompt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
constexpr const char* kFormat = "xprompt-checkpoint";
constexpr int kVersion = 1;

void put_f32(std::vector<std::uint8_t>& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(bits >> shift));
}

float get_f32(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}
}  // namespace

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::vector<std::uint8_t> encode_f32(std::span<const double> values) {
  std::vector<std::uint8_t> out;
  out.reserve(values.size() * 4);
  for (double v : values) put_f32(out, static_cast<float>(v));
  return out;
}

void save_checkpoint(const std::string& dir, const ParamStore& store, const ModelConfig& model,
                     const json& meta) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory '" + dir + "': " + ec.message());
  json tensors = json::array();
  std::vector<std::uint8_t> blob;
  for (const auto& e : store.entries()) {
    tensors.push_back({{"name", e.name},
                       {"shape", e.tensor.shape()},
                       {"group", std::string(to_string(e.group))},
                       {"frozen", e.frozen},
                       {"offset", blob.size()},
                       {"count", e.tensor.numel()}});
    const auto bytes = encode_f32(e.tensor.values());
    blob.insert(blob.end(), bytes.begin(), bytes.end());
  }
  const json manifest{{"format", kFormat}, {"version", kVersion}, {"model", to_json(model)},
                      {"meta", meta},      {"tensors", tensors}};
  std::ofstream m(fs::path(dir) / "manifest.json");
  m << manifest.dump(2) << '\n';
  std::ofstream b(fs::path(dir) / "params.bin", std::ios::binary);
  b.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!m || !b) throw IoError("failed writing checkpoint to '" + dir + "'");
}

Checkpoint load_checkpoint(const std::string& dir) {
  std::ifstream m(fs::path(dir) / "manifest.json");
  if (!m) throw IoError("no checkpoint manifest in '" + dir + "'");
  json manifest;
  try {
    manifest = json::parse(m);
  } catch (const json::parse_error& e) {
    throw IoError("malformed checkpoint manifest in '" + dir + "': " + e.what());
  }
  if (manifest.value("format", "") != kFormat || manifest.value("version", 0) != kVersion) {
    throw IoError("'" + dir + "' is not a version-1 checkpoint");
  }
  std::ifstream b(fs::path(dir) / "params.bin", std::ios::binary);
  if (!b) throw IoError("no checkpoint blob in '" + dir + "'");
  const std::vector<std::uint8_t> blob{std::istreambuf_iterator<char>(b), std::istreambuf_iterator<char>()};

  Checkpoint ckpt;
  try {
    ckpt.model = model_config_from_json(manifest.at("model"));
    ckpt.meta = manifest.value("meta", json::object());
    for (const auto& t : manifest.at("tensors")) {
      CheckpointTensor ct;
      ct.name = t.at("name").get<std::string>();
      ct.shape = t.at("shape").get<Shape>();
      ct.group = parse_param_group(t.at("group").get<std::string>());
      ct.frozen = t.at("frozen").get<bool>();
      ct.offset = t.at("offset").get<std::uint64_t>();
      const auto count = t.at("count").get<std::uint64_t>();
      if (count != numel(ct.shape) || ct.offset + 4 * count > blob.size()) {
        throw IoError("checkpoint tensor '" + ct.name + "' is inconsistent with the blob");
      }
      ct.values.resize(count);
      for (std::uint64_t i = 0; i < count; ++i) ct.values[i] = get_f32(blob.data() + ct.offset + 4 * i);
      ckpt.tensors.push_back(std::move(ct));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint manifest in '" + dir + "': " + e.what());
  }
  return ckpt;
}

std::size_t apply_checkpoint(const Checkpoint& ckpt, ParamStore& store) {
  std::size_t applied = 0;
  for (const auto& t : ckpt.tensors) {
    if (!store.contains(t.name)) continue;
    Tensor dst = store.get(t.name);
    if (dst.shape() != t.shape) {
      throw ContractError("checkpoint tensor '" + t.name + "' has shape " + shape_str(t.shape) +
                          ", model expects " + shape_str(dst.shape()));
    }
    auto vals = dst.mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = static_cast<double>(t.values[i]);
    ++applied;
  }
  return applied;
}

}  // namespace xprompt
