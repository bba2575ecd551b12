// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "xprompt/dataset_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "xprompt/errors.hpp"

namespace xprompt {

namespace fs = std::filesystem;

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

void write_netpbm(const std::string& path, const char* magic, std::size_t h, std::size_t w,
                  const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << magic << "\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

// Reads the next header token, skipping whitespace and '#' comments.
std::string header_token(std::istream& in, const std::string& path) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(c);
  }
  if (tok.empty()) throw IoError("truncated header in '" + path + "'");
  return tok;
}

std::vector<std::uint8_t> read_netpbm(const std::string& path, const char* magic, std::size_t& h, std::size_t& w,
                                      std::size_t channels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  if (header_token(in, path) != magic) throw IoError("'" + path + "' is not a " + magic + " file");
  try {
    w = std::stoul(header_token(in, path));
    h = std::stoul(header_token(in, path));
    if (std::stoul(header_token(in, path)) != 255) throw IoError("'" + path + "': only 8-bit maxval supported");
  } catch (const std::logic_error&) {
    throw IoError("malformed header in '" + path + "'");
  }
  std::vector<std::uint8_t> bytes(h * w * channels);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) throw IoError("truncated pixel data in '" + path + "'");
  return bytes;
}

std::string numbered(const std::string& dir, const char* stem, std::size_t t, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu.%s", stem, t, ext);
  return (fs::path(dir) / buf).string();
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(2) != 3) throw ContractError("write_ppm: expected H x W x 3");
  std::vector<std::uint8_t> bytes;
  for (double v : rgb.values()) bytes.push_back(to_byte(v));
  write_netpbm(path, "P6", rgb.dim(0), rgb.dim(1), bytes);
}

Tensor read_ppm(const std::string& path) {
  std::size_t h = 0, w = 0;
  const auto bytes = read_netpbm(path, "P6", h, w, 3);
  std::vector<double> v(bytes.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = bytes[i] / 255.0;
  return Tensor::from({h, w, 3}, std::move(v));
}

void write_pgm(const std::string& path, const Tensor& gray) {
  if (gray.rank() != 3 || gray.dim(2) != 1) throw ContractError("write_pgm: expected H x W x 1");
  std::vector<std::uint8_t> bytes;
  for (double v : gray.values()) bytes.push_back(to_byte(v));
  write_netpbm(path, "P5", gray.dim(0), gray.dim(1), bytes);
}

Tensor read_pgm(const std::string& path) {
  std::size_t h = 0, w = 0;
  const auto bytes = read_netpbm(path, "P5", h, w, 1);
  std::vector<double> v(bytes.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = bytes[i] / 255.0;
  return Tensor::from({h, w, 1}, std::move(v));
}

void write_mask_pgm(const std::string& path, const SegmentationMask& mask) {
  write_netpbm(path, "P5", mask.height, mask.width, mask.ids);
}

SegmentationMask read_mask_pgm(const std::string& path) {
  SegmentationMask m;
  m.ids = read_netpbm(path, "P5", m.height, m.width, 1);
  return m;
}

void save_sample(const std::string& dir, const VideoSample& sample) {
  sample.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());
  for (std::size_t t = 0; t < sample.length(); ++t) {
    write_ppm(numbered(dir, "frame", t, "ppm"), sample.frames[t]);
    write_pgm(numbered(dir, "x", t, "pgm"), sample.xmaps[t]);
    write_mask_pgm(numbered(dir, "mask", t, "pgm"), sample.masks[t]);
  }
  const nlohmann::json meta = {{"T", sample.length()},   {"H", sample.height()},
                               {"W", sample.width()},    {"O", sample.objects},
                               {"scenario", sample.scenario}};
  std::ofstream out(fs::path(dir) / "meta.json");
  if (!out) throw IoError("cannot write meta.json in '" + dir + "'");
  out << meta.dump(2) << "\n";
}

VideoSample load_sample(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "meta.json");
  if (!in) throw IoError("no meta.json in '" + dir + "'");
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed meta.json in '" + dir + "': " + e.what());
  }
  VideoSample s;
  s.name = fs::path(dir).filename().string();
  std::size_t T = 0, H = 0, W = 0;
  try {
    T = meta.at("T").get<std::size_t>();
    H = meta.at("H").get<std::size_t>();
    W = meta.at("W").get<std::size_t>();
    s.objects = meta.at("O").get<std::size_t>();
    s.scenario = meta.value("scenario", std::string("none"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("meta.json in '" + dir + "' lacks T/H/W/O: " + e.what());
  }
  for (std::size_t t = 0; t < T; ++t) {
    s.frames.push_back(read_ppm(numbered(dir, "frame", t, "ppm")));
    s.xmaps.push_back(read_pgm(numbered(dir, "x", t, "pgm")));
    s.masks.push_back(read_mask_pgm(numbered(dir, "mask", t, "pgm")));
    if (s.frames.back().dim(0) != H || s.frames.back().dim(1) != W) {
      throw IoError("frame " + std::to_string(t) + " of '" + dir + "' disagrees with meta.json dims");
    }
  }
  try {
    s.validate();
  } catch (const ContractError& e) {
    throw IoError("inconsistent sequence '" + dir + "': " + e.what());
  }
  return s;
}

void save_dataset(const std::string& root, const std::vector<VideoSample>& samples) {
  for (const auto& s : samples) save_sample((fs::path(root) / s.name).string(), s);
}

std::vector<VideoSample> load_dataset(const std::string& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IoError("dataset directory '" + root + "' does not exist");
  std::vector<std::string> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) dirs.push_back(entry.path().string());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw IoError("dataset directory '" + root + "' holds no sequences");
  std::vector<VideoSample> out;
  for (const auto& d : dirs) out.push_back(load_sample(d));
  return out;
}

}  // namespace xprompt
