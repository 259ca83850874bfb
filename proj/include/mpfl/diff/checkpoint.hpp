#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpfl/diff/tensor.hpp"

namespace mpfl::diff {

static_assert(std::endian::native == std::endian::little,
              "checkpoint buffers are written as raw little-endian float64");

inline constexpr int kCheckpointVersion = 1;

// Checkpoint layout: `<stem>.json` manifest plus `<stem>.bin` holding every
// tensor's float64 values back to back. The manifest lists name, shape,
// element offset and trainability, and carries an arbitrary `meta` object.
inline void save_checkpoint(const std::vector<Parameter>& params, const nlohmann::json& meta,
                            const std::filesystem::path& manifest_path) {
  std::filesystem::path bin_path = manifest_path;
  bin_path.replace_extension(".bin");
  if (manifest_path.has_parent_path()) {
    std::filesystem::create_directories(manifest_path.parent_path());
  }
  nlohmann::json tensors = nlohmann::json::array();
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw Error(ErrorKind::Io, "cannot write " + bin_path.string());
  std::size_t offset = 0;
  for (const auto& p : params) {
    tensors.push_back({{"name", p.name},
                       {"shape", {p.tensor.rows(), p.tensor.cols()}},
                       {"offset", offset},
                       {"trainable", p.tensor.requires_grad()}});
    const auto v = p.tensor.values();
    bin.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
    offset += v.size();
  }
  nlohmann::json manifest = {{"format", "mpfl-checkpoint"},
                             {"version", kCheckpointVersion},
                             {"data_file", bin_path.filename().string()},
                             {"dtype", "float64-le"},
                             {"tensors", tensors},
                             {"meta", meta}};
  std::ofstream out(manifest_path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + manifest_path.string());
  out << manifest.dump(2) << "\n";
}

inline nlohmann::json read_checkpoint_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Schema, manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "mpfl-checkpoint") {
    throw Error(ErrorKind::Schema, "field \"format\" is not mpfl-checkpoint");
  }
  if (manifest.value("version", 0) != kCheckpointVersion) {
    throw Error(ErrorKind::Schema, "unsupported checkpoint field \"version\"");
  }
  return manifest;
}

// Loads values into `params` by name. Every parameter must be present with the
// same shape.
inline void load_checkpoint(std::vector<Parameter>& params,
                            const std::filesystem::path& manifest_path) {
  const auto manifest = read_checkpoint_manifest(manifest_path);
  const auto bin_path = manifest_path.parent_path() / manifest.at("data_file").get<std::string>();
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw Error(ErrorKind::Io, "cannot open " + bin_path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  std::map<std::string, nlohmann::json> index;
  for (const auto& t : manifest.at("tensors")) index[t.at("name").get<std::string>()] = t;
  for (auto& p : params) {
    auto it = index.find(p.name);
    if (it == index.end()) throw Error(ErrorKind::Schema, "checkpoint lacks tensor \"" + p.name + "\"");
    const auto shape = it->second.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != p.tensor.rows() || shape[1] != p.tensor.cols()) {
      throw Error(ErrorKind::Schema, "tensor \"" + p.name + "\" has a different shape");
    }
    const auto offset = it->second.at("offset").get<std::size_t>();
    const std::size_t bytes = p.tensor.size() * sizeof(double);
    if ((offset * sizeof(double)) + bytes > raw.size()) {
      throw Error(ErrorKind::Schema, "data file too short for tensor \"" + p.name + "\"");
    }
    auto dst = p.tensor.mutable_values();
    std::memcpy(dst.data(), raw.data() + offset * sizeof(double), bytes);
    p.tensor.set_requires_grad(it->second.value("trainable", true));
  }
}

}  // namespace mpfl::diff
