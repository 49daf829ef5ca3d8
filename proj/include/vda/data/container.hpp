#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "vda/core/errors.hpp"
#include "vda/core/tensor.hpp"
#include "vda/data/phantom.hpp"

namespace vda {

using ordered_json = nlohmann::ordered_json;

namespace detail {

template <typename T>
void write_raw(const std::filesystem::path& path, const Tensor<T>& t) {
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw IoError("cannot open for writing: " + path.string());
  size_t n = size_t(t.numel());
  size_t written = std::fwrite(t.data(), sizeof(T), n, f);
  std::fclose(f);
  if (written != n) throw IoError("short write: " + path.string());
}

template <typename T>
Tensor<T> read_raw(const std::filesystem::path& path, const Shape& shape) {
  std::FILE* f = std::fopen(path.string().c_str(), "rb");
  if (!f) throw IoError("cannot open for reading: " + path.string());
  Tensor<T> t(shape);
  size_t n = size_t(t.numel());
  size_t got = std::fread(t.data(), sizeof(T), n, f);
  bool extra = std::fgetc(f) != EOF;
  std::fclose(f);
  if (got != n || extra)
    throw IoError("size mismatch reading " + path.string() + " (expected " +
                  std::to_string(n * sizeof(T)) + " bytes)");
  return t;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw IoError("cannot open for writing: " + path.string());
  size_t written = std::fwrite(text.data(), 1, text.size(), f);
  std::fclose(f);
  if (written != text.size()) throw IoError("short write: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "rb");
  if (!f) throw IoError("cannot open for reading: " + path.string());
  std::string text;
  char buf[4096];
  size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) text.append(buf, got);
  std::fclose(f);
  return text;
}

inline ordered_json read_json(const std::filesystem::path& path) {
  try {
    return ordered_json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace detail

/// On-disk layout per sample, all little-endian raw buffers next to one
/// self-describing sidecar:
///   <id>.json          shape, spacing, domain, seed
///   <id>.img.f32       float32 image, row-major
///   <id>.brain.u8      0/1 mask
///   <id>.vessel.u8     0/1 mask (absent for unlabeled exports)
inline void save_sample(const std::filesystem::path& dir, const LabeledSample& s,
                        bool with_vessel_mask = true) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  ordered_json meta;
  meta["id"] = s.id;
  meta["domain"] = domain_name(s.domain);
  meta["seed"] = s.seed;
  meta["shape"] = {s.image.shape()[0], s.image.shape()[1]};
  meta["spacing"] = {1.0, 1.0};
  meta["has_vessel_mask"] = with_vessel_mask;
  detail::write_text(dir / (s.id + ".json"), meta.dump(2) + "\n");
  detail::write_raw(dir / (s.id + ".img.f32"), s.image);
  detail::write_raw(dir / (s.id + ".brain.u8"), s.brain);
  if (with_vessel_mask) detail::write_raw(dir / (s.id + ".vessel.u8"), s.vessel);
}

inline LabeledSample load_sample(const std::filesystem::path& dir, const std::string& id) {
  ordered_json meta = detail::read_json(dir / (id + ".json"));
  LabeledSample s;
  try {
    s.id = meta.at("id").get<std::string>();
    s.domain = domain_from_name(meta.at("domain").get<std::string>());
    s.seed = meta.at("seed").get<uint64_t>();
    Shape shape{meta.at("shape").at(0).get<int64_t>(), meta.at("shape").at(1).get<int64_t>()};
    s.image = detail::read_raw<float>(dir / (id + ".img.f32"), shape);
    s.brain = detail::read_raw<uint8_t>(dir / (id + ".brain.u8"), shape);
    if (meta.value("has_vessel_mask", true))
      s.vessel = detail::read_raw<uint8_t>(dir / (id + ".vessel.u8"), shape);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad sidecar for '" + id + "': " + e.what());
  }
  return s;
}

/// Sample ids present in a directory, sorted so iteration order never depends
/// on the filesystem.
inline std::vector<std::string> list_ids(const std::filesystem::path& dir) {
  std::vector<std::string> ids;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    const auto& p = entry.path();
    if (p.extension() == ".json") ids.push_back(p.stem().string());
  }
  if (ec) throw IoError("cannot list " + dir.string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace vda
