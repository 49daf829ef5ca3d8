#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vda/data/container.hpp"
#include "vda/nn/layers.hpp"

namespace vda {

template <typename T>
using NetList = std::vector<std::pair<std::string, ParamStore<T>*>>;

/// Order-independent architecture fingerprint over all nets.
template <typename T>
uint64_t arch_hash(const NetList<T>& nets) {
  uint64_t h = 0;
  for (const auto& [name, ps] : nets) {
    uint64_t nh = 1469598103934665603ull;
    for (char c : name) nh = (nh ^ uint64_t(c)) * 1099511628211ull;
    h ^= nh ^ ps->arch_hash();
  }
  return h;
}

namespace detail {

inline void put_u32(std::FILE* f, uint32_t v) { std::fwrite(&v, 4, 1, f); }
inline void put_u64(std::FILE* f, uint64_t v) { std::fwrite(&v, 8, 1, f); }
inline void put_str(std::FILE* f, const std::string& s) {
  put_u32(f, uint32_t(s.size()));
  std::fwrite(s.data(), 1, s.size(), f);
}

inline uint32_t get_u32(std::FILE* f) {
  uint32_t v = 0;
  if (std::fread(&v, 4, 1, f) != 1) throw IoError("checkpoint: truncated");
  return v;
}
inline uint64_t get_u64(std::FILE* f) {
  uint64_t v = 0;
  if (std::fread(&v, 8, 1, f) != 1) throw IoError("checkpoint: truncated");
  return v;
}
inline std::string get_str(std::FILE* f) {
  uint32_t n = get_u32(f);
  if (n > (1u << 20)) throw IoError("checkpoint: implausible string length");
  std::string s(n, '\0');
  if (n && std::fread(s.data(), 1, n, f) != n) throw IoError("checkpoint: truncated");
  return s;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'V', 'D', 'A', 'C', 'K', '0', '0', '1'};

/// Writes every net's parameters to one binary archive. The write lands under
/// a temporary name and is renamed into place, so a crash never leaves a
/// half-written checkpoint at the target path.
template <typename T>
void save_params(const std::filesystem::path& path, const NetList<T>& nets) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  std::FILE* f = std::fopen(tmp.string().c_str(), "wb");
  if (!f) throw IoError("cannot open for writing: " + tmp.string());
  std::fwrite(kCheckpointMagic, 1, 8, f);
  detail::put_u32(f, uint32_t(sizeof(T)));
  detail::put_u64(f, arch_hash(nets));
  detail::put_u32(f, uint32_t(nets.size()));
  for (const auto& [name, ps] : nets) {
    detail::put_str(f, name);
    detail::put_u32(f, uint32_t(ps->items().size()));
    for (const auto& [pname, var] : ps->items()) {
      detail::put_str(f, pname);
      detail::put_u32(f, uint32_t(var.shape().size()));
      for (int64_t d : var.shape()) detail::put_u64(f, uint64_t(d));
      std::fwrite(var.val().data(), sizeof(T), size_t(var.numel()), f);
    }
  }
  bool ok = std::fflush(f) == 0;
  std::fclose(f);
  if (!ok) throw IoError("short write: " + tmp.string());
  std::filesystem::rename(tmp, path);
}

/// Strict load: every archived net/param must exist with identical shape, and
/// the archive's architecture hash must match the receiving nets.
template <typename T>
void load_params(const std::filesystem::path& path, const NetList<T>& nets) {
  std::FILE* f = std::fopen(path.string().c_str(), "rb");
  if (!f) throw IoError("cannot open checkpoint: " + path.string());
  struct Closer {
    std::FILE* f;
    ~Closer() { std::fclose(f); }
  } closer{f};

  char magic[8];
  if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw IoError("not a checkpoint file: " + path.string());
  if (detail::get_u32(f) != sizeof(T))
    throw IoError("checkpoint scalar width differs from this build");
  uint64_t stored_hash = detail::get_u64(f);
  if (stored_hash != arch_hash(nets))
    throw IoError("checkpoint architecture mismatch for " + path.string());

  std::unordered_map<std::string, ParamStore<T>*> by_name;
  for (const auto& [name, ps] : nets) by_name[name] = ps;

  uint32_t net_count = detail::get_u32(f);
  for (uint32_t i = 0; i < net_count; ++i) {
    std::string net = detail::get_str(f);
    auto it = by_name.find(net);
    if (it == by_name.end()) throw IoError("checkpoint has unknown net '" + net + "'");
    std::unordered_map<std::string, Var<T>> params;
    for (auto& [pname, var] : it->second->items()) params.emplace(pname, var);
    uint32_t n_params = detail::get_u32(f);
    for (uint32_t p = 0; p < n_params; ++p) {
      std::string pname = detail::get_str(f);
      uint32_t ndim = detail::get_u32(f);
      Shape shape(ndim);
      for (auto& d : shape) d = int64_t(detail::get_u64(f));
      auto pit = params.find(pname);
      if (pit == params.end())
        throw IoError("checkpoint param '" + net + "." + pname + "' not in model");
      if (pit->second.shape() != shape)
        throw IoError("checkpoint shape mismatch for '" + net + "." + pname + "'");
      size_t n = size_t(pit->second.numel());
      if (std::fread(pit->second.mutable_val().data(), sizeof(T), n, f) != n)
        throw IoError("checkpoint: truncated reading '" + net + "." + pname + "'");
    }
  }
}

/// Atomic small-file write for manifests living next to checkpoints.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  detail::write_text(tmp, text);
  std::filesystem::rename(tmp, path);
}

}  // namespace vda
