#include "saldrn/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "saldrn/errors.hpp"

namespace saldrn {
namespace {

constexpr char kMagic[8] = {'S', 'A', 'L', 'D', 'R', 'N', 'C', 'K'};

template <typename V>
void put(std::ostream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& is, const std::string& path) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!is) throw IoError("truncated checkpoint " + path);
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is, const std::string& path) {
  const auto n = get<std::uint64_t>(is, path);
  if (n > (1ull << 30)) throw IoError("corrupt checkpoint " + path);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw IoError("truncated checkpoint " + path);
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint " + path);
    os.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(os, ckpt.version);
    put_string(os, ckpt.config);
    put<std::int64_t>(os, ckpt.iteration);
    put<std::uint64_t>(os, ckpt.arrays.size());
    for (const auto& [name, t] : ckpt.arrays) {
      put_string(os, name);
      const Shape s = t.shape();
      for (int d : {s.n, s.c, s.h, s.w}) put<std::int32_t>(os, d);
      os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    }
    os.flush();
    if (!os) throw IoError("cannot write checkpoint " + path);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot write checkpoint " + path + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint " + path);
  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError("not a checkpoint: " + path);
  Checkpoint ckpt;
  ckpt.version = get<std::uint32_t>(is, path);
  if (ckpt.version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(ckpt.version) + " in " + path);
  }
  ckpt.config = get_string(is, path);
  ckpt.iteration = get<std::int64_t>(is, path);
  const auto count = get<std::uint64_t>(is, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = get_string(is, path);
    Shape s;
    s.n = get<std::int32_t>(is, path);
    s.c = get<std::int32_t>(is, path);
    s.h = get<std::int32_t>(is, path);
    s.w = get<std::int32_t>(is, path);
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0 || s.numel() > (1ull << 32)) throw IoError("corrupt checkpoint " + path);
    Tensor<float> t(s);
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!is) throw IoError("truncated checkpoint " + path);
    ckpt.arrays.emplace(std::move(name), std::move(t));
  }
  return ckpt;
}

void store_params(Checkpoint& ckpt, const ParamStore<float>& params) {
  for (const auto& [name, v] : params.all()) ckpt.arrays[name] = v->value;
}

void restore_params(const Checkpoint& ckpt, ParamStore<float>& params) {
  for (const auto& [name, v] : params.all()) {
    auto it = ckpt.arrays.find(name);
    if (it == ckpt.arrays.end()) throw IoError("checkpoint lacks parameter " + name);
    if (it->second.shape() != v->value.shape()) throw IoError("checkpoint shape mismatch for " + name);
    v->value = it->second;
  }
}

Config checkpoint_config(const Checkpoint& ckpt) {
  Config cfg;
  cfg.merge_text(ckpt.config, "checkpoint");
  return cfg;
}

}  // namespace saldrn
