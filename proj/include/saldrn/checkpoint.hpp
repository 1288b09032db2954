#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "saldrn/config.hpp"
#include "saldrn/model.hpp"
#include "saldrn/tensor.hpp"

namespace saldrn {

constexpr std::uint32_t kCheckpointVersion = 1;

/// Named float arrays plus the resolved configuration and step counter.
/// Parameters are stored under their own names, optimizer moments under
/// `adam.m.<name>` / `adam.v.<name>`.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config;
  std::int64_t iteration = 0;
  std::map<std::string, Tensor<float>> arrays;
};

/// Writes atomically (temp file + rename); any IO failure raises IoError.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// Rejects files without the magic tag or with an unknown version.
Checkpoint load_checkpoint(const std::string& path);

/// Copies model parameters into the checkpoint arrays.
void store_params(Checkpoint& ckpt, const ParamStore<float>& params);
/// Copies arrays back into the model; every parameter must be present with
/// a matching shape.
void restore_params(const Checkpoint& ckpt, ParamStore<float>& params);

/// Configuration recorded in a checkpoint.
Config checkpoint_config(const Checkpoint& ckpt);

}  // namespace saldrn
