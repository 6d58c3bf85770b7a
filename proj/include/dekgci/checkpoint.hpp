#pragma once

#include "dekgci/model.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace dekgci {

struct Checkpoint {
  std::uint32_t version = 1;
  Hyperparams hyper;
  Index n_users = 0;
  Index n_entities = 0;
  Index n_relations = 0;
  ModelParams params;
};

// Little-endian binary blob: magic, version, hyperparameters, shapes, then
// raw tensor data. Writes are atomic (temp file + rename).
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

// Sidecar text manifest, sorted key=value lines.
void write_manifest_kv(const std::string& path, const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> read_manifest_kv(const std::string& path);

// FNV-1a over a file's bytes; identifies the dataset a run was built from.
std::uint64_t hash_file(const std::string& path);

}  // namespace dekgci
