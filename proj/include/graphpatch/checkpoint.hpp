#pragma once

// "GPCK" container: magic, u32 LE manifest length, JSON manifest, raw LE f32 blob.

#include "graphpatch/tensor.hpp"

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace gp {

struct GCNModel;
struct PatcherModel;

struct NamedTensor {
  std::string name;
  Matrix value;
};

struct Checkpoint {
  std::string model_kind;
  std::vector<NamedTensor> tensors;
};

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

void save_checkpoint(const GCNModel& model, const std::filesystem::path& path);
void save_checkpoint(const PatcherModel& model, const std::filesystem::path& path);
GCNModel load_gcn_checkpoint(const std::filesystem::path& path);
PatcherModel load_patcher_checkpoint(const std::filesystem::path& path);

Checkpoint to_checkpoint(const GCNModel& model);
Checkpoint to_checkpoint(const PatcherModel& model);

/// Lowercase hex SHA-256.
std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_file(const std::filesystem::path& path);
/// SHA-256 of the model's encoded checkpoint.
std::string parameter_checksum(const GCNModel& model);

}  // namespace gp
