#include "graphpatch/checkpoint.hpp"

#include "graphpatch/gcn.hpp"
#include "graphpatch/patcher.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <memory>
#include <sstream>

namespace gp {

namespace {

constexpr char kMagic[4] = {'G', 'P', 'C', 'K'};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

Matrix take(Checkpoint& ckpt, const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  for (auto& t : ckpt.tensors)
    if (t.name == name) {
      if ((rows >= 0 && t.value.rows() != rows) || (cols >= 0 && t.value.cols() != cols))
        throw Error("checkpoint: tensor '" + name + "' has unexpected shape");
      return std::move(t.value);
    }
  throw Error("checkpoint: missing tensor '" + name + "'");
}

void load_layer(Checkpoint& ckpt, DenseLayer<float>& layer, const std::string& name, Eigen::Index in = -1) {
  Matrix w = take(ckpt, name + ".weight", in, -1);
  Matrix b = take(ckpt, name + ".bias", 1, w.cols());
  layer = DenseLayer<float>(name, w.rows(), w.cols());
  layer.weight.value = std::move(w);
  layer.bias.value = std::move(b);
}

}  // namespace

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::ordered_json manifest;
  manifest["model_kind"] = ckpt.model_kind;
  manifest["tensors"] = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    nlohmann::ordered_json entry;
    entry["name"] = t.name;
    entry["rows"] = t.value.rows();
    entry["cols"] = t.value.cols();
    entry["byte_offset"] = offset;
    manifest["tensors"].push_back(entry);
    offset += static_cast<std::uint64_t>(t.value.size()) * 4;
  }
  const std::string text = manifest.dump();
  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& t : ckpt.tensors)
    for (Eigen::Index i = 0; i < t.value.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(t.value.data()[i]));
  return out;
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 8) throw Error("checkpoint truncated");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw Error("checkpoint: bad magic");
  const std::size_t manifest_len = get_u32(bytes.data() + 4);
  if (bytes.size() < 8 + manifest_len) throw Error("checkpoint truncated");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(manifest_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: malformed manifest: ") + e.what());
  }
  const std::size_t blob_start = 8 + manifest_len;
  const std::size_t blob_size = bytes.size() - blob_start;

  Checkpoint ckpt;
  try {
    ckpt.model_kind = manifest.at("model_kind").get<std::string>();
    std::size_t expected = 0;
    for (const auto& entry : manifest.at("tensors")) {
      const auto rows = entry.at("rows").get<std::int64_t>();
      const auto cols = entry.at("cols").get<std::int64_t>();
      const auto offset = entry.at("byte_offset").get<std::uint64_t>();
      if (rows < 0 || cols < 0) throw Error("checkpoint: negative tensor shape");
      if (offset != expected) throw Error("checkpoint: tensor offsets are not contiguous");
      const std::size_t count = static_cast<std::size_t>(rows * cols);
      if (offset + count * 4 > blob_size) throw Error("checkpoint truncated");
      NamedTensor t{entry.at("name").get<std::string>(), Matrix(rows, cols)};
      const unsigned char* p = bytes.data() + blob_start + offset;
      for (std::size_t i = 0; i < count; ++i) t.value.data()[i] = std::bit_cast<float>(get_u32(p + 4 * i));
      expected = offset + count * 4;
      ckpt.tensors.push_back(std::move(t));
    }
    if (expected != blob_size) throw Error("checkpoint: manifest tensor sizes do not match blob size");
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: malformed manifest: ") + e.what());
  }
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

Checkpoint to_checkpoint(const GCNModel& model) {
  Checkpoint c{"gcn", {}};
  for (const auto* p : model.parameters()) c.tensors.push_back({p->name, p->value});
  return c;
}

Checkpoint to_checkpoint(const PatcherModel& model) {
  Checkpoint c{"patcher", {}};
  for (const auto* p : model.parameters()) c.tensors.push_back({p->name, p->value});
  return c;
}

void save_checkpoint(const GCNModel& model, const std::filesystem::path& path) {
  write_checkpoint(to_checkpoint(model), path);
}

void save_checkpoint(const PatcherModel& model, const std::filesystem::path& path) {
  write_checkpoint(to_checkpoint(model), path);
}

GCNModel load_gcn_checkpoint(const std::filesystem::path& path) {
  Checkpoint c = read_checkpoint(path);
  if (c.model_kind != "gcn") throw Error("checkpoint: expected model_kind 'gcn', found '" + c.model_kind + "'");
  GCNModel m;
  load_layer(c, m.layer1, "layer1");
  load_layer(c, m.layer2, "layer2", m.layer1.out_dim());
  return m;
}

PatcherModel load_patcher_checkpoint(const std::filesystem::path& path) {
  Checkpoint c = read_checkpoint(path);
  if (c.model_kind != "patcher")
    throw Error("checkpoint: expected model_kind 'patcher', found '" + c.model_kind + "'");
  PatcherModel m;
  load_layer(c, m.encoder1, "encoder1");
  load_layer(c, m.encoder2, "encoder2", m.encoder1.out_dim());
  load_layer(c, m.head1, "head1", m.encoder2.out_dim());
  load_layer(c, m.head2, "head2", m.head1.out_dim());
  if (m.head2.out_dim() != m.encoder1.in_dim()) throw Error("checkpoint: patcher output width != feature width");
  return m;
}

std::string sha256_hex(const void* data, std::size_t size) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, size, digest, &len, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing file: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes.data(), bytes.size());
}

std::string parameter_checksum(const GCNModel& model) {
  const auto bytes = encode_checkpoint(to_checkpoint(model));
  return sha256_hex(bytes.data(), bytes.size());
}

}  // namespace gp
