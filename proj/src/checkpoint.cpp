#include "emb2emb/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace emb2emb {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

const char* dtype_name() { return sizeof(Scalar) == 8 ? "f64" : "f32"; }

void append_mat_bytes(std::string& out, const Mat& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) {
      const Scalar v = m(r, c);
      char buf[sizeof(Scalar)];
      std::memcpy(buf, &v, sizeof(Scalar));
      out.append(buf, sizeof(Scalar));
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& data) {
  json header;
  header["version"] = kCheckpointVersion;
  header["kind"] = data.kind;
  header["dtype"] = dtype_name();
  header["endianness"] = "little";
  header["config"] = data.config;
  header["vocab"] = data.vocab_tokens;
  json manifest = json::array();
  for (const auto& [name, m] : data.arrays)
    manifest.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  header["arrays"] = manifest;

  const std::string head = header.dump();
  if (head.size() > 0xffffffffu)
    throw std::runtime_error("checkpoint: header too large");
  const std::uint32_t head_len = static_cast<std::uint32_t>(head.size());

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  std::string payload;
  for (const auto& [name, m] : data.arrays) append_mat_bytes(payload, m);
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

CheckpointData load_checkpoint(const std::string& path,
                               const std::string& expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + path);
  std::uint32_t head_len = 0;
  in.read(reinterpret_cast<char*>(&head_len), sizeof(head_len));
  if (!in) throw std::runtime_error("checkpoint: truncated header length in " + path);
  std::string head(head_len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head_len));
  if (!in) throw std::runtime_error("checkpoint: truncated header in " + path);

  json header;
  try {
    header = json::parse(head);
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint: bad header in " + path + ": " + e.what());
  }

  const int version = header.at("version").get<int>();
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: version " + std::to_string(version) +
                             " unsupported (expected " +
                             std::to_string(kCheckpointVersion) + ") in " + path);
  const std::string dtype = header.at("dtype").get<std::string>();
  if (dtype != dtype_name())
    throw std::runtime_error("checkpoint: dtype " + dtype + " does not match build (" +
                             dtype_name() + ") in " + path);
  if (header.at("endianness").get<std::string>() != "little")
    throw std::runtime_error("checkpoint: non-little-endian file " + path);

  CheckpointData data;
  data.kind = header.at("kind").get<std::string>();
  if (!expected_kind.empty() && data.kind != expected_kind)
    throw std::runtime_error("checkpoint: expected kind '" + expected_kind +
                             "' but file " + path + " holds '" + data.kind + "'");
  data.config = header.at("config").get<std::map<std::string, std::string>>();
  data.vocab_tokens = header.at("vocab").get<std::vector<std::string>>();

  for (const auto& entry : header.at("arrays")) {
    const std::string name = entry.at("name").get<std::string>();
    const Index rows = entry.at("rows").get<Index>();
    const Index cols = entry.at("cols").get<Index>();
    if (rows < 0 || cols < 0)
      throw std::runtime_error("checkpoint: negative shape for array " + name);
    Mat m(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) {
        char buf[sizeof(Scalar)];
        in.read(buf, sizeof(Scalar));
        if (!in)
          throw std::runtime_error("checkpoint: payload shorter than manifest for " +
                                   name + " in " + path);
        Scalar v;
        std::memcpy(&v, buf, sizeof(Scalar));
        m(r, c) = v;
      }
    data.arrays.emplace_back(name, std::move(m));
  }
  in.peek();
  if (!in.eof())
    throw std::runtime_error("checkpoint: trailing bytes after declared arrays in " + path);
  return data;
}

std::string sha256_hex(const void* data, std::size_t len) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw std::runtime_error("sha256: cannot allocate context");
  bool ok = EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 &&
            EVP_DigestUpdate(ctx, data, len) == 1 &&
            EVP_DigestFinal_ex(ctx, digest, &digest_len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("sha256: digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(digest_len * 2);
  for (unsigned int i = 0; i < digest_len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

std::string params_hash(const std::vector<const Parameter*>& params) {
  std::string bytes;
  for (const Parameter* p : params) append_mat_bytes(bytes, p->value);
  return sha256_hex(bytes.data(), bytes.size());
}

}  // namespace emb2emb
