#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "emb2emb/graph.hpp"
#include "emb2emb/types.hpp"

namespace emb2emb {

inline constexpr int kCheckpointVersion = 1;

// On-disk model container: a 4-byte little-endian header length, a JSON
// header (version, kind, dtype, endianness, flat config map, optional vocab
// token list, array name/shape manifest), then the arrays as raw row-major
// little-endian scalars in manifest order.
struct CheckpointData {
  std::string kind;                                   // "autoencoder" | ...
  std::map<std::string, std::string> config;
  std::vector<std::string> vocab_tokens;
  std::vector<std::pair<std::string, Mat>> arrays;
};

void save_checkpoint(const std::string& path, const CheckpointData& data);

// Throws on unreadable file, version/dtype/endianness mismatch, or shape
// disagreement between manifest and payload. If expected_kind is nonempty,
// a different kind is a hard error.
CheckpointData load_checkpoint(const std::string& path,
                               const std::string& expected_kind = "");

std::string sha256_hex(const void* data, std::size_t len);

// Hash of the parameters' raw little-endian bytes in the given order — the
// same bytes a checkpoint would store, so in-memory and on-disk hashes of
// identical values agree.
std::string params_hash(const std::vector<const Parameter*>& params);
inline std::string params_hash(const ParamSet& ps) { return params_hash(ps.all()); }

}  // namespace emb2emb
