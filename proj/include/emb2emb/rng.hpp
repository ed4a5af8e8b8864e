#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace emb2emb {

// One root seed fans out into independent named streams. Consumers pull
// their own stream, so enabling or disabling one of them (say inference-time
// refinement) never shifts the draws seen by another (say training shuffles).
class RngHub {
 public:
  explicit RngHub(std::uint64_t root_seed) : root_(root_seed) {}

  std::mt19937_64 stream(std::string_view name, std::uint64_t salt = 0) const {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a over the stream name
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(root_),
                      static_cast<std::uint32_t>(root_ >> 32),
                      static_cast<std::uint32_t>(h),
                      static_cast<std::uint32_t>(h >> 32),
                      static_cast<std::uint32_t>(salt),
                      static_cast<std::uint32_t>(salt >> 32)};
    return std::mt19937_64(seq);
  }

  std::uint64_t root() const { return root_; }

 private:
  std::uint64_t root_;
};

}  // namespace emb2emb
