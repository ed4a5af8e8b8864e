#pragma once

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "emb2emb/types.hpp"

namespace emb2emb {

// Whitespace tokenization; runs of spaces/tabs collapse.
std::vector<std::string> tokenize(const std::string& line);

// Word-level vocabulary with fixed reserved ids PAD=0, BOS=1, EOS=2, UNK=3.
class Vocab {
 public:
  Vocab();

  // Most frequent tokens kept up to cap (including the 4 reserved slots);
  // ties broken by first occurrence in the corpus.
  static Vocab build(const std::vector<std::string>& lines, std::size_t cap = 30000);

  int id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnkId : it->second;
  }
  const std::string& token(int id) const;
  std::size_t size() const { return id_to_token_.size(); }
  bool contains(const std::string& token) const {
    return token_to_id_.count(token) != 0;
  }

  // One token per line, reserved tokens on the first four lines, so the
  // 0-based line number is the id.
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  // Rebuilds from a full token list (reserved tokens first), as stored in
  // checkpoints; validates the reserved prefix.
  static Vocab from_tokens(const std::vector<std::string>& tokens);

  const std::vector<std::string>& tokens() const { return id_to_token_; }

 private:
  int add(const std::string& token);
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

// A sentence as non-reserved-or-UNK token ids; BOS/EOS/PAD are added by the
// model pipeline, never stored here.
struct TokenSeq {
  std::vector<int> ids;
  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  bool operator==(const TokenSeq&) const = default;
};

// OOV maps to UNK; truncated to kMaxTokens.
TokenSeq encode_text(const std::string& s, const Vocab& v);
// Joins with single spaces; stops before EOS; skips PAD/BOS.
std::string decode_tokens(const TokenSeq& t, const Vocab& v);

struct ParallelCorpus {
  std::vector<TokenSeq> source;
  std::vector<TokenSeq> target;
  std::size_t size() const { return source.size(); }
};

struct LabeledCorpus {
  std::vector<TokenSeq> items;
  std::vector<int> labels;  // 0 or 1
  std::size_t size() const { return items.size(); }
};

struct NoiseConfig {
  Scalar p_drop = Scalar(0.1);
};

// Deletes each token independently with probability p_drop; if everything
// would be deleted, one uniformly chosen token is retained so the encoder
// never sees an empty input. Survivor order is preserved.
TokenSeq apply_noise(const TokenSeq& t, const NoiseConfig& cfg, std::mt19937_64& rng);

// Right-padded batch with true lengths; `indices` point back into the corpus
// so callers can fetch the aligned target/label.
struct Batch {
  std::vector<std::vector<int>> rows;   // padded to max_len with PAD
  std::vector<Index> lengths;
  std::vector<std::size_t> indices;
  Index max_len = 0;
  std::size_t size() const { return rows.size(); }

  // Token column t across the batch, and its {0,1} mask as a B x 1 matrix.
  std::vector<int> tokens_at(Index t) const;
  Mat mask_at(Index t) const;
};

std::vector<Batch> make_batches(const std::vector<TokenSeq>& corpus,
                                std::size_t batch_size, bool shuffle,
                                std::mt19937_64& rng);

// --- file I/O ---------------------------------------------------------------

std::vector<std::string> read_lines(const std::string& path);

// Two aligned one-sentence-per-line files.
ParallelCorpus load_parallel(const std::string& source_path,
                             const std::string& target_path, const Vocab& v);
// `label<TAB>text` lines with labels "0"/"1".
LabeledCorpus load_labeled(const std::string& path, const Vocab& v);
// Per-class files: everything in neg_path gets label 0, pos_path label 1.
LabeledCorpus load_labeled_pair(const std::string& neg_path,
                                const std::string& pos_path, const Vocab& v);

}  // namespace emb2emb
