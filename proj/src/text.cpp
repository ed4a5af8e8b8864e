#include "emb2emb/text.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace emb2emb {

namespace {
const char* kReserved[kNumReserved] = {"<pad>", "<bos>", "<eos>", "<unk>"};
}

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream iss(line);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

Vocab::Vocab() {
  for (const char* t : kReserved) add(t);
}

int Vocab::add(const std::string& token) {
  const int id = static_cast<int>(id_to_token_.size());
  id_to_token_.push_back(token);
  token_to_id_.emplace(token, id);
  return id;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= static_cast<int>(id_to_token_.size()))
    throw std::out_of_range("vocab: id " + std::to_string(id) + " out of range");
  return id_to_token_[static_cast<std::size_t>(id)];
}

Vocab Vocab::build(const std::vector<std::string>& lines, std::size_t cap) {
  if (cap < 5) throw std::invalid_argument("build_vocab: cap must be at least 5");
  struct Entry {
    std::size_t count = 0;
    std::size_t first_seen = 0;
  };
  std::unordered_map<std::string, Entry> counts;
  std::size_t position = 0;
  for (const std::string& line : lines) {
    for (std::string& tok : tokenize(line)) {
      auto [it, inserted] = counts.try_emplace(std::move(tok));
      if (inserted) it->second.first_seen = position++;
      ++it->second.count;
    }
  }
  std::vector<std::pair<std::string, Entry>> order(counts.begin(), counts.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) return a.second.count > b.second.count;
    return a.second.first_seen < b.second.first_seen;
  });

  Vocab v;
  const std::size_t room = cap - kNumReserved;
  for (std::size_t i = 0; i < order.size() && i < room; ++i) v.add(order[i].first);
  return v;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("vocab: cannot write " + path);
  for (const std::string& t : id_to_token_) out << t << "\n";
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("vocab: cannot read " + path);
  Vocab v;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    if (line_no < static_cast<int>(kNumReserved)) {
      if (line != kReserved[line_no])
        throw std::runtime_error("vocab: line " + std::to_string(line_no) +
                                 " must be the reserved token " +
                                 kReserved[line_no] + ", got '" + line + "'");
    } else {
      if (line.empty())
        throw std::runtime_error("vocab: empty token on line " + std::to_string(line_no));
      if (v.token_to_id_.count(line))
        throw std::runtime_error("vocab: duplicate token '" + line + "'");
      v.add(line);
    }
    ++line_no;
  }
  if (line_no < static_cast<int>(kNumReserved))
    throw std::runtime_error("vocab: file " + path + " is missing reserved tokens");
  return v;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < kNumReserved)
    throw std::runtime_error("vocab: token list is missing reserved tokens");
  Vocab v;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i < kNumReserved) {
      if (tokens[i] != kReserved[i])
        throw std::runtime_error("vocab: token " + std::to_string(i) +
                                 " must be the reserved token " + kReserved[i] +
                                 ", got '" + tokens[i] + "'");
    } else {
      if (v.token_to_id_.count(tokens[i]))
        throw std::runtime_error("vocab: duplicate token '" + tokens[i] + "'");
      v.add(tokens[i]);
    }
  }
  return v;
}

TokenSeq encode_text(const std::string& s, const Vocab& v) {
  TokenSeq t;
  for (const std::string& tok : tokenize(s)) {
    if (t.ids.size() >= kMaxTokens) break;
    t.ids.push_back(v.id(tok));
  }
  return t;
}

std::string decode_tokens(const TokenSeq& t, const Vocab& v) {
  std::string out;
  for (int id : t.ids) {
    if (id == kEosId) break;
    if (id == kPadId || id == kBosId) continue;
    if (!out.empty()) out += ' ';
    out += v.token(id);
  }
  return out;
}

TokenSeq apply_noise(const TokenSeq& t, const NoiseConfig& cfg, std::mt19937_64& rng) {
  if (t.empty()) throw std::invalid_argument("apply_noise: empty sequence");
  if (cfg.p_drop < 0 || cfg.p_drop > 1)
    throw std::invalid_argument("apply_noise: p_drop must be in [0,1]");
  std::bernoulli_distribution drop(static_cast<double>(cfg.p_drop));
  TokenSeq out;
  out.ids.reserve(t.ids.size());
  for (int id : t.ids)
    if (!drop(rng)) out.ids.push_back(id);
  if (out.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, t.ids.size() - 1);
    out.ids.push_back(t.ids[pick(rng)]);
  }
  return out;
}

std::vector<int> Batch::tokens_at(Index t) const {
  std::vector<int> out(rows.size());
  for (std::size_t b = 0; b < rows.size(); ++b)
    out[b] = rows[b][static_cast<std::size_t>(t)];
  return out;
}

Mat Batch::mask_at(Index t) const {
  Mat m(static_cast<Index>(rows.size()), 1);
  for (std::size_t b = 0; b < rows.size(); ++b)
    m(static_cast<Index>(b), 0) = t < lengths[b] ? Scalar(1) : Scalar(0);
  return m;
}

std::vector<Batch> make_batches(const std::vector<TokenSeq>& corpus,
                                std::size_t batch_size, bool shuffle,
                                std::mt19937_64& rng) {
  if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (shuffle) std::shuffle(order.begin(), order.end(), rng);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    Batch b;
    b.indices.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
    b.max_len = 0;
    for (std::size_t idx : b.indices)
      b.max_len = std::max(b.max_len, static_cast<Index>(corpus[idx].size()));
    for (std::size_t idx : b.indices) {
      const TokenSeq& s = corpus[idx];
      std::vector<int> row(static_cast<std::size_t>(b.max_len), kPadId);
      std::copy(s.ids.begin(), s.ids.end(), row.begin());
      b.rows.push_back(std::move(row));
      b.lengths.push_back(static_cast<Index>(s.size()));
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

ParallelCorpus load_parallel(const std::string& source_path,
                             const std::string& target_path, const Vocab& v) {
  const auto src = read_lines(source_path);
  const auto tgt = read_lines(target_path);
  if (src.size() != tgt.size())
    throw std::runtime_error("parallel corpus line counts disagree: " +
                             std::to_string(src.size()) + " vs " +
                             std::to_string(tgt.size()));
  ParallelCorpus c;
  c.source.reserve(src.size());
  c.target.reserve(tgt.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    c.source.push_back(encode_text(src[i], v));
    c.target.push_back(encode_text(tgt[i], v));
  }
  return c;
}

LabeledCorpus load_labeled(const std::string& path, const Vocab& v) {
  LabeledCorpus c;
  std::size_t line_no = 0;
  for (const std::string& line : read_lines(path)) {
    ++line_no;
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected label<TAB>text");
    const std::string label = line.substr(0, tab);
    if (label != "0" && label != "1")
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": label must be 0 or 1, got '" + label + "'");
    c.items.push_back(encode_text(line.substr(tab + 1), v));
    c.labels.push_back(label == "1" ? 1 : 0);
  }
  return c;
}

LabeledCorpus load_labeled_pair(const std::string& neg_path,
                                const std::string& pos_path, const Vocab& v) {
  LabeledCorpus c;
  for (const std::string& line : read_lines(neg_path)) {
    if (line.empty()) continue;
    c.items.push_back(encode_text(line, v));
    c.labels.push_back(0);
  }
  for (const std::string& line : read_lines(pos_path)) {
    if (line.empty()) continue;
    c.items.push_back(encode_text(line, v));
    c.labels.push_back(1);
  }
  return c;
}

}  // namespace emb2emb
