#include "emb2emb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "emb2emb/checkpoint.hpp"

namespace emb2emb {

namespace {

using GramCounts = std::map<std::string, double>;

std::string join_gram(const Tokens& toks, std::size_t start, int n) {
  std::string key = toks[start];
  for (int k = 1; k < n; ++k) {
    key += ' ';
    key += toks[start + static_cast<std::size_t>(k)];
  }
  return key;
}

GramCounts gram_counts(const Tokens& toks, int n) {
  GramCounts out;
  if (static_cast<int>(toks.size()) < n) return out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= toks.size(); ++i)
    out[join_gram(toks, i, n)] += 1;
  return out;
}

// multiset intersection: min of counts over shared keys
GramCounts intersect(const GramCounts& a, const GramCounts& b) {
  GramCounts out;
  for (const auto& [k, va] : a) {
    auto it = b.find(k);
    if (it == b.end()) continue;
    const double m = std::min(va, it->second);
    if (m > 0) out[k] = m;
  }
  return out;
}

// multiset difference: positive part of a - b
GramCounts subtract(const GramCounts& a, const GramCounts& b) {
  GramCounts out;
  for (const auto& [k, va] : a) {
    auto it = b.find(k);
    const double d = va - (it == b.end() ? 0.0 : it->second);
    if (d > 0) out[k] = d;
  }
  return out;
}

struct BleuTallies {
  std::vector<double> matched;
  std::vector<double> total;
  double hyp_len = 0;
  double ref_len = 0;
};

void tally_sentence(const Tokens& hyp, const std::vector<Tokens>& refs, int max_n,
                    BleuTallies& t) {
  if (refs.empty()) throw std::invalid_argument("bleu: empty reference set");
  for (int n = 1; n <= max_n; ++n) {
    const GramCounts hyp_counts = gram_counts(hyp, n);
    double matched = 0, total = 0;
    for (const auto& [gram, count] : hyp_counts) {
      double clip = 0;
      for (const Tokens& ref : refs) {
        const GramCounts rc = gram_counts(ref, n);
        auto it = rc.find(gram);
        if (it != rc.end()) clip = std::max(clip, it->second);
      }
      matched += std::min(count, clip);
      total += count;
    }
    t.matched[static_cast<std::size_t>(n - 1)] += matched;
    t.total[static_cast<std::size_t>(n - 1)] += total;
  }
  t.hyp_len += static_cast<double>(hyp.size());
  // closest reference length; ties go to the shorter reference
  double best = static_cast<double>(refs[0].size());
  for (const Tokens& ref : refs) {
    const double len = static_cast<double>(ref.size());
    const double d_new = std::abs(len - static_cast<double>(hyp.size()));
    const double d_old = std::abs(best - static_cast<double>(hyp.size()));
    if (d_new < d_old || (d_new == d_old && len < best)) best = len;
  }
  t.ref_len += best;
}

double brevity_penalty(double hyp_len, double ref_len) {
  if (hyp_len <= 0) return 0;
  return hyp_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
}

// --- SARI components, following the original reference implementation -------
// keep: F1 of (source ∩ candidate) n-grams against references; delete:
// precision of (source − candidate) against (source − references); add: F1 on
// the supporting sets. Source/candidate counts are scaled by the number of
// references so multi-reference corpora weigh them comparably.
struct SariComponents {
  double keep = 0, del = 0, add = 0;
};

SariComponents sari_ngram(const GramCounts& sgrams, const GramCounts& cgrams,
                          const std::vector<GramCounts>& rgrams, double numref) {
  GramCounts rall;
  for (const GramCounts& r : rgrams)
    for (const auto& [k, v] : r) rall[k] += v;

  GramCounts s_rep, c_rep;
  for (const auto& [k, v] : sgrams) s_rep[k] = v * numref;
  for (const auto& [k, v] : cgrams) c_rep[k] = v * numref;

  SariComponents out;

  const GramCounts keep = intersect(s_rep, c_rep);
  const GramCounts keep_good = intersect(keep, rall);
  const GramCounts keep_all = intersect(s_rep, rall);
  double p1 = 0, p2 = 0;
  for (const auto& [k, good] : keep_good) {
    p1 += good / keep.at(k);
    p2 += good / keep_all.at(k);
  }
  const double keep_precision = keep.empty() ? 0 : p1 / static_cast<double>(keep.size());
  const double keep_recall =
      keep_all.empty() ? 0 : p2 / static_cast<double>(keep_all.size());
  if (keep_precision > 0 || keep_recall > 0)
    out.keep = 2 * keep_precision * keep_recall / (keep_precision + keep_recall);

  const GramCounts del = subtract(s_rep, c_rep);
  const GramCounts del_good = subtract(del, rall);
  double d1 = 0;
  for (const auto& [k, good] : del_good) d1 += good / del.at(k);
  out.del = del.empty() ? 0 : d1 / static_cast<double>(del.size());

  double add_hits = 0, add_proposed = 0, add_possible = 0;
  for (const auto& [k, v] : cgrams) {
    if (sgrams.count(k)) continue;
    add_proposed += 1;
    if (rall.count(k)) add_hits += 1;
  }
  for (const auto& [k, v] : rall)
    if (!sgrams.count(k)) add_possible += 1;
  const double add_precision = add_proposed > 0 ? add_hits / add_proposed : 0;
  const double add_recall = add_possible > 0 ? add_hits / add_possible : 0;
  if (add_precision > 0 || add_recall > 0)
    out.add = 2 * add_precision * add_recall / (add_precision + add_recall);

  return out;
}

}  // namespace

Tokens surface_tokens(const TokenSeq& t, const Vocab& v) {
  return tokenize(decode_tokens(t, v));
}

double corpus_bleu(const std::vector<Tokens>& hypotheses,
                   const std::vector<std::vector<Tokens>>& references, int max_n) {
  if (hypotheses.empty()) throw std::invalid_argument("bleu: no hypotheses");
  if (hypotheses.size() != references.size())
    throw std::invalid_argument("bleu: hypothesis/reference count mismatch");
  if (max_n < 1) throw std::invalid_argument("bleu: max_n must be >= 1");

  BleuTallies t;
  t.matched.assign(static_cast<std::size_t>(max_n), 0.0);
  t.total.assign(static_cast<std::size_t>(max_n), 0.0);
  for (std::size_t i = 0; i < hypotheses.size(); ++i)
    tally_sentence(hypotheses[i], references[i], max_n, t);

  if (t.hyp_len <= 0) return 0;
  double log_precision = 0;
  for (int n = 0; n < max_n; ++n) {
    const auto i = static_cast<std::size_t>(n);
    if (t.total[i] <= 0 || t.matched[i] <= 0) return 0;  // unsmoothed
    log_precision += std::log(t.matched[i] / t.total[i]) / max_n;
  }
  return brevity_penalty(t.hyp_len, t.ref_len) * std::exp(log_precision);
}

double sentence_bleu(const Tokens& hypothesis, const std::vector<Tokens>& references,
                     int max_n, double eps) {
  BleuTallies t;
  t.matched.assign(static_cast<std::size_t>(max_n), 0.0);
  t.total.assign(static_cast<std::size_t>(max_n), 0.0);
  tally_sentence(hypothesis, references, max_n, t);
  if (t.hyp_len <= 0) return 0;
  double log_precision = 0;
  for (int n = 0; n < max_n; ++n) {
    const auto i = static_cast<std::size_t>(n);
    const double p =
        t.total[i] > 0 ? std::max(t.matched[i], eps) / t.total[i] : eps;
    log_precision += std::log(p) / max_n;
  }
  return brevity_penalty(t.hyp_len, t.ref_len) * std::exp(log_precision);
}

double sari_sentence(const Tokens& source, const Tokens& hypothesis,
                     const std::vector<Tokens>& references) {
  if (references.empty()) throw std::invalid_argument("sari: empty reference set");
  const double numref = static_cast<double>(references.size());
  double keep = 0, del = 0, add = 0;
  for (int n = 1; n <= 4; ++n) {
    std::vector<GramCounts> rgrams;
    rgrams.reserve(references.size());
    for (const Tokens& r : references) rgrams.push_back(gram_counts(r, n));
    const SariComponents c =
        sari_ngram(gram_counts(source, n), gram_counts(hypothesis, n), rgrams, numref);
    keep += c.keep;
    del += c.del;
    add += c.add;
  }
  return (keep / 4 + del / 4 + add / 4) / 3;
}

double sari(const std::vector<Tokens>& sources, const std::vector<Tokens>& hypotheses,
            const std::vector<std::vector<Tokens>>& references) {
  if (sources.size() != hypotheses.size() || sources.size() != references.size())
    throw std::invalid_argument("sari: misaligned corpus triples");
  if (sources.empty()) throw std::invalid_argument("sari: empty corpus");
  double sum = 0;
  for (std::size_t i = 0; i < sources.size(); ++i)
    sum += sari_sentence(sources[i], hypotheses[i], references[i]);
  return sum / static_cast<double>(sources.size());
}

double self_bleu(const std::vector<Tokens>& inputs, const std::vector<Tokens>& outputs) {
  if (inputs.size() != outputs.size())
    throw std::invalid_argument("self-bleu: input/output count mismatch");
  std::vector<std::vector<Tokens>> refs;
  refs.reserve(inputs.size());
  for (const Tokens& in : inputs) refs.push_back({in});
  return corpus_bleu(outputs, refs);
}

int Judge::predict(const Tokens& sentence) const {
  TokenSeq seq;
  for (const std::string& tok : sentence) {
    seq.ids.push_back(ae.vocab().id(tok));
    if (seq.ids.size() >= kMaxTokens) break;
  }
  if (seq.empty()) return -1;
  const Mat z = ae.encode_one(seq);
  return clf.prob(z)(0, 0) > Scalar(0.5) ? 1 : 0;
}

void Judge::save(const std::string& prefix) const {
  ae.save(prefix + ".ae");
  clf.save(prefix + ".clf", {{"held_out_accuracy", std::to_string(held_out_accuracy)}});
}

Judge Judge::load(const std::string& prefix) {
  Autoencoder ae = Autoencoder::load(prefix + ".ae");
  MlpBinaryClassifier clf = MlpBinaryClassifier::load(prefix + ".clf");
  const CheckpointData raw = load_checkpoint(prefix + ".clf", "classifier");
  Scalar acc = -1;
  if (auto it = raw.config.find("held_out_accuracy"); it != raw.config.end())
    acc = static_cast<Scalar>(std::stod(it->second));
  return Judge{std::move(ae), std::move(clf), acc};
}

double transfer_accuracy(const std::vector<Tokens>& outputs, int target_label,
                         const Judge& judge) {
  if (outputs.empty()) throw std::invalid_argument("transfer accuracy: no outputs");
  if (judge.held_out_accuracy < 0)
    throw std::logic_error("transfer accuracy: judge is untrained");
  if (target_label != 0 && target_label != 1)
    throw std::invalid_argument("transfer accuracy: label must be 0 or 1");
  double hits = 0;
  for (const Tokens& out : outputs)
    if (judge.predict(out) == target_label) hits += 1;
  return hits / static_cast<double>(outputs.size());
}

EvalReport bleu_report(const std::vector<Tokens>& hypotheses,
                       const std::vector<std::vector<Tokens>>& references) {
  EvalReport rep;
  rep.metric = "bleu";
  rep.level = "corpus";
  rep.corpus_value = corpus_bleu(hypotheses, references);
  rep.per_sentence.reserve(hypotheses.size());
  for (std::size_t i = 0; i < hypotheses.size(); ++i)
    rep.per_sentence.push_back(sentence_bleu(hypotheses[i], references[i]));
  return rep;
}

EvalReport sari_report(const std::vector<Tokens>& sources,
                       const std::vector<Tokens>& hypotheses,
                       const std::vector<std::vector<Tokens>>& references) {
  EvalReport rep;
  rep.metric = "sari";
  rep.level = "corpus";
  rep.corpus_value = sari(sources, hypotheses, references);
  rep.per_sentence.reserve(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i)
    rep.per_sentence.push_back(sari_sentence(sources[i], hypotheses[i], references[i]));
  return rep;
}

}  // namespace emb2emb
