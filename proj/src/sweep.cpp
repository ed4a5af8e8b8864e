#include "emb2emb/sweep.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <stdexcept>

namespace emb2emb {

namespace {

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

void append_value(std::string& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

std::string SweepResult::csv(bool include_seconds) const {
  std::string out = "sweep_param,value,accuracy,self_bleu,bleu,sari";
  if (include_seconds) out += ",seconds";
  out += ",checkpoint_hash\n";
  for (const TradeoffPoint& p : points) {
    out += sanitize(p.sweep_param);
    out += ',';
    append_value(out, static_cast<double>(p.value));
    for (double v : {p.accuracy, p.self_bleu, p.bleu, p.sari}) {
      out += ',';
      append_value(out, v);
    }
    if (include_seconds) {
      out += ',';
      append_value(out, p.seconds);
    }
    out += ',';
    out += p.failed ? "FAILED:" + sanitize(p.error) : sanitize(p.checkpoint_hash);
    out += '\n';
  }
  return out;
}

SweepResult tradeoff_sweep(const std::string& param, const std::vector<Scalar>& grid,
                           const PointFn& fn) {
  if (grid.empty()) throw std::invalid_argument("tradeoff_sweep: empty grid");
  SweepResult result;
  for (const Scalar value : grid) {
    const auto start = std::chrono::steady_clock::now();
    TradeoffPoint point;
    try {
      point = fn(value);
    } catch (const std::exception& e) {
      point = TradeoffPoint{};
      point.failed = true;
      point.error = e.what();
    }
    point.sweep_param = param;
    point.value = value;
    point.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.points.push_back(std::move(point));
  }
  return result;
}

double selection_score(const SelectionRow& row) {
  if (row.bleus.size() != row.accuracies.size())
    throw std::invalid_argument("selection row: misaligned BLEU/accuracy lists");
  double score = 0;
  for (std::size_t i = 0; i < row.bleus.size(); ++i)
    score += row.bleus[i] + row.accuracies[i];
  return score;
}

Scalar select_lambda_adv(const std::vector<SelectionRow>& table) {
  if (table.empty()) throw std::invalid_argument("selection: empty table");
  std::size_t best = 0;
  double best_score = selection_score(table[0]);
  for (std::size_t i = 1; i < table.size(); ++i) {
    const double s = selection_score(table[i]);
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  return table[best].lambda_adv;
}

}  // namespace emb2emb
