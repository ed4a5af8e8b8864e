#pragma once

#include <functional>
#include <string>
#include <vector>

#include "emb2emb/types.hpp"

namespace emb2emb {

struct TradeoffPoint {
  std::string sweep_param;  // "lambda_sty" | "lambda_adv" | "multiplier" | "threshold"
  Scalar value = 0;
  double accuracy = 0;
  double self_bleu = 0;
  double bleu = 0;
  double sari = 0;
  double seconds = 0;
  std::string checkpoint_hash;
  bool failed = false;
  std::string error;
};

struct SweepResult {
  std::vector<TradeoffPoint> points;
  // seconds is wall-clock and thus excluded from determinism guarantees;
  // callers comparing runs should drop it.
  std::string csv(bool include_seconds = true) const;
};

// Evaluates fn over the grid, timing each point; exceptions become failed
// rows and the sweep continues.
using PointFn = std::function<TradeoffPoint(Scalar value)>;
SweepResult tradeoff_sweep(const std::string& param, const std::vector<Scalar>& grid,
                           const PointFn& fn);

// Model-selection table: one row per lambda_adv candidate with BLEU and
// accuracy measured at every lambda_sty grid value.
struct SelectionRow {
  Scalar lambda_adv = 0;
  std::vector<double> bleus;
  std::vector<double> accuracies;
};

double selection_score(const SelectionRow& row);  // sum of BLEU + accuracy

// Largest-score candidate; ties go to the earliest row. Throws on empty table.
Scalar select_lambda_adv(const std::vector<SelectionRow>& table);

}  // namespace emb2emb
