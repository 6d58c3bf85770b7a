#pragma once

#include "dekgci/types.hpp"

#include <string>
#include <vector>

namespace dekgci {

// k algorithms scored on N problems, higher is better.
struct ScoreMatrix {
  std::vector<std::string> algorithms;  // k row names
  std::vector<std::string> problems;    // N column names
  Mat scores;                           // k x N
};

// Tab/space-separated file: header row of problem names, then one row per
// algorithm starting with its name. Requires k >= 2 and N >= 2.
ScoreMatrix load_score_matrix(const std::string& path);

struct FriedmanResult {
  Vec avg_ranks;   // per algorithm, 1 = best, ties averaged
  Scalar chi2 = 0; // Friedman statistic
  Scalar ff = 0;   // Iman-Davenport statistic
  Index n_problems = 0;
  Index n_algorithms = 0;
};

// chi2 = [12N/(k(k+1))] sum R_j^2 - 3N(k+1); ff = (N-1) chi2/(N(k-1) - chi2).
// Throws when the ff denominator vanishes (unanimous rankings).
FriedmanResult friedman(const ScoreMatrix& sm);

struct HolmRow {
  std::string algorithm;
  Scalar avg_rank = 0;
  Scalar z = 0;
  Scalar p = 0;          // two-sided normal
  Scalar threshold = 0;  // alpha/(k-i) in ascending-p order
  bool rejected = false; // step-down decision
};

// Compares every algorithm against the control (best average rank by
// default) with z = (R_i - R_0)/SE, SE = sqrt(k(k+1)/(6N)), ordered by
// descending z. Rows after the first non-rejection stay unrejected.
std::vector<HolmRow> holm_posthoc(const FriedmanResult& fr, const ScoreMatrix& sm,
                                  Scalar alpha = 0.05, Index control = -1);

}  // namespace dekgci
