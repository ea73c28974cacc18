#pragma once

#include "ssse/config.hpp"
#include "ssse/data.hpp"
#include "ssse/eval.hpp"
#include "ssse/fisher.hpp"
#include "ssse/training.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace ssse {

struct PreparedData {
  Dataset train;
  Dataset test;
  SplitSet splits;
  ModelShape shape;
};

/// Generates or loads the data, splits off the test set and builds the
/// removal splits.
PreparedData prepare_data(const ExperimentConfig& cfg);

FisherConfig fisher_config(const ExperimentConfig& cfg);
BlockSpec fisher_blocks(const ExperimentConfig& cfg, const ModelShape& shape);

struct SweepOutcome {
  PreparedData data;
  TrainResult original;
  TrainResult retrain;
  InverseFisher finv;
  SweepResult sweep;
  EvalReport original_report;
  EvalReport retrain_report;
};

/// train -> inverse Fisher -> retrain reference -> erase over the grid -> eval.
SweepOutcome run_sweep(const ExperimentConfig& cfg);

struct BoundaryDemo {
  double best_epsilon = 0.0;
  /// Fractions of grid points where each model disagrees with the retrained one.
  double original = 0.0;
  double ssse_best = 0.0;
  double influence_full = 0.0;
  double influence_lko = 0.0;
  std::string csv;      // x,y,original,retrain,ssse,influence_full,influence_lko
  std::string summary;  // key = value lines
};

/// 2D-only. The SSSE scale is the grid value with the smallest disagreement
/// against the retrained model, lowest epsilon on ties.
BoundaryDemo run_boundary_demo(const ExperimentConfig& cfg);

struct MethodResult {
  std::string method;
  std::string setting;  // e.g. "epsilon=0.5"
  EvalReport report;
  double acc_delta[4] = {0, 0, 0, 0};  // |acc - acc_retrain| per split
};

struct BaselineComparison {
  std::vector<MethodResult> methods;  // original, ssse, gradient_ascent, diag_scrub
  std::string text;
  std::string csv;
};

/// SSSE and the diagonal scrub each use their best grid epsilon under the
/// sweep criterion; gradient ascent uses baselines.ga_lr.
BaselineComparison run_baseline_comparison(const ExperimentConfig& cfg);

/// Exit codes: 0 success, 2 configuration or input error, 3 numeric failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumeric = 3;

/// Entry point behind the `ssse` executable; args exclude the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ssse
