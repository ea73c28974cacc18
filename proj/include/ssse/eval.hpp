#pragma once

#include "ssse/fisher.hpp"
#include "ssse/models.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ssse {

/// Value returned by the normalised ratios when both distances vanish.
inline constexpr double kTieRatio = 0.5;

/// Sample ids for the four evaluation splits.
struct SplitSet {
  std::vector<SampleId> lko_train;     // D \ S
  std::vector<SampleId> removed;       // S
  std::vector<SampleId> lko_test;      // T \ T_a
  std::vector<SampleId> removed_test;  // T_a

  void validate() const;
};

using ConfusionMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Mann-Whitney AUC with ties counted 1/2. Returns 0 when only one label is
/// present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Per-attribute AUC of `params` on `samples` (multi-attribute tasks).
std::vector<double> attribute_aucs(const ModelParams& params, const Dataset& samples);

/// Sum over attributes of |AUC_a(theta1) - AUC_a(theta2)|.
double performance_similarity(const ModelParams& theta1, const ModelParams& theta2, const Dataset& samples);

/// a / (a + b), or kTieRatio when both are zero.
double normalized_ratio(double a, double b);

/// D_S(hat, star) / (D_S(hat, star) + D_S(hat, retrain)); 1 means hat matches
/// the retrained model on S.
double similarity_ratio(const ModelParams& theta_hat, const ModelParams& theta_star,
                        const ModelParams& theta_retrain, const Dataset& removed_samples);

/// Argmax prediction per sample, ties resolved to the lowest class index.
std::vector<int> predict_classes(const ModelParams& params, const Matrix& features);

/// Entry (i, j) counts samples of true class i predicted as j.
ConfusionMatrix confusion_matrix(const ModelParams& theta, const Dataset& samples);

double confusion_distance(const ModelParams& theta1, const ModelParams& theta2, const Dataset& samples);

/// S_S(hat, retrain) / (S_S(hat, star) + S_S(hat, retrain)); below 0.5 means
/// hat is closer to the retrained model.
double normalized_confusion_distance(const ModelParams& theta_hat, const ModelParams& theta_star,
                                     const ModelParams& theta_retrain, const Dataset& removed_samples);

double normalized_param_distance(const ModelParams& theta_hat, const ModelParams& theta_star,
                                 const ModelParams& theta_retrain);

/// Mean accuracy: class argmax for multinomial tasks, p > 0.5 per attribute
/// averaged over attributes for multi-attribute tasks.
double accuracy(const ModelParams& params, const Dataset& samples);

struct SplitMetrics {
  Index size = 0;
  std::optional<double> accuracy;  // empty for an empty split
  std::optional<double> loss;
};

struct EvalReport {
  double epsilon = 0.0;
  SplitMetrics lko_train;
  SplitMetrics removed;
  SplitMetrics lko_test;
  SplitMetrics removed_test;
  double loss_lko = 0.0;       // L_{-S}(theta)
  double grad_norm_lko = 0.0;  // ||grad L_{-S}(theta)||
  std::vector<double> auc_per_attribute;  // on S, multi-attribute only
  ConfusionMatrix confusion;              // on S, multinomial only
  std::optional<double> gamma;            // similarity ratio
  std::optional<double> delta;            // normalised confusion distance
  std::optional<double> param_dist_normalized;
};

/// Split-wise metrics of a single model; the comparison fields stay empty.
EvalReport evaluate_model(const ModelParams& theta, const Dataset& train, const Dataset& test,
                          const SplitSet& splits, const LossConfig& cfg);

/// Full report for an erased model compared against theta* and the
/// retrained reference.
EvalReport evaluate_erasure(const ModelParams& theta_hat, const ModelParams& theta_star,
                            const ModelParams& theta_retrain, const Dataset& train, const Dataset& test,
                            const SplitSet& splits, const LossConfig& cfg);

enum class SweepCriterion { MaxGamma, MinDelta };

std::string criterion_name(SweepCriterion c);
SweepCriterion parse_criterion(const std::string& name);

struct SweepResult {
  SweepCriterion criterion = SweepCriterion::MinDelta;
  double best_epsilon = 0.0;
  std::size_t best_index = 0;
  std::vector<EvalReport> reports;  // grid order
};

/// Evaluates ssse_update for every epsilon in `grid` (strictly increasing) and
/// picks argmax gamma / argmin delta, lowest epsilon on ties.
SweepResult epsilon_sweep(const ModelParams& theta_star, const InverseFisher& finv, const Dataset& train,
                          const Dataset& test, const SplitSet& splits, const ModelParams& theta_retrain,
                          std::span<const double> grid, SweepCriterion criterion, const LossConfig& cfg);

/// Index of the best report by criterion, lowest index on ties.
std::size_t select_best(std::span<const EvalReport> reports, SweepCriterion criterion);

struct GridSpec {
  double x_min = -3.0, x_max = 3.0;
  double y_min = -3.0, y_max = 3.0;
  Index nx = 101, ny = 101;

  /// Row-major grid points, x varying fastest.
  Matrix points() const;
};

/// Fraction of grid points where the two models predict differently.
double boundary_disagreement(const ModelParams& theta_a, const ModelParams& theta_b, const GridSpec& grid);

/// Hard predictions on arbitrary points: class index, or for multi-attribute
/// models the bit pattern of attributes with p > 0.5.
std::vector<std::int64_t> predict_labels(const ModelParams& params, const Matrix& points);

/// One `key = value` record per report; field names are stable.
std::string format_report_text(std::span<const EvalReport> reports, const std::string& title);
/// Header plus one row per report: epsilon, gamma, delta, param_dist, split
/// accuracies and losses.
std::string format_report_csv(std::span<const EvalReport> reports);

}  // namespace ssse
