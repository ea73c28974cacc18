#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace ssse {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SampleId = std::int64_t;

enum class TaskKind { MultiAttribute, Multinomial };

/// Feature matrix plus either per-attribute 0/1 labels or class labels.
///
/// Class labels are 0-based. Every sample carries a unique id that survives
/// subsetting, so splits and removal sets can be expressed by id.
class Dataset {
 public:
  /// Empty placeholder; size() == 0.
  Dataset() = default;

  static Dataset multi_attribute(Matrix features, Eigen::MatrixXi attributes,
                                 std::vector<SampleId> ids = {});
  static Dataset multinomial(Matrix features, std::vector<int> classes, int num_classes,
                             std::vector<SampleId> ids = {});

  TaskKind task() const { return task_; }
  Index size() const { return features_.rows(); }
  Index dim() const { return features_.cols(); }
  /// Number of attributes (multi-attribute) or classes (multinomial).
  Index num_outputs() const { return num_outputs_; }

  const Matrix& features() const { return features_; }
  const Eigen::MatrixXi& attributes() const { return attributes_; }
  const std::vector<int>& classes() const { return classes_; }
  const std::vector<SampleId>& ids() const { return ids_; }

  /// Label row i as doubles: 0/1 per attribute, or one-hot over classes.
  Vector target(Index row) const;
  /// All targets stacked, n x num_outputs.
  Matrix targets() const;

  Index row_of(SampleId id) const;
  bool contains(SampleId id) const;

  Dataset select_rows(std::span<const Index> rows) const;
  Dataset with_ids(std::span<const SampleId> ids) const;
  Dataset without_ids(std::span<const SampleId> ids) const;

 private:
  void validate() const;

  TaskKind task_ = TaskKind::Multinomial;
  Matrix features_;
  Eigen::MatrixXi attributes_;
  std::vector<int> classes_;
  Index num_outputs_ = 0;
  std::vector<SampleId> ids_;
};

enum class ShapeKind { MultiAttrLinear, MultinomialLinear, Mlp };

/// Parameter layout.
///
/// Linear shapes store an (outputs x inputs) weight matrix row-major, so the
/// parameter index of weight (k, j) is k * inputs + j. The MLP stores the
/// (hidden x inputs) input layer followed by the (outputs x hidden) head, both
/// row-major. No biases anywhere.
struct ModelShape {
  ShapeKind kind = ShapeKind::MultinomialLinear;
  Index inputs = 0;
  Index hidden = 0;
  Index outputs = 0;

  static ModelShape multi_attr_linear(Index attributes, Index inputs);
  static ModelShape multinomial_linear(Index classes, Index inputs);
  static ModelShape mlp(Index inputs, Index hidden, Index classes);

  Index param_count() const;
  bool is_linear() const { return kind != ShapeKind::Mlp; }
  TaskKind task() const {
    return kind == ShapeKind::MultiAttrLinear ? TaskKind::MultiAttribute : TaskKind::Multinomial;
  }
  std::string name() const;

  bool operator==(const ModelShape&) const = default;
};

struct ModelParams {
  ModelShape shape;
  Vector values;
  std::uint64_t seed = 0;

  ModelParams() = default;
  ModelParams(ModelShape shape, Vector values, std::uint64_t seed = 0);

  static ModelParams zeros(const ModelShape& shape);
  Index size() const { return values.size(); }
};

struct LossConfig {
  double l2_coeff = 0.0;
};

/// Probabilities are clamped to this range before taking logs.
inline constexpr double kProbClamp = 1e-12;
/// Default size limit for `hessian_dense`.
inline constexpr Index kDenseHessianCap = 4096;

void check_compatible(const ModelShape& shape, const Dataset& data);

/// n x outputs matrix: softmax rows for multinomial and MLP shapes, one
/// independent sigmoid per column for multi-attribute shapes.
Matrix predict_proba(const ModelParams& params, const Matrix& features);

/// (1/n) sum_i -log p(y_i | x_i) + (l2/2) ||theta||^2.
double loss(const ModelParams& params, const Dataset& data, const LossConfig& cfg);

/// Per-sample loss gradient at dataset row `row`. Carries the full
/// l2 * theta term, so the mean of per-sample gradients is grad L.
Vector grad(const ModelParams& params, const Dataset& data, Index row, const LossConfig& cfg);

/// n x d matrix whose row i is grad(params, data, i, cfg).
Matrix per_sample_grads(const ModelParams& params, const Dataset& data, const LossConfig& cfg);

/// Gradient of `loss`.
Vector mean_grad(const ModelParams& params, const Dataset& data, const LossConfig& cfg);

/// Exact Hessian of `loss` for linear shapes with d <= cap.
Eigen::MatrixXd hessian_dense(const ModelParams& params, const Dataset& data,
                              const LossConfig& cfg, Index cap = kDenseHessianCap);

/// Dense (1/n) sum_i g_i g_i^T with g_i = grad(params, data, i, cfg).
Eigen::MatrixXd empirical_fisher_dense(const ModelParams& params, const Dataset& data,
                                       const LossConfig& cfg);

struct FisherHessianRatio {
  double margin = 0.0;           // epsilon inferred from the data
  double margin_spread = 0.0;    // max deviation of per-sample margins from `margin`
  double predicted_scale = 0.0;  // H ~ predicted_scale * F
  double mean_rel_deviation = 0.0;
  double max_rel_deviation = 0.0;
  std::vector<std::string> warnings;
};

/// Compares the unregularised Hessian with a scalar multiple of the empirical
/// Fisher on data where every sample has the same wrong-class probability.
///
/// Multinomial: scale 1 / (eps (c - 1)). Binary single-attribute: scale
/// (1 - eps) / eps, which is exact because both matrices are then
/// proportional to sum x x^T. Deviations are entrywise, divided by max |H|.
FisherHessianRatio fisher_hessian_ratio_check(const ModelParams& params, const Dataset& data,
                                              double margin_tolerance = 1e-6);

/// Entrywise max and mean of |a - b| / max|a|.
std::pair<double, double> relative_entry_deviation(const Eigen::MatrixXd& a,
                                                   const Eigen::MatrixXd& b);

}  // namespace ssse
