#include "ssse/models.hpp"

#include "ssse/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace ssse {

// ---------------------------------------------------------------- Dataset

Dataset Dataset::multi_attribute(Matrix features, Eigen::MatrixXi attributes,
                                 std::vector<SampleId> ids) {
  Dataset d;
  d.task_ = TaskKind::MultiAttribute;
  d.features_ = std::move(features);
  d.attributes_ = std::move(attributes);
  d.num_outputs_ = d.attributes_.cols();
  if (ids.empty()) {
    ids.resize(static_cast<std::size_t>(d.features_.rows()));
    std::iota(ids.begin(), ids.end(), SampleId{0});
  }
  d.ids_ = std::move(ids);
  d.validate();
  return d;
}

Dataset Dataset::multinomial(Matrix features, std::vector<int> classes, int num_classes,
                             std::vector<SampleId> ids) {
  Dataset d;
  d.task_ = TaskKind::Multinomial;
  d.features_ = std::move(features);
  d.classes_ = std::move(classes);
  d.num_outputs_ = num_classes;
  if (ids.empty()) {
    ids.resize(static_cast<std::size_t>(d.features_.rows()));
    std::iota(ids.begin(), ids.end(), SampleId{0});
  }
  d.ids_ = std::move(ids);
  d.validate();
  return d;
}

void Dataset::validate() const {
  const Index n = features_.rows();
  if (n < 1) throw InvalidArgument("dataset must contain at least one sample");
  if (features_.cols() < 1) throw InvalidArgument("dataset must have at least one feature");
  if (!features_.allFinite()) throw InvalidArgument("dataset features must be finite");
  if (static_cast<Index>(ids_.size()) != n) throw InvalidArgument("ids length must equal n");
  std::unordered_set<SampleId> seen(ids_.begin(), ids_.end());
  if (static_cast<Index>(seen.size()) != n) throw InvalidArgument("sample ids must be unique");
  if (num_outputs_ < 1) throw InvalidArgument("dataset needs at least one attribute or class");
  if (task_ == TaskKind::MultiAttribute) {
    if (attributes_.rows() != n) throw InvalidArgument("attribute label rows must equal n");
    if ((attributes_.array() < 0).any() || (attributes_.array() > 1).any())
      throw InvalidArgument("attribute labels must be 0 or 1");
  } else {
    if (static_cast<Index>(classes_.size()) != n) throw InvalidArgument("class labels must have length n");
    for (std::size_t i = 0; i < classes_.size(); ++i) {
      if (classes_[i] < 0 || classes_[i] >= num_outputs_)
        throw InvalidArgument("class label out of range at row " + std::to_string(i));
    }
  }
}

Vector Dataset::target(Index row) const {
  if (task_ == TaskKind::MultiAttribute) return attributes_.row(row).transpose().cast<double>();
  Vector t = Vector::Zero(num_outputs_);
  t(classes_[static_cast<std::size_t>(row)]) = 1.0;
  return t;
}

Matrix Dataset::targets() const {
  if (task_ == TaskKind::MultiAttribute) return attributes_.cast<double>();
  Matrix t = Matrix::Zero(size(), num_outputs_);
  for (Index i = 0; i < size(); ++i) t(i, classes_[static_cast<std::size_t>(i)]) = 1.0;
  return t;
}

Index Dataset::row_of(SampleId id) const {
  const auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) throw InvalidArgument("unknown sample id " + std::to_string(id));
  return static_cast<Index>(it - ids_.begin());
}

bool Dataset::contains(SampleId id) const {
  return std::find(ids_.begin(), ids_.end(), id) != ids_.end();
}

Dataset Dataset::select_rows(std::span<const Index> rows) const {
  Dataset d;
  d.task_ = task_;
  d.num_outputs_ = num_outputs_;
  d.features_.resize(static_cast<Index>(rows.size()), dim());
  if (task_ == TaskKind::MultiAttribute) d.attributes_.resize(static_cast<Index>(rows.size()), num_outputs_);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Index src = rows[r];
    if (src < 0 || src >= size()) throw InvalidArgument("row index out of range");
    d.features_.row(static_cast<Index>(r)) = features_.row(src);
    if (task_ == TaskKind::MultiAttribute)
      d.attributes_.row(static_cast<Index>(r)) = attributes_.row(src);
    else
      d.classes_.push_back(classes_[static_cast<std::size_t>(src)]);
    d.ids_.push_back(ids_[static_cast<std::size_t>(src)]);
  }
  d.validate();
  return d;
}

Dataset Dataset::with_ids(std::span<const SampleId> ids) const {
  std::unordered_map<SampleId, Index> index;
  for (std::size_t i = 0; i < ids_.size(); ++i) index.emplace(ids_[i], static_cast<Index>(i));
  std::vector<Index> rows;
  rows.reserve(ids.size());
  for (SampleId id : ids) {
    const auto it = index.find(id);
    if (it == index.end()) throw InvalidArgument("unknown sample id " + std::to_string(id));
    rows.push_back(it->second);
  }
  return select_rows(rows);
}

Dataset Dataset::without_ids(std::span<const SampleId> ids) const {
  std::unordered_set<SampleId> drop(ids.begin(), ids.end());
  for (SampleId id : drop) {
    if (!contains(id)) throw InvalidArgument("unknown sample id " + std::to_string(id));
  }
  std::vector<Index> rows;
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!drop.contains(ids_[i])) rows.push_back(static_cast<Index>(i));
  }
  if (rows.empty()) throw InvalidArgument("removing these ids leaves an empty dataset");
  return select_rows(rows);
}

// ---------------------------------------------------------------- shapes

ModelShape ModelShape::multi_attr_linear(Index attributes, Index inputs) {
  if (attributes < 1 || inputs < 1) throw InvalidArgument("shape dimensions must be positive");
  return {ShapeKind::MultiAttrLinear, inputs, 0, attributes};
}

ModelShape ModelShape::multinomial_linear(Index classes, Index inputs) {
  if (classes < 2 || inputs < 1) throw InvalidArgument("multinomial shape needs c >= 2 and m >= 1");
  return {ShapeKind::MultinomialLinear, inputs, 0, classes};
}

ModelShape ModelShape::mlp(Index inputs, Index hidden, Index classes) {
  if (classes < 2 || inputs < 1 || hidden < 1) throw InvalidArgument("mlp shape dimensions must be positive");
  return {ShapeKind::Mlp, inputs, hidden, classes};
}

Index ModelShape::param_count() const {
  if (kind == ShapeKind::Mlp) return inputs * hidden + hidden * outputs;
  return outputs * inputs;
}

std::string ModelShape::name() const {
  switch (kind) {
    case ShapeKind::MultiAttrLinear: return "multi_attr_linear";
    case ShapeKind::MultinomialLinear: return "multinomial_linear";
    case ShapeKind::Mlp: return "mlp";
  }
  return "unknown";
}

ModelParams::ModelParams(ModelShape s, Vector v, std::uint64_t sd)
    : shape(s), values(std::move(v)), seed(sd) {
  if (values.size() != shape.param_count())
    throw InvalidArgument("parameter vector length " + std::to_string(values.size()) +
                          " does not match shape (" + std::to_string(shape.param_count()) + ")");
  if (!values.allFinite()) throw InvalidArgument("parameters must be finite");
}

ModelParams ModelParams::zeros(const ModelShape& shape) {
  return ModelParams(shape, Vector::Zero(shape.param_count()));
}

// ---------------------------------------------------------------- forward / backward

namespace {

using ConstWeights = Eigen::Map<const Matrix>;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void softmax_rows(Matrix& z) {
  for (Index i = 0; i < z.rows(); ++i) {
    const double mx = z.row(i).maxCoeff();
    z.row(i) = (z.row(i).array() - mx).exp();
    z.row(i) /= z.row(i).sum();
  }
}

ConstWeights linear_weights(const ModelParams& p) {
  return ConstWeights(p.values.data(), p.shape.outputs, p.shape.inputs);
}

ConstWeights mlp_input_layer(const ModelParams& p) {
  return ConstWeights(p.values.data(), p.shape.hidden, p.shape.inputs);
}

ConstWeights mlp_head(const ModelParams& p) {
  return ConstWeights(p.values.data() + p.shape.hidden * p.shape.inputs, p.shape.outputs,
                      p.shape.hidden);
}

struct Forward {
  Matrix logits;  // n x outputs
  Matrix proba;   // n x outputs
  Matrix hidden;  // n x h (MLP only)
};

Forward forward(const ModelParams& params, const Matrix& x) {
  const ModelShape& s = params.shape;
  if (x.cols() != s.inputs)
    throw InvalidArgument("feature width " + std::to_string(x.cols()) + " does not match model input " +
                          std::to_string(s.inputs));
  if (params.values.size() != s.param_count()) throw InvalidArgument("parameter length mismatch");
  Forward f;
  if (s.kind == ShapeKind::Mlp) {
    f.hidden = (x * mlp_input_layer(params).transpose()).array().tanh().matrix();
    f.logits = f.hidden * mlp_head(params).transpose();
  } else {
    f.logits = x * linear_weights(params).transpose();
  }
  f.proba = f.logits;
  if (s.kind == ShapeKind::MultiAttrLinear) {
    f.proba = f.logits.unaryExpr([](double z) { return sigmoid(z); });
  } else {
    softmax_rows(f.proba);
  }
  return f;
}

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

// Sum over samples of -log p(y|x).
double nll_sum(const ModelShape& shape, const Forward& f, const Dataset& data) {
  double total = 0.0;
  if (shape.kind == ShapeKind::MultiAttrLinear) {
    for (Index i = 0; i < data.size(); ++i) {
      for (Index a = 0; a < shape.outputs; ++a) {
        // probability of the observed outcome, computed without 1 - p cancellation
        const double z = f.logits(i, a);
        const double p = data.attributes()(i, a) == 1 ? sigmoid(z) : sigmoid(-z);
        total -= std::log(clamp_prob(p));
      }
    }
  } else {
    for (Index i = 0; i < data.size(); ++i)
      total -= std::log(clamp_prob(f.proba(i, data.classes()[static_cast<std::size_t>(i)])));
  }
  return total;
}

// Per-sample data-term gradients (no regulariser), one row per sample.
Matrix data_grads(const ModelParams& params, const Forward& f, const Dataset& data) {
  const ModelShape& s = params.shape;
  const Matrix residual = f.proba - data.targets();  // p - y, n x outputs
  const Index n = data.size();
  Matrix g(n, s.param_count());
  const Matrix& x = data.features();
  if (s.is_linear()) {
    for (Index i = 0; i < n; ++i) {
      for (Index k = 0; k < s.outputs; ++k)
        g.row(i).segment(k * s.inputs, s.inputs) = residual(i, k) * x.row(i);
    }
    return g;
  }
  const Index w1 = s.hidden * s.inputs;
  const Matrix d_hidden =
      ((residual * mlp_head(params)).array() * (1.0 - f.hidden.array().square())).matrix();
  for (Index i = 0; i < n; ++i) {
    for (Index u = 0; u < s.hidden; ++u)
      g.row(i).segment(u * s.inputs, s.inputs) = d_hidden(i, u) * x.row(i);
    for (Index k = 0; k < s.outputs; ++k)
      g.row(i).segment(w1 + k * s.hidden, s.hidden) = residual(i, k) * f.hidden.row(i);
  }
  return g;
}

}  // namespace

void check_compatible(const ModelShape& shape, const Dataset& data) {
  if (data.dim() != shape.inputs)
    throw InvalidArgument("dataset has " + std::to_string(data.dim()) + " features, model expects " +
                          std::to_string(shape.inputs));
  if (data.task() != shape.task()) throw InvalidArgument("dataset task does not match model shape");
  if (data.num_outputs() != shape.outputs)
    throw InvalidArgument("dataset has " + std::to_string(data.num_outputs()) +
                          " outputs, model expects " + std::to_string(shape.outputs));
}

Matrix predict_proba(const ModelParams& params, const Matrix& features) {
  return forward(params, features).proba;
}

double loss(const ModelParams& params, const Dataset& data, const LossConfig& cfg) {
  check_compatible(params.shape, data);
  const Forward f = forward(params, data.features());
  return nll_sum(params.shape, f, data) / static_cast<double>(data.size()) +
         0.5 * cfg.l2_coeff * params.values.squaredNorm();
}

Matrix per_sample_grads(const ModelParams& params, const Dataset& data, const LossConfig& cfg) {
  check_compatible(params.shape, data);
  Matrix g = data_grads(params, forward(params, data.features()), data);
  if (cfg.l2_coeff != 0.0) g.rowwise() += cfg.l2_coeff * params.values.transpose();
  return g;
}

Vector grad(const ModelParams& params, const Dataset& data, Index row, const LossConfig& cfg) {
  if (row < 0 || row >= data.size()) throw InvalidArgument("row index out of range");
  const std::array<Index, 1> one{row};
  return per_sample_grads(params, data.select_rows(one), cfg).row(0).transpose();
}

Vector mean_grad(const ModelParams& params, const Dataset& data, const LossConfig& cfg) {
  check_compatible(params.shape, data);
  const ModelShape& s = params.shape;
  const Forward f = forward(params, data.features());
  Vector g;
  if (s.is_linear()) {
    const Matrix gw = (f.proba - data.targets()).transpose() * data.features();  // outputs x m
    g = Eigen::Map<const Vector>(gw.data(), gw.size());
  } else {
    g = data_grads(params, f, data).colwise().sum().transpose();
  }
  g /= static_cast<double>(data.size());
  g += cfg.l2_coeff * params.values;
  return g;
}

Eigen::MatrixXd hessian_dense(const ModelParams& params, const Dataset& data,
                              const LossConfig& cfg, Index cap) {
  const ModelShape& s = params.shape;
  if (!s.is_linear()) throw Unsupported("dense Hessian is only available for linear models");
  const Index d = s.param_count();
  if (d > cap)
    throw Unsupported("dense Hessian size " + std::to_string(d) + " exceeds cap " + std::to_string(cap));
  check_compatible(s, data);
  const Forward f = forward(params, data.features());
  const Index m = s.inputs;
  const double inv_n = 1.0 / static_cast<double>(data.size());
  const Eigen::MatrixXd x = data.features();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  for (Index k = 0; k < s.outputs; ++k) {
    for (Index l = k; l < s.outputs; ++l) {
      Vector w(data.size());
      if (s.kind == ShapeKind::MultiAttrLinear) {
        if (k != l) continue;
        w = (f.proba.col(k).array() * (1.0 - f.proba.col(k).array())).matrix();
      } else {
        // (diag(p) - p p^T)_{kl}
        w = -(f.proba.col(k).array() * f.proba.col(l).array()).matrix();
        if (k == l) w += f.proba.col(k);
      }
      const Eigen::MatrixXd block = x.transpose() * (x.array().colwise() * w.array()).matrix() * inv_n;
      h.block(k * m, l * m, m, m) = block;
      if (l != k) h.block(l * m, k * m, m, m) = block.transpose();
    }
  }
  h.diagonal().array() += cfg.l2_coeff;
  return h;
}

Eigen::MatrixXd empirical_fisher_dense(const ModelParams& params, const Dataset& data,
                                       const LossConfig& cfg) {
  const Eigen::MatrixXd g = per_sample_grads(params, data, cfg);
  return g.transpose() * g / static_cast<double>(data.size());
}

std::pair<double, double> relative_entry_deviation(const Eigen::MatrixXd& a,
                                                   const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidArgument("matrix size mismatch");
  const double scale = a.cwiseAbs().maxCoeff();
  if (scale == 0.0) return {b.cwiseAbs().maxCoeff() == 0.0 ? 0.0 : INFINITY, 0.0};
  const Eigen::ArrayXXd dev = (a - b).cwiseAbs().array() / scale;
  return {dev.maxCoeff(), dev.mean()};
}

FisherHessianRatio fisher_hessian_ratio_check(const ModelParams& params, const Dataset& data,
                                              double margin_tolerance) {
  const ModelShape& s = params.shape;
  if (!s.is_linear()) throw Unsupported("Fisher/Hessian ratio check needs a linear model");
  if (s.kind == ShapeKind::MultiAttrLinear && s.outputs != 1)
    throw Unsupported("binary ratio check needs a single attribute");
  check_compatible(s, data);

  const Matrix proba = predict_proba(params, data.features());
  const Matrix targets = data.targets();
  const Index n = data.size();
  const Index c = s.outputs;

  // Wrong-class probability mass per entry; for a binary attribute this is |p - y|.
  std::vector<double> wrong;
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < c; ++k) {
      if (s.kind == ShapeKind::MultiAttrLinear || targets(i, k) == 0.0)
        wrong.push_back(std::abs(proba(i, k) - targets(i, k)));
    }
  }
  FisherHessianRatio out;
  out.margin = std::accumulate(wrong.begin(), wrong.end(), 0.0) / static_cast<double>(wrong.size());
  for (double w : wrong) out.margin_spread = std::max(out.margin_spread, std::abs(w - out.margin));
  if (out.margin_spread > margin_tolerance)
    out.warnings.push_back("per-sample margins vary by " + std::to_string(out.margin_spread) +
                           " (tolerance " + std::to_string(margin_tolerance) + ")");

  const double eps = out.margin;
  out.predicted_scale = s.kind == ShapeKind::MultiAttrLinear
                            ? (1.0 - eps) / eps
                            : 1.0 / (eps * static_cast<double>(c - 1));

  const LossConfig plain{0.0};
  const Eigen::MatrixXd h = hessian_dense(params, data, plain);
  const Eigen::MatrixXd f = empirical_fisher_dense(params, data, plain);
  const auto [max_dev, mean_dev] = relative_entry_deviation(h, out.predicted_scale * f);
  out.max_rel_deviation = max_dev;
  out.mean_rel_deviation = mean_dev;
  return out;
}

}  // namespace ssse
