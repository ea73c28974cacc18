#include "ssse/eval.hpp"

#include "ssse/erasure.hpp"
#include "ssse/errors.hpp"
#include "ssse/io.hpp"
#include "ssse/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace ssse {

void SplitSet::validate() const {
  if (removed.empty()) throw InvalidArgument("removed split must be nonempty");
  std::unordered_set<SampleId> train_ids(lko_train.begin(), lko_train.end());
  for (SampleId id : removed) {
    if (train_ids.contains(id)) throw InvalidArgument("train splits overlap at id " + std::to_string(id));
  }
  std::unordered_set<SampleId> test_ids(lko_test.begin(), lko_test.end());
  for (SampleId id : removed_test) {
    if (test_ids.contains(id)) throw InvalidArgument("test splits overlap at id " + std::to_string(id));
  }
}

// ---------------------------------------------------------------- AUC

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InvalidArgument("scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t positives = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw InvalidArgument("labels must be 0 or 1");
    positives += static_cast<std::size_t>(l);
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return 0.0;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of (1-based, tie-averaged) ranks of the positives.
  double positive_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) positive_rank_sum += rank;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

std::vector<double> attribute_aucs(const ModelParams& params, const Dataset& samples) {
  if (samples.task() != TaskKind::MultiAttribute) throw InvalidArgument("AUC metrics need a multi-attribute task");
  check_compatible(params.shape, samples);
  const Matrix proba = predict_proba(params, samples.features());
  std::vector<double> out;
  std::vector<double> scores(static_cast<std::size_t>(samples.size()));
  std::vector<int> labels(scores.size());
  for (Index a = 0; a < samples.num_outputs(); ++a) {
    for (Index i = 0; i < samples.size(); ++i) {
      scores[static_cast<std::size_t>(i)] = proba(i, a);
      labels[static_cast<std::size_t>(i)] = samples.attributes()(i, a);
    }
    out.push_back(roc_auc(scores, labels));
  }
  return out;
}

double performance_similarity(const ModelParams& theta1, const ModelParams& theta2, const Dataset& samples) {
  const std::vector<double> a = attribute_aucs(theta1, samples);
  const std::vector<double> b = attribute_aucs(theta2, samples);
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
  return total;
}

double normalized_ratio(double a, double b) {
  if (a < 0.0 || b < 0.0) throw InvalidArgument("distances must be nonnegative");
  if (a + b == 0.0) return kTieRatio;
  return a / (a + b);
}

double similarity_ratio(const ModelParams& theta_hat, const ModelParams& theta_star,
                        const ModelParams& theta_retrain, const Dataset& removed_samples) {
  const std::vector<double> hat = attribute_aucs(theta_hat, removed_samples);
  const std::vector<double> star = attribute_aucs(theta_star, removed_samples);
  const std::vector<double> retrain = attribute_aucs(theta_retrain, removed_samples);
  double to_star = 0.0;
  double to_retrain = 0.0;
  for (std::size_t a = 0; a < hat.size(); ++a) {
    to_star += std::abs(hat[a] - star[a]);
    to_retrain += std::abs(hat[a] - retrain[a]);
  }
  return normalized_ratio(to_star, to_retrain);
}

// ---------------------------------------------------------------- confusion

std::vector<int> predict_classes(const ModelParams& params, const Matrix& features) {
  if (params.shape.task() != TaskKind::Multinomial) throw InvalidArgument("class predictions need a multinomial model");
  const Matrix proba = predict_proba(params, features);
  std::vector<int> out(static_cast<std::size_t>(proba.rows()));
  for (Index i = 0; i < proba.rows(); ++i) {
    Index best = 0;
    for (Index k = 1; k < proba.cols(); ++k) {
      if (proba(i, k) > proba(i, best)) best = k;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

ConfusionMatrix confusion_matrix(const ModelParams& theta, const Dataset& samples) {
  if (samples.task() != TaskKind::Multinomial) throw InvalidArgument("confusion matrices need a multinomial task");
  check_compatible(theta.shape, samples);
  const std::vector<int> predicted = predict_classes(theta, samples.features());
  const Index c = samples.num_outputs();
  ConfusionMatrix m = ConfusionMatrix::Zero(c, c);
  for (std::size_t i = 0; i < predicted.size(); ++i) ++m(samples.classes()[i], predicted[i]);
  return m;
}

double confusion_distance(const ModelParams& theta1, const ModelParams& theta2, const Dataset& samples) {
  return static_cast<double>(
      (confusion_matrix(theta1, samples) - confusion_matrix(theta2, samples)).cwiseAbs().sum());
}

double normalized_confusion_distance(const ModelParams& theta_hat, const ModelParams& theta_star,
                                     const ModelParams& theta_retrain, const Dataset& removed_samples) {
  const ConfusionMatrix hat = confusion_matrix(theta_hat, removed_samples);
  const auto to_star = static_cast<double>((hat - confusion_matrix(theta_star, removed_samples)).cwiseAbs().sum());
  const auto to_retrain =
      static_cast<double>((hat - confusion_matrix(theta_retrain, removed_samples)).cwiseAbs().sum());
  return normalized_ratio(to_retrain, to_star);
}

double normalized_param_distance(const ModelParams& theta_hat, const ModelParams& theta_star,
                                 const ModelParams& theta_retrain) {
  if (theta_hat.size() != theta_star.size() || theta_hat.size() != theta_retrain.size())
    throw InvalidArgument("parameter vectors differ in length");
  return normalized_ratio((theta_hat.values - theta_retrain.values).norm(),
                          (theta_hat.values - theta_star.values).norm());
}

double accuracy(const ModelParams& params, const Dataset& samples) {
  check_compatible(params.shape, samples);
  if (samples.task() == TaskKind::Multinomial) {
    const std::vector<int> predicted = predict_classes(params, samples.features());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == samples.classes()[i];
    return static_cast<double>(hits) / static_cast<double>(predicted.size());
  }
  const Matrix proba = predict_proba(params, samples.features());
  std::size_t hits = 0;
  for (Index i = 0; i < proba.rows(); ++i) {
    for (Index a = 0; a < proba.cols(); ++a) hits += (proba(i, a) > 0.5 ? 1 : 0) == samples.attributes()(i, a);
  }
  return static_cast<double>(hits) / static_cast<double>(proba.size());
}

// ---------------------------------------------------------------- reports

namespace {

SplitMetrics split_metrics(const ModelParams& theta, const Dataset& source, const std::vector<SampleId>& ids,
                           const LossConfig& cfg) {
  SplitMetrics m;
  m.size = static_cast<Index>(ids.size());
  if (ids.empty()) return m;
  const Dataset subset = source.with_ids(ids);
  m.accuracy = accuracy(theta, subset);
  m.loss = loss(theta, subset, cfg);
  return m;
}

}  // namespace

EvalReport evaluate_model(const ModelParams& theta, const Dataset& train, const Dataset& test,
                          const SplitSet& splits, const LossConfig& cfg) {
  splits.validate();
  EvalReport r;
  r.lko_train = split_metrics(theta, train, splits.lko_train, cfg);
  r.removed = split_metrics(theta, train, splits.removed, cfg);
  r.lko_test = split_metrics(theta, test, splits.lko_test, cfg);
  r.removed_test = split_metrics(theta, test, splits.removed_test, cfg);
  if (!splits.lko_train.empty()) {
    const Dataset lko = train.with_ids(splits.lko_train);
    r.loss_lko = *r.lko_train.loss;
    r.grad_norm_lko = mean_grad(theta, lko, cfg).norm();
  }
  const Dataset removed = train.with_ids(splits.removed);
  if (train.task() == TaskKind::MultiAttribute)
    r.auc_per_attribute = attribute_aucs(theta, removed);
  else
    r.confusion = confusion_matrix(theta, removed);
  return r;
}

EvalReport evaluate_erasure(const ModelParams& theta_hat, const ModelParams& theta_star,
                            const ModelParams& theta_retrain, const Dataset& train, const Dataset& test,
                            const SplitSet& splits, const LossConfig& cfg) {
  EvalReport r = evaluate_model(theta_hat, train, test, splits, cfg);
  const Dataset removed = train.with_ids(splits.removed);
  if (train.task() == TaskKind::MultiAttribute)
    r.gamma = similarity_ratio(theta_hat, theta_star, theta_retrain, removed);
  else
    r.delta = normalized_confusion_distance(theta_hat, theta_star, theta_retrain, removed);
  r.param_dist_normalized = normalized_param_distance(theta_hat, theta_star, theta_retrain);
  return r;
}

std::string criterion_name(SweepCriterion c) { return c == SweepCriterion::MaxGamma ? "max_gamma" : "min_delta"; }

SweepCriterion parse_criterion(const std::string& name) {
  if (name == "max_gamma") return SweepCriterion::MaxGamma;
  if (name == "min_delta") return SweepCriterion::MinDelta;
  throw InvalidArgument("unknown criterion '" + name + "' (expected max_gamma or min_delta)");
}

std::size_t select_best(std::span<const EvalReport> reports, SweepCriterion criterion) {
  if (reports.empty()) throw InvalidArgument("no reports to select from");
  std::size_t best = 0;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& value = criterion == SweepCriterion::MaxGamma ? reports[i].gamma : reports[i].delta;
    if (!value) throw InvalidArgument("report lacks the value required by " + criterion_name(criterion));
    const auto& current = criterion == SweepCriterion::MaxGamma ? reports[best].gamma : reports[best].delta;
    const bool better = criterion == SweepCriterion::MaxGamma ? *value > *current : *value < *current;
    if (better) best = i;
  }
  return best;
}

SweepResult epsilon_sweep(const ModelParams& theta_star, const InverseFisher& finv, const Dataset& train,
                          const Dataset& test, const SplitSet& splits, const ModelParams& theta_retrain,
                          std::span<const double> grid, SweepCriterion criterion, const LossConfig& cfg) {
  if (grid.empty()) throw InvalidArgument("epsilon grid must be nonempty");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw InvalidArgument("epsilon grid must be strictly increasing");
  }
  if (criterion == SweepCriterion::MaxGamma && train.task() != TaskKind::MultiAttribute)
    throw InvalidArgument("max_gamma needs a multi-attribute task");
  if (criterion == SweepCriterion::MinDelta && train.task() != TaskKind::Multinomial)
    throw InvalidArgument("min_delta needs a multinomial task");
  splits.validate();

  SweepResult out;
  out.criterion = criterion;
  out.reports.resize(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    const ModelParams hat = ssse_update(theta_star, finv, train, splits.removed, grid[i], cfg);
    out.reports[i] = evaluate_erasure(hat, theta_star, theta_retrain, train, test, splits, cfg);
    out.reports[i].epsilon = grid[i];
  });
  out.best_index = select_best(out.reports, criterion);
  out.best_epsilon = grid[out.best_index];
  return out;
}

// ---------------------------------------------------------------- decision boundaries

Matrix GridSpec::points() const {
  if (nx < 1 || ny < 1) throw InvalidArgument("grid needs at least one point per axis");
  Matrix p(nx * ny, 2);
  for (Index iy = 0; iy < ny; ++iy) {
    const double y = ny == 1 ? y_min : y_min + (y_max - y_min) * static_cast<double>(iy) / static_cast<double>(ny - 1);
    for (Index ix = 0; ix < nx; ++ix) {
      const double x = nx == 1 ? x_min : x_min + (x_max - x_min) * static_cast<double>(ix) / static_cast<double>(nx - 1);
      p(iy * nx + ix, 0) = x;
      p(iy * nx + ix, 1) = y;
    }
  }
  return p;
}

std::vector<std::int64_t> predict_labels(const ModelParams& params, const Matrix& points) {
  if (params.shape.task() == TaskKind::Multinomial) {
    const std::vector<int> c = predict_classes(params, points);
    return {c.begin(), c.end()};
  }
  const Matrix proba = predict_proba(params, points);
  std::vector<std::int64_t> out(static_cast<std::size_t>(proba.rows()), 0);
  for (Index i = 0; i < proba.rows(); ++i) {
    for (Index a = 0; a < proba.cols(); ++a) {
      if (proba(i, a) > 0.5) out[static_cast<std::size_t>(i)] |= std::int64_t{1} << a;
    }
  }
  return out;
}

double boundary_disagreement(const ModelParams& theta_a, const ModelParams& theta_b, const GridSpec& grid) {
  if (!(theta_a.shape == theta_b.shape)) throw InvalidArgument("models must share a shape");
  if (theta_a.shape.inputs != 2) throw InvalidArgument("boundary comparison needs 2D inputs");
  const Matrix points = grid.points();
  const std::vector<std::int64_t> a = predict_labels(theta_a, points);
  const std::vector<std::int64_t> b = predict_labels(theta_b, points);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < a.size(); ++i) differ += a[i] != b[i];
  return static_cast<double>(differ) / static_cast<double>(a.size());
}

// ---------------------------------------------------------------- serialization

namespace {

std::string opt(const std::optional<double>& v) { return v ? io::format_double(*v) : "NA"; }

void write_split(std::ostringstream& out, const char* name, const SplitMetrics& m) {
  out << "split." << name << ".size = " << m.size << '\n';
  out << "split." << name << ".accuracy = " << opt(m.accuracy) << '\n';
  out << "split." << name << ".loss = " << opt(m.loss) << '\n';
}

}  // namespace

std::string format_report_text(std::span<const EvalReport> reports, const std::string& title) {
  std::ostringstream out;
  out << "# " << title << '\n';
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const EvalReport& r = reports[i];
    out << "\n[report " << i << "]\n";
    out << "epsilon = " << io::format_double(r.epsilon) << '\n';
    out << "gamma = " << opt(r.gamma) << '\n';
    out << "delta = " << opt(r.delta) << '\n';
    out << "param_dist_normalized = " << opt(r.param_dist_normalized) << '\n';
    out << "loss_lko = " << io::format_double(r.loss_lko) << '\n';
    out << "grad_norm_lko = " << io::format_double(r.grad_norm_lko) << '\n';
    write_split(out, "lko_train", r.lko_train);
    write_split(out, "removed", r.removed);
    write_split(out, "lko_test", r.lko_test);
    write_split(out, "removed_test", r.removed_test);
    if (!r.auc_per_attribute.empty()) {
      out << "auc_per_attribute =";
      for (double a : r.auc_per_attribute) out << ' ' << io::format_double(a);
      out << '\n';
    }
    if (r.confusion.size() > 0) {
      out << "confusion =";
      for (Index i2 = 0; i2 < r.confusion.rows(); ++i2) {
        out << (i2 == 0 ? " " : " ; ");
        for (Index j = 0; j < r.confusion.cols(); ++j) out << (j == 0 ? "" : " ") << r.confusion(i2, j);
      }
      out << '\n';
    }
  }
  return out.str();
}

std::string format_report_csv(std::span<const EvalReport> reports) {
  std::ostringstream out;
  out << "epsilon,gamma,delta,param_dist,loss_lko,grad_norm_lko,"
         "acc_lko_train,acc_removed,acc_lko_test,acc_removed_test,"
         "loss_lko_train,loss_removed,loss_lko_test,loss_removed_test\n";
  for (const EvalReport& r : reports) {
    out << io::format_double(r.epsilon) << ',' << opt(r.gamma) << ',' << opt(r.delta) << ','
        << opt(r.param_dist_normalized) << ',' << io::format_double(r.loss_lko) << ','
        << io::format_double(r.grad_norm_lko) << ',' << opt(r.lko_train.accuracy) << ','
        << opt(r.removed.accuracy) << ',' << opt(r.lko_test.accuracy) << ',' << opt(r.removed_test.accuracy)
        << ',' << opt(r.lko_train.loss) << ',' << opt(r.removed.loss) << ',' << opt(r.lko_test.loss) << ','
        << opt(r.removed_test.loss) << '\n';
  }
  return out.str();
}

}  // namespace ssse
