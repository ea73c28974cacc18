// Acceptance suite: one test case per criterion, each printing a single
// PASS/FAIL line. Run a single criterion with --test-case="criterion 4*".
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "ssse/cli.hpp"
#include "ssse/config.hpp"
#include "ssse/data.hpp"
#include "ssse/erasure.hpp"
#include "ssse/eval.hpp"
#include "ssse/fisher.hpp"
#include "ssse/models.hpp"
#include "ssse/rng.hpp"
#include "ssse/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

using namespace ssse;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void verdict(const std::string& id, bool ok, const std::string& detail) {
  std::printf("[%s] criterion %s: %s\n", ok ? "PASS" : "FAIL", id.c_str(), detail.c_str());
  std::fflush(stdout);
  CHECK_MESSAGE(ok, "criterion ", id, ": ", detail);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// Per-sample gradient of a bias-free softmax model, written out directly:
// row k of the gradient matrix is (p_k - y_k) x plus the L2 term.
Vector oracle_softmax_grad(const Eigen::MatrixXd& w, const Vector& x, int y, double l2) {
  Vector z = w * x;
  z.array() -= z.maxCoeff();
  Vector p = z.array().exp();
  p /= p.sum();
  Eigen::MatrixXd g(w.rows(), w.cols());
  for (Index k = 0; k < w.rows(); ++k) g.row(k) = (p(k) - (k == y ? 1.0 : 0.0)) * x.transpose() + l2 * w.row(k);
  Vector flat(g.size());
  for (Index k = 0; k < g.rows(); ++k) flat.segment(k * g.cols(), g.cols()) = g.row(k).transpose();
  return flat;
}

struct MultinomialInstance {
  Dataset data;
  ModelParams params;
  Eigen::MatrixXd w;
};

MultinomialInstance random_multinomial(Rng& rng, Index c, Index m, Index n) {
  Matrix x(n, m);
  std::vector<int> y;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) x(i, j) = rng.normal();
    y.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(c))));
  }
  Eigen::MatrixXd w(c, m);
  for (Index k = 0; k < c; ++k)
    for (Index j = 0; j < m; ++j) w(k, j) = 0.5 * rng.normal();
  Vector flat(c * m);
  for (Index k = 0; k < c; ++k) flat.segment(k * m, m) = w.row(k).transpose();
  return {Dataset::multinomial(std::move(x), std::move(y), static_cast<int>(c)),
          ModelParams(ModelShape::multinomial_linear(c, m), flat), w};
}

}  // namespace

TEST_CASE("criterion 1: Sherman-Morrison inverse matches dense inversion") {
  const auto t0 = Clock::now();
  Rng rng(101);
  const double lambdas[] = {1e-4, 1e-2, 1.0};
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Index c = 2 + static_cast<Index>(rng.below(3));
    const Index m = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(20 / c)));
    const Index n = 1 + static_cast<Index>(rng.below(50));
    const double lambda = lambdas[trial % 3];
    const double l2 = trial % 2 == 0 ? 0.0 : 1e-2;
    auto inst = random_multinomial(rng, c, m, n);
    const Index d = c * m;

    Eigen::MatrixXd f = lambda * Eigen::MatrixXd::Identity(d, d);
    for (Index i = 0; i < n; ++i) {
      const Vector g =
          oracle_softmax_grad(inst.w, inst.data.features().row(i).transpose(), inst.data.classes()[i], l2);
      f += g * g.transpose() / static_cast<double>(n);
    }
    const Eigen::MatrixXd expected = f.inverse();
    const InverseFisher finv = build_inverse_fisher(inst.params, inst.data, LossConfig{l2},
                                                    FisherConfig{lambda, 1}, BlockSpec::single(d));
    worst = std::max(worst, (finv.to_dense() - expected).norm() / expected.norm());
  }
  const double elapsed = seconds_since(t0);
  verdict("1", worst <= 1e-9 && elapsed < 1.0,
          "max relative Frobenius error " + fmt(worst) + " (tol 1e-9), " + fmt(elapsed) + " s (limit 1 s)");
}

TEST_CASE("criterion 2a: Fisher-Hessian proportionality under the margin condition") {
  bool ok = true;
  std::string detail;
  for (Index c : {3, 10, 50}) {
    for (double eps : {1e-3, 1e-4}) {
      const auto inst = make_separable_subspace(c, c + 10, eps, c >= 50 ? 4 : 10, 7 + static_cast<std::uint64_t>(c));
      const FisherHessianRatio r = fisher_hessian_ratio_check(inst.params, inst.data);
      const double bound = 5.0 * static_cast<double>(c) * eps;
      const bool pass = r.max_rel_deviation <= bound;
      ok = ok && pass;
      detail += " c=" + std::to_string(c) + ",eps=" + fmt(eps) + ":" + fmt(r.max_rel_deviation) + (pass ? "<=" : ">") +
                fmt(bound) + ";";
    }
  }
  verdict("2a", ok, "max relative deviation vs 5*c*eps:" + detail);
}

TEST_CASE("criterion 2b: binary corollary H = eps/(1-eps) F") {
  const double eps = 1e-3;
  const auto inst = make_separable_subspace(2, 12, eps, 20, 11, TaskKind::MultiAttribute);
  const LossConfig no_l2{0.0};
  const Eigen::MatrixXd h = hessian_dense(inst.params, inst.data, no_l2);
  const Eigen::MatrixXd f = empirical_fisher_dense(inst.params, inst.data, no_l2);
  const double stated = (h - (eps / (1.0 - eps)) * f).cwiseAbs().maxCoeff() / h.cwiseAbs().maxCoeff();
  const double inverted = (h - ((1.0 - eps) / eps) * f).cwiseAbs().maxCoeff() / h.cwiseAbs().maxCoeff();
  verdict("2b", stated <= 1e-10,
          "binary relative deviation with eps/(1-eps): " + fmt(stated) + " (tol 1e-10); with (1-eps)/eps: " +
              fmt(inverted));
}

TEST_CASE("criterion 3: SSSE identities") {
  Rng rng(303);
  bool zero_ok = true;
  double linear_err = 0.0;
  double dense_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Index c = 2;
    const Index m = 1 + static_cast<Index>(rng.below(3));  // d <= 6
    const Index n = 6 + static_cast<Index>(rng.below(20));
    auto inst = random_multinomial(rng, c, m, n);
    const Index d = c * m;
    const double lambda = 1e-2;
    const double l2 = 1e-3;
    const InverseFisher finv = build_inverse_fisher(inst.params, inst.data, LossConfig{l2},
                                                    FisherConfig{lambda, 1}, BlockSpec::single(d));
    std::vector<SampleId> removed;
    for (Index i = 0; i < n; i += 3) removed.push_back(inst.data.ids()[static_cast<std::size_t>(i)]);

    const ModelParams zero = ssse_update(inst.params, finv, inst.data, removed, 0.0, LossConfig{l2});
    zero_ok = zero_ok && std::memcmp(zero.values.data(), inst.params.values.data(),
                                     sizeof(double) * static_cast<std::size_t>(d)) == 0;

    const ModelParams a = ssse_update(inst.params, finv, inst.data, removed, 0.7, LossConfig{l2});
    const ModelParams b = ssse_update(inst.params, finv, inst.data, removed, 2.1, LossConfig{l2});
    const Vector step_a = a.values - inst.params.values;
    const Vector step_b = b.values - inst.params.values;
    linear_err = std::max(linear_err, (step_b - 3.0 * step_a).norm() / std::max(step_b.norm(), 1e-300));

    Eigen::MatrixXd f = lambda * Eigen::MatrixXd::Identity(d, d);
    Vector gsum = Vector::Zero(d);
    for (Index i = 0; i < n; ++i) {
      const Vector g =
          oracle_softmax_grad(inst.w, inst.data.features().row(i).transpose(), inst.data.classes()[i], l2);
      f += g * g.transpose() / static_cast<double>(n);
      if (i % 3 == 0) gsum += g;
    }
    const double eps = 0.7;
    const Vector expected =
        inst.params.values + eps / static_cast<double>(n - static_cast<Index>(removed.size())) * f.lu().solve(gsum);
    dense_err = std::max(dense_err, (a.values - expected).norm() / expected.norm());
  }
  verdict("3", zero_ok && linear_err <= 1e-12 && dense_err <= 1e-10,
          std::string("eps=0 bitwise ") + (zero_ok ? "yes" : "no") + ", linearity error " + fmt(linear_err) +
              " (tol 1e-12), dense oracle error " + fmt(dense_err) + " (tol 1e-10)");
}

ExperimentConfig load_config(const std::string& name) {
  return ExperimentConfig::from_file(std::filesystem::path(SSSE_CONFIG_DIR) / name);
}

TEST_CASE("criterion 4: two-class 2D boundary demo") {
  const auto t0 = Clock::now();
  const ExperimentConfig cfg = load_config("demo_boundary.cfg");
  const PreparedData d = prepare_data(cfg);
  const BoundaryDemo demo = run_boundary_demo(cfg);
  const double elapsed = seconds_since(t0);
  const bool setup = d.train.size() == 200 && d.splits.removed.size() == 10;
  const bool ok = setup && demo.ssse_best < demo.original && demo.influence_lko <= demo.influence_full &&
                  elapsed < 30.0;
  verdict("4", ok,
          "n=" + std::to_string(d.train.size()) + ", |S|=" + std::to_string(d.splits.removed.size()) +
              "; disagreement with retrain: original " + fmt(demo.original) + ", ssse (eps=" +
              fmt(demo.best_epsilon) + ") " + fmt(demo.ssse_best) + ", influence full " + fmt(demo.influence_full) +
              ", influence lko " + fmt(demo.influence_lko) + "; " + fmt(elapsed) + " s (limit 30 s)");
}

TEST_CASE("criterion 5: convex multinomial full-class removal") {
  const auto t0 = Clock::now();
  const ExperimentConfig cfg = load_config("multinomial.cfg");
  const SweepOutcome s = run_sweep(cfg);
  const double elapsed = seconds_since(t0);
  double min_delta = 1.0;
  for (const auto& r : s.sweep.reports) min_delta = std::min(min_delta, *r.delta);
  const EvalReport& best = s.sweep.reports[s.sweep.best_index];
  const double d_train = std::abs(*best.lko_train.accuracy - *s.retrain_report.lko_train.accuracy);
  const double d_test = std::abs(*best.lko_test.accuracy - *s.retrain_report.lko_test.accuracy);
  const bool setup = s.data.train.size() == 2000 && s.data.shape.outputs == 10 && s.data.shape.inputs == 50;
  const bool ok = setup && min_delta < 0.5 && d_train <= 0.02 && d_test <= 0.02 && elapsed < 120.0;
  verdict("5", ok,
          "n=" + std::to_string(s.data.train.size()) + ", min delta " + fmt(min_delta) + " (< 0.5); at eps=" +
              fmt(s.sweep.best_epsilon) + " |dacc| D\\S " + fmt(100 * d_train) + " pp, T\\T_a " +
              fmt(100 * d_test) + " pp (<= 2 pp); " + fmt(elapsed) + " s (limit 120 s)");
}

TEST_CASE("criterion 6: binary multi-attribute rare attribute removal") {
  const ExperimentConfig cfg = load_config("multi_attribute.cfg");
  const SweepOutcome s = run_sweep(cfg);
  double max_gamma = 0.0;
  for (const auto& r : s.sweep.reports) max_gamma = std::max(max_gamma, *r.gamma);
  const bool setup = s.data.train.num_outputs() == 8;
  verdict("6", setup && max_gamma > 0.5,
          "attributes=" + std::to_string(s.data.train.num_outputs()) + ", |S|=" +
              std::to_string(s.data.splits.removed.size()) + ", max gamma " + fmt(max_gamma) + " at eps=" +
              fmt(s.sweep.best_epsilon) + " (> 0.5)");
}

TEST_CASE("criterion 7: MLP full-class removal with batched Fisher") {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string detail;
  for (Index b : {1, 10}) {
    ExperimentConfig cfg = load_config("mlp.cfg");
    cfg.fisher.batch_size = b;
    const SweepOutcome s = run_sweep(cfg);
    double min_delta = 1.0;
    for (const auto& r : s.sweep.reports) min_delta = std::min(min_delta, *r.delta);
    ok = ok && min_delta < 0.5 && s.data.shape.kind == ShapeKind::Mlp && s.data.shape.inputs == 20 &&
         s.data.shape.hidden == 16 && s.data.shape.outputs == 5;
    detail += "batch " + std::to_string(b) + ": min delta " + fmt(min_delta) + " at eps=" +
              fmt(s.sweep.best_epsilon) + "; ";
  }
  const double elapsed = seconds_since(t0);
  verdict("7", ok && elapsed < 120.0, detail + fmt(elapsed) + " s (limit 120 s)");
}

namespace {

Dataset random_multinomial_data(Rng& rng, Index n, Index m, int c, bool shuffle_ids) {
  Matrix x(n, m);
  std::vector<int> y;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) x(i, j) = rng.normal();
    y.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(c))));
  }
  std::vector<SampleId> ids(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = 1000 + 7 * i;
  if (shuffle_ids) rng.shuffle(std::span<SampleId>(ids));
  return Dataset::multinomial(std::move(x), std::move(y), c, std::move(ids));
}

Dataset random_attribute_data(Rng& rng, Index n, Index m, Index attrs) {
  Matrix x(n, m);
  Eigen::MatrixXi y(n, attrs);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) x(i, j) = rng.normal();
    for (Index a = 0; a < attrs; ++a) y(i, a) = rng.uniform() < 0.5 ? 1 : 0;
  }
  return Dataset::multi_attribute(std::move(x), std::move(y));
}

ModelParams random_params(Rng& rng, const ModelShape& shape, double scale) {
  Vector v(shape.param_count());
  for (Index j = 0; j < v.size(); ++j) v(j) = scale * rng.normal();
  return ModelParams(shape, v);
}

}  // namespace

TEST_CASE("criterion 8: metric invariants over random instances") {
  Rng rng(808);
  int complement_checked = 0, complement_fail = 0;
  int relabel_fail = 0, auc_fail = 0, triangle_fail = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int c = 2 + static_cast<int>(rng.below(4));
    const Index m = 2 + static_cast<Index>(rng.below(4));
    const Index n = 20 + static_cast<Index>(rng.below(40));
    const ModelShape mshape = ModelShape::multinomial_linear(c, m);
    const ModelParams a = random_params(rng, mshape, 1.0), b = random_params(rng, mshape, 1.0),
                      e = random_params(rng, mshape, 1.0);

    // Relabelling ids must not change any ratio.
    Rng data_rng(rng.next_u64());
    Rng data_rng2 = data_rng;
    const Dataset plain = random_multinomial_data(data_rng, n, m, c, false);
    const Dataset relabeled = random_multinomial_data(data_rng2, n, m, c, true);
    if (normalized_confusion_distance(a, b, e, plain) != normalized_confusion_distance(a, b, e, relabeled))
      ++relabel_fail;

    // Complements for delta and parameter distance.
    if (confusion_distance(a, b, plain) > 0 && confusion_distance(a, e, plain) > 0) {
      ++complement_checked;
      const double sum = normalized_confusion_distance(a, b, e, plain) + normalized_confusion_distance(a, e, b, plain);
      if (std::abs(sum - 1.0) > 1e-12) ++complement_fail;
    }
    const double psum = normalized_param_distance(a, b, e) + normalized_param_distance(a, e, b);
    if (std::abs(psum - 1.0) > 1e-12) ++complement_fail;

    // Triangle inequality for the confusion l1 distance.
    if (confusion_distance(a, e, plain) > confusion_distance(a, b, plain) + confusion_distance(b, e, plain))
      ++triangle_fail;

    // Gamma complement and relabel invariance on a multi-attribute task.
    const Index attrs = 1 + static_cast<Index>(rng.below(4));
    const ModelShape ashape = ModelShape::multi_attr_linear(attrs, m);
    const ModelParams ha = random_params(rng, ashape, 1.0), sa = random_params(rng, ashape, 1.0),
                      ra = random_params(rng, ashape, 1.0);
    const Dataset adata = random_attribute_data(rng, n, m, attrs);
    if (performance_similarity(ha, sa, adata) > 0 && performance_similarity(ha, ra, adata) > 0) {
      ++complement_checked;
      const double gsum = similarity_ratio(ha, sa, ra, adata) + similarity_ratio(ha, ra, sa, adata);
      if (std::abs(gsum - 1.0) > 1e-12) ++complement_fail;
    }
    std::vector<SampleId> shuffled_ids = adata.ids();
    rng.shuffle(std::span<SampleId>(shuffled_ids));
    const Dataset adata2 = Dataset::multi_attribute(adata.features(), adata.attributes(), shuffled_ids);
    if (similarity_ratio(ha, sa, ra, adata) != similarity_ratio(ha, sa, ra, adata2)) ++relabel_fail;

    // AUC under strictly increasing transforms.
    std::vector<double> scores(static_cast<std::size_t>(n)), moved(scores.size());
    std::vector<int> labels(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      scores[i] = std::round(rng.normal() * 4.0) / 4.0;  // coarse grid keeps ties in play
      labels[i] = rng.uniform() < 0.4 ? 1 : 0;
    }
    const int transform = trial % 3;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double s0 = scores[i];
      moved[i] = transform == 0 ? std::exp(s0) : transform == 1 ? 3.0 * s0 - 7.0 : s0 * s0 * s0 + s0;
    }
    if (roc_auc(scores, labels) != roc_auc(moved, labels)) ++auc_fail;
  }
  verdict("8", complement_fail == 0 && relabel_fail == 0 && auc_fail == 0 && triangle_fail == 0,
          "200 instances: complement failures " + std::to_string(complement_fail) + " (of " +
              std::to_string(complement_checked + 200) + " checks), relabel failures " + std::to_string(relabel_fail) +
              ", AUC transform failures " + std::to_string(auc_fail) + ", triangle failures " +
              std::to_string(triangle_fail));
}

namespace {

std::map<std::string, std::string> read_dir(const std::filesystem::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    files[entry.path().filename().string()] = buf.str();
  }
  return files;
}

}  // namespace

TEST_CASE("criterion 9: CLI reruns are byte-identical") {
  namespace fs = std::filesystem;
  const fs::path root = fs::path(SSSE_TEST_TMP) / "determinism";
  fs::remove_all(root);
  const std::string quick = (fs::path(SSSE_CONFIG_DIR) / "quickstart.cfg").string();
  const std::string demo = (fs::path(SSSE_CONFIG_DIR) / "demo_boundary.cfg").string();
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"train", quick}, {"fisher", quick}, {"erase", quick}, {"sweep", quick}, {"compare-baselines", quick},
      {"demo-boundary", demo}};
  bool ok = true;
  std::string detail;
  for (int run = 0; run < 2; ++run) {
    for (const auto& [cmd, config] : commands) {
      std::ostringstream out, err;
      const int code = run_cli({cmd, "--config", config, "--out", (root / std::to_string(run)).string()}, out, err);
      if (code != 0) {
        ok = false;
        detail += cmd + " exited " + std::to_string(code) + " (" + err.str() + "); ";
      }
    }
  }
  const auto first = read_dir(root / "0");
  const auto second = read_dir(root / "1");
  std::size_t identical = 0;
  for (const auto& [name, bytes] : first) {
    const auto it = second.find(name);
    if (it != second.end() && it->second == bytes)
      ++identical;
    else
      detail += name + " differs; ";
  }
  ok = ok && first.size() == second.size() && identical == first.size() && !first.empty();
  verdict("9", ok,
          std::to_string(commands.size()) + " commands, " + std::to_string(identical) + "/" +
              std::to_string(first.size()) + " output files byte-identical. " + detail);
}

int main(int argc, char** argv) {
  doctest::Context ctx;
  ctx.applyCommandLine(argc, argv);
  return ctx.run();
}
